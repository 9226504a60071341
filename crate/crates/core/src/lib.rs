//! DAG-informed survival analysis toolkit.
//!
//! The crate splits into six pieces: [`graph`] holds weighted DAGs and the
//! structural-equation transforms they induce, [`autodiff`] is a small
//! reverse-mode tape over `f64` matrices, [`synth`] draws right-censored
//! survival data from a DAG's structural equations, [`model`] is the
//! conditional VAE that embeds a known DAG in its encoder and decoder,
//! [`metrics`] scores predictions with time-dependent concordance, and
//! [`infotheory`] quantifies by exhaustive enumeration how much a known
//! graph is worth to a coder of the joint source.

pub mod autodiff;
pub mod graph;
pub mod infotheory;
pub mod metrics;
pub mod model;
pub mod synth;

pub use autodiff::{AdamState, AutodiffError, LinearMap, Tape, Value};
pub use graph::{Dag, DagSampleConfig, GraphError};
pub use infotheory::{
    entropy, entropy_gap, sample_net, DiscreteBayesNet, EntropyGap, JointTable, NetError,
    NetSampleConfig,
};
pub use metrics::{bootstrap, ctd, CtdReport, MetricsError};
pub use model::{
    Activation, DagSurvModel, EpochRecord, ModelConfig, ModelError, SurvivalPrediction,
    TrainConfig, TrainingHistory,
};
pub use synth::{
    apply_censoring, apply_censoring_uniform_global, default_num_bins, discretize, generate,
    split, CensorMode, GenConfig, GenWarning, SurvivalDataset, SynthError,
};
