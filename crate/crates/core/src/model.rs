//! Conditional VAE for discrete-time survival with a known covariate DAG.
//!
//! Samples travel as columns. The encoder sees the covariates with the
//! normalized event bin appended, passes them through an MLP, and multiplies
//! by `(I - A^T)` (the structural-equation "whitening"); the decoder mixes
//! covariates with the latent draw, solves `(I - A^T) h = g([x; z])` (the
//! inverse transform), and maps `h` to a softmax distribution over time bins.
//! Both graph transforms enter the autodiff tape as constant linear
//! operators whose adjoints are transposed solves, so no inverse matrix is
//! ever formed.

use crate::autodiff::{
    max0_kernel, selu_kernel, softmax_rows_kernel, AdamState, AutodiffError, LinearMap, Tape,
    Value,
};
use crate::graph::{
    sem_backward, sem_backward_transpose, sem_forward, sem_forward_transpose, Dag,
};
use crate::synth::SurvivalDataset;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("autodiff failure: {0}")]
    Autodiff(#[from] AutodiffError),
    #[error("graph failure: {0}")]
    Graph(#[from] crate::graph::GraphError),
    #[error("{context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    NonFinite { epoch: usize, what: &'static str },
    #[error("metrics failure: {0}")]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("checkpoint file {path}, line {line}: {problem}")]
    Checkpoint {
        path: String,
        line: usize,
        problem: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Hidden-layer nonlinearity used by every MLP in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Selu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Selu => "selu",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "selu" => Ok(Activation::Selu),
            other => Err(ModelError::InvalidConfig(format!(
                "unknown activation {other:?}, expected \"relu\" or \"selu\""
            ))),
        }
    }

    fn apply_plain(self, m: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => max0_kernel(m),
            Activation::Selu => selu_kernel(m),
        }
    }

    fn apply_tape(self, tape: &Tape, v: Value) -> Result<Value, AutodiffError> {
        match self {
            Activation::Relu => tape.max0(v),
            Activation::Selu => tape.selu(v),
        }
    }
}

/// One affine layer, columns as samples: `y = W x + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Array2<f64>,
    /// Shape (out, 1), broadcast across columns.
    pub bias: Array2<f64>,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, input: usize, output: usize, activation: Activation) -> Self {
        // He-style fan-in scaling for ReLU, LeCun for SELU (the latter is
        // what keeps self-normalizing nets in their fixed point).
        let gain = match activation {
            Activation::Relu => 2.0,
            Activation::Selu => 1.0,
        };
        let std = (gain / input as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let weight = Array2::from_shape_fn((output, input), |_| normal.sample(rng));
        Self {
            weight,
            bias: Array2::zeros((output, 1)),
        }
    }

    fn forward_plain(&self, x: &Array2<f64>) -> Array2<f64> {
        &self.weight.dot(x) + &self.bias.column(0).insert_axis(Axis(1))
    }
}

/// Multilayer perceptron: `layer_count` affine maps, the first from
/// `input` to `hidden`, the last from `hidden` to `output`, with the
/// activation after every map except the final one. `layer_count == 1`
/// degenerates to a single affine map.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    fn init(
        rng: &mut ChaCha8Rng,
        input: usize,
        hidden: usize,
        output: usize,
        layer_count: usize,
        activation: Activation,
    ) -> Result<Self, ModelError> {
        if layer_count == 0 {
            return Err(ModelError::InvalidConfig(
                "an MLP needs at least one layer".into(),
            ));
        }
        if layer_count > 1 && hidden == 0 {
            return Err(ModelError::InvalidConfig(
                "hidden width must be positive for a multi-layer MLP".into(),
            ));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for l in 0..layer_count {
            let fan_in = if l == 0 { input } else { hidden };
            let fan_out = if l + 1 == layer_count { output } else { hidden };
            layers.push(Linear::init(rng, fan_in, fan_out, activation));
        }
        Ok(Self { layers, activation })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    /// Forward pass without gradient tracking. Uses the same numeric kernels
    /// as the tape ops, so both paths agree bit for bit.
    pub fn forward_plain(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward_plain(&h);
            if l != last {
                h = self.activation.apply_plain(&h);
            }
        }
        h
    }

    /// Forward pass on a tape. `leaves` are the weight/bias values created by
    /// [`Mlp::leaves`], in layer order.
    fn forward_tape(&self, tape: &Tape, leaves: &[Value], x: Value) -> Result<Value, ModelError> {
        debug_assert_eq!(leaves.len(), 2 * self.layers.len());
        let last = self.layers.len() - 1;
        let mut h = x;
        for l in 0..self.layers.len() {
            let w = leaves[2 * l];
            let b = leaves[2 * l + 1];
            h = tape.add_bias(tape.matmul(w, h)?, b)?;
            if l != last {
                h = self.activation.apply_tape(tape, h)?;
            }
        }
        Ok(h)
    }

    /// Pushes every parameter onto the tape, returning handles in the fixed
    /// order `weight0, bias0, weight1, bias1, ...`.
    fn leaves(&self, tape: &Tape) -> Vec<Value> {
        let mut vals = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            vals.push(tape.value(layer.weight.clone()));
            vals.push(tape.value(layer.bias.clone()));
        }
        vals
    }

    fn tensors(&self) -> Vec<&Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// `(I - A^T)^{-1} x` as a constant tape operator; the adjoint solves the
/// transposed system `(I - A) y = g`.
pub struct SemForwardMap {
    dag: Dag,
}

impl SemForwardMap {
    pub fn new(dag: Dag) -> Self {
        Self { dag }
    }
}

impl LinearMap for SemForwardMap {
    fn dim(&self) -> usize {
        self.dag.num_nodes()
    }
    fn apply(&self, m: &Array2<f64>) -> Array2<f64> {
        sem_forward(&self.dag, m).expect("dimension checked by apply_map")
    }
    fn apply_transpose(&self, m: &Array2<f64>) -> Array2<f64> {
        sem_forward_transpose(&self.dag, m).expect("dimension checked by apply_map")
    }
}

/// `(I - A^T) x` as a constant tape operator; the adjoint multiplies by
/// `(I - A)`.
pub struct SemBackwardMap {
    dag: Dag,
}

impl SemBackwardMap {
    pub fn new(dag: Dag) -> Self {
        Self { dag }
    }
}

impl LinearMap for SemBackwardMap {
    fn dim(&self) -> usize {
        self.dag.num_nodes()
    }
    fn apply(&self, m: &Array2<f64>) -> Array2<f64> {
        sem_backward(&self.dag, m).expect("dimension checked by apply_map")
    }
    fn apply_transpose(&self, m: &Array2<f64>) -> Array2<f64> {
        sem_backward_transpose(&self.dag, m).expect("dimension checked by apply_map")
    }
}

/// Network widths and depths. Layer counts include the output map, so
/// `encoder_layers: 5` means four hidden layers plus the final affine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub encoder_hidden: usize,
    pub decoder_layers: usize,
    pub decoder_hidden: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_layers: 5,
            encoder_hidden: 128,
            decoder_layers: 3,
            decoder_hidden: 64,
            activation: Activation::Relu,
        }
    }
}

/// Optimization settings for [`DagSurvModel::train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
    pub kl_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 256,
            epochs: 500,
            patience: 20,
            kl_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "kl weight must be finite and nonnegative, got {}",
                self.kl_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ctd: f64,
}

/// Per-epoch record of a training run plus the early-stopping outcome. The
/// model returned by [`DagSurvModel::train`] carries the parameters from
/// `best_epoch`, not from the final epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_ctd: f64,
    pub stopped_early: bool,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_ctd\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_ctd));
        }
        out
    }
}

/// Discrete-time survival prediction, rows as instances. `pmf[[i, k]]` is
/// the probability that instance i's event falls in bin k; `cdf` is its
/// running row sum. Survival is derived as `1 - cdf`, which keeps
/// `survival + cdf == 1` exact in floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalPrediction {
    pmf: Array2<f64>,
    cdf: Array2<f64>,
}

impl SurvivalPrediction {
    pub fn from_pmf(pmf: Array2<f64>) -> Result<Self, ModelError> {
        if pmf.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        if pmf.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::InvalidConfig(
                "probability mass entries must be finite and nonnegative".into(),
            ));
        }
        let mut cdf = pmf.clone();
        for mut row in cdf.rows_mut() {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        Ok(Self { pmf, cdf })
    }

    pub fn num_instances(&self) -> usize {
        self.pmf.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.pmf.ncols()
    }

    pub fn pmf(&self) -> &Array2<f64> {
        &self.pmf
    }

    pub fn cdf(&self) -> &Array2<f64> {
        &self.cdf
    }

    pub fn survival(&self) -> Array2<f64> {
        self.cdf.mapv(|f| 1.0 - f)
    }

    /// Time-dependent concordance of these predictions against observed
    /// bins and event flags.
    pub fn concordance(&self, time_bins: &[usize], events: &[u8]) -> Result<f64, ModelError> {
        self.check_bins(time_bins)?;
        Ok(crate::metrics::ctd(time_bins, events, |i, j| {
            self.cdf[[j, time_bins[i]]]
        })?)
    }

    /// Bootstrap concordance over resamples of the instances; see
    /// [`crate::metrics::bootstrap`] for the resampling rules.
    pub fn bootstrap_concordance(
        &self,
        time_bins: &[usize],
        events: &[u8],
        b: usize,
        seed: u64,
    ) -> Result<crate::metrics::CtdReport, ModelError> {
        self.check_bins(time_bins)?;
        if time_bins.len() != self.num_instances() {
            return Err(ModelError::Dimension {
                context: "bootstrap_concordance instances".into(),
                expected: self.num_instances(),
                got: time_bins.len(),
            });
        }
        let report = crate::metrics::bootstrap(self.num_instances(), b, seed, |idx| {
            let rb: Vec<usize> = idx.iter().map(|&i| time_bins[i]).collect();
            let re: Vec<u8> = idx.iter().map(|&i| events[i]).collect();
            crate::metrics::ctd(&rb, &re, |p, q| self.cdf[[idx[q], rb[p]]])
        })?;
        Ok(report)
    }

    fn check_bins(&self, time_bins: &[usize]) -> Result<(), ModelError> {
        if let Some(&bad) = time_bins.iter().find(|&&b| b >= self.num_bins()) {
            return Err(ModelError::Dimension {
                context: "time bin beyond prediction horizon".into(),
                expected: self.num_bins(),
                got: bad,
            });
        }
        Ok(())
    }
}

/// Per-instance censored log likelihood: `δ ln(pmf[t] + 1e-8) +
/// (1 - δ) ln(1 - cdf[t] + 1e-8)`.
pub fn log_likelihood(
    prediction: &SurvivalPrediction,
    time_bins: &[usize],
    events: &[u8],
) -> Result<Array1<f64>, ModelError> {
    if time_bins.len() != prediction.num_instances() || events.len() != time_bins.len() {
        return Err(ModelError::Dimension {
            context: "log_likelihood instances".into(),
            expected: prediction.num_instances(),
            got: time_bins.len().min(events.len()),
        });
    }
    let mut out = Array1::zeros(time_bins.len());
    for i in 0..time_bins.len() {
        let t = time_bins[i];
        if t >= prediction.num_bins() {
            return Err(ModelError::Dimension {
                context: "time bin beyond prediction horizon".into(),
                expected: prediction.num_bins(),
                got: t,
            });
        }
        out[i] = if events[i] == 1 {
            (prediction.pmf[[i, t]] + LIKELIHOOD_FLOOR).ln()
        } else {
            (1.0 - prediction.cdf[[i, t]] + LIKELIHOOD_FLOOR).ln()
        };
    }
    Ok(out)
}

const LIKELIHOOD_FLOOR: f64 = 1e-8;

/// Per-batch constants pushed onto the tape alongside the parameters.
struct BatchTensors {
    /// Covariates, one column per instance.
    x: Array2<f64>,
    /// Covariates with the normalized event bin appended as a final row.
    x_time: Array2<f64>,
    /// One-hot mask of the observed bin, instances as rows.
    onehot: Array2<f64>,
    /// Ones at every bin up to and including the observed one.
    cumulative: Array2<f64>,
    /// Event flags as a column.
    delta: Array2<f64>,
    /// Complement of the event flags.
    delta_bar: Array2<f64>,
    /// Standard normal draws for the reparameterized latent.
    noise: Array2<f64>,
}

/// Conditional VAE over a known covariate DAG, predicting a distribution
/// over discrete time bins.
#[derive(Debug, Clone)]
pub struct DagSurvModel {
    dag: Dag,
    horizon: usize,
    f_e: Mlp,
    g: Linear,
    f_d: Mlp,
    config: ModelConfig,
}

impl DagSurvModel {
    /// Builds a freshly initialized model. The DAG covers the covariates
    /// plus the target as its final node; `horizon` is the largest time bin
    /// index, so the decoder emits `horizon + 1` probabilities.
    pub fn new(dag: Dag, horizon: usize, config: ModelConfig, init_seed: u64) -> Result<Self, ModelError> {
        let nodes = dag.num_nodes();
        if nodes < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "the DAG needs at least one covariate and the target, got {nodes} node(s)"
            )));
        }
        if horizon == 0 {
            return Err(ModelError::InvalidConfig(
                "horizon must be at least 1 (two time bins)".into(),
            ));
        }
        let covariates = nodes - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let f_e = Mlp::init(
            &mut rng,
            nodes,
            config.encoder_hidden,
            nodes,
            config.encoder_layers,
            config.activation,
        )?;
        let g = Linear::init(&mut rng, covariates + nodes, nodes, config.activation);
        let f_d = Mlp::init(
            &mut rng,
            nodes,
            config.decoder_hidden,
            horizon + 1,
            config.decoder_layers,
            config.activation,
        )?;
        Ok(Self {
            dag,
            horizon,
            f_e,
            g,
            f_d,
            config,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_bins(&self) -> usize {
        self.horizon + 1
    }

    pub fn num_covariates(&self) -> usize {
        self.dag.num_nodes() - 1
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Posterior means, one row per instance of the dataset.
    pub fn posterior_mean(&self, dataset: &SurvivalDataset) -> Result<Array2<f64>, ModelError> {
        self.check_dataset(dataset, "posterior_mean")?;
        let x_time = self.stack_time(dataset);
        Ok(self.encode_plain(&x_time).reversed_axes())
    }

    /// Event-time distributions for raw covariates (instances as rows).
    /// With `latent_samples == 0` the latent is pinned at the prior mean;
    /// otherwise the decoder output is averaged over that many prior draws.
    pub fn predict(
        &self,
        covariates: &Array2<f64>,
        latent_samples: usize,
        seed: u64,
    ) -> Result<SurvivalPrediction, ModelError> {
        if covariates.ncols() != self.num_covariates() {
            return Err(ModelError::Dimension {
                context: "predict covariates".into(),
                expected: self.num_covariates(),
                got: covariates.ncols(),
            });
        }
        let x = covariates.t().to_owned();
        let nodes = self.dag.num_nodes();
        let n = x.ncols();
        if latent_samples == 0 {
            let pmf = self.decode_plain(&x, &Array2::zeros((nodes, n)))?;
            return SurvivalPrediction::from_pmf(pmf);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut mean = Array2::zeros((n, self.num_bins()));
        for _ in 0..latent_samples {
            let z = Array2::from_shape_fn((nodes, n), |_| normal.sample(&mut rng));
            mean += &self.decode_plain(&x, &z)?;
        }
        mean /= latent_samples as f64;
        SurvivalPrediction::from_pmf(mean)
    }

    /// Minibatch optimization with early stopping on validation
    /// concordance. Returns the per-epoch history; on return the model
    /// holds the parameters of the best validation epoch.
    pub fn train(
        &mut self,
        train_set: &SurvivalDataset,
        val_set: &SurvivalDataset,
        tc: &TrainConfig,
    ) -> Result<TrainingHistory, ModelError> {
        self.train_with_progress(train_set, val_set, tc, |_| {})
    }

    /// [`Self::train`] with a per-epoch observer, called right after each
    /// epoch's record is final. The observer cannot influence the run.
    pub fn train_with_progress(
        &mut self,
        train_set: &SurvivalDataset,
        val_set: &SurvivalDataset,
        tc: &TrainConfig,
        mut progress: impl FnMut(&EpochRecord),
    ) -> Result<TrainingHistory, ModelError> {
        tc.validate()?;
        self.check_dataset(train_set, "train split")?;
        self.check_dataset(val_set, "validation split")?;

        let initial_val = self.validation_ctd(val_set)?;
        if tc.epochs == 0 {
            return Ok(TrainingHistory {
                records: Vec::new(),
                best_epoch: 0,
                best_val_ctd: initial_val,
                stopped_early: false,
            });
        }

        let shapes: Vec<(usize, usize)> = self
            .parameters()
            .iter()
            .map(|t| (t.nrows(), t.ncols()))
            .collect();
        let mut adam = AdamState::new(&shapes);
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let n = train_set.len();

        let mut records = Vec::new();
        let mut best: Option<(f64, usize, Mlp, Linear, Mlp)> = None;
        let mut epochs_since_best = 0usize;
        let mut stopped_early = false;
        let mut order: Vec<usize> = (0..n).collect();

        for epoch in 0..tc.epochs {
            // Fisher-Yates reshuffle each epoch; the same stream then draws
            // the latent noise, so one seed fixes the whole run.
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut loss_sum = 0.0;
            for chunk in order.chunks(tc.batch_size) {
                let noise = Array2::from_shape_fn(
                    (self.dag.num_nodes(), chunk.len()),
                    |_| normal.sample(&mut rng),
                );
                let (loss_value, grads) =
                    self.loss_and_gradients(train_set, chunk, &noise, tc.kl_weight)?;
                if !loss_value.is_finite() {
                    return Err(ModelError::NonFinite {
                        epoch,
                        what: "batch loss",
                    });
                }
                loss_sum += loss_value * chunk.len() as f64;
                let mut params = self.parameters_mut();
                adam.step(tc.learning_rate, &mut params, &grads)?;
            }
            let train_loss = loss_sum / n as f64;
            let val_ctd = self.validation_ctd(val_set)?;
            records.push(EpochRecord {
                epoch,
                train_loss,
                val_ctd,
            });
            progress(records.last().expect("just pushed"));

            let improved = best.as_ref().map_or(true, |b| val_ctd > b.0);
            if improved {
                best = Some((val_ctd, epoch, self.f_e.clone(), self.g.clone(), self.f_d.clone()));
                epochs_since_best = 0;
            } else {
                epochs_since_best += 1;
                if tc.patience > 0 && epochs_since_best >= tc.patience {
                    stopped_early = true;
                    break;
                }
            }
        }

        let (best_val_ctd, best_epoch, f_e, g, f_d) =
            best.expect("at least one epoch ran");
        self.f_e = f_e;
        self.g = g;
        self.f_d = f_d;
        Ok(TrainingHistory {
            records,
            best_epoch,
            best_val_ctd,
            stopped_early,
        })
    }

    /// Concordance of prior-mean predictions on a validation split.
    pub fn validation_ctd(&self, val_set: &SurvivalDataset) -> Result<f64, ModelError> {
        let pred = self.predict(val_set.covariates(), 0, 0)?;
        pred.concordance(val_set.time_bins(), val_set.events())
    }

    fn check_dataset(&self, dataset: &SurvivalDataset, context: &'static str) -> Result<(), ModelError> {
        if dataset.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        if dataset.num_covariates() != self.num_covariates() {
            return Err(ModelError::Dimension {
                context: format!("{context} covariate count"),
                expected: self.num_covariates(),
                got: dataset.num_covariates(),
            });
        }
        if dataset.horizon() != self.horizon {
            return Err(ModelError::Dimension {
                context: format!("{context} horizon"),
                expected: self.horizon,
                got: dataset.horizon(),
            });
        }
        Ok(())
    }

    /// Covariate columns with the normalized bin appended as the target row.
    fn stack_time(&self, dataset: &SurvivalDataset) -> Array2<f64> {
        let n = dataset.len();
        let l = self.num_covariates();
        let mut x_time = Array2::zeros((l + 1, n));
        for (col, row) in dataset.covariates().rows().into_iter().enumerate() {
            for (r, &v) in row.iter().enumerate() {
                x_time[[r, col]] = v;
            }
            x_time[[l, col]] = dataset.time_bins()[col] as f64 / self.horizon as f64;
        }
        x_time
    }

    fn encode_plain(&self, x_time: &Array2<f64>) -> Array2<f64> {
        let hidden = self.f_e.forward_plain(x_time);
        sem_backward(&self.dag, &hidden).expect("encoder output matches node count")
    }

    fn decode_plain(&self, x: &Array2<f64>, z: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let xz = ndarray::concatenate(Axis(0), &[x.view(), z.view()])
            .expect("covariates and latent share the column count");
        let a = self.config.activation.apply_plain(&self.g.forward_plain(&xz));
        let h = sem_forward(&self.dag, &a)?;
        let logits = self.f_d.forward_plain(&h);
        Ok(softmax_rows_kernel(&logits.reversed_axes()))
    }

    fn batch_tensors(&self, dataset: &SurvivalDataset, indices: &[usize], noise: Array2<f64>) -> BatchTensors {
        let l = self.num_covariates();
        let b = indices.len();
        let bins = dataset.time_bins();
        let events = dataset.events();
        let cov = dataset.covariates();
        let mut x = Array2::zeros((l, b));
        let mut x_time = Array2::zeros((l + 1, b));
        let mut onehot = Array2::zeros((b, self.num_bins()));
        let mut cumulative = Array2::zeros((b, self.num_bins()));
        let mut delta = Array2::zeros((b, 1));
        let mut delta_bar = Array2::zeros((b, 1));
        for (col, &i) in indices.iter().enumerate() {
            for r in 0..l {
                x[[r, col]] = cov[[i, r]];
                x_time[[r, col]] = cov[[i, r]];
            }
            x_time[[l, col]] = bins[i] as f64 / self.horizon as f64;
            onehot[[col, bins[i]]] = 1.0;
            for k in 0..=bins[i] {
                cumulative[[col, k]] = 1.0;
            }
            delta[[col, 0]] = f64::from(events[i]);
            delta_bar[[col, 0]] = 1.0 - f64::from(events[i]);
        }
        BatchTensors {
            x,
            x_time,
            onehot,
            cumulative,
            delta,
            delta_bar,
            noise,
        }
    }

    /// Full training objective on a tape: the negative mean censored log
    /// likelihood plus the weighted KL of the posterior against the unit
    /// prior. Returns the scalar loss and the parameter leaves in
    /// [`DagSurvModel::parameters`] order.
    fn elbo_tape(
        &self,
        tape: &Tape,
        fwd: &Rc<dyn LinearMap>,
        bwd: &Rc<dyn LinearMap>,
        batch: &BatchTensors,
        kl_weight: f64,
    ) -> Result<(Value, Vec<Value>), ModelError> {
        let leaves = self.push_params(tape);
        let ne = 2 * self.f_e.layers.len();
        let (enc_leaves, rest) = leaves.split_at(ne);
        let (g_leaves, dec_leaves) = rest.split_at(2);

        let x = tape.value(batch.x.clone());
        let x_time = tape.value(batch.x_time.clone());
        let noise = tape.value(batch.noise.clone());
        let onehot = tape.value(batch.onehot.clone());
        let cumulative = tape.value(batch.cumulative.clone());
        let delta = tape.value(batch.delta.clone());
        let delta_bar = tape.value(batch.delta_bar.clone());

        let mu = self.encode_tape(tape, bwd, enc_leaves, x_time)?;
        let z = tape.add(mu, noise)?;
        let pmf = self.decode_tape(tape, fwd, g_leaves, dec_leaves, x, z)?;

        let pmf_at = tape.sum_rows(tape.mul(pmf, onehot)?)?;
        let cdf_at = tape.sum_rows(tape.mul(pmf, cumulative)?)?;
        let event_term = tape.mul(delta, tape.log(tape.add_scalar(pmf_at, LIKELIHOOD_FLOOR)?)?)?;
        let survival_at = tape.add_scalar(tape.scale(cdf_at, -1.0)?, 1.0)?;
        let censor_term =
            tape.mul(delta_bar, tape.log(tape.add_scalar(survival_at, LIKELIHOOD_FLOOR)?)?)?;
        let mean_ll = tape.mean_all(tape.add(event_term, censor_term)?)?;

        let batch_size = batch.x.ncols() as f64;
        let mean_kl = tape.scale(tape.sum_all(tape.mul(mu, mu)?)?, 0.5 / batch_size)?;

        let loss = tape.scale(tape.sub(mean_ll, tape.scale(mean_kl, kl_weight)?)?, -1.0)?;
        Ok((loss, leaves))
    }

    fn encode_tape(
        &self,
        tape: &Tape,
        bwd: &Rc<dyn LinearMap>,
        enc_leaves: &[Value],
        x_time: Value,
    ) -> Result<Value, ModelError> {
        let hidden = self.f_e.forward_tape(tape, enc_leaves, x_time)?;
        Ok(tape.apply_map(bwd.clone(), hidden)?)
    }

    fn decode_tape(
        &self,
        tape: &Tape,
        fwd: &Rc<dyn LinearMap>,
        g_leaves: &[Value],
        dec_leaves: &[Value],
        x: Value,
        z: Value,
    ) -> Result<Value, ModelError> {
        let xz = tape.concat_rows(x, z)?;
        let a = tape.add_bias(tape.matmul(g_leaves[0], xz)?, g_leaves[1])?;
        let a = self.config.activation.apply_tape(tape, a)?;
        let h = tape.apply_map(fwd.clone(), a)?;
        let logits = self.f_d.forward_tape(tape, dec_leaves, h)?;
        Ok(tape.softmax_rows(tape.transpose(logits)?)?)
    }

    /// The loss of [`DagSurvModel::loss_and_gradients`] without the
    /// backward pass, for probing the objective at fixed noise.
    pub fn training_loss(
        &self,
        dataset: &SurvivalDataset,
        indices: &[usize],
        noise: &Array2<f64>,
        kl_weight: f64,
    ) -> Result<f64, ModelError> {
        let batch = self.batch_tensors_checked(dataset, indices, noise)?;
        let fwd: Rc<dyn LinearMap> = Rc::new(SemForwardMap::new(self.dag.clone()));
        let bwd: Rc<dyn LinearMap> = Rc::new(SemBackwardMap::new(self.dag.clone()));
        let tape = Tape::new();
        let (loss, _) = self.elbo_tape(&tape, &fwd, &bwd, &batch, kl_weight)?;
        Ok(tape.scalar(loss)?)
    }

    /// Training objective and its gradients for one batch with explicit
    /// latent noise (one standard normal column per instance). Gradients
    /// come back in [`DagSurvModel::parameters`] order. This is the exact
    /// path [`DagSurvModel::train`] optimizes.
    pub fn loss_and_gradients(
        &self,
        dataset: &SurvivalDataset,
        indices: &[usize],
        noise: &Array2<f64>,
        kl_weight: f64,
    ) -> Result<(f64, Vec<Array2<f64>>), ModelError> {
        let batch = self.batch_tensors_checked(dataset, indices, noise)?;
        let fwd: Rc<dyn LinearMap> = Rc::new(SemForwardMap::new(self.dag.clone()));
        let bwd: Rc<dyn LinearMap> = Rc::new(SemBackwardMap::new(self.dag.clone()));
        let tape = Tape::new();
        let (loss, leaves) = self.elbo_tape(&tape, &fwd, &bwd, &batch, kl_weight)?;
        let value = tape.scalar(loss)?;
        tape.backward(loss)?;
        let grads: Vec<Array2<f64>> = leaves
            .iter()
            .map(|&v| tape.grad(v))
            .collect::<Result<_, _>>()?;
        Ok((value, grads))
    }

    fn batch_tensors_checked(
        &self,
        dataset: &SurvivalDataset,
        indices: &[usize],
        noise: &Array2<f64>,
    ) -> Result<BatchTensors, ModelError> {
        self.check_dataset(dataset, "batch")?;
        if indices.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.len()) {
            return Err(ModelError::Dimension {
                context: "batch index".into(),
                expected: dataset.len(),
                got: bad,
            });
        }
        let want = (self.dag.num_nodes(), indices.len());
        if noise.dim() != want {
            return Err(ModelError::Dimension {
                context: format!("noise rows (want {} x {})", want.0, want.1),
                expected: want.0 * want.1,
                got: noise.len(),
            });
        }
        Ok(self.batch_tensors(dataset, indices, noise.clone()))
    }

    fn push_params(&self, tape: &Tape) -> Vec<Value> {
        let mut leaves = self.f_e.leaves(tape);
        leaves.push(tape.value(self.g.weight.clone()));
        leaves.push(tape.value(self.g.bias.clone()));
        leaves.extend(self.f_d.leaves(tape));
        leaves
    }

    /// Every trainable tensor in a fixed order: encoder layers, the
    /// mixing map, then decoder layers, each as weight followed by bias.
    pub fn parameters(&self) -> Vec<&Array2<f64>> {
        let mut out = self.f_e.tensors();
        out.push(&self.g.weight);
        out.push(&self.g.bias);
        out.extend(self.f_d.tensors());
        out
    }

    /// Mutable view of [`DagSurvModel::parameters`], for optimizers and
    /// perturbation tests.
    pub fn parameters_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = self.f_e.tensors_mut();
        out.push(&mut self.g.weight);
        out.push(&mut self.g.bias);
        out.extend(self.f_d.tensors_mut());
        out
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.f_e.layers.len() {
            names.push(format!("encoder.{i}.weight"));
            names.push(format!("encoder.{i}.bias"));
        }
        names.push("mix.weight".into());
        names.push("mix.bias".into());
        for i in 0..self.f_d.layers.len() {
            names.push(format!("decoder.{i}.weight"));
            names.push(format!("decoder.{i}.bias"));
        }
        names
    }

    /// Writes a plain-text checkpoint: header, caller metadata, the DAG,
    /// then every tensor. Floats print in shortest round-trip form, so a
    /// load reproduces the model bit for bit.
    pub fn save_checkpoint(&self, path: &str, meta: &[(String, String)]) -> Result<(), ModelError> {
        let mut out = String::from("dagsurv-checkpoint v1\n");
        for (key, value) in meta {
            if key.is_empty() || key.chars().any(char::is_whitespace) {
                return Err(ModelError::InvalidConfig(format!(
                    "meta key {key:?} must be a single non-empty token"
                )));
            }
            if value.contains('\n') {
                return Err(ModelError::InvalidConfig(format!(
                    "meta value for {key} must be a single line"
                )));
            }
            out.push_str(&format!("meta {key} {value}\n"));
        }
        out.push_str(&format!("activation {}\n", self.config.activation.name()));
        out.push_str(&format!("horizon {}\n", self.horizon));
        out.push_str(&format!(
            "encoder layers {} hidden {}\n",
            self.config.encoder_layers, self.config.encoder_hidden
        ));
        out.push_str(&format!(
            "decoder layers {} hidden {}\n",
            self.config.decoder_layers, self.config.decoder_hidden
        ));
        out.push_str(&format!("adjacency {}\n", self.dag.num_nodes()));
        for row in self.dag.adjacency().rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        for (name, tensor) in self.tensor_names().into_iter().zip(self.parameters()) {
            out.push_str(&format!(
                "tensor {name} {} {}\n",
                tensor.nrows(),
                tensor.ncols()
            ));
            for row in tensor.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        std::fs::write(path, out).map_err(|source| ModelError::Io {
            path: path.into(),
            source,
        })
    }

    /// Reads a checkpoint written by [`DagSurvModel::save_checkpoint`],
    /// returning the model and the caller metadata in file order.
    pub fn load_checkpoint(path: &str) -> Result<(Self, Vec<(String, String)>), ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.into(),
            source,
        })?;
        let lines: Vec<&str> = text.lines().collect();
        let fail = |line: usize, problem: String| ModelError::Checkpoint {
            path: path.to_string(),
            line,
            problem,
        };
        let get = |idx: usize| {
            lines
                .get(idx)
                .copied()
                .ok_or_else(|| fail(lines.len(), "file ends early".into()))
        };

        if get(0)? != "dagsurv-checkpoint v1" {
            return Err(fail(1, "missing dagsurv-checkpoint v1 header".into()));
        }
        let mut idx = 1;
        let mut meta = Vec::new();
        while let Some(rest) = get(idx).ok().and_then(|l| l.strip_prefix("meta ")) {
            let (key, value) = rest
                .split_once(' ')
                .ok_or_else(|| fail(idx + 1, "meta line needs a key and a value".into()))?;
            meta.push((key.to_string(), value.to_string()));
            idx += 1;
        }

        let activation = match get(idx)?.strip_prefix("activation ") {
            Some(name) => Activation::parse(name)
                .map_err(|e| fail(idx + 1, e.to_string()))?,
            None => return Err(fail(idx + 1, "expected an activation line".into())),
        };
        idx += 1;
        let horizon: usize = match get(idx)?.strip_prefix("horizon ") {
            Some(v) => v
                .parse()
                .map_err(|_| fail(idx + 1, format!("{v:?} is not a bin count")))?,
            None => return Err(fail(idx + 1, "expected a horizon line".into())),
        };
        idx += 1;

        let mut net_dims = |label: &str| -> Result<(usize, usize), ModelError> {
            let tokens: Vec<&str> = get(idx)?.split_whitespace().collect();
            let parsed = match tokens.as_slice() {
                [head, "layers", l, "hidden", h] if *head == label => {
                    match (l.parse::<usize>(), h.parse::<usize>()) {
                        (Ok(l), Ok(h)) => Some((l, h)),
                        _ => None,
                    }
                }
                _ => None,
            };
            let dims = parsed.ok_or_else(|| {
                fail(idx + 1, format!("expected \"{label} layers <n> hidden <n>\""))
            })?;
            idx += 1;
            Ok(dims)
        };
        let (encoder_layers, encoder_hidden) = net_dims("encoder")?;
        let (decoder_layers, decoder_hidden) = net_dims("decoder")?;

        let nodes: usize = match get(idx)?.strip_prefix("adjacency ") {
            Some(v) => v
                .parse()
                .map_err(|_| fail(idx + 1, format!("{v:?} is not a node count")))?,
            None => return Err(fail(idx + 1, "expected an adjacency line".into())),
        };
        idx += 1;
        let mut adjacency = Array2::zeros((nodes, nodes));
        for r in 0..nodes {
            let cells: Vec<&str> = get(idx)?.split(',').collect();
            if cells.len() != nodes {
                return Err(fail(
                    idx + 1,
                    format!("adjacency row has {} cells, expected {nodes}", cells.len()),
                ));
            }
            for (c, cell) in cells.iter().enumerate() {
                adjacency[[r, c]] = cell
                    .parse()
                    .map_err(|_| fail(idx + 1, format!("{cell:?} is not a number")))?;
            }
            idx += 1;
        }
        let dag = Dag::from_adjacency(adjacency)
            .map_err(|e| fail(idx, format!("bad adjacency: {e}")))?;

        let config = ModelConfig {
            encoder_layers,
            encoder_hidden,
            decoder_layers,
            decoder_hidden,
            activation,
        };
        let mut model = Self::new(dag, horizon, config, 0)?;

        let names = model.tensor_names();
        let mut tensors = model.parameters_mut();
        for (k, name) in names.iter().enumerate() {
            let header: Vec<&str> = get(idx)?.split_whitespace().collect();
            let ok = header.len() == 4
                && header[0] == "tensor"
                && header[1] == name
                && header[2] == tensors[k].nrows().to_string()
                && header[3] == tensors[k].ncols().to_string();
            if !ok {
                return Err(fail(
                    idx + 1,
                    format!(
                        "expected \"tensor {name} {} {}\"",
                        tensors[k].nrows(),
                        tensors[k].ncols()
                    ),
                ));
            }
            idx += 1;
            for r in 0..tensors[k].nrows() {
                let cells: Vec<&str> = get(idx)?.split(' ').collect();
                if cells.len() != tensors[k].ncols() {
                    return Err(fail(
                        idx + 1,
                        format!(
                            "tensor row has {} cells, expected {}",
                            cells.len(),
                            tensors[k].ncols()
                        ),
                    ));
                }
                for (c, cell) in cells.iter().enumerate() {
                    let value: f64 = cell
                        .parse()
                        .map_err(|_| fail(idx + 1, format!("{cell:?} is not a number")))?;
                    if !value.is_finite() {
                        return Err(fail(idx + 1, format!("parameter {value} is not finite")));
                    }
                    tensors[k][[r, c]] = value;
                }
                idx += 1;
            }
        }
        if get(idx)? != "end" {
            return Err(fail(idx + 1, "expected the end marker".into()));
        }
        if idx + 1 != lines.len() {
            return Err(fail(idx + 2, "trailing content after the end marker".into()));
        }
        drop(tensors);
        Ok((model, meta))
    }
}
