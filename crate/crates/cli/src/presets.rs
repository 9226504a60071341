//! Named settings bundles and the plain-text training config file.
//!
//! Presets make the benchmark runs one-command: `synthetic-small` and
//! `synthetic-large` bundle the generator settings the datasets are defined
//! by, and all four train presets carry the per-dataset hyperparameters
//! (layer counts, widths, activation, learning rate). A TOML config file
//! and individual flags can override any preset field; precedence is
//! preset < config file < flag.

use std::path::Path;

use dagsurv_core::{Activation, ModelConfig, TrainConfig};
use serde::Deserialize;

use crate::CliError;

/// Generator settings for the synthetic benchmark datasets.
#[derive(Debug, Clone)]
pub struct GenPreset {
    pub covariates: usize,
    pub expected_degree: f64,
    pub samples: usize,
    pub scale_c: f64,
    pub censor_fraction: f64,
}

/// `synthetic-small`: 9 covariates, expected degree 3, c = 90, 10k rows,
/// half censored. `synthetic-large` is the same with 49 covariates.
pub fn gen_preset(name: &str) -> Option<GenPreset> {
    let base = GenPreset {
        covariates: 9,
        expected_degree: 3.0,
        samples: 10_000,
        scale_c: 90.0,
        censor_fraction: 0.5,
    };
    match name {
        "synthetic-small" => Some(base),
        "synthetic-large" => Some(GenPreset {
            covariates: 49,
            ..base
        }),
        _ => None,
    }
}

/// Per-dataset training hyperparameters. Layer counts, widths, activation,
/// and learning rate differ per preset; batch size 256, 500 epoch cap,
/// patience 20, and unit KL weight are shared.
pub fn train_preset(name: &str) -> Option<(ModelConfig, TrainConfig)> {
    let train = TrainConfig::default();
    let model = |el, eh, dl, dh, act| ModelConfig {
        encoder_layers: el,
        encoder_hidden: eh,
        decoder_layers: dl,
        decoder_hidden: dh,
        activation: act,
    };
    match name {
        "synthetic-small" => Some((
            model(5, 128, 3, 64, Activation::Relu),
            TrainConfig {
                learning_rate: 1e-4,
                ..train
            },
        )),
        "synthetic-large" => Some((
            model(5, 64, 4, 32, Activation::Relu),
            TrainConfig {
                learning_rate: 1e-5,
                ..train
            },
        )),
        "metabric" => Some((
            model(3, 256, 3, 64, Activation::Selu),
            TrainConfig {
                learning_rate: 1e-5,
                ..train
            },
        )),
        "gbsg" => Some((
            model(3, 128, 3, 32, Activation::Relu),
            TrainConfig {
                learning_rate: 1e-5,
                ..train
            },
        )),
        _ => None,
    }
}

pub fn preset_names() -> &'static str {
    "synthetic-small, synthetic-large, metabric, gbsg"
}

/// Training config file: TOML with any subset of these keys. Unknown keys
/// are rejected so typos fail loudly instead of silently using a default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub kl_weight: Option<f64>,
    pub encoder_layers: Option<usize>,
    pub encoder_hidden: Option<usize>,
    pub decoder_layers: Option<usize>,
    pub decoder_hidden: Option<usize>,
    pub activation: Option<String>,
    pub seed: Option<u64>,
    pub time_bins: Option<usize>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::data(format!("reading config {}: {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| CliError::data(format!("config {}: {e}", path.display())))
}

impl FileConfig {
    /// Lays the file's settings over `model` and `train`; returns the file's
    /// time_bins override, if any.
    pub fn apply(
        &self,
        model: &mut ModelConfig,
        train: &mut TrainConfig,
    ) -> Result<Option<usize>, CliError> {
        if let Some(v) = self.lr {
            train.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = self.epochs {
            train.epochs = v;
        }
        if let Some(v) = self.patience {
            train.patience = v;
        }
        if let Some(v) = self.kl_weight {
            train.kl_weight = v;
        }
        if let Some(v) = self.seed {
            train.seed = v;
        }
        if let Some(v) = self.encoder_layers {
            model.encoder_layers = v;
        }
        if let Some(v) = self.encoder_hidden {
            model.encoder_hidden = v;
        }
        if let Some(v) = self.decoder_layers {
            model.decoder_layers = v;
        }
        if let Some(v) = self.decoder_hidden {
            model.decoder_hidden = v;
        }
        if let Some(name) = &self.activation {
            model.activation = Activation::parse(name).map_err(CliError::data)?;
        }
        Ok(self.time_bins)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_the_four_datasets() {
        for name in ["synthetic-small", "synthetic-large", "metabric", "gbsg"] {
            assert!(train_preset(name).is_some(), "{name}");
        }
        assert!(train_preset("synthetic-medium").is_none());
        assert_eq!(gen_preset("synthetic-small").unwrap().covariates, 9);
        assert_eq!(gen_preset("synthetic-large").unwrap().covariates, 49);
        assert!(gen_preset("metabric").is_none(), "real data is ingested, not generated");

        let (model, train) = train_preset("metabric").unwrap();
        assert_eq!(model.encoder_hidden, 256);
        assert_eq!(model.activation, Activation::Selu);
        assert_eq!(train.learning_rate, 1e-5);
        assert_eq!(train.batch_size, 256);
    }

    #[test]
    fn file_config_overrides_only_what_it_names() {
        let fc: FileConfig =
            toml::from_str("lr = 0.002\nactivation = \"selu\"\ntime_bins = 25\n").unwrap();
        let (mut model, mut train) = train_preset("gbsg").unwrap();
        let bins = fc.apply(&mut model, &mut train).unwrap();
        assert_eq!(train.learning_rate, 0.002);
        assert_eq!(model.activation, Activation::Selu);
        assert_eq!(bins, Some(25));
        // untouched fields keep the preset values
        assert_eq!(model.encoder_hidden, 128);
        assert_eq!(train.patience, 20);

        let typo: Result<FileConfig, _> = toml::from_str("learn_rate = 0.1\n");
        assert!(typo.is_err());
    }
}
