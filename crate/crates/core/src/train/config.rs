//! Run configuration, stored as TOML with `[model]`, `[features]` and
//! `[training]` tables of typed keys. Every key has a default.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ctc::SymbolTable;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::layers::InitCriterion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub training: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitName {
    He,
    Glorot,
}

impl From<InitName> for InitCriterion {
    fn from(n: InitName) -> Self {
        match n {
            InitName::He => InitCriterion::He,
            InitName::Glorot => InitCriterion::Glorot,
        }
    }
}

/// Architecture. Widths are in quaternion units (one unit = four real ones).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Output labels, excluding the blank (which is appended last).
    pub symbols: Vec<String>,
    /// Frequency extent of the input features.
    pub input_bands: usize,
    /// Convolutional layers in total, including the first one.
    pub n_conv_layers: usize,
    pub feature_maps: usize,
    /// (frequency, time) kernel extent.
    pub kernel: [usize; 2],
    /// Frequency pooling width after the first convolution.
    pub pool_width: usize,
    pub n_dense: usize,
    pub dense_width: usize,
    pub dropout: f64,
    pub l2: f64,
    pub prelu_init: f64,
    pub bias: bool,
    pub init: InitName,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            symbols: TIMIT_61.split_whitespace().map(String::from).collect(),
            input_bands: 41,
            n_conv_layers: 10,
            feature_maps: 64,
            kernel: [3, 5],
            pool_width: 3,
            n_dense: 3,
            dense_width: 256,
            dropout: 0.3,
            l2: 1e-5,
            prelu_init: 0.25,
            bias: true,
            init: InitName::He,
        }
    }
}

/// The 61 TIMIT phone labels.
pub const TIMIT_61: &str = "aa ae ah ao aw ax ax-h axr ay b bcl ch d dcl dh dx eh el em en eng epi er ey f g gcl h# hh hv ih ix iy jh k kcl l m n ng nx ow oy p pau pcl q r s sh t tcl th uh uw ux v w y z zh";

impl ModelConfig {
    pub fn symbol_table(&self) -> Result<SymbolTable> {
        SymbolTable::new(self.symbols.iter().cloned())
    }

    /// Frequency extent after pooling.
    pub fn pooled_bands(&self) -> usize {
        self.input_bands / self.pool_width.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.symbol_table()?;
        let positive = [
            ("input_bands", self.input_bands),
            ("n_conv_layers", self.n_conv_layers),
            ("feature_maps", self.feature_maps),
            ("pool_width", self.pool_width),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.kernel.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::config("kernel", format!("{:?} must be odd and positive for shape-preserving padding", self.kernel)));
        }
        if self.pooled_bands() == 0 {
            return Err(Error::config("pool_width", format!("{} exceeds input_bands {}", self.pool_width, self.input_bands)));
        }
        if self.n_dense > 0 && self.dense_width == 0 {
            return Err(Error::config("dense_width", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::config("l2", "must be non-negative"));
        }
        if !self.prelu_init.is_finite() {
            return Err(Error::config("prelu_init", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EarlyStopMetric {
    Per,
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Adam epochs.
    pub epochs: usize,
    /// SGD fine-tuning epochs after the Adam phase.
    pub fine_tune_epochs: usize,
    pub batch_size: usize,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub sgd_lr: f64,
    pub loss_reduction: LossReduction,
    pub early_stop: EarlyStopMetric,
    /// Stop after this many epochs without dev improvement; 0 disables.
    pub patience: usize,
    pub workers: usize,
    /// Phone folding applied before scoring: "" (none), "timit39", or a
    /// path to a map file.
    pub phone_map: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1234,
            epochs: 100,
            fine_tune_epochs: 50,
            batch_size: 8,
            adam_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            sgd_lr: 1e-5,
            loss_reduction: LossReduction::Mean,
            early_stop: EarlyStopMetric::Per,
            patience: 0,
            workers: 1,
            phone_map: String::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        for (field, v) in [("adam_lr", self.adam_lr), ("sgd_lr", self.sgd_lr), ("adam_eps", self.adam_eps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be non-negative"));
            }
        }
        for (field, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(field, "must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.features.validate()?;
        self.training.validate()?;
        if self.features.width() != self.model.input_bands {
            return Err(Error::config(
                "model.input_bands",
                format!("{} but the feature front end produces {}", self.model.input_bands, self.features.width()),
            ));
        }
        Ok(())
    }

    /// SHA-256 over the model and feature settings; two configs with equal
    /// hashes build interchangeable parameter sets.
    pub fn hash(&self) -> [u8; 32] {
        #[derive(Serialize)]
        struct Arch<'a> {
            model: &'a ModelConfig,
            features: &'a FeatureConfig,
        }
        let text = toml::to_string(&Arch { model: &self.model, features: &self.features }).expect("serializes");
        Sha256::digest(text.as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture() {
        let c = Config::default();
        assert_eq!(c.model.symbols.len(), 61);
        assert_eq!(c.model.kernel, [3, 5]);
        assert_eq!(c.model.dense_width * 4, 1024);
        assert_eq!(c.model.feature_maps * 4, 256);
        assert_eq!(c.model.dropout, 0.3);
        assert_eq!(c.model.l2, 1e-5);
        assert_eq!((c.training.epochs, c.training.fine_tune_epochs), (100, 50));
        assert_eq!(c.training.sgd_lr, 1e-5);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        let partial = Config::from_toml("[model]\nfeature_maps = 8\nsymbols = [\"a\", \"b\"]\n").unwrap();
        assert_eq!(partial.model.feature_maps, 8);
        assert_eq!(partial.model.n_dense, 3);
    }

    #[test]
    fn field_level_errors() {
        let err = Config::from_toml("[model]\ndropout = 1.5\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "dropout"), "{err}");
        let err = Config::from_toml("[model]\nkernel = [2, 5]\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "kernel"));
        assert!(Config::from_toml("[model]\nbogus = 1\n").is_err());
        let err = Config::from_toml("[features]\nn_mels = 20\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "model.input_bands"));
    }

    #[test]
    fn hash_ignores_schedule() {
        let a = Config::default();
        let mut b = a.clone();
        b.training.epochs = 3;
        assert_eq!(a.hash(), b.hash());
        b.model.feature_maps = 8;
        assert_ne!(a.hash(), b.hash());
    }
}
