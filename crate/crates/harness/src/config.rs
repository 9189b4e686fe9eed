//! Run configuration: a JSON-serializable mirror of everything a training
//! run depends on, plus the content hash that ties CSV rows back to the
//! exact configuration that produced them.

use crate::{HarnessError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spdnet_core::models::ModelConfig;
use spdnet_core::stiefel::OptimizerConfig;
use std::path::{Path, PathBuf};

/// Which experiment the configuration drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Plain,
    RatioSweep,
    MislabelSweep,
    Scenario,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Plain => "plain",
            Protocol::RatioSweep => "ratio_sweep",
            Protocol::MislabelSweep => "mislabel_sweep",
            Protocol::Scenario => "scenario",
        }
    }
}

/// One training run, fully specified. Serializes to the JSON config files
/// the CLI consumes; missing fields take the defaults below.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: OptimizerConfig,
    /// Maximum epoch count; must be at least 1.
    pub epochs: usize,
    /// Early stopping: give up after this many consecutive epochs without
    /// a validation-accuracy improvement.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Dataset directory; the CLI `--data` flag overrides it.
    pub data_dir: PathBuf,
    pub train_ratio: f64,
    /// Share of the holdout that validates (the rest tests).
    pub val_fraction: f64,
    pub protocol: Protocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::rcnet(),
            optim: OptimizerConfig::default(),
            epochs: 50,
            patience: 10,
            batch_size: 8,
            seed: 0,
            data_dir: PathBuf::new(),
            train_ratio: 0.7,
            val_fraction: 0.5,
            protocol: Protocol::Plain,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch size must be at least 1".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(HarnessError::Config(format!(
                "train ratio must lie strictly inside (0, 1), got {}",
                self.train_ratio
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(HarnessError::Config(format!(
                "validation fraction must lie strictly inside (0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(self.optim.lr > 0.0 && self.optim.lr.is_finite()) {
            return Err(HarnessError::Config(format!(
                "learning rate must be positive, got {}",
                self.optim.lr
            )));
        }
        if !(0.0..1.0).contains(&self.optim.momentum) {
            return Err(HarnessError::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.optim.momentum
            )));
        }
        self.model.validate()?;
        Ok(())
    }

    /// Parses a JSON config file; unknown fields are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("read {}: {e}", path.display())))?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("parse {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Content hash of a configuration: the first 16 hex digits of the SHA-256
/// of its canonical JSON. Field order is fixed by the struct definitions,
/// so equal configs always hash equally.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
