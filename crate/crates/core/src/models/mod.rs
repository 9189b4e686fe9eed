//! Complete classifiers over radargram thumbnails: a shallow CNN
//! baseline and two covariance networks (last-layer and multi-layer
//! feature variants), plus softmax cross-entropy and checkpointing.
//!
//! All three models share one calling convention: `forward_train` returns
//! logits and a cache, `backward` consumes the cache and logit gradients
//! and accumulates parameter gradients, `apply_step` performs SGD
//! (Riemannian on BiMap weights, Euclidean elsewhere).

pub mod checkpoint;
pub mod loss;
pub mod scnn;
pub mod spd_tail;
pub mod spdnet;

pub use checkpoint::{load_model, model_to_bytes, save_model};
pub use loss::{cross_entropy, softmax, LossGrad};
pub use scnn::{Scnn, ScnnCache};
pub use spd_tail::{SpdTail, SpdTailCache};
pub use spdnet::{SpdNet, SpdNetCache};

use crate::error::{CoreError, Result};
use crate::frontend::ConvStackCfg;
use crate::stiefel::OptimizerConfig;
use crate::tensor::{Scalar, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelVariant {
    Scnn,
    RcNet,
    SrcNet,
}

/// Everything needed to build a classifier deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub num_classes: usize,
    /// SPD dimension chain, input first; unused by the baseline.
    pub spd_dims: Vec<usize>,
    pub reeig_eps: f64,
    pub dropout_rate: f64,
    pub frontend: ConvStackCfg,
    /// Conv widths of the baseline's three stages; unused by SPD variants.
    pub scnn_channels: [usize; 3],
}

impl ModelConfig {
    /// Covariance network on last-layer features (Table-style chain
    /// 64 -> 58 -> 54 -> 44 -> 32).
    pub fn rcnet() -> Self {
        ModelConfig {
            variant: ModelVariant::RcNet,
            num_classes: 4,
            spd_dims: vec![64, 58, 54, 44, 32],
            reeig_eps: 1e-4,
            dropout_rate: 0.5,
            frontend: ConvStackCfg::standard(),
            scnn_channels: [16, 32, 64],
        }
    }

    /// Covariance network on multi-layer features (chain
    /// 256 -> 235 -> 217 -> 179 -> 128).
    pub fn srcnet() -> Self {
        ModelConfig {
            variant: ModelVariant::SrcNet,
            spd_dims: vec![256, 235, 217, 179, 128],
            ..ModelConfig::rcnet()
        }
    }

    /// Shallow CNN baseline.
    pub fn scnn() -> Self {
        ModelConfig {
            variant: ModelVariant::Scnn,
            spd_dims: Vec::new(),
            dropout_rate: 0.0,
            ..ModelConfig::rcnet()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(CoreError::Config(format!(
                "model config: need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CoreError::Config(format!(
                "model config: dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        self.frontend.validate()?;
        if self.variant != ModelVariant::Scnn {
            if self.spd_dims.is_empty() {
                return Err(CoreError::Config(
                    "model config: SPD variants need a dimension chain".into(),
                ));
            }
            if self.spd_dims.windows(2).any(|w| w[1] >= w[0] || w[1] == 0) {
                return Err(CoreError::Config(format!(
                    "model config: dimension chain {:?} must be strictly decreasing",
                    self.spd_dims
                )));
            }
            if !(self.reeig_eps > 0.0) {
                return Err(CoreError::Config(format!(
                    "model config: rectification eps must be positive, got {}",
                    self.reeig_eps
                )));
            }
        }
        if self.scnn_channels.iter().any(|&c| c == 0) {
            return Err(CoreError::Config(
                "model config: baseline conv widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-sample classification output.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Argmax class (first maximum on ties).
    pub class: usize,
}

impl Prediction {
    pub fn from_logit_row(row: &[f64]) -> Self {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probabilities: Vec<f64> = exps.iter().map(|&e| e / z).collect();
        let class = row
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0;
        Prediction {
            logits: row.to_vec(),
            probabilities,
            class,
        }
    }
}

/// Splits a `[batch, classes]` logit tensor into per-sample predictions.
pub fn predictions_from_logits<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<Prediction>> {
    if logits.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "predictions: expected [batch, classes], got {:?}",
            logits.shape()
        )));
    }
    let (b, k) = (logits.rows(), logits.cols());
    Ok((0..b)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|j| logits.get(i, j).as_f64()).collect();
            Prediction::from_logit_row(&row)
        })
        .collect())
}

/// Uniform front for the three classifier variants; carries the config
/// it was built from so checkpoints can reproduce the exact model.
#[derive(Clone, Debug)]
pub struct Model<T> {
    cfg: ModelConfig,
    kind: ModelKind<T>,
}

#[derive(Clone, Debug)]
enum ModelKind<T> {
    Scnn(Scnn<T>),
    Spd(SpdNet<T>),
}

#[derive(Debug)]
pub enum ModelCache<T> {
    Scnn(ScnnCache<T>),
    Spd(SpdNetCache<T>),
}

impl<T: Scalar> Model<T> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let kind = match cfg.variant {
            ModelVariant::Scnn => ModelKind::Scnn(Scnn::new(
                cfg.frontend.in_ch,
                (cfg.frontend.input_h, cfg.frontend.input_w),
                cfg.scnn_channels,
                cfg.num_classes,
                seed,
                0,
            )?),
            ModelVariant::RcNet | ModelVariant::SrcNet => ModelKind::Spd(SpdNet::new(cfg, seed)?),
        };
        Ok(Model {
            cfg: cfg.clone(),
            kind,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn variant(&self) -> ModelVariant {
        self.cfg.variant
    }

    pub fn num_classes(&self) -> usize {
        self.cfg.num_classes
    }

    /// The SPD sub-model, when this is a covariance network.
    pub fn as_spd(&self) -> Option<&SpdNet<T>> {
        match &self.kind {
            ModelKind::Spd(m) => Some(m),
            ModelKind::Scnn(_) => None,
        }
    }

    pub fn as_spd_mut(&mut self) -> Option<&mut SpdNet<T>> {
        match &mut self.kind {
            ModelKind::Spd(m) => Some(m),
            ModelKind::Scnn(_) => None,
        }
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, ModelCache<T>)> {
        match &mut self.kind {
            ModelKind::Scnn(m) => {
                let (logits, c) = m.forward_train(x)?;
                Ok((logits, ModelCache::Scnn(c)))
            }
            ModelKind::Spd(m) => {
                let (logits, c) = m.forward_train(x, rng)?;
                Ok((logits, ModelCache::Spd(c)))
            }
        }
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.kind {
            ModelKind::Scnn(m) => m.forward_eval(x),
            ModelKind::Spd(m) => m.forward_eval(x),
        }
    }

    /// Backward from logit gradients; returns the input-image gradient.
    pub fn backward(&mut self, cache: &ModelCache<T>, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        match (&mut self.kind, cache) {
            (ModelKind::Scnn(m), ModelCache::Scnn(c)) => m.backward(c, grad_logits),
            (ModelKind::Spd(m), ModelCache::Spd(c)) => m.backward(c, grad_logits),
            _ => Err(CoreError::Dimension(
                "model backward: cache does not belong to this model".into(),
            )),
        }
    }

    pub fn zero_grads(&mut self) {
        match &mut self.kind {
            ModelKind::Scnn(m) => m.zero_grads(),
            ModelKind::Spd(m) => m.zero_grads(),
        }
    }

    pub fn apply_step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        match &mut self.kind {
            ModelKind::Scnn(m) => m.apply_step(cfg),
            ModelKind::Spd(m) => m.apply_step(cfg),
        }
    }

    pub fn visit_tensors(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        match &self.kind {
            ModelKind::Scnn(m) => m.visit_tensors(f),
            ModelKind::Spd(m) => m.visit_tensors(f),
        }
    }

    pub fn visit_param_grads(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        match &self.kind {
            ModelKind::Scnn(m) => m.visit_param_grads(f),
            ModelKind::Spd(m) => m.visit_param_grads(f),
        }
    }

    pub fn restore_tensors(
        &mut self,
        lookup: &mut dyn FnMut(&str) -> Option<Tensor<T>>,
    ) -> Result<()> {
        match &mut self.kind {
            ModelKind::Scnn(m) => m.restore_tensors(lookup),
            ModelKind::Spd(m) => m.restore_tensors(lookup),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_catches_bad_chains() {
        assert!(ModelConfig::rcnet().validate().is_ok());
        assert!(ModelConfig::srcnet().validate().is_ok());
        assert!(ModelConfig::scnn().validate().is_ok());

        let mut bad = ModelConfig::rcnet();
        bad.spd_dims = vec![64, 64, 32];
        assert!(bad.validate().is_err());
        bad.spd_dims = Vec::new();
        assert!(bad.validate().is_err());

        let mut bad = ModelConfig::scnn();
        bad.num_classes = 1;
        assert!(bad.validate().is_err());

        let mut bad = ModelConfig::rcnet();
        bad.dropout_rate = 1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn prediction_is_a_distribution_with_first_max_argmax() {
        let p = Prediction::from_logit_row(&[1.0, 3.0, 3.0, 0.0]);
        let sum: f64 = p.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert_eq!(p.class, 1, "ties resolve to the first maximum");
        assert!(p.probabilities.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn config_json_roundtrips() {
        let cfg = ModelConfig::srcnet();
        let s = serde_json::to_string(&cfg).unwrap();
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
    }
}
