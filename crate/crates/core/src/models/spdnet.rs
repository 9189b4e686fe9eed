//! Covariance classifiers: the residual frontend feeding covariance
//! pooling and the SPD tail, finished by dropout and a fully-connected
//! head. Two feature paths share the implementation: last-layer features
//! (all channels of the final map) and multi-layer features (the first
//! `keep_channels` of every layer, resized to a common size).

use crate::error::{CoreError, Result};
use crate::frontend::{
    assemble_last_layer, assemble_last_layer_backward, assemble_multi_layer,
    assemble_multi_layer_backward, ConvStack, ConvStackCache,
};
use crate::models::spd_tail::{SpdTail, SpdTailCache};
use crate::models::{ModelConfig, ModelVariant};
use crate::nn::{dropout_backward, dropout_forward, DropoutCache, Linear, LinearCache};
use crate::stiefel::OptimizerConfig;
use crate::tensor::{Scalar, Tensor};
use rand_chacha::ChaCha8Rng;

/// RCNet / SRCNet classifier.
#[derive(Clone, Debug)]
pub struct SpdNet<T> {
    cfg: ModelConfig,
    stack: ConvStack<T>,
    tail: SpdTail<T>,
    fc: Linear<T>,
}

#[derive(Debug)]
pub struct SpdNetCache<T> {
    stack: ConvStackCache<T>,
    tail: SpdTailCache<T>,
    dropout: Option<DropoutCache>,
    fc: LinearCache<T>,
}

impl<T: Scalar> SpdNet<T> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let expected_d = match cfg.variant {
            ModelVariant::RcNet => cfg.frontend.channels,
            ModelVariant::SrcNet => cfg.frontend.layers * cfg.frontend.keep_channels,
            ModelVariant::Scnn => {
                return Err(CoreError::Config(
                    "spd net: SCNN variant belongs to the baseline model".into(),
                ))
            }
        };
        if cfg.spd_dims.first() != Some(&expected_d) {
            return Err(CoreError::Config(format!(
                "spd net: dimension chain {:?} must start at the feature dimension {expected_d}",
                cfg.spd_dims
            )));
        }
        let stack = ConvStack::new(cfg.frontend, seed, 0)?;
        let tail = SpdTail::new(&cfg.spd_dims, cfg.reeig_eps, seed, 1000)?;
        let fc = Linear::new(tail.output_len(), cfg.num_classes, seed, 2000)?;
        Ok(SpdNet {
            cfg: cfg.clone(),
            stack,
            tail,
            fc,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Vectorized feature length entering the FC head.
    pub fn head_in_features(&self) -> usize {
        self.tail.output_len()
    }

    pub fn tail(&self) -> &SpdTail<T> {
        &self.tail
    }

    pub fn tail_mut(&mut self) -> &mut SpdTail<T> {
        &mut self.tail
    }

    fn assemble(&self, outs: &[Tensor<T>]) -> Result<Tensor<T>> {
        match self.cfg.variant {
            ModelVariant::RcNet => assemble_last_layer(outs.last().expect("layers >= 1")),
            ModelVariant::SrcNet => assemble_multi_layer(
                outs,
                self.cfg.frontend.keep_channels,
                self.cfg.frontend.mean_size()?,
            ),
            ModelVariant::Scnn => unreachable!("constructor rejects SCNN"),
        }
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, SpdNetCache<T>)> {
        let (outs, stack_cache) = self.stack.forward_train(x)?;
        let feats = self.assemble(&outs)?;
        let (v, tail_cache) = self.tail.forward(&feats)?;
        let (v, dropout) = if self.cfg.dropout_rate > 0.0 {
            let (vd, c) = dropout_forward(&v, self.cfg.dropout_rate, rng)?;
            (vd, Some(c))
        } else {
            (v, None)
        };
        let (logits, fc) = self.fc.forward(&v)?;
        Ok((
            logits,
            SpdNetCache {
                stack: stack_cache,
                tail: tail_cache,
                dropout,
                fc,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let outs = self.stack.forward_eval(x)?;
        let feats = self.assemble(&outs)?;
        let (v, _) = self.tail.forward(&feats)?;
        Ok(self.fc.forward(&v)?.0)
    }

    /// Backward from logit gradients; returns the input-image gradient.
    pub fn backward(
        &mut self,
        cache: &SpdNetCache<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let g = self.fc.backward(&cache.fc, grad_logits)?;
        let g = match &cache.dropout {
            Some(c) => dropout_backward(c, &g)?,
            None => g,
        };
        let g_feats = self.tail.backward(&cache.tail, &g)?;
        let layers = self.cfg.frontend.layers;
        let layer_grads: Vec<Option<Tensor<T>>> = match self.cfg.variant {
            ModelVariant::RcNet => {
                let dims = self.cfg.frontend.layer_dims()?;
                let (h, w) = *dims.last().expect("layers >= 1");
                let mut v: Vec<Option<Tensor<T>>> = vec![None; layers];
                *v.last_mut().unwrap() = Some(assemble_last_layer_backward(&g_feats, h, w)?);
                v
            }
            ModelVariant::SrcNet => assemble_multi_layer_backward(
                &g_feats,
                self.cfg.frontend.keep_channels,
                self.cfg.frontend.mean_size()?,
                &self.cfg.frontend.layer_dims()?,
                self.cfg.frontend.channels,
            )?
            .into_iter()
            .map(Some)
            .collect(),
            ModelVariant::Scnn => unreachable!("constructor rejects SCNN"),
        };
        self.stack.backward(&cache.stack, layer_grads)
    }

    pub fn zero_grads(&mut self) {
        self.stack.zero_grads();
        self.tail.zero_grads();
        self.fc.zero_grads();
    }

    pub fn apply_step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        self.stack.apply_step(cfg)?;
        self.tail.apply_step(cfg)?;
        self.fc.apply_step(cfg)
    }

    pub fn visit_tensors(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.stack
            .visit_tensors(&mut |name, t| f(format!("frontend.{name}"), t));
        self.tail.visit_tensors("tail", f);
        f("fc.weight".into(), self.fc.weight().value());
        f("fc.bias".into(), self.fc.bias().value());
    }

    pub fn visit_param_grads(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.stack
            .visit_param_grads(&mut |name, t| f(format!("frontend.{name}"), t));
        self.tail.visit_param_grads("tail", f);
        f("fc.weight".into(), self.fc.grad_weight());
        f("fc.bias".into(), self.fc.grad_bias());
    }

    pub fn restore_tensors(
        &mut self,
        lookup: &mut dyn FnMut(&str) -> Option<Tensor<T>>,
    ) -> Result<()> {
        self.stack.restore_tensors(&mut |name: &str| {
            lookup(&format!("frontend.{name}"))
        })?;
        self.tail.restore_tensors("tail", lookup)?;
        self.fc.weight_mut().restore(
            lookup("fc.weight")
                .ok_or_else(|| CoreError::Checkpoint("missing tensor record fc.weight".into()))?,
        )?;
        self.fc.bias_mut().restore(
            lookup("fc.bias")
                .ok_or_else(|| CoreError::Checkpoint("missing tensor record fc.bias".into()))?,
        )
    }
}
