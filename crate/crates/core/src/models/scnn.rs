//! Shallow CNN baseline: three conv + batch-norm + ReLU stages, the first
//! two followed by 3x3 stride-3 max pooling, then one fully-connected
//! layer producing class logits.

use crate::error::{CoreError, Result};
use crate::nn::{
    relu_backward, relu_forward, BatchNorm2d, BatchNormCache, Conv2d, ConvCache, ConvCfg, Linear,
    LinearCache, MaxPool2d, MaxPoolCache, ReluCache,
};
use crate::stiefel::OptimizerConfig;
use crate::tensor::{Scalar, Tensor};

/// One conv stage: 3x3 stride-1 pad-1 convolution, batch norm, ReLU.
#[derive(Clone, Debug)]
struct Stage<T> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
}

#[derive(Debug)]
struct StageCache<T> {
    conv: ConvCache<T>,
    bn: BatchNormCache<T>,
    relu: ReluCache,
}

impl<T: Scalar> Stage<T> {
    fn new(in_ch: usize, out_ch: usize, seed: u64, stream: u64) -> Result<Self> {
        let conv = Conv2d::new(
            ConvCfg {
                in_ch,
                out_ch,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            seed,
            stream,
        )?;
        Ok(Stage {
            conv,
            bn: BatchNorm2d::new(out_ch)?,
        })
    }

    fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, StageCache<T>)> {
        let (y, conv) = self.conv.forward(x)?;
        let (y, bn) = self.bn.forward_train(&y)?;
        let (y, relu) = relu_forward(&y);
        Ok((y, StageCache { conv, bn, relu }))
    }

    fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, _) = self.conv.forward(x)?;
        let y = self.bn.forward_eval(&y)?;
        Ok(relu_forward(&y).0)
    }

    fn backward(&mut self, cache: &StageCache<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = relu_backward(&cache.relu, g)?;
        let g = self.bn.backward(&cache.bn, &g)?;
        self.conv.backward(&cache.conv, &g)
    }
}

/// The baseline classifier.
#[derive(Clone, Debug)]
pub struct Scnn<T> {
    channels: [usize; 3],
    input: (usize, usize),
    classes: usize,
    stage1: Stage<T>,
    pool1: MaxPool2d,
    stage2: Stage<T>,
    pool2: MaxPool2d,
    stage3: Stage<T>,
    fc: Linear<T>,
    fc_in: usize,
    flat_shape: Vec<usize>,
}

#[derive(Debug)]
pub struct ScnnCache<T> {
    s1: StageCache<T>,
    p1: MaxPoolCache,
    s2: StageCache<T>,
    p2: MaxPoolCache,
    s3: StageCache<T>,
    fc: LinearCache<T>,
    pre_flat: Vec<usize>,
}

impl<T: Scalar> Scnn<T> {
    pub fn new(
        in_ch: usize,
        input: (usize, usize),
        channels: [usize; 3],
        classes: usize,
        seed: u64,
        stream_base: u64,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(CoreError::Config(format!(
                "scnn: need at least 2 classes, got {classes}"
            )));
        }
        let stage1 = Stage::new(in_ch, channels[0], seed, stream_base)?;
        let pool1 = MaxPool2d::new(3, 3, channels[0])?;
        let stage2 = Stage::new(channels[0], channels[1], seed, stream_base + 2)?;
        let pool2 = MaxPool2d::new(3, 3, channels[1])?;
        let stage3 = Stage::new(channels[1], channels[2], seed, stream_base + 4)?;
        // conv stages preserve spatial dims (3x3 stride 1 pad 1)
        let (h1, w1) = pool1.out_dims(input.0, input.1)?;
        let (h2, w2) = pool2.out_dims(h1, w1)?;
        let fc_in = channels[2] * h2 * w2;
        let fc = Linear::new(fc_in, classes, seed, stream_base + 6)?;
        Ok(Scnn {
            channels,
            input,
            classes,
            stage1,
            pool1,
            stage2,
            pool2,
            stage3,
            fc,
            fc_in,
            flat_shape: vec![channels[2], h2, w2],
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let s = x.shape();
        if x.rank() != 4 || s[2] != self.input.0 || s[3] != self.input.1 {
            return Err(CoreError::Dimension(format!(
                "scnn: expected [batch, c, {}, {}], got {s:?}",
                self.input.0, self.input.1
            )));
        }
        Ok(s[0])
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, ScnnCache<T>)> {
        let b = self.check_input(x)?;
        let (y, s1) = self.stage1.forward_train(x)?;
        let (y, p1) = self.pool1.forward(&y)?;
        let (y, s2) = self.stage2.forward_train(&y)?;
        let (y, p2) = self.pool2.forward(&y)?;
        let (y, s3) = self.stage3.forward_train(&y)?;
        let pre_flat = y.shape().to_vec();
        let flat = y.reshape(&[b, self.fc_in])?;
        let (logits, fc) = self.fc.forward(&flat)?;
        Ok((
            logits,
            ScnnCache {
                s1,
                p1,
                s2,
                p2,
                s3,
                fc,
                pre_flat,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_input(x)?;
        let y = self.stage1.forward_eval(x)?;
        let (y, _) = self.pool1.forward(&y)?;
        let y = self.stage2.forward_eval(&y)?;
        let (y, _) = self.pool2.forward(&y)?;
        let y = self.stage3.forward_eval(&y)?;
        let flat = y.reshape(&[b, self.fc_in])?;
        Ok(self.fc.forward(&flat)?.0)
    }

    /// Backward from logit gradients; returns the input-image gradient.
    pub fn backward(&mut self, cache: &ScnnCache<T>, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.fc.backward(&cache.fc, grad_logits)?;
        let g = g.reshape(&cache.pre_flat)?;
        let g = self.stage3.backward(&cache.s3, &g)?;
        let g = self.pool2.backward(&cache.p2, &g)?;
        let g = self.stage2.backward(&cache.s2, &g)?;
        let g = self.pool1.backward(&cache.p1, &g)?;
        self.stage1.backward(&cache.s1, &g)
    }

    pub fn zero_grads(&mut self) {
        for s in [&mut self.stage1, &mut self.stage2, &mut self.stage3] {
            s.conv.zero_grads();
            s.bn.zero_grads();
        }
        self.fc.zero_grads();
    }

    pub fn apply_step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        for s in [&mut self.stage1, &mut self.stage2, &mut self.stage3] {
            s.conv.apply_step(cfg)?;
            s.bn.apply_step(cfg)?;
        }
        self.fc.apply_step(cfg)
    }

    pub fn visit_tensors(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for (i, s) in [&self.stage1, &self.stage2, &self.stage3].into_iter().enumerate() {
            let p = format!("stage{}", i + 1);
            f(format!("{p}.conv.weight"), s.conv.weight().value());
            f(format!("{p}.conv.bias"), s.conv.bias().value());
            f(format!("{p}.bn.gamma"), s.bn.gamma().value());
            f(format!("{p}.bn.beta"), s.bn.beta().value());
            f(format!("{p}.bn.running_mean"), s.bn.running_mean());
            f(format!("{p}.bn.running_var"), s.bn.running_var());
        }
        f("fc.weight".into(), self.fc.weight().value());
        f("fc.bias".into(), self.fc.bias().value());
    }

    pub fn visit_param_grads(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for (i, s) in [&self.stage1, &self.stage2, &self.stage3].into_iter().enumerate() {
            let p = format!("stage{}", i + 1);
            f(format!("{p}.conv.weight"), s.conv.grad_weight());
            f(format!("{p}.conv.bias"), s.conv.grad_bias());
            f(format!("{p}.bn.gamma"), s.bn.grad_gamma());
            f(format!("{p}.bn.beta"), s.bn.grad_beta());
        }
        f("fc.weight".into(), self.fc.grad_weight());
        f("fc.bias".into(), self.fc.grad_bias());
    }

    pub fn restore_tensors(
        &mut self,
        lookup: &mut dyn FnMut(&str) -> Option<Tensor<T>>,
    ) -> Result<()> {
        for (i, s) in [&mut self.stage1, &mut self.stage2, &mut self.stage3]
            .into_iter()
            .enumerate()
        {
            let p = format!("stage{}", i + 1);
            s.conv.weight_mut().restore(fetch(lookup, &format!("{p}.conv.weight"))?)?;
            s.conv.bias_mut().restore(fetch(lookup, &format!("{p}.conv.bias"))?)?;
            s.bn.gamma_mut().restore(fetch(lookup, &format!("{p}.bn.gamma"))?)?;
            s.bn.beta_mut().restore(fetch(lookup, &format!("{p}.bn.beta"))?)?;
            let rm = fetch(lookup, &format!("{p}.bn.running_mean"))?;
            let rv = fetch(lookup, &format!("{p}.bn.running_var"))?;
            if rm.shape() != s.bn.running_mean().shape() || rv.shape() != s.bn.running_var().shape()
            {
                return Err(CoreError::Checkpoint(format!(
                    "scnn {p}: running statistic shape mismatch"
                )));
            }
            *s.bn.running_mean_mut() = rm;
            *s.bn.running_var_mut() = rv;
        }
        self.fc.weight_mut().restore(fetch(lookup, "fc.weight")?)?;
        self.fc.bias_mut().restore(fetch(lookup, "fc.bias")?)
    }

    pub fn channels(&self) -> [usize; 3] {
        self.channels
    }

    pub fn flat_dims(&self) -> &[usize] {
        &self.flat_shape
    }
}

fn fetch<T: Scalar>(
    lookup: &mut dyn FnMut(&str) -> Option<Tensor<T>>,
    name: &str,
) -> Result<Tensor<T>> {
    lookup(name).ok_or_else(|| CoreError::Checkpoint(format!("missing tensor record {name}")))
}
