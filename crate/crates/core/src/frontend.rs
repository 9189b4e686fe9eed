//! Convolutional frontend: a residual stack over single-channel thumbnails
//! plus the two feature-matrix assemblies consumed by covariance pooling.
//!
//! Layer 1 is a 7x7 stride-2 stem (conv + batch norm + ReLU); layers 2..=l
//! are residual blocks of two 3x3 convolutions. One block downsamples by
//! striding its first convolution and passing the skip through a 1x1
//! stride-2 convolution: block 4 when the stack has at least four layers,
//! block 2 when it has two or three.
//!
//! Two feature layouts feed the SPD tail:
//! - last-layer: the final activation flattened to `[channels, h*w]`;
//! - multi-layer: the first `keep_channels` channels of every layer,
//!   bilinearly resized to the rounded mean spatial size and stacked, so
//!   the covariance couples features across depths.

use crate::error::{CoreError, Result};
use crate::nn::{
    bilinear_resize, bilinear_resize_backward, relu_backward, relu_forward, BatchNorm2d,
    BatchNormCache, Conv2d, ConvCache, ConvCfg, ReluCache,
};
use crate::stiefel::OptimizerConfig;
use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// Geometry and width of the convolutional stack.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ConvStackCfg {
    /// Total layer count `l >= 1`, counting the stem.
    pub layers: usize,
    /// Input channels (1 for radargram thumbnails).
    pub in_ch: usize,
    /// Channel width of every layer.
    pub channels: usize,
    /// Channels kept per layer by the multi-layer assembly.
    pub keep_channels: usize,
    pub input_h: usize,
    pub input_w: usize,
}

impl ConvStackCfg {
    /// The full-size configuration: 8 layers of 64 channels on 112x60
    /// thumbnails, keeping 32 channels per layer for the multi-layer path.
    pub fn standard() -> Self {
        ConvStackCfg {
            layers: 8,
            in_ch: 1,
            channels: 64,
            keep_channels: 32,
            input_h: 112,
            input_w: 60,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.in_ch == 0
            || self.channels == 0
            || self.keep_channels == 0
            || self.keep_channels > self.channels
        {
            return Err(CoreError::Config(format!(
                "conv stack: inconsistent widths in {self:?}"
            )));
        }
        let (h, w) = stem_cfg(self).out_dims(self.input_h, self.input_w)?;
        if h < 2 || w < 2 {
            return Err(CoreError::Config(format!(
                "conv stack: input {}x{} too small",
                self.input_h, self.input_w
            )));
        }
        Ok(())
    }

    /// Index (1-based) of the downsampling block, if any.
    pub fn downsample_at(&self) -> Option<usize> {
        if self.layers >= 4 {
            Some(4)
        } else if self.layers >= 2 {
            Some(2)
        } else {
            None
        }
    }

    /// Spatial size of each layer's output, stem first.
    pub fn layer_dims(&self) -> Result<Vec<(usize, usize)>> {
        let mut dims = Vec::with_capacity(self.layers);
        let mut cur = stem_cfg(self).out_dims(self.input_h, self.input_w)?;
        dims.push(cur);
        for i in 2..=self.layers {
            if Some(i) == self.downsample_at() {
                cur = ((cur.0 + 2 - 3) / 2 + 1, (cur.1 + 2 - 3) / 2 + 1);
            }
            dims.push(cur);
        }
        Ok(dims)
    }

    /// Common size for the multi-layer assembly: the mean layer extent,
    /// rounded to the nearest integer with ties to even.
    pub fn mean_size(&self) -> Result<(usize, usize)> {
        let dims = self.layer_dims()?;
        let n = dims.len() as f64;
        let mh = dims.iter().map(|d| d.0 as f64).sum::<f64>() / n;
        let mw = dims.iter().map(|d| d.1 as f64).sum::<f64>() / n;
        Ok((
            mh.round_ties_even().max(1.0) as usize,
            mw.round_ties_even().max(1.0) as usize,
        ))
    }

    /// `(rows, cols)` of the last-layer feature matrix.
    pub fn last_layer_feature_dims(&self) -> Result<(usize, usize)> {
        let (h, w) = *self.layer_dims()?.last().expect("layers >= 1");
        Ok((self.channels, h * w))
    }

    /// `(rows, cols)` of the multi-layer feature matrix.
    pub fn multi_layer_feature_dims(&self) -> Result<(usize, usize)> {
        let (mh, mw) = self.mean_size()?;
        Ok((self.layers * self.keep_channels, mh * mw))
    }
}

fn stem_cfg(cfg: &ConvStackCfg) -> ConvCfg {
    ConvCfg {
        in_ch: cfg.in_ch,
        out_ch: cfg.channels,
        kernel: 7,
        stride: 2,
        pad: 3,
    }
}

/// Residual block: conv-bn-relu-conv-bn, identity (or strided 1x1
/// conv + bn) skip, final ReLU.
#[derive(Clone, Debug)]
struct BasicBlock<T> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    down: Option<(Conv2d<T>, BatchNorm2d<T>)>,
}

#[derive(Debug)]
struct BlockCache<T> {
    c1: ConvCache<T>,
    b1: BatchNormCache<T>,
    r1: ReluCache,
    c2: ConvCache<T>,
    b2: BatchNormCache<T>,
    down: Option<(ConvCache<T>, BatchNormCache<T>)>,
    r_out: ReluCache,
}

impl<T: Scalar> BasicBlock<T> {
    fn new(channels: usize, stride: usize, seed: u64, stream: &mut u64) -> Result<Self> {
        let mut next = || {
            let s = *stream;
            *stream += 1;
            s
        };
        let conv1 = Conv2d::new(
            ConvCfg {
                in_ch: channels,
                out_ch: channels,
                kernel: 3,
                stride,
                pad: 1,
            },
            seed,
            next(),
        )?;
        let conv2 = Conv2d::new(
            ConvCfg {
                in_ch: channels,
                out_ch: channels,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            seed,
            next(),
        )?;
        let down = if stride != 1 {
            let sc = Conv2d::new(
                ConvCfg {
                    in_ch: channels,
                    out_ch: channels,
                    kernel: 1,
                    stride,
                    pad: 0,
                },
                seed,
                next(),
            )?;
            Some((sc, BatchNorm2d::new(channels)?))
        } else {
            None
        };
        Ok(BasicBlock {
            conv1,
            bn1: BatchNorm2d::new(channels)?,
            conv2,
            bn2: BatchNorm2d::new(channels)?,
            down,
        })
    }

    fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
        let (y1, c1) = self.conv1.forward(x)?;
        let (y1, b1) = self.bn1.forward_train(&y1)?;
        let (y1, r1) = relu_forward(&y1);
        let (y2, c2) = self.conv2.forward(&y1)?;
        let (mut y2, b2) = self.bn2.forward_train(&y2)?;
        let down = match &mut self.down {
            Some((sc, sbn)) => {
                let (s, cs) = sc.forward(x)?;
                let (s, bs) = sbn.forward_train(&s)?;
                for (o, v) in y2.data_mut().iter_mut().zip(s.data()) {
                    *o += *v;
                }
                Some((cs, bs))
            }
            None => {
                for (o, v) in y2.data_mut().iter_mut().zip(x.data()) {
                    *o += *v;
                }
                None
            }
        };
        let (out, r_out) = relu_forward(&y2);
        Ok((
            out,
            BlockCache {
                c1,
                b1,
                r1,
                c2,
                b2,
                down,
                r_out,
            },
        ))
    }

    fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y1, _) = self.conv1.forward(x)?;
        let y1 = self.bn1.forward_eval(&y1)?;
        let (y1, _) = relu_forward(&y1);
        let (y2, _) = self.conv2.forward(&y1)?;
        let mut y2 = self.bn2.forward_eval(&y2)?;
        match &self.down {
            Some((sc, sbn)) => {
                let (s, _) = sc.forward(x)?;
                let s = sbn.forward_eval(&s)?;
                for (o, v) in y2.data_mut().iter_mut().zip(s.data()) {
                    *o += *v;
                }
            }
            None => {
                for (o, v) in y2.data_mut().iter_mut().zip(x.data()) {
                    *o += *v;
                }
            }
        }
        let (out, _) = relu_forward(&y2);
        Ok(out)
    }

    fn backward(&mut self, cache: &BlockCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = relu_backward(&cache.r_out, grad_out)?;
        // main branch
        let g_main = self.bn2.backward(&cache.b2, &g)?;
        let g_main = self.conv2.backward(&cache.c2, &g_main)?;
        let g_main = relu_backward(&cache.r1, &g_main)?;
        let g_main = self.bn1.backward(&cache.b1, &g_main)?;
        let mut grad_in = self.conv1.backward(&cache.c1, &g_main)?;
        // skip branch
        match (&mut self.down, &cache.down) {
            (Some((sc, sbn)), Some((cs, bs))) => {
                let gs = sbn.backward(bs, &g)?;
                let gs = sc.backward(cs, &gs)?;
                for (o, v) in grad_in.data_mut().iter_mut().zip(gs.data()) {
                    *o += *v;
                }
            }
            (None, None) => {
                for (o, v) in grad_in.data_mut().iter_mut().zip(g.data()) {
                    *o += *v;
                }
            }
            _ => {
                return Err(CoreError::Dimension(
                    "residual block: cache does not match block structure".into(),
                ))
            }
        }
        Ok(grad_in)
    }

    fn zero_grads(&mut self) {
        self.conv1.zero_grads();
        self.bn1.zero_grads();
        self.conv2.zero_grads();
        self.bn2.zero_grads();
        if let Some((sc, sbn)) = &mut self.down {
            sc.zero_grads();
            sbn.zero_grads();
        }
    }

    fn apply_step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        self.conv1.apply_step(cfg)?;
        self.bn1.apply_step(cfg)?;
        self.conv2.apply_step(cfg)?;
        self.bn2.apply_step(cfg)?;
        if let Some((sc, sbn)) = &mut self.down {
            sc.apply_step(cfg)?;
            sbn.apply_step(cfg)?;
        }
        Ok(())
    }
}

/// The full residual stack. Forward passes return every layer's output so
/// the multi-layer assembly (and its backward) can tap all depths.
#[derive(Clone, Debug)]
pub struct ConvStack<T> {
    cfg: ConvStackCfg,
    stem_conv: Conv2d<T>,
    stem_bn: BatchNorm2d<T>,
    blocks: Vec<BasicBlock<T>>,
}

/// Caches for one training forward pass of the stack.
#[derive(Debug)]
pub struct ConvStackCache<T> {
    stem_conv: ConvCache<T>,
    stem_bn: BatchNormCache<T>,
    stem_relu: ReluCache,
    blocks: Vec<BlockCache<T>>,
}

impl<T: Scalar> ConvStack<T> {
    pub fn new(cfg: ConvStackCfg, seed: u64, stream_base: u64) -> Result<Self> {
        cfg.validate()?;
        let mut stream = stream_base;
        let stem_conv = Conv2d::new(stem_cfg(&cfg), seed, stream)?;
        stream += 1;
        let stem_bn = BatchNorm2d::new(cfg.channels)?;
        let mut blocks = Vec::with_capacity(cfg.layers.saturating_sub(1));
        for i in 2..=cfg.layers {
            let stride = if Some(i) == cfg.downsample_at() { 2 } else { 1 };
            blocks.push(BasicBlock::new(cfg.channels, stride, seed, &mut stream)?);
        }
        Ok(ConvStack {
            cfg,
            stem_conv,
            stem_bn,
            blocks,
        })
    }

    pub fn cfg(&self) -> &ConvStackCfg {
        &self.cfg
    }

    /// Training forward; returns all layer outputs (stem first) and the
    /// cache for [`ConvStack::backward`].
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Vec<Tensor<T>>, ConvStackCache<T>)> {
        let (y, stem_conv) = self.stem_conv.forward(x)?;
        let (y, stem_bn) = self.stem_bn.forward_train(&y)?;
        let (y, stem_relu) = relu_forward(&y);
        let mut outputs = vec![y];
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (y, c) = block.forward_train(outputs.last().expect("nonempty"))?;
            outputs.push(y);
            block_caches.push(c);
        }
        Ok((
            outputs,
            ConvStackCache {
                stem_conv,
                stem_bn,
                stem_relu,
                blocks: block_caches,
            },
        ))
    }

    /// Inference forward; returns all layer outputs (stem first).
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (y, _) = self.stem_conv.forward(x)?;
        let y = self.stem_bn.forward_eval(&y)?;
        let (y, _) = relu_forward(&y);
        let mut outputs = vec![y];
        for block in &self.blocks {
            outputs.push(block.forward_eval(outputs.last().expect("nonempty"))?);
        }
        Ok(outputs)
    }

    /// Backward through the stack. `layer_grads[i]` is the gradient
    /// arriving directly at layer `i`'s output (from a feature assembly);
    /// `None` means nothing taps that layer. Gradients flowing down the
    /// chain are added on top. Returns the gradient at the input.
    pub fn backward(
        &mut self,
        cache: &ConvStackCache<T>,
        layer_grads: Vec<Option<Tensor<T>>>,
    ) -> Result<Tensor<T>> {
        if layer_grads.len() != self.cfg.layers {
            return Err(CoreError::Dimension(format!(
                "conv stack backward: {} gradients for {} layers",
                layer_grads.len(),
                self.cfg.layers
            )));
        }
        let mut grads = layer_grads;
        let mut g = match grads.pop().expect("layers >= 1") {
            Some(g) => g,
            None => {
                return Err(CoreError::Dimension(
                    "conv stack backward: nothing taps the last layer".into(),
                ))
            }
        };
        for (block, bcache) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let mut below = block.backward(bcache, &g)?;
            if let Some(extra) = grads.pop().expect("grads aligned with layers") {
                if extra.shape() != below.shape() {
                    return Err(CoreError::Dimension(format!(
                        "conv stack backward: tap gradient shape {:?} vs {:?}",
                        extra.shape(),
                        below.shape()
                    )));
                }
                for (o, v) in below.data_mut().iter_mut().zip(extra.data()) {
                    *o += *v;
                }
            }
            g = below;
        }
        let g = relu_backward(&cache.stem_relu, &g)?;
        let g = self.stem_bn.backward(&cache.stem_bn, &g)?;
        self.stem_conv.backward(&cache.stem_conv, &g)
    }

    pub fn zero_grads(&mut self) {
        self.stem_conv.zero_grads();
        self.stem_bn.zero_grads();
        for b in &mut self.blocks {
            b.zero_grads();
        }
    }

    pub fn apply_step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        self.stem_conv.apply_step(cfg)?;
        self.stem_bn.apply_step(cfg)?;
        for b in &mut self.blocks {
            b.apply_step(cfg)?;
        }
        Ok(())
    }

    /// Visits every persistent tensor (weights and batch-norm running
    /// statistics) in a fixed order.
    pub fn visit_tensors(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f("stem.conv.weight".into(), self.stem_conv.weight().value());
        f("stem.conv.bias".into(), self.stem_conv.bias().value());
        visit_bn("stem.bn", &self.stem_bn, f);
        for (bi, b) in self.blocks.iter().enumerate() {
            let p = format!("block{}", bi + 2);
            f(format!("{p}.conv1.weight"), b.conv1.weight().value());
            f(format!("{p}.conv1.bias"), b.conv1.bias().value());
            visit_bn(&format!("{p}.bn1"), &b.bn1, f);
            f(format!("{p}.conv2.weight"), b.conv2.weight().value());
            f(format!("{p}.conv2.bias"), b.conv2.bias().value());
            visit_bn(&format!("{p}.bn2"), &b.bn2, f);
            if let Some((sc, sbn)) = &b.down {
                f(format!("{p}.down.conv.weight"), sc.weight().value());
                f(format!("{p}.down.conv.bias"), sc.bias().value());
                visit_bn(&format!("{p}.down.bn"), sbn, f);
            }
        }
    }

    /// Visits the accumulated gradient of every parameter, under the same
    /// names as [`ConvStack::visit_tensors`] (running statistics are not
    /// parameters and have none).
    pub fn visit_param_grads(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f("stem.conv.weight".into(), self.stem_conv.grad_weight());
        f("stem.conv.bias".into(), self.stem_conv.grad_bias());
        f("stem.bn.gamma".into(), self.stem_bn.grad_gamma());
        f("stem.bn.beta".into(), self.stem_bn.grad_beta());
        for (bi, b) in self.blocks.iter().enumerate() {
            let p = format!("block{}", bi + 2);
            f(format!("{p}.conv1.weight"), b.conv1.grad_weight());
            f(format!("{p}.conv1.bias"), b.conv1.grad_bias());
            f(format!("{p}.bn1.gamma"), b.bn1.grad_gamma());
            f(format!("{p}.bn1.beta"), b.bn1.grad_beta());
            f(format!("{p}.conv2.weight"), b.conv2.grad_weight());
            f(format!("{p}.conv2.bias"), b.conv2.grad_bias());
            f(format!("{p}.bn2.gamma"), b.bn2.grad_gamma());
            f(format!("{p}.bn2.beta"), b.bn2.grad_beta());
            if let Some((sc, sbn)) = &b.down {
                f(format!("{p}.down.conv.weight"), sc.grad_weight());
                f(format!("{p}.down.conv.bias"), sc.grad_bias());
                f(format!("{p}.down.bn.gamma"), sbn.grad_gamma());
                f(format!("{p}.down.bn.beta"), sbn.grad_beta());
            }
        }
    }

    /// Restores tensors by name from `lookup`. Every visited name must be
    /// present with matching shape.
    pub fn restore_tensors(
        &mut self,
        lookup: &mut dyn FnMut(&str) -> Option<Tensor<T>>,
    ) -> Result<()> {
        let restore_conv = |c: &mut Conv2d<T>, p: &str, lk: &mut dyn FnMut(&str) -> Option<Tensor<T>>| -> Result<()> {
            c.weight_mut().restore(fetch(lk, &format!("{p}.weight"))?)?;
            c.bias_mut().restore(fetch(lk, &format!("{p}.bias"))?)
        };
        restore_conv(&mut self.stem_conv, "stem.conv", lookup)?;
        restore_bn(&mut self.stem_bn, "stem.bn", lookup)?;
        for bi in 0..self.blocks.len() {
            let p = format!("block{}", bi + 2);
            let b = &mut self.blocks[bi];
            restore_conv(&mut b.conv1, &format!("{p}.conv1"), lookup)?;
            restore_bn(&mut b.bn1, &format!("{p}.bn1"), lookup)?;
            restore_conv(&mut b.conv2, &format!("{p}.conv2"), lookup)?;
            restore_bn(&mut b.bn2, &format!("{p}.bn2"), lookup)?;
            if let Some((sc, sbn)) = &mut b.down {
                restore_conv(sc, &format!("{p}.down.conv"), lookup)?;
                restore_bn(sbn, &format!("{p}.down.bn"), lookup)?;
            }
        }
        Ok(())
    }
}

fn visit_bn<T: Scalar>(prefix: &str, bn: &BatchNorm2d<T>, f: &mut dyn FnMut(String, &Tensor<T>)) {
    f(format!("{prefix}.gamma"), bn.gamma().value());
    f(format!("{prefix}.beta"), bn.beta().value());
    f(format!("{prefix}.running_mean"), bn.running_mean());
    f(format!("{prefix}.running_var"), bn.running_var());
}

fn fetch<T: Scalar>(
    lookup: &mut dyn FnMut(&str) -> Option<Tensor<T>>,
    name: &str,
) -> Result<Tensor<T>> {
    lookup(name).ok_or_else(|| CoreError::Checkpoint(format!("missing tensor record {name}")))
}

fn restore_bn<T: Scalar>(
    bn: &mut BatchNorm2d<T>,
    prefix: &str,
    lookup: &mut dyn FnMut(&str) -> Option<Tensor<T>>,
) -> Result<()> {
    bn.gamma_mut().restore(fetch(lookup, &format!("{prefix}.gamma"))?)?;
    bn.beta_mut().restore(fetch(lookup, &format!("{prefix}.beta"))?)?;
    let rm = fetch(lookup, &format!("{prefix}.running_mean"))?;
    let rv = fetch(lookup, &format!("{prefix}.running_var"))?;
    if rm.shape() != bn.running_mean().shape() || rv.shape() != bn.running_var().shape() {
        return Err(CoreError::Checkpoint(format!(
            "batch norm {prefix}: running statistic shape mismatch"
        )));
    }
    *bn.running_mean_mut() = rm;
    *bn.running_var_mut() = rv;
    Ok(())
}

// --- Feature assemblies ---

/// Last-layer features: `[B, C, H, W] -> [B, C, H*W]`.
pub fn assemble_last_layer<T: Scalar>(last: &Tensor<T>) -> Result<Tensor<T>> {
    if last.rank() != 4 {
        return Err(CoreError::Dimension(format!(
            "last-layer assembly: expected rank-4 activations, got {:?}",
            last.shape()
        )));
    }
    let s = last.shape().to_vec();
    last.clone().reshape(&[s[0], s[1], s[2] * s[3]])
}

/// Backward of [`assemble_last_layer`].
pub fn assemble_last_layer_backward<T: Scalar>(
    grad: &Tensor<T>,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    if grad.rank() != 3 || grad.shape()[2] != h * w {
        return Err(CoreError::Dimension(format!(
            "last-layer assembly backward: gradient {:?} vs {h}x{w}",
            grad.shape()
        )));
    }
    let s = grad.shape().to_vec();
    grad.clone().reshape(&[s[0], s[1], h, w])
}

/// Multi-layer features: keeps the first `keep` channels of every layer,
/// resizes each retained plane to the common mean size, and stacks them
/// into `[B, layers*keep, mh*mw]`, layer-major.
pub fn assemble_multi_layer<T: Scalar>(
    outputs: &[Tensor<T>],
    keep: usize,
    mean: (usize, usize),
) -> Result<Tensor<T>> {
    if outputs.is_empty() {
        return Err(CoreError::Dimension("multi-layer assembly: no layers".into()));
    }
    let (mh, mw) = mean;
    let b = outputs[0].shape()[0];
    let m = mh * mw;
    let d = outputs.len() * keep;
    let mut features = Tensor::<T>::zeros(&[b, d, m]);
    for (li, out) in outputs.iter().enumerate() {
        let s = out.shape();
        if out.rank() != 4 || s[0] != b || s[1] < keep {
            return Err(CoreError::Dimension(format!(
                "multi-layer assembly: layer {li} shape {s:?} (batch {b}, keep {keep})"
            )));
        }
        let (c, h, w) = (s[1], s[2], s[3]);
        // contiguous copy of the first `keep` channels
        let mut kept = Tensor::<T>::zeros(&[b, keep, h, w]);
        for bi in 0..b {
            let src = &out.data()[bi * c * h * w..bi * c * h * w + keep * h * w];
            kept.data_mut()[bi * keep * h * w..(bi + 1) * keep * h * w].copy_from_slice(src);
        }
        let resized = bilinear_resize(&kept, mh, mw)?;
        for bi in 0..b {
            for ch in 0..keep {
                let row = li * keep + ch;
                let src = &resized.data()[(bi * keep + ch) * m..(bi * keep + ch + 1) * m];
                features.data_mut()[(bi * d + row) * m..(bi * d + row + 1) * m]
                    .copy_from_slice(src);
            }
        }
    }
    Ok(features)
}

/// Backward of [`assemble_multi_layer`]: splits the feature gradient by
/// layer, undoes the resize, and zero-pads the channels that were not
/// kept. `layer_dims` are each layer's `(h, w)`; `channels` the full width.
pub fn assemble_multi_layer_backward<T: Scalar>(
    grad: &Tensor<T>,
    keep: usize,
    mean: (usize, usize),
    layer_dims: &[(usize, usize)],
    channels: usize,
) -> Result<Vec<Tensor<T>>> {
    let (mh, mw) = mean;
    let m = mh * mw;
    let d = layer_dims.len() * keep;
    if grad.rank() != 3 || grad.shape()[1] != d || grad.shape()[2] != m {
        return Err(CoreError::Dimension(format!(
            "multi-layer assembly backward: gradient {:?}, expected [b, {d}, {m}]",
            grad.shape()
        )));
    }
    let b = grad.shape()[0];
    let mut out = Vec::with_capacity(layer_dims.len());
    for (li, &(h, w)) in layer_dims.iter().enumerate() {
        let mut g_resized = Tensor::<T>::zeros(&[b, keep, mh, mw]);
        for bi in 0..b {
            for ch in 0..keep {
                let row = li * keep + ch;
                let src = &grad.data()[(bi * d + row) * m..(bi * d + row + 1) * m];
                g_resized.data_mut()[(bi * keep + ch) * m..(bi * keep + ch + 1) * m]
                    .copy_from_slice(src);
            }
        }
        let g_kept = bilinear_resize_backward(&g_resized, h, w)?;
        let mut g_layer = Tensor::<T>::zeros(&[b, channels, h, w]);
        for bi in 0..b {
            let dst = &mut g_layer.data_mut()
                [bi * channels * h * w..bi * channels * h * w + keep * h * w];
            dst.copy_from_slice(&g_kept.data()[bi * keep * h * w..(bi + 1) * keep * h * w]);
        }
        out.push(g_layer);
    }
    Ok(out)
}
