//! Convolutional building blocks: conv, batch norm, ReLU, max pooling,
//! fully connected, dropout, and bilinear resampling.
//!
//! Layers own their parameters and gradient accumulators. A training step
//! runs `zero_grads`, one or more `forward` + `backward` passes (backward
//! adds into the accumulators), then `apply_step`. Forward passes return an
//! explicit cache object that the matching backward consumes, so there is
//! no hidden tape.
//!
//! Batched activations are rank-4 tensors `[batch, channels, height,
//! width]` in row-major order. All loops run in a fixed sequential order,
//! which keeps every result bit-reproducible for a given seed.

mod batchnorm;
mod conv;
mod dropout;
mod linear;
mod maxpool;
mod relu;
mod resize;

pub use batchnorm::{BatchNorm2d, BatchNormCache};
pub use conv::{Conv2d, ConvCache, ConvCfg};
pub use dropout::{dropout_backward, dropout_forward, DropoutCache};
pub use linear::{Linear, LinearCache};
pub use maxpool::{MaxPool2d, MaxPoolCache};
pub use relu::{relu_backward, relu_forward, ReluCache};
pub use resize::{bilinear_resize, bilinear_resize_backward};

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Whether a forward pass is part of training (batch statistics, dropout
/// active) or inference (running statistics, dropout off).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Validates a `[batch, channels, height, width]` activation shape.
pub(crate) fn expect_bchw<T: crate::tensor::Scalar>(
    x: &Tensor<T>,
    channels: usize,
    ctx: &str,
) -> Result<(usize, usize, usize)> {
    if x.rank() != 4 {
        return Err(CoreError::Dimension(format!(
            "{ctx}: expected [batch, channels, h, w], got {:?}",
            x.shape()
        )));
    }
    let s = x.shape();
    if s[1] != channels {
        return Err(CoreError::Dimension(format!(
            "{ctx}: expected {channels} channels, got {}",
            s[1]
        )));
    }
    Ok((s[0], s[2], s[3]))
}
