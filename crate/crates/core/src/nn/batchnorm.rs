//! Batch normalization over the channel dimension of `[B, C, H, W]`
//! activations.
//!
//! Training mode normalizes with the current batch's statistics and folds
//! them into running estimates (`running = (1 - m) running + m batch`,
//! `m = 0.1`); evaluation mode normalizes with the running estimates.
//! Variances are biased (`1/N`) in both places. Statistics accumulate in
//! f64 so the result does not depend on summation luck in f32.

use super::expect_bchw;
use crate::error::{CoreError, Result};
use crate::stiefel::{EuclideanParam, OptimizerConfig};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    channels: usize,
    gamma: EuclideanParam<T>,
    beta: EuclideanParam<T>,
    running_mean: Tensor<T>,
    running_var: Tensor<T>,
    grad_gamma: Tensor<T>,
    grad_beta: Tensor<T>,
}

/// Backward state: the normalized activations and the batch statistics
/// used to produce them.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<f64>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(CoreError::Config("batchnorm: zero channels".into()));
        }
        Ok(BatchNorm2d {
            channels,
            gamma: EuclideanParam::new(Tensor::filled(&[channels], T::one())),
            beta: EuclideanParam::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn gamma(&self) -> &EuclideanParam<T> {
        &self.gamma
    }

    pub fn beta(&self) -> &EuclideanParam<T> {
        &self.beta
    }

    pub fn gamma_mut(&mut self) -> &mut EuclideanParam<T> {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut EuclideanParam<T> {
        &mut self.beta
    }

    pub fn running_mean(&self) -> &Tensor<T> {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor<T> {
        &self.running_var
    }

    pub fn running_mean_mut(&mut self) -> &mut Tensor<T> {
        &mut self.running_mean
    }

    pub fn running_var_mut(&mut self) -> &mut Tensor<T> {
        &mut self.running_var
    }

    /// Accumulated gamma gradient since the last `zero_grads`.
    pub fn grad_gamma(&self) -> &Tensor<T> {
        &self.grad_gamma
    }

    /// Accumulated beta gradient since the last `zero_grads`.
    pub fn grad_beta(&self) -> &Tensor<T> {
        &self.grad_beta
    }

    /// Training forward: batch statistics, running-average update.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let (b, h, w) = expect_bchw(x, self.channels, "batchnorm forward")?;
        let n = (b * h * w) as f64;
        let plane = h * w;
        let mut out = Tensor::<T>::zeros(x.shape());
        let mut x_hat = Tensor::<T>::zeros(x.shape());
        let mut inv_stds = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            for bi in 0..b {
                let base = (bi * self.channels + c) * plane;
                for &v in &x.data()[base..base + plane] {
                    let v = v.as_f64();
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            let inv_std = 1.0 / (var + BN_EPS).sqrt();
            inv_stds.push(inv_std);

            let rm = self.running_mean.data_mut()[c].as_f64();
            self.running_mean.data_mut()[c] =
                T::from_f64((1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * mean);
            let rv = self.running_var.data_mut()[c].as_f64();
            self.running_var.data_mut()[c] =
                T::from_f64((1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * var);

            let g = self.gamma.value().data()[c];
            let bt = self.beta.value().data()[c];
            let mean_t = T::from_f64(mean);
            let inv_t = T::from_f64(inv_std);
            for bi in 0..b {
                let base = (bi * self.channels + c) * plane;
                for i in base..base + plane {
                    let xh = (x.data()[i] - mean_t) * inv_t;
                    x_hat.data_mut()[i] = xh;
                    out.data_mut()[i] = g * xh + bt;
                }
            }
        }
        Ok((
            out,
            BatchNormCache {
                x_hat,
                inv_std: inv_stds,
            },
        ))
    }

    /// Inference forward: running statistics, no state change.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, h, w) = expect_bchw(x, self.channels, "batchnorm eval")?;
        let plane = h * w;
        let mut out = Tensor::<T>::zeros(x.shape());
        for c in 0..self.channels {
            let mean = self.running_mean.data()[c].as_f64();
            let var = self.running_var.data()[c].as_f64();
            let inv_std = T::from_f64(1.0 / (var + BN_EPS).sqrt());
            let mean_t = T::from_f64(mean);
            let g = self.gamma.value().data()[c];
            let bt = self.beta.value().data()[c];
            for bi in 0..b {
                let base = (bi * self.channels + c) * plane;
                for i in base..base + plane {
                    out.data_mut()[i] = g * (x.data()[i] - mean_t) * inv_std + bt;
                }
            }
        }
        Ok(out)
    }

    /// Backward through the training-mode normalization (the batch
    /// statistics are functions of the input, so the whole batch couples).
    pub fn backward(&mut self, cache: &BatchNormCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if grad_out.shape() != cache.x_hat.shape() {
            return Err(CoreError::Dimension(format!(
                "batchnorm backward: gradient shape {:?} vs cache {:?}",
                grad_out.shape(),
                cache.x_hat.shape()
            )));
        }
        let s = cache.x_hat.shape();
        let (b, h, w) = (s[0], s[2], s[3]);
        let n = (b * h * w) as f64;
        let plane = h * w;
        let mut grad_in = Tensor::<T>::zeros(cache.x_hat.shape());
        for c in 0..self.channels {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for bi in 0..b {
                let base = (bi * self.channels + c) * plane;
                for i in base..base + plane {
                    let dy = grad_out.data()[i].as_f64();
                    sum_dy += dy;
                    sum_dy_xhat += dy * cache.x_hat.data()[i].as_f64();
                }
            }
            self.grad_beta.data_mut()[c] += T::from_f64(sum_dy);
            self.grad_gamma.data_mut()[c] += T::from_f64(sum_dy_xhat);

            // dx = (gamma inv_std / N) (N dy - sum(dy) - x_hat sum(dy x_hat))
            let g = self.gamma.value().data()[c].as_f64();
            let scale = g * cache.inv_std[c] / n;
            for bi in 0..b {
                let base = (bi * self.channels + c) * plane;
                for i in base..base + plane {
                    let dy = grad_out.data()[i].as_f64();
                    let xh = cache.x_hat.data()[i].as_f64();
                    grad_in.data_mut()[i] =
                        T::from_f64(scale * (n * dy - sum_dy - xh * sum_dy_xhat));
                }
            }
        }
        Ok(grad_in)
    }

    pub fn zero_grads(&mut self) {
        for v in self.grad_gamma.data_mut() {
            *v = T::zero();
        }
        for v in self.grad_beta.data_mut() {
            *v = T::zero();
        }
    }

    pub fn apply_step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        let gg = self.grad_gamma.clone();
        let gb = self.grad_beta.clone();
        self.gamma.step(&gg, cfg)?;
        self.beta.step(&gb, cfg)
    }
}
