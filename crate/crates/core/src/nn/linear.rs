//! Fully connected layer on `[batch, features]` activations.

use crate::error::{CoreError, Result};
use crate::rng::stream_rng;
use crate::stiefel::{EuclideanParam, OptimizerConfig};
use crate::tensor::{matmul_ex, Scalar, Tensor};
use rand::Rng;

#[derive(Clone, Debug)]
pub struct Linear<T> {
    in_features: usize,
    out_features: usize,
    weight: EuclideanParam<T>,
    bias: EuclideanParam<T>,
    grad_weight: Tensor<T>,
    grad_bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LinearCache<T> {
    input: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// Uniform init in `[-1/sqrt(in), 1/sqrt(in)]` for weight and bias.
    pub fn new(in_features: usize, out_features: usize, seed: u64, stream: u64) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(CoreError::Config(format!(
                "linear: degenerate dims {in_features} -> {out_features}"
            )));
        }
        let bound = 1.0 / (in_features as f64).sqrt();
        let mut rng = stream_rng(seed, stream);
        let mut w = Tensor::<T>::zeros(&[out_features, in_features]);
        for v in w.data_mut() {
            *v = T::from_f64(rng.gen_range(-bound..bound));
        }
        let mut b = Tensor::<T>::zeros(&[out_features]);
        for v in b.data_mut() {
            *v = T::from_f64(rng.gen_range(-bound..bound));
        }
        Ok(Linear {
            in_features,
            out_features,
            weight: EuclideanParam::new(w),
            bias: EuclideanParam::new(b),
            grad_weight: Tensor::zeros(&[out_features, in_features]),
            grad_bias: Tensor::zeros(&[out_features]),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.in_features, self.out_features)
    }

    pub fn weight(&self) -> &EuclideanParam<T> {
        &self.weight
    }

    pub fn bias(&self) -> &EuclideanParam<T> {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut EuclideanParam<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut EuclideanParam<T> {
        &mut self.bias
    }

    /// Accumulated weight gradient since the last `zero_grads`.
    pub fn grad_weight(&self) -> &Tensor<T> {
        &self.grad_weight
    }

    /// Accumulated bias gradient since the last `zero_grads`.
    pub fn grad_bias(&self) -> &Tensor<T> {
        &self.grad_bias
    }

    /// `y = x W^T + b` for `x` of shape `[batch, in]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LinearCache<T>)> {
        if x.rank() != 2 || x.cols() != self.in_features {
            return Err(CoreError::Dimension(format!(
                "linear forward: input {:?}, expected [batch, {}]",
                x.shape(),
                self.in_features
            )));
        }
        let mut y = matmul_ex(x, false, self.weight.value(), true);
        let b = y.rows();
        for bi in 0..b {
            let row = &mut y.data_mut()[bi * self.out_features..(bi + 1) * self.out_features];
            for (v, &bias) in row.iter_mut().zip(self.bias.value().data()) {
                *v += bias;
            }
        }
        Ok((y, LinearCache { input: x.clone() }))
    }

    pub fn backward(&mut self, cache: &LinearCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let b = cache.input.rows();
        if grad_out.rank() != 2 || grad_out.rows() != b || grad_out.cols() != self.out_features {
            return Err(CoreError::Dimension(format!(
                "linear backward: gradient {:?}, expected [{b}, {}]",
                grad_out.shape(),
                self.out_features
            )));
        }
        // dW += dY^T X, db += column sums of dY, dX = dY W
        let dw = matmul_ex(grad_out, true, &cache.input, false);
        for (acc, v) in self.grad_weight.data_mut().iter_mut().zip(dw.data()) {
            *acc += *v;
        }
        for bi in 0..b {
            for o in 0..self.out_features {
                self.grad_bias.data_mut()[o] += grad_out.data()[bi * self.out_features + o];
            }
        }
        Ok(grad_out.matmul(self.weight.value()))
    }

    pub fn zero_grads(&mut self) {
        for v in self.grad_weight.data_mut() {
            *v = T::zero();
        }
        for v in self.grad_bias.data_mut() {
            *v = T::zero();
        }
    }

    pub fn apply_step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        let gw = self.grad_weight.clone();
        let gb = self.grad_bias.clone();
        self.weight.step(&gw, cfg)?;
        self.bias.step(&gb, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_hand_computation() {
        let mut layer = Linear::<f64>::new(2, 3, 5, 0).unwrap();
        layer
            .weight_mut()
            .restore(Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 0.0, 1.0, -1.0, 0.5]).unwrap())
            .unwrap();
        layer
            .bias_mut()
            .restore(Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]).unwrap())
            .unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![2.0, -1.0]).unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        assert_eq!(y.data(), &[2.0 - 2.0 + 0.1, -1.0 + 0.2, -2.0 - 0.5 + 0.3]);
    }
}
