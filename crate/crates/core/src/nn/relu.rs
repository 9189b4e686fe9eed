//! Rectified linear activation.

use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};

/// Backward state: which inputs were strictly positive.
#[derive(Clone, Debug)]
pub struct ReluCache {
    mask: Vec<bool>,
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, ReluCache) {
    let mut out = x.clone();
    let mut mask = Vec::with_capacity(x.len());
    for v in out.data_mut() {
        let pass = *v > T::zero();
        mask.push(pass);
        if !pass {
            *v = T::zero();
        }
    }
    (out, ReluCache { mask })
}

pub fn relu_backward<T: Scalar>(cache: &ReluCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != cache.mask.len() {
        return Err(CoreError::Dimension(format!(
            "relu backward: gradient has {} elements, cache {}",
            grad_out.len(),
            cache.mask.len()
        )));
    }
    let mut grad = grad_out.clone();
    for (v, &pass) in grad.data_mut().iter_mut().zip(&cache.mask) {
        if !pass {
            *v = T::zero();
        }
    }
    Ok(grad)
}
