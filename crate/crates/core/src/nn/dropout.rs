//! Inverted dropout: active only in training, where surviving activations
//! scale by `1 / (1 - p)` so evaluation needs no correction.

use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Backward state: the per-element keep mask (already scaled).
#[derive(Clone, Debug)]
pub struct DropoutCache {
    keep: Vec<bool>,
    scale: f64,
}

/// Samples one Bernoulli per element in index order from `rng`.
pub fn dropout_forward<T: Scalar, R: Rng>(
    x: &Tensor<T>,
    p: f64,
    rng: &mut R,
) -> Result<(Tensor<T>, DropoutCache)> {
    if !(0.0..1.0).contains(&p) {
        return Err(CoreError::Config(format!(
            "dropout: probability {p} outside [0, 1)"
        )));
    }
    let scale = 1.0 / (1.0 - p);
    let scale_t = T::from_f64(scale);
    let mut out = x.clone();
    let mut keep = Vec::with_capacity(x.len());
    for v in out.data_mut() {
        let k = rng.gen::<f64>() >= p;
        keep.push(k);
        *v = if k { *v * scale_t } else { T::zero() };
    }
    Ok((out, DropoutCache { keep, scale }))
}

pub fn dropout_backward<T: Scalar>(cache: &DropoutCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != cache.keep.len() {
        return Err(CoreError::Dimension(format!(
            "dropout backward: gradient has {} elements, cache {}",
            grad_out.len(),
            cache.keep.len()
        )));
    }
    let scale_t = T::from_f64(cache.scale);
    let mut grad = grad_out.clone();
    for (v, &k) in grad.data_mut().iter_mut().zip(&cache.keep) {
        *v = if k { *v * scale_t } else { T::zero() };
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn keeps_expectation_and_is_seed_deterministic() {
        let x = Tensor::<f64>::filled(&[10_000], 1.0);
        let mut rng = stream_rng(42, 0);
        let (y, _) = dropout_forward(&x, 0.5, &mut rng).unwrap();
        let mean: f64 = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "inverted scaling broken: {mean}");

        let mut rng2 = stream_rng(42, 0);
        let (y2, _) = dropout_forward(&x, 0.5, &mut rng2).unwrap();
        assert_eq!(y.data(), y2.data());
    }

    #[test]
    fn backward_reuses_the_same_mask() {
        let x = Tensor::<f64>::filled(&[8], 3.0);
        let mut rng = stream_rng(7, 1);
        let (y, cache) = dropout_forward(&x, 0.5, &mut rng).unwrap();
        let g = Tensor::<f64>::filled(&[8], 1.0);
        let gx = dropout_backward(&cache, &g).unwrap();
        for (yv, gv) in y.data().iter().zip(gx.data()) {
            // zeroed forward elements have zero gradient; kept ones scale by 2
            if *yv == 0.0 {
                assert_eq!(*gv, 0.0);
            } else {
                assert_eq!(*gv, 2.0);
            }
        }
    }
}
