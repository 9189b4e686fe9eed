//! Max pooling with an argmax cache.
//!
//! Ties are broken toward the first maximum in row-major scan order, and
//! the backward pass routes each gradient to exactly that element.

use super::expect_bchw;
use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    channels: usize,
}

/// Backward state: the flat input index every output element came from.
#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    argmax: Vec<u32>,
    in_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, channels: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 || channels == 0 {
            return Err(CoreError::Config(format!(
                "maxpool: degenerate kernel {kernel} / stride {stride} / channels {channels}"
            )));
        }
        Ok(MaxPool2d {
            kernel,
            stride,
            channels,
        })
    }

    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kernel || w < self.kernel {
            return Err(CoreError::Dimension(format!(
                "maxpool: input {h}x{w} smaller than kernel {}",
                self.kernel
            )));
        }
        Ok(((h - self.kernel) / self.stride + 1, (w - self.kernel) / self.stride + 1))
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, MaxPoolCache)> {
        let (b, h, w) = expect_bchw(x, self.channels, "maxpool forward")?;
        let (oh, ow) = self.out_dims(h, w)?;
        let mut out = Tensor::<T>::zeros(&[b, self.channels, oh, ow]);
        let mut argmax = Vec::with_capacity(b * self.channels * oh * ow);
        for bi in 0..b {
            for c in 0..self.channels {
                let plane_base = (bi * self.channels + c) * h * w;
                let plane = &x.data()[plane_base..plane_base + h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = T::neg_infinity();
                        let mut best_idx = 0usize;
                        for ky in 0..self.kernel {
                            let iy = oy * self.stride + ky;
                            for kx in 0..self.kernel {
                                let ix = ox * self.stride + kx;
                                let v = plane[iy * w + ix];
                                if v > best {
                                    best = v;
                                    best_idx = iy * w + ix;
                                }
                            }
                        }
                        out.data_mut()[((bi * self.channels + c) * oh + oy) * ow + ox] = best;
                        argmax.push((plane_base + best_idx) as u32);
                    }
                }
            }
        }
        Ok((
            out,
            MaxPoolCache {
                argmax,
                in_shape: x.shape().to_vec(),
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        cache: &MaxPoolCache,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if grad_out.len() != cache.argmax.len() {
            return Err(CoreError::Dimension(format!(
                "maxpool backward: gradient has {} elements, cache {}",
                grad_out.len(),
                cache.argmax.len()
            )));
        }
        let mut grad_in = Tensor::<T>::zeros(&cache.in_shape);
        for (g, &idx) in grad_out.data().iter().zip(&cache.argmax) {
            grad_in.data_mut()[idx as usize] += *g;
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_maxima_and_routes_gradient_to_first_tie() {
        let pool = MaxPool2d::new(2, 2, 1).unwrap();
        let x = Tensor::from_vec(
            &[1, 1, 2, 4],
            vec![5.0, 5.0, 1.0, 2.0, 3.0, 0.0, 2.0, 1.0],
        )
        .unwrap();
        let (y, cache) = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[5.0, 2.0]);
        let g = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, 1.0]).unwrap();
        let gx = pool.backward(&cache, &g).unwrap();
        // the tie at (0,0)/(0,1) resolves to the first in scan order
        assert_eq!(gx.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn trailing_rows_that_do_not_fit_are_dropped() {
        let pool = MaxPool2d::new(3, 3, 1).unwrap();
        assert_eq!(pool.out_dims(112, 60).unwrap(), (37, 20));
        assert_eq!(pool.out_dims(37, 20).unwrap(), (12, 6));
    }
}
