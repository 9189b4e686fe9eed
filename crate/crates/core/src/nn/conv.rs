//! 2D convolution via im2col and a dense GEMM.
//!
//! The backward pass recomputes the im2col expansion from the cached input
//! instead of retaining it, trading a little compute for a much smaller
//! activation footprint.

use super::expect_bchw;
use crate::error::{CoreError, Result};
use crate::rng::{randn, stream_rng};
use crate::stiefel::{EuclideanParam, OptimizerConfig};
use crate::tensor::{Scalar, Tensor};

/// Square-kernel convolution configuration.
#[derive(Clone, Copy, Debug)]
pub struct ConvCfg {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvCfg {
    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span = |n: usize| -> Result<usize> {
            let padded = n + 2 * self.pad;
            if padded < self.kernel {
                return Err(CoreError::Dimension(format!(
                    "conv: input extent {n} too small for kernel {} with pad {}",
                    self.kernel, self.pad
                )));
            }
            Ok((padded - self.kernel) / self.stride + 1)
        };
        Ok((span(h)?, span(w)?))
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

/// Convolution layer. The weight is stored flattened as
/// `[out_ch, in_ch * k * k]`; the logical 4D kernel layout is
/// `[out_ch, in_ch, ky, kx]` row-major.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    cfg: ConvCfg,
    weight: EuclideanParam<T>,
    bias: EuclideanParam<T>,
    grad_weight: Tensor<T>,
    grad_bias: Tensor<T>,
}

/// State the backward pass needs: just the forward input.
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    input: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    /// Kaiming-normal weight init (`std = sqrt(2 / fan_in)`), zero bias.
    pub fn new(cfg: ConvCfg, seed: u64, stream: u64) -> Result<Self> {
        if cfg.kernel == 0 || cfg.stride == 0 || cfg.in_ch == 0 || cfg.out_ch == 0 {
            return Err(CoreError::Config(format!("conv: degenerate config {cfg:?}")));
        }
        let fan_in = cfg.patch_len();
        let std = (2.0 / fan_in as f64).sqrt();
        let mut rng = stream_rng(seed, stream);
        let mut w = Tensor::<T>::zeros(&[cfg.out_ch, fan_in]);
        for v in w.data_mut() {
            *v = T::from_f64(randn(&mut rng) * std);
        }
        Ok(Conv2d {
            cfg,
            weight: EuclideanParam::new(w),
            bias: EuclideanParam::new(Tensor::zeros(&[cfg.out_ch])),
            grad_weight: Tensor::zeros(&[cfg.out_ch, fan_in]),
            grad_bias: Tensor::zeros(&[cfg.out_ch]),
        })
    }

    pub fn cfg(&self) -> &ConvCfg {
        &self.cfg
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

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (b, h, w) = expect_bchw(x, self.cfg.in_ch, "conv forward")?;
        let (oh, ow) = self.cfg.out_dims(h, w)?;
        let patch = self.cfg.patch_len();
        let spatial = oh * ow;
        let mut out = Tensor::<T>::zeros(&[b, self.cfg.out_ch, oh, ow]);
        let mut cols = Tensor::<T>::zeros(&[patch, spatial]);
        for s in 0..b {
            let sample = &x.data()[s * self.cfg.in_ch * h * w..(s + 1) * self.cfg.in_ch * h * w];
            im2col(&self.cfg, sample, h, w, oh, ow, cols.data_mut());
            // out_s = W * cols, written straight into the output slice
            let out_slice =
                &mut out.data_mut()[s * self.cfg.out_ch * spatial..(s + 1) * self.cfg.out_ch * spatial];
            unsafe {
                T::gemm(
                    self.cfg.out_ch,
                    patch,
                    spatial,
                    T::one(),
                    self.weight.value().data().as_ptr(),
                    patch as isize,
                    1,
                    cols.data().as_ptr(),
                    spatial as isize,
                    1,
                    T::zero(),
                    out_slice.as_mut_ptr(),
                    spatial as isize,
                    1,
                );
            }
            for c in 0..self.cfg.out_ch {
                let bias = self.bias.value().data()[c];
                for v in &mut out_slice[c * spatial..(c + 1) * spatial] {
                    *v += bias;
                }
            }
        }
        Ok((out, ConvCache { input: x.clone() }))
    }

    /// Adds this batch's parameter gradients into the accumulators and
    /// returns the gradient with respect to the input.
    pub fn backward(&mut self, cache: &ConvCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = &cache.input;
        let (b, h, w) = expect_bchw(x, self.cfg.in_ch, "conv backward")?;
        let (oh, ow) = self.cfg.out_dims(h, w)?;
        let spatial = oh * ow;
        if grad_out.shape() != [b, self.cfg.out_ch, oh, ow] {
            return Err(CoreError::Dimension(format!(
                "conv backward: gradient shape {:?}, expected {:?}",
                grad_out.shape(),
                [b, self.cfg.out_ch, oh, ow]
            )));
        }
        let patch = self.cfg.patch_len();
        let mut grad_in = Tensor::<T>::zeros(&[b, self.cfg.in_ch, h, w]);
        let mut cols = Tensor::<T>::zeros(&[patch, spatial]);
        let mut grad_cols = Tensor::<T>::zeros(&[patch, spatial]);
        for s in 0..b {
            let sample = &x.data()[s * self.cfg.in_ch * h * w..(s + 1) * self.cfg.in_ch * h * w];
            im2col(&self.cfg, sample, h, w, oh, ow, cols.data_mut());
            let go = &grad_out.data()[s * self.cfg.out_ch * spatial..(s + 1) * self.cfg.out_ch * spatial];
            // dW += dY * cols^T
            unsafe {
                T::gemm(
                    self.cfg.out_ch,
                    spatial,
                    patch,
                    T::one(),
                    go.as_ptr(),
                    spatial as isize,
                    1,
                    cols.data().as_ptr(),
                    1,
                    spatial as isize,
                    T::one(),
                    self.grad_weight.data_mut().as_mut_ptr(),
                    patch as isize,
                    1,
                );
            }
            for c in 0..self.cfg.out_ch {
                let mut acc = T::zero();
                for v in &go[c * spatial..(c + 1) * spatial] {
                    acc += *v;
                }
                self.grad_bias.data_mut()[c] += acc;
            }
            // dCols = W^T * dY, scattered back to the input
            unsafe {
                T::gemm(
                    patch,
                    self.cfg.out_ch,
                    spatial,
                    T::one(),
                    self.weight.value().data().as_ptr(),
                    1,
                    patch as isize,
                    go.as_ptr(),
                    spatial as isize,
                    1,
                    T::zero(),
                    grad_cols.data_mut().as_mut_ptr(),
                    spatial as isize,
                    1,
                );
            }
            let gi =
                &mut grad_in.data_mut()[s * self.cfg.in_ch * h * w..(s + 1) * self.cfg.in_ch * h * w];
            col2im(&self.cfg, grad_cols.data(), h, w, oh, ow, gi);
        }
        Ok(grad_in)
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

fn im2col<T: Scalar>(
    cfg: &ConvCfg,
    sample: &[T],
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    let k = cfg.kernel;
    let spatial = oh * ow;
    let mut row = 0;
    for c in 0..cfg.in_ch {
        let plane = &sample[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut cols[row * spatial..(row + 1) * spatial];
                row += 1;
                for oy in 0..oh {
                    let iy = (oy * cfg.stride + ky) as isize - cfg.pad as isize;
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        for v in dst_row.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * cfg.stride + kx) as isize - cfg.pad as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Transpose of [`im2col`]: scatter-adds column gradients back onto the
/// input plane.
fn col2im<T: Scalar>(
    cfg: &ConvCfg,
    cols: &[T],
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    out: &mut [T],
) {
    let k = cfg.kernel;
    let spatial = oh * ow;
    for v in out.iter_mut() {
        *v = T::zero();
    }
    let mut row = 0;
    for c in 0..cfg.in_ch {
        for ky in 0..k {
            for kx in 0..k {
                let src = &cols[row * spatial..(row + 1) * spatial];
                row += 1;
                for oy in 0..oh {
                    let iy = (oy * cfg.stride + ky) as isize - cfg.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * cfg.stride + kx) as isize - cfg.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out[(c * h + iy as usize) * w + ix as usize] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

/// Reference convolution by direct summation, used by the tests as an
/// oracle for the GEMM path.
#[cfg(test)]
pub(crate) fn conv_direct<T: Scalar>(
    cfg: &ConvCfg,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Tensor<T> {
    let s = x.shape();
    let (b, h, w) = (s[0], s[2], s[3]);
    let (oh, ow) = cfg.out_dims(h, w).unwrap();
    let k = cfg.kernel;
    let mut out = Tensor::<T>::zeros(&[b, cfg.out_ch, oh, ow]);
    for bi in 0..b {
        for oc in 0..cfg.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.data()[oc].as_f64();
                    for ic in 0..cfg.in_ch {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * cfg.stride + ky) as isize - cfg.pad as isize;
                                let ix = (ox * cfg.stride + kx) as isize - cfg.pad as isize;
                                if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data()
                                    [((bi * cfg.in_ch + ic) * h + iy as usize) * w + ix as usize];
                                let wv = weight.data()[oc * cfg.in_ch * k * k + (ic * k + ky) * k + kx];
                                acc += xv.as_f64() * wv.as_f64();
                            }
                        }
                    }
                    out.data_mut()[((bi * cfg.out_ch + oc) * oh + oy) * ow + ox] = T::from_f64(acc);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled_seq(shape: &[usize]) -> Tensor<f64> {
        let len: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap()
    }

    #[test]
    fn gemm_path_matches_direct_convolution() {
        for &(stride, pad) in &[(1usize, 0usize), (1, 1), (2, 3)] {
            let cfg = ConvCfg {
                in_ch: 3,
                out_ch: 4,
                kernel: 3,
                stride,
                pad,
            };
            let layer = Conv2d::<f64>::new(cfg, 77, stride as u64 * 10 + pad as u64).unwrap();
            let x = filled_seq(&[2, 3, 9, 7]);
            let (y, _) = layer.forward(&x).unwrap();
            let oracle = conv_direct(&cfg, &x, layer.weight().value(), layer.bias().value());
            let diff = y.sub(&oracle).unwrap().frob_norm();
            assert!(diff < 1e-12, "stride {stride} pad {pad}: diff {diff}");
        }
    }

    #[test]
    fn output_dims_follow_the_usual_formula() {
        let cfg = ConvCfg {
            in_ch: 1,
            out_ch: 64,
            kernel: 7,
            stride: 2,
            pad: 3,
        };
        assert_eq!(cfg.out_dims(112, 60).unwrap(), (56, 30));
        let b = ConvCfg {
            in_ch: 64,
            out_ch: 64,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        assert_eq!(b.out_dims(56, 30).unwrap(), (56, 30));
    }

    #[test]
    fn too_small_input_is_rejected() {
        let cfg = ConvCfg {
            in_ch: 1,
            out_ch: 1,
            kernel: 5,
            stride: 1,
            pad: 0,
        };
        assert!(cfg.out_dims(3, 8).is_err());
    }
}
