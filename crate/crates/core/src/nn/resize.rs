//! Corner-aligned bilinear resampling over the last two axes.
//!
//! Source coordinates map as `src = dst * (in - 1) / (out - 1)`, so the
//! four corners are reproduced exactly. A size-1 output axis samples the
//! first input coordinate.

use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};

fn axis_scale(n_in: usize, n_out: usize) -> f64 {
    if n_out <= 1 {
        0.0
    } else {
        (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Per-output-coordinate sampling plan: lower source index and the weight
/// of the upper neighbor.
fn plan(n_in: usize, n_out: usize) -> Vec<(usize, f64)> {
    let scale = axis_scale(n_in, n_out);
    (0..n_out)
        .map(|o| {
            let src = o as f64 * scale;
            let lo = (src.floor() as usize).min(n_in - 1);
            let hi_w = if lo + 1 < n_in { src - lo as f64 } else { 0.0 };
            (lo, hi_w)
        })
        .collect()
}

fn spatial_split(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(CoreError::Dimension(format!(
            "bilinear resize: need at least 2 axes, got {shape:?}"
        )));
    }
    let h = shape[shape.len() - 2];
    let w = shape[shape.len() - 1];
    let lead: usize = shape[..shape.len() - 2].iter().product();
    Ok((lead.max(1), h, w))
}

/// Resamples the trailing two axes of `x` to `out_h x out_w`.
pub fn bilinear_resize<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(CoreError::Dimension(
            "bilinear resize: zero output extent".into(),
        ));
    }
    let (lead, h, w) = spatial_split(x.shape())?;
    let rows = plan(h, out_h);
    let cols = plan(w, out_w);
    let mut shape = x.shape().to_vec();
    let n = shape.len();
    shape[n - 2] = out_h;
    shape[n - 1] = out_w;
    let mut out = Tensor::<T>::zeros(&shape);
    for l in 0..lead {
        let src = &x.data()[l * h * w..(l + 1) * h * w];
        let dst = &mut out.data_mut()[l * out_h * out_w..(l + 1) * out_h * out_w];
        for (oy, &(y0, wy)) in rows.iter().enumerate() {
            let y1 = (y0 + 1).min(h - 1);
            for (ox, &(x0, wx)) in cols.iter().enumerate() {
                let x1 = (x0 + 1).min(w - 1);
                let v00 = src[y0 * w + x0].as_f64();
                let v01 = src[y0 * w + x1].as_f64();
                let v10 = src[y1 * w + x0].as_f64();
                let v11 = src[y1 * w + x1].as_f64();
                let top = v00 * (1.0 - wx) + v01 * wx;
                let bot = v10 * (1.0 - wx) + v11 * wx;
                dst[oy * out_w + ox] = T::from_f64(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`bilinear_resize`]: scatters each output gradient onto the
/// four source cells it sampled, with the same weights.
pub fn bilinear_resize_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor<T>> {
    let (lead, out_h, out_w) = spatial_split(grad_out.shape())?;
    if in_h == 0 || in_w == 0 {
        return Err(CoreError::Dimension(
            "bilinear resize backward: zero input extent".into(),
        ));
    }
    let rows = plan(in_h, out_h);
    let cols = plan(in_w, out_w);
    let mut shape = grad_out.shape().to_vec();
    let n = shape.len();
    shape[n - 2] = in_h;
    shape[n - 1] = in_w;
    let mut grad_in = Tensor::<T>::zeros(&shape);
    for l in 0..lead {
        let go = &grad_out.data()[l * out_h * out_w..(l + 1) * out_h * out_w];
        let gi = &mut grad_in.data_mut()[l * in_h * in_w..(l + 1) * in_h * in_w];
        for (oy, &(y0, wy)) in rows.iter().enumerate() {
            let y1 = (y0 + 1).min(in_h - 1);
            for (ox, &(x0, wx)) in cols.iter().enumerate() {
                let x1 = (x0 + 1).min(in_w - 1);
                let g = go[oy * out_w + ox].as_f64();
                gi[y0 * in_w + x0] += T::from_f64(g * (1.0 - wy) * (1.0 - wx));
                gi[y0 * in_w + x1] += T::from_f64(g * (1.0 - wy) * wx);
                gi[y1 * in_w + x0] += T::from_f64(g * wy * (1.0 - wx));
                gi[y1 * in_w + x1] += T::from_f64(g * wy * wx);
            }
        }
    }
    Ok(grad_in)
}
