//! Softmax and cross-entropy on logit batches, stabilized with
//! log-sum-exp so large logits cannot overflow.

use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};

/// Row-wise softmax of a `[batch, classes]` logit matrix.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "softmax: expected [batch, classes], got {:?}",
            logits.shape()
        )));
    }
    let (b, k) = (logits.rows(), logits.cols());
    let mut out = Tensor::<T>::zeros(&[b, k]);
    for i in 0..b {
        let row: Vec<f64> = (0..k).map(|j| logits.get(i, j).as_f64()).collect();
        let p = softmax_row(&row);
        for j in 0..k {
            out.set(i, j, T::from_f64(p[j]));
        }
    }
    Ok(out)
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

/// Mean cross-entropy over a batch and its gradient with respect to the
/// logits (`(softmax - one_hot) / batch`).
pub struct LossGrad<T> {
    pub loss: f64,
    pub grad_logits: Tensor<T>,
}

pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<LossGrad<T>> {
    if logits.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "cross entropy: expected [batch, classes], got {:?}",
            logits.shape()
        )));
    }
    let (b, k) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(CoreError::Dimension(format!(
            "cross entropy: {} labels for batch {b}",
            labels.len()
        )));
    }
    logits.check_finite("cross entropy logits")?;
    let mut grad = Tensor::<T>::zeros(&[b, k]);
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(CoreError::Config(format!(
                "cross entropy: label {label} out of range for {k} classes"
            )));
        }
        let row: Vec<f64> = (0..k).map(|j| logits.get(i, j).as_f64()).collect();
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += (lse - row[label]) * inv_b;
        let p = softmax_row(&row);
        for j in 0..k {
            let g = (p[j] - if j == label { 1.0 } else { 0.0 }) * inv_b;
            grad.set(i, j, T::from_f64(g));
        }
    }
    Ok(LossGrad {
        loss,
        grad_logits: grad,
    })
}
