//! Central finite differences for gradient verification.
//!
//! These helpers are the independent reference that every analytic backward
//! pass in this workspace is tested against. They only evaluate the forward
//! map as a black-box scalar function, so they share no code path with the
//! derivations they check. All finite-difference work runs in f64.

/// Settings for a finite-difference comparison.
#[derive(Clone, Copy, Debug)]
pub struct FdConfig {
    /// Central-difference step.
    pub step: f64,
    /// Relative tolerance on the gradient-vector comparison.
    pub rel_tol: f64,
    /// Absolute floor below which differences are ignored.
    pub abs_tol: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            step: 1e-5,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
        }
    }
}

/// Full central-difference gradient of `f` at `x`. `x` is restored between
/// evaluations; `f` must be a pure function of its argument.
pub fn central_diff_grad(x: &mut [f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(x);
        x[i] = orig - step;
        let down = f(x);
        x[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Central difference along the single coordinate `i`.
pub fn central_diff_at(
    x: &mut [f64],
    i: usize,
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let orig = x[i];
    x[i] = orig + step;
    let up = f(x);
    x[i] = orig - step;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * step)
}

/// Outcome of comparing an analytic gradient against a reference.
#[derive(Clone, Debug)]
pub struct GradCompare {
    /// `|a - b| / max(|a|, |b|, 1e-12)` in the l2 sense.
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub reference_norm: f64,
    /// Index of the largest elementwise absolute difference.
    pub worst_index: usize,
    pub worst_diff: f64,
    pub passed: bool,
}

/// Compares gradient vectors: passes when
/// `||a - b|| <= abs_tol + rel_tol * max(||a||, ||b||)`.
pub fn compare_grads(analytic: &[f64], reference: &[f64], cfg: &FdConfig) -> GradCompare {
    assert_eq!(
        analytic.len(),
        reference.len(),
        "gradient length mismatch: {} vs {}",
        analytic.len(),
        reference.len()
    );
    let mut diff_sq = 0.0;
    let mut a_sq = 0.0;
    let mut b_sq = 0.0;
    let mut worst_index = 0;
    let mut worst_diff = 0.0;
    for (i, (&a, &b)) in analytic.iter().zip(reference).enumerate() {
        let d = (a - b).abs();
        if d > worst_diff {
            worst_diff = d;
            worst_index = i;
        }
        diff_sq += (a - b) * (a - b);
        a_sq += a * a;
        b_sq += b * b;
    }
    let diff = diff_sq.sqrt();
    let a_norm = a_sq.sqrt();
    let b_norm = b_sq.sqrt();
    let scale = a_norm.max(b_norm);
    GradCompare {
        rel_error: diff / scale.max(1e-12),
        analytic_norm: a_norm,
        reference_norm: b_norm,
        worst_index,
        worst_diff,
        passed: diff <= cfg.abs_tol + cfg.rel_tol * scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_recovered() {
        // f(x) = sum i * x_i^2, grad_i = 2 i x_i
        let mut x = vec![0.7, -1.3, 2.1];
        let grad = central_diff_grad(&mut x, 1e-5, |v| {
            v.iter().enumerate().map(|(i, &t)| i as f64 * t * t).sum()
        });
        let expect: Vec<f64> = x.iter().enumerate().map(|(i, &t)| 2.0 * i as f64 * t).collect();
        let cmp = compare_grads(&expect, &grad, &FdConfig::default());
        assert!(cmp.passed, "rel error {}", cmp.rel_error);
        assert_eq!(x, vec![0.7, -1.3, 2.1]);
    }

    #[test]
    fn comparison_flags_a_sign_flip() {
        let reference = vec![1.0, -2.0, 0.5];
        let flipped: Vec<f64> = reference.iter().map(|v| -v).collect();
        let cmp = compare_grads(&flipped, &reference, &FdConfig::default());
        assert!(!cmp.passed);
        assert!(cmp.rel_error > 1.0);
    }

    #[test]
    fn zero_gradients_compare_clean() {
        let cmp = compare_grads(&[0.0; 4], &[0.0; 4], &FdConfig::default());
        assert!(cmp.passed);
        assert_eq!(cmp.rel_error, 0.0);
    }
}
