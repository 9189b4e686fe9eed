//! Optimization on the manifold of row-orthonormal matrices.
//!
//! BiMap weights live on the (transposed) Stiefel manifold
//! `{W in R^{k x d} : W W^T = I_k}`. Plain SGD would immediately leave it,
//! so updates follow Riemannian SGD: the Euclidean gradient is projected
//! onto the tangent space at `W`, the step is taken in that direction, and
//! a QR-based retraction pulls the result back onto the manifold. Momentum
//! buffers are re-projected after every move so they stay tangent.
//!
//! Retraction and projection run in f64 regardless of storage type; the QR
//! uses Householder reflections with a positive-diagonal convention so the
//! factor is unique and the update deterministic.

use crate::error::{CoreError, Result};
use crate::rng::{randn, stream_rng};
use crate::tensor::{sym_part, Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// Hyperparameters for the stochastic gradient step.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Learning rate.
    pub lr: f64,
    /// Momentum coefficient; 0 disables the buffer entirely.
    pub momentum: f64,
    /// When false, manifold parameters skip tangent-space momentum handling
    /// and accumulate raw projected gradients instead.
    pub stiefel_momentum: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.007,
            momentum: 0.9,
            stiefel_momentum: true,
        }
    }
}

/// Projects a Euclidean gradient onto the tangent space of the
/// row-orthonormal manifold at `w`: `P_W(G) = G - sym(G W^T) W`.
pub fn stiefel_project(w: &Tensor<f64>, g: &Tensor<f64>) -> Result<Tensor<f64>> {
    if w.shape() != g.shape() || w.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "stiefel projection: shapes {:?} vs {:?}",
            w.shape(),
            g.shape()
        )));
    }
    let s = sym_part(&g.matmul_nt(w))?;
    let mut out = g.clone();
    let correction = s.matmul(w);
    for (o, c) in out.data_mut().iter_mut().zip(correction.data()) {
        *o -= *c;
    }
    Ok(out)
}

/// Moves `w` along `step` and retracts back onto the manifold via the thin
/// QR factorization of `(w + step)^T`, with the positive-diagonal sign
/// convention. A bitwise all-zero `step` returns `w` unchanged.
pub fn stiefel_retract(w: &Tensor<f64>, step: &Tensor<f64>) -> Result<Tensor<f64>> {
    if w.shape() != step.shape() || w.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "stiefel retraction: shapes {:?} vs {:?}",
            w.shape(),
            step.shape()
        )));
    }
    if step.data().iter().all(|v| *v == 0.0) {
        return Ok(w.clone());
    }
    let moved = w.add(step)?;
    let q = thin_qr_q(&moved.transpose())?;
    Ok(q.transpose())
}

/// Thin Q factor (`d x k`, `k <= d`) of a full-column-rank matrix, with
/// `diag(R) > 0`. Householder reflections, f64 throughout.
fn thin_qr_q(a: &Tensor<f64>) -> Result<Tensor<f64>> {
    let (d, k) = (a.rows(), a.cols());
    if k > d {
        return Err(CoreError::Dimension(format!(
            "thin QR: more columns ({k}) than rows ({d})"
        )));
    }
    let scale = a.frob_norm().max(f64::MIN_POSITIVE);
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<f64> = (j..d).map(|i| r.get(i, j)).collect();
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale {
            return Err(CoreError::Numeric(format!(
                "thin QR: rank deficiency at column {j}"
            )));
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        for t in &mut v {
            *t /= vnorm;
        }
        for c in j..k {
            let mut dot = 0.0;
            for i in j..d {
                dot += v[i - j] * r.get(i, c);
            }
            for i in j..d {
                let val = r.get(i, c) - 2.0 * dot * v[i - j];
                r.set(i, c, val);
            }
        }
        reflectors.push(v);
    }
    let mut q = Tensor::<f64>::zeros(&[d, k]);
    for j in 0..k {
        q.set(j, j, 1.0);
    }
    for j in (0..k).rev() {
        let v = &reflectors[j];
        for c in 0..k {
            let mut dot = 0.0;
            for i in j..d {
                dot += v[i - j] * q.get(i, c);
            }
            for i in j..d {
                let val = q.get(i, c) - 2.0 * dot * v[i - j];
                q.set(i, c, val);
            }
        }
    }
    for j in 0..k {
        if r.get(j, j) < 0.0 {
            for i in 0..d {
                let val = -q.get(i, j);
                q.set(i, j, val);
            }
        }
    }
    Ok(q)
}

/// A parameter constrained to the row-orthonormal manifold, with its
/// momentum buffer.
#[derive(Clone, Debug)]
pub struct StiefelParam<T> {
    value: Tensor<T>,
    momentum: Option<Tensor<f64>>,
}

impl<T: Scalar> StiefelParam<T> {
    /// Wraps an existing row-orthonormal matrix. The orthonormality drift
    /// tolerance scales with the storage precision.
    pub fn new(value: Tensor<T>) -> Result<Self> {
        if value.rank() != 2 || value.rows() > value.cols() {
            return Err(CoreError::Dimension(format!(
                "StiefelParam: need k x d with k <= d, got {:?}",
                value.shape()
            )));
        }
        let drift = orthonormality_drift(&value.cast::<f64>());
        let tol = if T::DTYPE == "f32" { 1e-5 } else { 1e-8 };
        if drift > tol {
            return Err(CoreError::Numeric(format!(
                "StiefelParam: rows not orthonormal (drift {drift:.3e} > {tol:.0e})"
            )));
        }
        Ok(StiefelParam {
            value,
            momentum: None,
        })
    }

    /// Random point on the manifold: the Q factor of a Gaussian matrix.
    pub fn random(k: usize, d: usize, seed: u64, stream: u64) -> Result<Self> {
        if k > d {
            return Err(CoreError::Dimension(format!(
                "StiefelParam::random: k = {k} exceeds d = {d}"
            )));
        }
        let mut rng = stream_rng(seed, stream);
        let mut a = Tensor::<f64>::zeros(&[d, k]);
        for v in a.data_mut() {
            *v = randn(&mut rng);
        }
        let q = thin_qr_q(&a)?;
        Ok(StiefelParam {
            value: q.transpose().cast::<T>(),
            momentum: None,
        })
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.value.rows(), self.value.cols())
    }

    /// Overwrites the value (checkpoint restore). Clears the momentum
    /// buffer, which is not part of the persisted state.
    pub fn restore(&mut self, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.value.shape() {
            return Err(CoreError::Dimension(format!(
                "StiefelParam restore: shape {:?} vs {:?}",
                value.shape(),
                self.value.shape()
            )));
        }
        let fresh = StiefelParam::new(value)?;
        self.value = fresh.value;
        self.momentum = None;
        Ok(())
    }

    /// One Riemannian SGD step from a Euclidean gradient: project, update
    /// the tangent momentum buffer, retract, re-project the buffer at the
    /// new point.
    pub fn step(&mut self, euclid_grad: &Tensor<T>, cfg: &OptimizerConfig) -> Result<()> {
        if euclid_grad.shape() != self.value.shape() {
            return Err(CoreError::Dimension(format!(
                "StiefelParam step: gradient shape {:?} vs value {:?}",
                euclid_grad.shape(),
                self.value.shape()
            )));
        }
        let w = self.value.cast::<f64>();
        let g = stiefel_project(&w, &euclid_grad.cast::<f64>())?;
        let direction = if cfg.momentum > 0.0 {
            let mut buf = match self.momentum.take() {
                Some(b) => {
                    let mut b = b.scale(cfg.momentum);
                    for (bv, gv) in b.data_mut().iter_mut().zip(g.data()) {
                        *bv += *gv;
                    }
                    b
                }
                None => g.clone(),
            };
            if cfg.stiefel_momentum {
                buf = stiefel_project(&w, &buf)?;
            }
            self.momentum = Some(buf.clone());
            buf
        } else {
            g
        };
        let new_w = stiefel_retract(&w, &direction.scale(-cfg.lr))?;
        if cfg.momentum > 0.0 && cfg.stiefel_momentum {
            // transport: keep the buffer tangent at the new point
            if let Some(buf) = self.momentum.take() {
                self.momentum = Some(stiefel_project(&new_w, &buf)?);
            }
        }
        self.value = new_w.cast::<T>();
        Ok(())
    }
}

/// `||W W^T - I||_F` in f64.
pub fn orthonormality_drift(w: &Tensor<f64>) -> f64 {
    let k = w.rows();
    let gram = w.matmul_nt(w);
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            let e = gram.get(i, j) - target;
            acc += e * e;
        }
    }
    acc.sqrt()
}

/// An unconstrained parameter with classic heavy-ball momentum.
#[derive(Clone, Debug)]
pub struct EuclideanParam<T> {
    value: Tensor<T>,
    momentum: Option<Tensor<f64>>,
}

impl<T: Scalar> EuclideanParam<T> {
    pub fn new(value: Tensor<T>) -> Self {
        EuclideanParam {
            value,
            momentum: None,
        }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        &mut self.value
    }

    /// Overwrites the value (checkpoint restore) and clears momentum.
    pub fn restore(&mut self, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.value.shape() {
            return Err(CoreError::Dimension(format!(
                "EuclideanParam restore: shape {:?} vs {:?}",
                value.shape(),
                self.value.shape()
            )));
        }
        self.value = value;
        self.momentum = None;
        Ok(())
    }

    /// `buf = momentum * buf + g; value -= lr * buf`.
    pub fn step(&mut self, grad: &Tensor<T>, cfg: &OptimizerConfig) -> Result<()> {
        if grad.shape() != self.value.shape() {
            return Err(CoreError::Dimension(format!(
                "EuclideanParam step: gradient shape {:?} vs value {:?}",
                grad.shape(),
                self.value.shape()
            )));
        }
        let g = grad.cast::<f64>();
        let direction = if cfg.momentum > 0.0 {
            let buf = match self.momentum.take() {
                Some(b) => {
                    let mut b = b.scale(cfg.momentum);
                    for (bv, gv) in b.data_mut().iter_mut().zip(g.data()) {
                        *bv += *gv;
                    }
                    b
                }
                None => g,
            };
            self.momentum = Some(buf.clone());
            buf
        } else {
            g
        };
        for (v, d) in self.value.data_mut().iter_mut().zip(direction.data()) {
            *v -= T::from_f64(cfg.lr * *d);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn random_gaussian(rows: usize, cols: usize, seed: u64, stream: u64) -> Tensor<f64> {
        let mut rng = stream_rng(seed, stream);
        let mut t = Tensor::<f64>::zeros(&[rows, cols]);
        for v in t.data_mut() {
            *v = randn(&mut rng);
        }
        t
    }

    #[test]
    fn projection_lands_in_the_tangent_space() {
        let w = StiefelParam::<f64>::random(3, 7, 11, 0).unwrap();
        let g = random_gaussian(3, 7, 11, 1);
        let p = stiefel_project(w.value(), &g).unwrap();
        // tangency: P W^T must be antisymmetric
        let pw = p.matmul_nt(w.value());
        for i in 0..3 {
            for j in 0..3 {
                assert!((pw.get(i, j) + pw.get(j, i)).abs() < 1e-12);
            }
        }
        // idempotence
        let pp = stiefel_project(w.value(), &p).unwrap();
        assert!(pp.sub(&p).unwrap().frob_norm() < 1e-12);
        // the normal direction W itself projects to zero
        let pz = stiefel_project(w.value(), w.value()).unwrap();
        assert!(pz.frob_norm() < 1e-12);
    }

    #[test]
    fn retraction_returns_to_the_manifold() {
        let w = StiefelParam::<f64>::random(4, 9, 12, 0).unwrap();
        let g = random_gaussian(4, 9, 12, 1);
        let tangent = stiefel_project(w.value(), &g).unwrap();
        let moved = stiefel_retract(w.value(), &tangent.scale(0.3)).unwrap();
        assert!(orthonormality_drift(&moved) < 1e-14);
    }

    #[test]
    fn retraction_with_zero_step_is_bitwise_identity() {
        let w = StiefelParam::<f64>::random(3, 5, 13, 0).unwrap();
        let zero = Tensor::<f64>::zeros(&[3, 5]);
        let back = stiefel_retract(w.value(), &zero).unwrap();
        assert_eq!(back.data(), w.value().data());
    }

    #[test]
    fn retraction_is_first_order_accurate() {
        // retract(W, t D) = W + t D + O(t^2) for tangent D: halving t must
        // shrink the residual by about 4x
        let w = StiefelParam::<f64>::random(3, 6, 14, 0).unwrap();
        let d = stiefel_project(w.value(), &random_gaussian(3, 6, 14, 1)).unwrap();
        let resid = |t: f64| -> f64 {
            let r = stiefel_retract(w.value(), &d.scale(t)).unwrap();
            let lin = w.value().add(&d.scale(t)).unwrap();
            r.sub(&lin).unwrap().frob_norm()
        };
        let r1 = resid(1e-2);
        let r2 = resid(5e-3);
        let ratio = r1 / r2;
        assert!(
            ratio > 3.0 && ratio < 5.0,
            "residuals {r1:.3e}/{r2:.3e} not quadratic (ratio {ratio:.2})"
        );
    }

    #[test]
    fn retraction_rejects_rank_deficiency() {
        let w = StiefelParam::<f64>::random(2, 4, 15, 0).unwrap();
        let step = w.value().scale(-1.0);
        assert!(matches!(
            stiefel_retract(w.value(), &step),
            Err(CoreError::Numeric(_))
        ));
    }

    #[test]
    fn long_run_orthonormality_stays_tight() {
        let cfg = OptimizerConfig {
            lr: 0.01,
            momentum: 0.9,
            stiefel_momentum: true,
        };
        let mut p = StiefelParam::<f64>::random(5, 12, 16, 0).unwrap();
        let mut rng = stream_rng(16, 1);
        for _ in 0..1000 {
            let mut g = Tensor::<f64>::zeros(&[5, 12]);
            for v in g.data_mut() {
                *v = randn(&mut rng);
            }
            p.step(&g, &cfg).unwrap();
        }
        let drift = orthonormality_drift(p.value());
        assert!(drift <= 1e-8, "drift after 1000 steps: {drift:.3e}");
    }

    #[test]
    fn riemannian_descent_reduces_a_matrix_fitting_loss() {
        // L(W) = 0.5 ||W - A||_F^2, Euclidean gradient W - A
        let a = random_gaussian(3, 8, 17, 0);
        let cfg = OptimizerConfig {
            lr: 0.05,
            momentum: 0.0,
            stiefel_momentum: true,
        };
        let mut p = StiefelParam::<f64>::random(3, 8, 17, 1).unwrap();
        let loss = |w: &Tensor<f64>| 0.5 * w.sub(&a).unwrap().frob_norm().powi(2);
        let initial = loss(p.value());
        for _ in 0..50 {
            let g = p.value().sub(&a).unwrap();
            p.step(&g, &cfg).unwrap();
        }
        let after = loss(p.value());
        assert!(after < initial, "loss went {initial:.4} -> {after:.4}");
        assert!(orthonormality_drift(p.value()) < 1e-12);
    }

    #[test]
    fn euclidean_momentum_matches_hand_recurrence() {
        let cfg = OptimizerConfig {
            lr: 0.007,
            momentum: 0.9,
            stiefel_momentum: true,
        };
        let mut p = EuclideanParam::new(Tensor::<f64>::zeros(&[1]));
        let one = Tensor::<f64>::filled(&[1], 1.0);
        p.step(&one, &cfg).unwrap();
        // buf = 1, value = -0.007
        assert!((p.value().data()[0] + 0.007).abs() < 1e-15);
        p.step(&one, &cfg).unwrap();
        // buf = 0.9 + 1 = 1.9, value = -0.007 - 0.0133
        assert!((p.value().data()[0] + 0.007 + 0.0133).abs() < 1e-12);
    }

    #[test]
    fn single_precision_params_keep_workable_orthonormality() {
        let cfg = OptimizerConfig::default();
        let mut p = StiefelParam::<f32>::random(4, 10, 18, 0).unwrap();
        let mut rng = stream_rng(18, 1);
        for _ in 0..100 {
            let mut g = Tensor::<f32>::zeros(&[4, 10]);
            for v in g.data_mut() {
                *v = randn(&mut rng) as f32;
            }
            p.step(&g, &cfg).unwrap();
        }
        let drift = orthonormality_drift(&p.value().cast::<f64>());
        assert!(drift <= 1e-5, "f32 drift after 100 steps: {drift:.3e}");
    }

    #[test]
    fn non_orthonormal_input_is_rejected() {
        let bad = Tensor::<f64>::filled(&[2, 4], 0.5);
        assert!(StiefelParam::new(bad).is_err());
    }
}
