//! Layers on the manifold of symmetric positive definite matrices.
//!
//! The pipeline pools a feature matrix into a covariance (CovPool), shrinks
//! it through congruences with row-orthonormal weights (BiMap), clamps its
//! spectrum away from zero (ReEig), and finally flattens the manifold with a
//! matrix logarithm (LogEig) so an ordinary linear classifier can act on the
//! result.
//!
//! Backward passes are analytic. For the two spectral layers the gradient of
//! `X = U diag(s) U^T  ->  Y = U diag(g(s)) U^T` is
//!
//! ```text
//! dL/dX = U ( W o (U^T sym(dL/dY) U) ) U^T
//! W_ij = (g(s_i) - g(s_j)) / (s_i - s_j),   W_ii = g'(s_i)
//! ```
//!
//! with the difference quotient replaced by `g'` at its midpoint whenever
//! `|s_i - s_j|` falls below a relative threshold. That fallback keeps the
//! gradient finite for clustered spectra, where the textbook `1/(s_i - s_j)`
//! weights blow up even though the layer itself stays perfectly smooth.
//!
//! All spectral arithmetic runs in f64 regardless of the storage type; f32
//! tensors are widened on entry and rounded on exit. Eigendecompositions are
//! computed once per matrix and cached on the [`SpdMatrix`].

use crate::eig::{sym_eig, EigResult};
use crate::error::{CoreError, Result};
use crate::tensor::{matmul_ex, sym_part, Scalar, Tensor};
use std::sync::OnceLock;

/// Ridge added by CovPool: `1e-6 * trace(C) / d` on the diagonal.
pub const COVPOOL_RIDGE_FACTOR: f64 = 1e-6;

/// Eigenvalues this close (relatively) are treated as coincident in the
/// spectral backward pass.
pub const EIGENGAP_FALLBACK_TOL: f64 = 1e-12;

/// LogEig rejects spectra at or below this floor.
pub const LOGEIG_DOMAIN_FLOOR: f64 = 1e-10;

/// Symmetric positive (semi-)definite matrix with a cached
/// eigendecomposition.
///
/// Construction enforces squareness, finiteness, and symmetry (small
/// asymmetry is averaged away, large asymmetry is an error). Definiteness is
/// not re-verified here; it is the documented output property of the layers
/// that produce these matrices, and the tests check it there.
#[derive(Debug)]
pub struct SpdMatrix<T> {
    values: Tensor<T>,
    eig: OnceLock<EigResult<f64>>,
}

impl<T: Scalar> Clone for SpdMatrix<T> {
    fn clone(&self) -> Self {
        let eig = OnceLock::new();
        if let Some(e) = self.eig.get() {
            let _ = eig.set(e.clone());
        }
        SpdMatrix {
            values: self.values.clone(),
            eig,
        }
    }
}

impl<T: Scalar> SpdMatrix<T> {
    pub fn new(values: Tensor<T>) -> Result<Self> {
        if values.rank() != 2 || values.shape()[0] != values.shape()[1] {
            return Err(CoreError::Dimension(format!(
                "SpdMatrix needs a square matrix, got {:?}",
                values.shape()
            )));
        }
        values.check_finite("SpdMatrix")?;
        let d = values.shape()[0];
        let mut max_abs = 0.0f64;
        for v in values.data() {
            max_abs = max_abs.max(v.as_f64().abs());
        }
        let tol = 1e-8 * max_abs.max(1.0);
        let mut sym = values;
        for i in 0..d {
            for j in (i + 1)..d {
                let a = sym.get(i, j);
                let b = sym.get(j, i);
                if (a.as_f64() - b.as_f64()).abs() > tol {
                    return Err(CoreError::Dimension(format!(
                        "SpdMatrix: asymmetric at ({i},{j}): {:?} vs {:?}",
                        a, b
                    )));
                }
                let avg = (a + b) * T::from_f64(0.5);
                sym.set(i, j, avg);
                sym.set(j, i, avg);
            }
        }
        Ok(SpdMatrix {
            values: sym,
            eig: OnceLock::new(),
        })
    }

    /// Builds a matrix whose eigendecomposition is already known, avoiding a
    /// redundant factorization downstream.
    pub(crate) fn from_parts(values: Tensor<T>, eig: EigResult<f64>) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(eig);
        SpdMatrix { values, eig: cell }
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    pub fn into_values(self) -> Tensor<T> {
        self.values
    }

    /// Eigendecomposition in f64, computed on first use and cached.
    pub fn eig(&self) -> Result<&EigResult<f64>> {
        if self.eig.get().is_none() {
            let e = sym_eig(&self.values.cast::<f64>())?;
            let _ = self.eig.set(e);
        }
        Ok(self.eig.get().expect("eig cache populated above"))
    }

    /// Smallest eigenvalue (f64).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(*self
            .eig()?
            .values
            .last()
            .expect("SpdMatrix dims are at least 1"))
    }
}

/// The centering operator `I_bar = (1/M) (I - (1/M) 1 1^T)`.
///
/// Right-multiplying a feature matrix by `I_bar` subtracts each row's mean
/// and scales by `1/M`, so `T I_bar T^T` is the (biased) covariance of the
/// columns of `T`.
#[derive(Clone, Copy, Debug)]
pub struct CenteringMatrix {
    m: usize,
}

impl CenteringMatrix {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(CoreError::Config("CenteringMatrix: M must be positive".into()));
        }
        Ok(CenteringMatrix { m })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Dense `M x M` form, for tests and oracles.
    pub fn matrix<T: Scalar>(&self) -> Tensor<T> {
        let m = self.m;
        let inv_m = 1.0 / m as f64;
        let mut out = Tensor::<T>::zeros(&[m, m]);
        for i in 0..m {
            for j in 0..m {
                let v = if i == j { inv_m * (1.0 - inv_m) } else { -inv_m * inv_m };
                out.set(i, j, T::from_f64(v));
            }
        }
        out
    }

    /// `t * I_bar` without materializing the operator: center each row of
    /// `t` around its mean and scale by `1/M`.
    pub fn apply_right<T: Scalar>(&self, t: &Tensor<T>) -> Result<Tensor<T>> {
        if t.rank() != 2 || t.cols() != self.m {
            return Err(CoreError::Dimension(format!(
                "CenteringMatrix({}): cannot right-apply to {:?}",
                self.m,
                t.shape()
            )));
        }
        let (d, m) = (t.rows(), t.cols());
        let inv_m = T::from_f64(1.0 / m as f64);
        let mut out = Tensor::<T>::zeros(&[d, m]);
        for i in 0..d {
            let row = &t.data()[i * m..(i + 1) * m];
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean *= inv_m;
            let orow = &mut out.data_mut()[i * m..(i + 1) * m];
            for (o, &v) in orow.iter_mut().zip(row) {
                *o = (v - mean) * inv_m;
            }
        }
        Ok(out)
    }
}

/// Gradients produced by a layer's backward pass.
#[derive(Clone, Debug)]
pub struct LayerGrad<T> {
    /// Gradient with respect to the layer input.
    pub wrt_input: Tensor<T>,
    /// Gradient with respect to the layer's parameters, when it has any.
    pub wrt_params: Option<Tensor<T>>,
}

// --- CovPool ---

/// Covariance pooling: `C = T I_bar T^T + ridge I` for a `d x M` feature
/// matrix `T`, with `ridge = 1e-6 trace(T I_bar T^T) / d` guarding rank
/// deficiency. The output is PSD by construction.
pub fn covpool_forward<T: Scalar>(t: &Tensor<T>) -> Result<SpdMatrix<T>> {
    if t.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "covpool: expected d x M features, got {:?}",
            t.shape()
        )));
    }
    if t.cols() < 2 {
        return Err(CoreError::Dimension(format!(
            "covpool: needs at least 2 observations to form a covariance, got {}",
            t.cols()
        )));
    }
    t.check_finite("covpool input")?;
    let d = t.rows();
    let t64 = t.cast::<f64>();
    let centered = centered_rows(&t64);
    // C0 = (1/M) centered * centered^T; `centered` already carries one 1/M.
    let m = t.cols() as f64;
    let mut c = matmul_ex(&centered, false, &centered, true);
    for v in c.data_mut() {
        *v *= m;
    }
    let c = sym_part(&c)?;
    let ridge = COVPOOL_RIDGE_FACTOR * c.trace() / d as f64;
    let mut c = c;
    for i in 0..d {
        let v = c.get(i, i) + ridge;
        c.set(i, i, v);
    }
    Ok(SpdMatrix::new(c.cast::<T>())?)
}

/// Backward pass of CovPool.
///
/// For upstream gradient `G` (wrt `C`), the input gradient is
/// `2 sym(G') T I_bar` with `G' = sym(G) + (1e-6 / d) trace(G) I` carrying
/// the ridge's trace sensitivity.
pub fn covpool_backward<T: Scalar>(t: &Tensor<T>, grad_c: &Tensor<T>) -> Result<LayerGrad<T>> {
    if t.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "covpool backward: expected d x M features, got {:?}",
            t.shape()
        )));
    }
    if t.cols() < 2 {
        return Err(CoreError::Dimension(format!(
            "covpool backward: needs at least 2 observations, got {}",
            t.cols()
        )));
    }
    let d = t.rows();
    if grad_c.rank() != 2 || grad_c.rows() != d || grad_c.cols() != d {
        return Err(CoreError::Dimension(format!(
            "covpool backward: gradient shape {:?} does not match d = {d}",
            grad_c.shape()
        )));
    }
    let t64 = t.cast::<f64>();
    let g = sym_part(&grad_c.cast::<f64>())?;
    let trace_term = COVPOOL_RIDGE_FACTOR * g.trace() / d as f64;
    let mut g = g;
    for i in 0..d {
        let v = g.get(i, i) + trace_term;
        g.set(i, i, v);
    }
    // centered = T I_bar, so wrt_input = 2 G (T I_bar).
    let centered = centered_rows(&t64);
    let mut wrt = g.matmul(&centered);
    for v in wrt.data_mut() {
        *v *= 2.0;
    }
    Ok(LayerGrad {
        wrt_input: wrt.cast::<T>(),
        wrt_params: None,
    })
}

/// `t * I_bar`: rows centered and scaled by `1/M`.
fn centered_rows(t: &Tensor<f64>) -> Tensor<f64> {
    CenteringMatrix::new(t.cols())
        .expect("cols >= 1 by tensor invariant")
        .apply_right(t)
        .expect("shape agreement is structural here")
}

// --- BiMap ---

/// Tolerance on `||W W^T - I||_F` for the orthonormal-rows precondition,
/// scaled to the storage precision.
fn orthonormality_tol<T: Scalar>() -> f64 {
    if T::DTYPE == "f32" {
        1e-5
    } else {
        1e-8
    }
}

fn check_bimap_dims<T: Scalar>(x: &SpdMatrix<T>, w: &Tensor<T>) -> Result<()> {
    if w.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "bimap: weight must be a matrix, got {:?}",
            w.shape()
        )));
    }
    let (dk, dprev) = (w.rows(), w.cols());
    if dprev != x.dim() {
        return Err(CoreError::Dimension(format!(
            "bimap: weight cols {dprev} != input dim {}",
            x.dim()
        )));
    }
    if dk >= dprev {
        return Err(CoreError::Dimension(format!(
            "bimap: output dim {dk} must be strictly smaller than input dim {dprev}"
        )));
    }
    let w64 = w.cast::<f64>();
    let gram = w64.matmul_nt(&w64);
    let mut drift = 0.0;
    for i in 0..dk {
        for j in 0..dk {
            let target = if i == j { 1.0 } else { 0.0 };
            let e = gram.get(i, j) - target;
            drift += e * e;
        }
    }
    let drift = drift.sqrt();
    let tol = orthonormality_tol::<T>();
    if drift > tol {
        return Err(CoreError::Numeric(format!(
            "bimap: weight rows are not orthonormal (||W W^T - I||_F = {drift:.3e} > {tol:.0e})"
        )));
    }
    Ok(())
}

/// Bilinear mapping `X_k = W X W^T` with row-orthonormal `W` of shape
/// `d_k x d_{k-1}`, `d_k < d_{k-1}`. Congruence preserves symmetry and
/// positive (semi-)definiteness.
pub fn bimap_forward<T: Scalar>(x: &SpdMatrix<T>, w: &Tensor<T>) -> Result<SpdMatrix<T>> {
    check_bimap_dims(x, w)?;
    let w64 = w.cast::<f64>();
    let x64 = x.values().cast::<f64>();
    let wx = w64.matmul(&x64);
    let y = sym_part(&wx.matmul_nt(&w64))?;
    Ok(SpdMatrix::new(y.cast::<T>())?)
}

/// Backward pass of BiMap: for upstream `G` (wrt `W X W^T`),
/// `dL/dX = W^T sym(G) W` and the Euclidean weight gradient is
/// `dL/dW = 2 sym(G) W X`. Projection of the weight gradient onto the
/// Stiefel tangent space is the optimizer's job, not this layer's.
pub fn bimap_backward<T: Scalar>(
    x: &SpdMatrix<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    check_bimap_dims(x, w)?;
    let dk = w.rows();
    if grad_out.rank() != 2 || grad_out.rows() != dk || grad_out.cols() != dk {
        return Err(CoreError::Dimension(format!(
            "bimap backward: gradient shape {:?} does not match output dim {dk}",
            grad_out.shape()
        )));
    }
    let w64 = w.cast::<f64>();
    let x64 = x.values().cast::<f64>();
    let g = sym_part(&grad_out.cast::<f64>())?;
    let wrt_input = sym_part(&w64.matmul_tn(&g.matmul(&w64)))?;
    // 2 G W X
    let gw = g.matmul(&w64);
    let mut wrt_w = gw.matmul(&x64);
    for v in wrt_w.data_mut() {
        *v *= 2.0;
    }
    Ok(LayerGrad {
        wrt_input: wrt_input.cast::<T>(),
        wrt_params: Some(wrt_w.cast::<T>()),
    })
}

// --- Spectral layers (ReEig, LogEig) ---

/// Shared backward for layers of the form `Y = U diag(g(s)) U^T`.
fn spectral_backward<T: Scalar>(
    eig: &EigResult<f64>,
    grad_out: &Tensor<T>,
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
) -> Result<Tensor<T>> {
    let d = eig.dim();
    if grad_out.rank() != 2 || grad_out.rows() != d || grad_out.cols() != d {
        return Err(CoreError::Dimension(format!(
            "spectral backward: gradient shape {:?} does not match dim {d}",
            grad_out.shape()
        )));
    }
    let s = sym_part(&grad_out.cast::<f64>())?;
    let u = &eig.vectors;
    // B = U^T sym(G) U
    let b = u.matmul_tn(&s.matmul(u));
    let mut inner = Tensor::<f64>::zeros(&[d, d]);
    for i in 0..d {
        let si = eig.values[i];
        for j in 0..d {
            let sj = eig.values[j];
            let w = if i == j {
                dg(si)
            } else {
                let gap = (si - sj).abs();
                if gap <= EIGENGAP_FALLBACK_TOL * si.abs().max(sj.abs()).max(1.0) {
                    dg(0.5 * (si + sj))
                } else {
                    (g(si) - g(sj)) / (si - sj)
                }
            };
            inner.set(i, j, w * b.get(i, j));
        }
    }
    let out = sym_part(&u.matmul(&inner.matmul_nt(u)))?;
    Ok(out.cast::<T>())
}

/// Eigenvalue rectification `Y = U diag(max(eps, s)) U^T`.
///
/// The output spectrum is bounded below by `eps`, making the matrix safely
/// definite for the logarithm downstream.
pub fn reeig_forward<T: Scalar>(x: &SpdMatrix<T>, eps: f64) -> Result<SpdMatrix<T>> {
    if !(eps > 0.0) {
        return Err(CoreError::Config(format!(
            "reeig: eps must be positive, got {eps}"
        )));
    }
    let e = x.eig()?;
    let y = e.reconstruct_with(|s| s.max(eps));
    let clamped = EigResult {
        values: e.values.iter().map(|&s| s.max(eps)).collect(),
        vectors: e.vectors.clone(),
    };
    Ok(SpdMatrix::from_parts(y.cast::<T>(), clamped))
}

/// Backward pass of ReEig. Eigenvalues at the clamp boundary (`s = eps`)
/// pass gradient through, matching the forward's `max(eps, s)` choosing the
/// input branch there.
pub fn reeig_backward<T: Scalar>(
    x: &SpdMatrix<T>,
    eps: f64,
    grad_out: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    if !(eps > 0.0) {
        return Err(CoreError::Config(format!(
            "reeig: eps must be positive, got {eps}"
        )));
    }
    let e = x.eig()?;
    let wrt_input = spectral_backward(
        e,
        grad_out,
        |s| s.max(eps),
        |s| if s >= eps { 1.0 } else { 0.0 },
    )?;
    Ok(LayerGrad {
        wrt_input,
        wrt_params: None,
    })
}

/// Matrix logarithm `Y = U diag(ln s) U^T`, mapping the SPD cone to the
/// (flat) space of symmetric matrices. Errs if any eigenvalue is at or
/// below the domain floor.
pub fn logeig_forward<T: Scalar>(x: &SpdMatrix<T>) -> Result<Tensor<T>> {
    let e = x.eig()?;
    let min = *e.values.last().expect("dim >= 1");
    if min <= LOGEIG_DOMAIN_FLOOR {
        return Err(CoreError::Numeric(format!(
            "logeig: eigenvalue {min:.3e} at or below domain floor {LOGEIG_DOMAIN_FLOOR:.0e}"
        )));
    }
    Ok(e.reconstruct_with(|s| s.ln()).cast::<T>())
}

/// Backward pass of LogEig.
pub fn logeig_backward<T: Scalar>(x: &SpdMatrix<T>, grad_out: &Tensor<T>) -> Result<LayerGrad<T>> {
    let e = x.eig()?;
    let min = *e.values.last().expect("dim >= 1");
    if min <= LOGEIG_DOMAIN_FLOOR {
        return Err(CoreError::Numeric(format!(
            "logeig backward: eigenvalue {min:.3e} at or below domain floor {LOGEIG_DOMAIN_FLOOR:.0e}"
        )));
    }
    let wrt_input = spectral_backward(e, grad_out, |s| s.ln(), |s| 1.0 / s)?;
    Ok(LayerGrad {
        wrt_input,
        wrt_params: None,
    })
}

// --- Half-vectorization ---

/// Length of the half-vectorization of a `d x d` symmetric matrix.
pub fn vectorized_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Half-vectorization of a symmetric matrix: upper triangle in row-major
/// order, off-diagonal entries scaled by sqrt(2) so the Euclidean dot
/// product of two vectorizations equals the Frobenius inner product of the
/// matrices.
pub fn spd_vectorize<T: Scalar>(y: &Tensor<T>) -> Result<Tensor<T>> {
    if y.rank() != 2 || y.shape()[0] != y.shape()[1] {
        return Err(CoreError::Dimension(format!(
            "spd_vectorize: expected square matrix, got {:?}",
            y.shape()
        )));
    }
    let d = y.shape()[0];
    let sqrt2 = T::from_f64(std::f64::consts::SQRT_2);
    let mut out = Vec::with_capacity(vectorized_len(d));
    for i in 0..d {
        for j in i..d {
            let v = y.get(i, j);
            out.push(if i == j { v } else { v * sqrt2 });
        }
    }
    Tensor::from_vec(&[out.len()], out)
}

/// Backward pass of [`spd_vectorize`]: spreads the vector gradient back to
/// a symmetric matrix gradient.
pub fn spd_vectorize_backward<T: Scalar>(grad_v: &Tensor<T>, d: usize) -> Result<Tensor<T>> {
    if grad_v.rank() != 1 || grad_v.len() != vectorized_len(d) {
        return Err(CoreError::Dimension(format!(
            "spd_vectorize backward: gradient shape {:?} does not match d = {d}",
            grad_v.shape()
        )));
    }
    let inv_sqrt2 = T::from_f64(1.0 / std::f64::consts::SQRT_2);
    let mut out = Tensor::<T>::zeros(&[d, d]);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let g = grad_v.data()[k];
            if i == j {
                out.set(i, i, g);
            } else {
                // the pair (i,j),(j,i) shares one vector entry scaled by
                // sqrt(2), so each side receives g / sqrt(2)
                let v = g * inv_sqrt2;
                out.set(i, j, v);
                out.set(j, i, v);
            }
            k += 1;
        }
    }
    Ok(out)
}
