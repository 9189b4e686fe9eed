//! Symmetric eigendecomposition.
//!
//! Householder tridiagonalization followed by implicit-shift QL iteration,
//! the classic EISPACK `tred2`/`tql2` pair. The solver is self-contained and
//! fully deterministic: identical input bits produce identical output bits,
//! which downstream layers rely on for reproducible training runs.
//!
//! Output convention:
//! - eigenvalues sorted descending;
//! - column `j` of `vectors` is the eigenvector for `values[j]`;
//! - each eigenvector is scaled so its largest-magnitude entry (first such
//!   entry on ties) is non-negative;
//! - exactly equal eigenvalues are ordered by descending lexicographic
//!   comparison of their sign-fixed eigenvectors.
//!
//! The iteration always runs in f64; f32 inputs are widened on entry and
//! results rounded on exit.

use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};

/// Eigendecomposition of a symmetric matrix: `x = U diag(values) U^T`.
#[derive(Clone, Debug)]
pub struct EigResult<T> {
    /// Eigenvalues, descending.
    pub values: Vec<T>,
    /// d x d orthogonal matrix; column `j` pairs with `values[j]`.
    pub vectors: Tensor<T>,
}

impl<T: Scalar> EigResult<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `U diag(f(lambda)) U^T`, exactly symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Tensor<T> {
        let d = self.dim();
        let u = &self.vectors;
        // scaled = U diag(f(lambda))
        let mut scaled = Tensor::<T>::zeros(&[d, d]);
        for j in 0..d {
            let s = T::from_f64(f(self.values[j].as_f64()));
            for i in 0..d {
                scaled.set(i, j, u.get(i, j) * s);
            }
        }
        let mut out = scaled.matmul_nt(u);
        // enforce exact symmetry lost to floating-point products
        for i in 0..d {
            for j in (i + 1)..d {
                let v = (out.get(i, j) + out.get(j, i)) * T::from_f64(0.5);
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    /// `U diag(lambda) U^T`.
    pub fn reconstruct(&self) -> Tensor<T> {
        self.reconstruct_with(|x| x)
    }
}

/// Maximum asymmetry tolerated before the input is rejected rather than
/// silently symmetrized, relative to the largest entry magnitude.
const ASYMMETRY_TOL: f64 = 1e-8;

/// Orthogonality drift above which a Gram-Schmidt repair pass runs.
const ORTHO_DRIFT_TOL: f64 = 1e-12;

const MAX_QL_ITER: usize = 50;

/// Eigendecomposition of a symmetric matrix.
///
/// Inputs asymmetric by more than `1e-8 * max(1, max|x_ij|)` are rejected;
/// smaller asymmetry is averaged away before factorization.
pub fn sym_eig<T: Scalar>(x: &Tensor<T>) -> Result<EigResult<T>> {
    if x.rank() != 2 || x.shape()[0] != x.shape()[1] {
        return Err(CoreError::Dimension(format!(
            "sym_eig needs a square matrix, got {:?}",
            x.shape()
        )));
    }
    x.check_finite("sym_eig input")?;
    let d = x.shape()[0];

    let mut a = vec![0.0f64; d * d];
    let mut max_abs = 0.0f64;
    for v in x.data() {
        max_abs = max_abs.max(v.as_f64().abs());
    }
    let asym_tol = ASYMMETRY_TOL * max_abs.max(1.0);
    for i in 0..d {
        for j in 0..d {
            let xij = x.get(i, j).as_f64();
            let xji = x.get(j, i).as_f64();
            if (xij - xji).abs() > asym_tol {
                return Err(CoreError::Dimension(format!(
                    "sym_eig: input asymmetric at ({i},{j}): {xij} vs {xji}"
                )));
            }
            a[i * d + j] = 0.5 * (xij + xji);
        }
    }

    let mut diag = vec![0.0f64; d];
    let mut off = vec![0.0f64; d];
    tred2(&mut a, d, &mut diag, &mut off);
    tql2(&mut diag, &mut off, &mut a, d)?;

    // Sort descending; break exact eigenvalue ties by descending
    // lexicographic order of the sign-fixed eigenvectors.
    for j in 0..d {
        fix_column_sign(&mut a, d, j);
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&p, &q| {
        diag[q]
            .partial_cmp(&diag[p])
            .unwrap()
            .then_with(|| cmp_columns_lex(&a, d, q, p))
    });

    let mut values = Vec::with_capacity(d);
    let mut vectors = vec![0.0f64; d * d];
    for (col, &src) in order.iter().enumerate() {
        values.push(diag[src]);
        for r in 0..d {
            vectors[r * d + col] = a[r * d + src];
        }
    }

    if ortho_drift(&vectors, d) > ORTHO_DRIFT_TOL {
        gram_schmidt_columns(&mut vectors, d)?;
        for j in 0..d {
            fix_column_sign(&mut vectors, d, j);
        }
    }

    Ok(EigResult {
        values: values.into_iter().map(T::from_f64).collect(),
        vectors: Tensor::from_vec(
            &[d, d],
            vectors.into_iter().map(T::from_f64).collect(),
        )?,
    })
}

/// Householder reduction of symmetric `a` (row-major d x d) to tridiagonal
/// form; on exit `a` holds the accumulated orthogonal transform, `diag` the
/// diagonal, and `off[1..]` the off-diagonal.
fn tred2(a: &mut [f64], n: usize, diag: &mut [f64], off: &mut [f64]) {
    if n == 1 {
        diag[0] = a[0];
        off[0] = 0.0;
        a[0] = 1.0;
        return;
    }
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[i * n + k].abs();
            }
            if scale == 0.0 {
                off[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                off[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    a[j * n + i] = a[i * n + j] / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g_acc += a[k * n + j] * a[i * n + k];
                    }
                    off[j] = g_acc / h;
                    f_acc += off[j] * a[i * n + j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a[i * n + j];
                    let g = off[j] - hh * f;
                    off[j] = g;
                    for k in 0..=j {
                        a[j * n + k] -= f * off[k] + g * a[i * n + k];
                    }
                }
            }
        } else {
            off[i] = a[i * n + l];
        }
        diag[i] = h;
    }
    diag[0] = 0.0;
    off[0] = 0.0;
    for i in 0..n {
        if diag[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += a[i * n + k] * a[k * n + j];
                }
                for k in 0..i {
                    a[k * n + j] -= g * a[k * n + i];
                }
            }
        }
        diag[i] = a[i * n + i];
        a[i * n + i] = 1.0;
        for j in 0..i {
            a[j * n + i] = 0.0;
            a[i * n + j] = 0.0;
        }
    }
}

/// Implicit-shift QL iteration on the tridiagonal (diag, off), rotations
/// accumulated into the columns of `z`.
fn tql2(diag: &mut [f64], off: &mut [f64], z: &mut [f64], n: usize) -> Result<()> {
    if n == 1 {
        return Ok(());
    }
    for i in 1..n {
        off[i - 1] = off[i];
    }
    off[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITER {
                return Err(CoreError::Numeric(format!(
                    "sym_eig: QL iteration failed to converge at index {l} after {MAX_QL_ITER} sweeps"
                )));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            let signed_r = if g >= 0.0 { r.abs() } else { -r.abs() };
            g = diag[m] - diag[l] + off[l] / (g + signed_r);
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    // negligible rotation: deflate and restart the sweep
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

/// Scales column `j` so its largest-magnitude entry (first on ties) is
/// non-negative.
fn fix_column_sign(z: &mut [f64], n: usize, j: usize) {
    let mut best = 0usize;
    let mut best_abs = z[j].abs();
    for r in 1..n {
        let v = z[r * n + j].abs();
        if v > best_abs {
            best_abs = v;
            best = r;
        }
    }
    if z[best * n + j] < 0.0 {
        for r in 0..n {
            z[r * n + j] = -z[r * n + j];
        }
    }
}

fn cmp_columns_lex(z: &[f64], n: usize, a: usize, b: usize) -> std::cmp::Ordering {
    for r in 0..n {
        let ord = z[r * n + a].partial_cmp(&z[r * n + b]).unwrap();
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// Frobenius norm of `Z^T Z - I` over columns of `z`.
fn ortho_drift(z: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for a in 0..n {
        for b in a..n {
            let mut dot = 0.0;
            for r in 0..n {
                dot += z[r * n + a] * z[r * n + b];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            let d = dot - target;
            acc += if a == b { d * d } else { 2.0 * d * d };
        }
    }
    acc.sqrt()
}

/// One modified Gram-Schmidt pass over columns, in order.
fn gram_schmidt_columns(z: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        for i in 0..j {
            let mut dot = 0.0;
            for r in 0..n {
                dot += z[r * n + i] * z[r * n + j];
            }
            for r in 0..n {
                z[r * n + j] -= dot * z[r * n + i];
            }
        }
        let mut norm = 0.0;
        for r in 0..n {
            norm += z[r * n + j] * z[r * n + j];
        }
        norm = norm.sqrt();
        if norm < 1e-12 {
            return Err(CoreError::Numeric(format!(
                "sym_eig: eigenvector basis collapsed during re-orthonormalization (column {j})"
            )));
        }
        for r in 0..n {
            z[r * n + j] /= norm;
        }
    }
    Ok(())
}
