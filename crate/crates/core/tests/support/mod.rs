//! Shared oracles for integration tests. Everything here is written
//! independently of the library's production algorithms so the two can
//! disagree when one of them is wrong.

use rand::Rng;
use spdnet_core::rng::{randn, stream_rng};
use spdnet_core::Tensor;

/// Cyclic Jacobi eigensolver. Slow and simple; used as the reference for
/// the production tridiagonal QL solver. Returns eigenvalues descending and
/// the matching eigenvector columns.
pub fn jacobi_eig(x: &Tensor<f64>) -> (Vec<f64>, Tensor<f64>) {
    let n = x.rows();
    assert_eq!(n, x.cols());
    let mut a: Vec<f64> = x.data().to_vec();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().fold(0.0f64, |m, &t| m.max(t.abs())).max(1e-300);
    for _sweep in 0..200 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-14 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap());
    let values: Vec<f64> = idx.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0f64; n * n];
    for (col, &src) in idx.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + col] = v[r * n + src];
        }
    }
    (values, Tensor::from_vec(&[n, n], vectors).unwrap())
}

/// Random dense matrix with standard normal entries.
pub fn random_matrix(rows: usize, cols: usize, seed: u64, stream: u64) -> Tensor<f64> {
    let mut rng = stream_rng(seed, stream);
    let data: Vec<f64> = (0..rows * cols).map(|_| randn(&mut rng)).collect();
    Tensor::from_vec(&[rows, cols], data).unwrap()
}

/// Random symmetric matrix.
pub fn random_symmetric(d: usize, seed: u64, stream: u64) -> Tensor<f64> {
    let m = random_matrix(d, d, seed, stream);
    spdnet_core::sym_part(&m).unwrap()
}

/// Random orthogonal matrix: Gram-Schmidt over a seeded Gaussian matrix.
pub fn random_orthogonal(d: usize, seed: u64, stream: u64) -> Tensor<f64> {
    let g = random_matrix(d, d, seed, stream);
    let mut q = g.data().to_vec();
    for j in 0..d {
        for i in 0..j {
            let mut dot = 0.0;
            for r in 0..d {
                dot += q[r * d + i] * q[r * d + j];
            }
            for r in 0..d {
                q[r * d + j] -= dot * q[r * d + i];
            }
        }
        let mut norm = 0.0;
        for r in 0..d {
            norm += q[r * d + j] * q[r * d + j];
        }
        norm = norm.sqrt();
        assert!(norm > 1e-10, "degenerate random basis");
        for r in 0..d {
            q[r * d + j] /= norm;
        }
    }
    Tensor::from_vec(&[d, d], q).unwrap()
}

/// Symmetric matrix with a prescribed spectrum: `Q diag(spectrum) Q^T`.
pub fn symmetric_with_spectrum(spectrum: &[f64], seed: u64, stream: u64) -> Tensor<f64> {
    let d = spectrum.len();
    let q = random_orthogonal(d, seed, stream);
    let lam = Tensor::from_diag(spectrum);
    let m = q.matmul(&lam).matmul_nt(&q);
    spdnet_core::sym_part(&m).unwrap()
}

/// Random SPD matrix with eigenvalue gaps of at least `min_gap`, suitable
/// for finite-difference checks through eigendecompositions.
pub fn random_spd_gapped(d: usize, min_gap: f64, seed: u64, stream: u64) -> Tensor<f64> {
    let mut rng = stream_rng(seed, stream.wrapping_add(7_777));
    let mut spectrum = Vec::with_capacity(d);
    let mut lam = 0.5 + rng.gen::<f64>() * 0.3;
    for _ in 0..d {
        spectrum.push(lam);
        lam += min_gap + rng.gen::<f64>() * 0.75;
    }
    spectrum.reverse();
    symmetric_with_spectrum(&spectrum, seed, stream)
}

#[allow(dead_code)]
pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
}

/// Packs the upper triangle (row-major, diagonal included) of a symmetric
/// matrix into a flat parameter vector.
#[allow(dead_code)]
pub fn upper_triangle(x: &Tensor<f64>) -> Vec<f64> {
    let d = x.rows();
    let mut theta = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            theta.push(x.get(i, j));
        }
    }
    theta
}

/// Rebuilds the symmetric matrix described by an upper-triangle parameter
/// vector.
#[allow(dead_code)]
pub fn from_upper_triangle(theta: &[f64], d: usize) -> Tensor<f64> {
    let mut x = Tensor::<f64>::zeros(&[d, d]);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            x.set(i, j, theta[k]);
            x.set(j, i, theta[k]);
            k += 1;
        }
    }
    x
}

/// Converts a full symmetric-matrix gradient into the gradient with respect
/// to the upper-triangle parameters: diagonal entries pass through, each
/// off-diagonal parameter feeds two matrix entries so its gradient doubles.
#[allow(dead_code)]
pub fn sym_grad_to_theta(g: &Tensor<f64>) -> Vec<f64> {
    let d = g.rows();
    let mut theta = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            let v = g.get(i, j);
            theta.push(if i == j { v } else { 2.0 * v });
        }
    }
    theta
}
