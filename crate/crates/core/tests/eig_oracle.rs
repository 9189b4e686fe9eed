//! The production eigensolver against an independent cyclic-Jacobi oracle.

mod support;

use spdnet_core::eig::sym_eig;
use spdnet_core::tensor::matmul_ex;
use spdnet_core::Tensor;
use support::*;

fn ortho_drift(u: &Tensor<f64>) -> f64 {
    let gram = u.matmul_tn(u);
    let d = gram.rows();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let t = if i == j { 1.0 } else { 0.0 };
            let e = gram.get(i, j) - t;
            acc += e * e;
        }
    }
    acc.sqrt()
}

#[test]
fn random_symmetric_matches_jacobi_oracle() {
    for trial in 0..20 {
        let d = 1 + (trial % 8);
        let x = random_symmetric(d, 0xE16, trial as u64);
        let e = sym_eig(&x).unwrap();
        let (oracle_vals, _) = jacobi_eig(&x);
        let scale = x.frob_norm().max(1.0);
        for (a, b) in e.values.iter().zip(&oracle_vals) {
            assert!(
                (a - b).abs() <= 1e-11 * scale,
                "trial {trial} d {d}: eigenvalue {a} vs oracle {b}"
            );
        }
        // descending order
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // reconstruction and orthogonality
        let err = e.reconstruct().sub(&x).unwrap().frob_norm();
        assert!(err <= 1e-10 * scale, "trial {trial}: reconstruction {err}");
        assert!(ortho_drift(&e.vectors) <= 1e-10);
    }
}

#[test]
fn clustered_spectrum_eight_by_eight() {
    // Two eigenvalues split by 1e-9 among well-separated ones.
    let spectrum = [9.0, 7.5, 5.0, 3.0, 2.0, 1.0 + 1e-9, 1.0, 0.5];
    let x = symmetric_with_spectrum(&spectrum, 0xC1A5, 3);
    let e = sym_eig(&x).unwrap();
    let (oracle_vals, _) = jacobi_eig(&x);
    let scale = x.frob_norm();
    for (a, b) in e.values.iter().zip(&oracle_vals) {
        assert!(
            (a - b).abs() <= 1e-12 * scale,
            "clustered eigenvalue {a} vs oracle {b}"
        );
    }
    assert!(ortho_drift(&e.vectors) <= 1e-10);
    let err = e.reconstruct().sub(&x).unwrap().frob_norm();
    assert!(err <= 1e-10 * scale);
}

#[test]
fn psd_inputs_have_no_spurious_negative_eigenvalues() {
    for trial in 0..20 {
        let d = 2 + (trial % 6);
        // rank-deficient PSD: B B^T with fewer columns than rows
        let b = random_matrix(d, (d + 1) / 2, 0x95D, trial as u64);
        let x = matmul_ex(&b, false, &b, true);
        let x = spdnet_core::sym_part(&x).unwrap();
        let e = sym_eig(&x).unwrap();
        let floor = -1e-10 * x.frob_norm();
        assert!(
            *e.values.last().unwrap() >= floor,
            "trial {trial}: min eigenvalue {} below {floor}",
            e.values.last().unwrap()
        );
    }
}

#[test]
fn eigenvector_sign_convention_is_stable_under_negation_of_basis() {
    // Reconstructing from the decomposition and re-decomposing must give
    // bit-identical vectors: the sign rule leaves no freedom.
    let x = random_symmetric(6, 0x51F, 11);
    let e1 = sym_eig(&x).unwrap();
    let e2 = sym_eig(&e1.reconstruct()).unwrap();
    for (a, b) in e1.vectors.data().iter().zip(e2.vectors.data()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn f32_path_reconstructs_to_single_precision() {
    let x64 = random_symmetric(16, 0xF32, 0);
    let x32: Tensor<f32> = x64.cast();
    let e = sym_eig(&x32).unwrap();
    let err = e.reconstruct().sub(&x32).unwrap().frob_norm();
    assert!(err <= 1e-5 * x32.frob_norm().max(1.0), "err {err}");
}

#[test]
fn larger_matrix_against_oracle() {
    let x = random_symmetric(32, 0xB16, 1);
    let e = sym_eig(&x).unwrap();
    let (oracle_vals, _) = jacobi_eig(&x);
    let scale = x.frob_norm();
    for (a, b) in e.values.iter().zip(&oracle_vals) {
        assert!((a - b).abs() <= 1e-11 * scale);
    }
    let err = e.reconstruct().sub(&x).unwrap().frob_norm();
    assert!(err <= 1e-10 * scale);
}
