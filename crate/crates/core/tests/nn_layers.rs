//! Finite-difference oracles for the convolutional building blocks.
//!
//! Each backward pass is checked against central differences of its
//! forward map on miniature f64 problems, for inputs and for every
//! learnable parameter. Batch norm runs in training mode, where the batch
//! statistics couple all samples; the FD reference naturally captures that
//! coupling because it re-runs the whole forward.

mod support;

use spdnet_core::nn::{
    bilinear_resize, bilinear_resize_backward, relu_backward, relu_forward, BatchNorm2d, Conv2d,
    ConvCfg, Linear, MaxPool2d,
};
use spdnet_core::numdiff::{central_diff_grad, compare_grads, FdConfig};
use spdnet_core::rng::{randn, stream_rng};
use spdnet_core::{frobenius_inner, Tensor};
use support::random_matrix;

const TRIALS: u64 = 20;

fn cfg() -> FdConfig {
    FdConfig::default()
}

fn random_tensor(shape: &[usize], seed: u64, stream: u64) -> Tensor<f64> {
    let mut rng = stream_rng(seed, stream);
    let len: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| randn(&mut rng)).collect()).unwrap()
}

// batch-norm state mutates during forward (running stats), so checks that
// re-run the forward clone a fresh layer each time

#[test]
fn conv_gradients_match_finite_differences() {
    for seed in 0..TRIALS {
        let conv_cfg = ConvCfg {
            in_ch: 2,
            out_ch: 3,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let mut layer = Conv2d::<f64>::new(conv_cfg, 500 + seed, 0).unwrap();
        let x = random_tensor(&[2, 2, 5, 4], 500 + seed, 1);
        let (y, cache) = layer.forward(&x).unwrap();
        let r = random_tensor(y.shape(), 500 + seed, 2);

        layer.zero_grads();
        let grad_in = layer.backward(&cache, &r).unwrap();

        // input gradient
        let mut flat = x.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let xx = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            let (y, _) = layer.forward(&xx).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(grad_in.data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: conv input rel {}", cmp.rel_error);

        // weight gradient
        let w0 = layer.weight().value().clone();
        let mut flat = w0.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let mut probe = layer.clone();
            probe
                .weight_mut()
                .restore(Tensor::from_vec(w0.shape(), v.to_vec()).unwrap())
                .unwrap();
            let (y, _) = probe.forward(&x).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(layer.grad_weight().data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: conv weight rel {}", cmp.rel_error);

        // bias gradient
        let b0 = layer.bias().value().clone();
        let mut flat = b0.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let mut probe = layer.clone();
            probe
                .bias_mut()
                .restore(Tensor::from_vec(b0.shape(), v.to_vec()).unwrap())
                .unwrap();
            let (y, _) = probe.forward(&x).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(layer.grad_bias().data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: conv bias rel {}", cmp.rel_error);
    }
}

#[test]
fn batchnorm_gradients_match_finite_differences() {
    for seed in 0..TRIALS {
        let x = random_tensor(&[3, 2, 2, 3], 520 + seed, 0);
        let r = random_tensor(&[3, 2, 2, 3], 520 + seed, 1);
        let gamma = random_tensor(&[2], 520 + seed, 2);
        let beta = random_tensor(&[2], 520 + seed, 3);

        let fresh = || -> BatchNorm2d<f64> {
            let mut bn = BatchNorm2d::new(2).unwrap();
            bn.gamma_mut().restore(gamma.clone()).unwrap();
            bn.beta_mut().restore(beta.clone()).unwrap();
            bn
        };

        let mut bn = fresh();
        let (_, cache) = bn.forward_train(&x).unwrap();
        bn.zero_grads();
        let grad_in = bn.backward(&cache, &r).unwrap();

        let mut flat = x.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let xx = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            let (y, _) = fresh().forward_train(&xx).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(grad_in.data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: bn input rel {}", cmp.rel_error);

        let mut flat = gamma.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let mut probe = fresh();
            probe
                .gamma_mut()
                .restore(Tensor::from_vec(&[2], v.to_vec()).unwrap())
                .unwrap();
            let (y, _) = probe.forward_train(&x).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(bn.grad_gamma().data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: bn gamma rel {}", cmp.rel_error);

        let mut flat = beta.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let mut probe = fresh();
            probe
                .beta_mut()
                .restore(Tensor::from_vec(&[2], v.to_vec()).unwrap())
                .unwrap();
            let (y, _) = probe.forward_train(&x).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(bn.grad_beta().data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: bn beta rel {}", cmp.rel_error);
    }
}

#[test]
fn linear_gradients_match_finite_differences() {
    for seed in 0..TRIALS {
        let mut layer = Linear::<f64>::new(5, 3, 540 + seed, 0).unwrap();
        let x = random_matrix(4, 5, 540 + seed, 1);
        let (y, cache) = layer.forward(&x).unwrap();
        let r = random_tensor(y.shape(), 540 + seed, 2);

        layer.zero_grads();
        let grad_in = layer.backward(&cache, &r).unwrap();

        let mut flat = x.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let xx = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            let (y, _) = layer.forward(&xx).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(grad_in.data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: linear input rel {}", cmp.rel_error);

        let w0 = layer.weight().value().clone();
        let mut flat = w0.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let mut probe = layer.clone();
            probe
                .weight_mut()
                .restore(Tensor::from_vec(w0.shape(), v.to_vec()).unwrap())
                .unwrap();
            let (y, _) = probe.forward(&x).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(layer.grad_weight().data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: linear weight rel {}", cmp.rel_error);

        let b0 = layer.bias().value().clone();
        let mut flat = b0.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let mut probe = layer.clone();
            probe
                .bias_mut()
                .restore(Tensor::from_vec(b0.shape(), v.to_vec()).unwrap())
                .unwrap();
            let (y, _) = probe.forward(&x).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(layer.grad_bias().data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: linear bias rel {}", cmp.rel_error);
    }
}

#[test]
fn relu_gradient_matches_finite_differences_off_the_kink() {
    for seed in 0..TRIALS {
        // push values away from zero so the finite difference stays on one branch
        let mut x = random_tensor(&[2, 1, 3, 4], 560 + seed, 0);
        for v in x.data_mut() {
            if v.abs() < 1e-3 {
                *v += if *v >= 0.0 { 1e-3 } else { -1e-3 };
            }
        }
        let (y, cache) = relu_forward(&x);
        let r = random_tensor(y.shape(), 560 + seed, 1);
        let grad_in = relu_backward(&cache, &r).unwrap();

        let mut flat = x.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let xx = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            let (y, _) = relu_forward(&xx);
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(grad_in.data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: relu rel {}", cmp.rel_error);
    }
}

#[test]
fn maxpool_gradient_matches_finite_differences() {
    for seed in 0..TRIALS {
        let pool = MaxPool2d::new(2, 2, 2).unwrap();
        let x = random_tensor(&[2, 2, 4, 6], 580 + seed, 0);
        let (y, cache) = pool.forward(&x).unwrap();
        let r = random_tensor(y.shape(), 580 + seed, 1);
        let grad_in = pool.backward(&cache, &r).unwrap();

        let mut flat = x.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let xx = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            let (y, _) = pool.forward(&xx).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(grad_in.data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: maxpool rel {}", cmp.rel_error);
    }
}

#[test]
fn resize_gradient_matches_finite_differences() {
    for seed in 0..TRIALS {
        let x = random_tensor(&[2, 3, 5], 600 + seed, 0);
        let y = bilinear_resize(&x, 4, 8).unwrap();
        let r = random_tensor(y.shape(), 600 + seed, 1);
        let grad_in = bilinear_resize_backward(&r, 3, 5).unwrap();

        let mut flat = x.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let xx = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            let y = bilinear_resize(&xx, 4, 8).unwrap();
            frobenius_inner(&y, &r).unwrap()
        });
        let cmp = compare_grads(grad_in.data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: resize rel {}", cmp.rel_error);
    }
}

#[test]
fn conv_bn_relu_pool_linear_chain_matches_finite_differences() {
    // a miniature CNN head differentiated end to end
    for seed in 0..5u64 {
        let conv_cfg = ConvCfg {
            in_ch: 1,
            out_ch: 2,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let conv = Conv2d::<f64>::new(conv_cfg, 620 + seed, 0).unwrap();
        let bn0 = {
            let mut bn = BatchNorm2d::<f64>::new(2).unwrap();
            bn.gamma_mut()
                .restore(random_tensor(&[2], 620 + seed, 1))
                .unwrap();
            bn.beta_mut()
                .restore(random_tensor(&[2], 620 + seed, 2))
                .unwrap();
            bn
        };
        let pool = MaxPool2d::new(2, 2, 2).unwrap();
        let fc = Linear::<f64>::new(2 * 3 * 2, 4, 620 + seed, 3).unwrap();
        let x = random_tensor(&[2, 1, 6, 4], 620 + seed, 4);
        let r = random_tensor(&[2, 4], 620 + seed, 5);

        let run = |x: &Tensor<f64>| -> (f64, Tensor<f64>) {
            let mut conv = conv.clone();
            let mut bn = bn0.clone();
            let mut fc = fc.clone();
            let (y1, c1) = conv.forward(x).unwrap();
            let (y2, c2) = bn.forward_train(&y1).unwrap();
            let (y3, c3) = relu_forward(&y2);
            let (y4, c4) = pool.forward(&y3).unwrap();
            let flat = y4.reshape(&[2, 2 * 3 * 2]).unwrap();
            let (y5, c5) = fc.forward(&flat).unwrap();
            let loss = frobenius_inner(&y5, &r).unwrap();

            conv.zero_grads();
            bn.zero_grads();
            fc.zero_grads();
            let g5 = fc.backward(&c5, &r).unwrap();
            let g4 = g5.reshape(&[2, 2, 3, 2]).unwrap();
            let g3 = pool.backward(&c4, &g4).unwrap();
            let g2 = relu_backward(&c3, &g3).unwrap();
            let g1 = bn.backward(&c2, &g2).unwrap();
            let g0 = conv.backward(&c1, &g1).unwrap();
            (loss, g0)
        };

        let (_, analytic) = run(&x);
        let mut flat = x.data().to_vec();
        let fd = central_diff_grad(&mut flat, cfg().step, |v| {
            let xx = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            run(&xx).0
        });
        let cmp = compare_grads(analytic.data(), &fd, &cfg());
        assert!(cmp.passed, "seed {seed}: chain rel {}", cmp.rel_error);
    }
}
