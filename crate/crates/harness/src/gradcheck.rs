//! Gradient verification runner: drives the finite-difference oracles over
//! every layer family and the assembled miniature models, reporting the
//! worst relative error per layer.
//!
//! All checks run in f64 with central differences of step 1e-5. Inputs to
//! the spectral layers are built with an explicit eigenvalue spacing well
//! above the eigengap guard, and the rectification threshold is placed
//! mid-gap, so the finite differences never straddle an eigenvalue
//! crossing or a clamp kink. SPD-matrix inputs are perturbed in symmetric
//! pairs to stay on the symmetric manifold the layers are defined on.

use crate::{HarnessError, Result};
use rand_chacha::ChaCha8Rng;
use spdnet_core::frontend::{ConvStack, ConvStackCfg};
use spdnet_core::models::{cross_entropy, Model, ModelConfig, ModelVariant};
use spdnet_core::nn::{BatchNorm2d, Conv2d, ConvCfg, Linear};
use spdnet_core::numdiff::{compare_grads, FdConfig};
use spdnet_core::rng::{randn, stream_rng};
use spdnet_core::spd::{
    bimap_backward, bimap_forward, covpool_backward, covpool_forward, logeig_backward,
    logeig_forward, reeig_backward, reeig_forward, spd_vectorize, spd_vectorize_backward,
    SpdMatrix,
};
use spdnet_core::stiefel::{stiefel_project, stiefel_retract, StiefelParam};
use spdnet_core::tensor::{frobenius_inner, sym_part, Tensor};

pub const DEFAULT_TRIALS: usize = 20;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Tolerance for the SPD layer family.
pub const SPD_TOL: f64 = 1e-5;
/// Tolerance for assembled models (longer chains accumulate FD noise).
pub const E2E_TOL: f64 = 1e-4;
/// Spectral-layer inputs keep consecutive eigenvalues at least this far
/// apart, and the rectification threshold at least half this far from
/// every eigenvalue.
pub const EIGENGAP_GUARD: f64 = 1e-2;
/// Probes where both gradients are this small are counted but not scored;
/// they sit below central-difference cancellation noise.
const NOISE_FLOOR: f64 = 1e-7;

/// Every layer the default run covers, in run order.
pub const LAYER_NAMES: [&str; 11] = [
    "covpool",
    "bimap",
    "reeig",
    "logeig",
    "vectorize",
    "conv",
    "batchnorm",
    "block",
    "fc",
    "rcnet",
    "srcnet",
];

/// Deliberate fault injection for checking that the checker checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    None,
    /// Flip the sign of the BiMap weight gradient before comparison.
    FlipBimapWeightGrad,
}

#[derive(Clone, Debug)]
pub struct LayerReport {
    pub layer: String,
    pub trials: usize,
    /// Individual gradient comparisons folded into `worst_rel`.
    pub checks: usize,
    pub worst_rel: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub layers: Vec<LayerReport>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| l.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("layer       trials  checks  worst_rel    tol        status\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{:<11} {:>6}  {:>6}  {:<11.3e}  {:<9.0e}  {}\n",
                l.layer,
                l.trials,
                l.checks,
                l.worst_rel,
                l.tol,
                if l.passed { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Runs the suite: all layers, or a single one selected by name.
pub fn run_gradcheck(
    selector: Option<&str>,
    trials: usize,
    tol_override: Option<f64>,
) -> Result<GradReport> {
    if trials == 0 {
        return Err(HarnessError::Config("gradcheck needs at least 1 trial".into()));
    }
    let names: Vec<&str> = match selector {
        Some(name) => {
            if !LAYER_NAMES.contains(&name) {
                return Err(HarnessError::Config(format!(
                    "unknown layer {name:?}; expected one of {LAYER_NAMES:?}"
                )));
            }
            vec![name]
        }
        None => LAYER_NAMES.to_vec(),
    };
    let mut layers = Vec::new();
    for name in names {
        layers.push(check_layer(name, trials, tol_override, Mutation::None)?);
    }
    Ok(GradReport { layers })
}

/// Single-layer check with an optional planted fault; the mutation path is
/// the fixture proving the suite detects a broken backward pass.
pub fn check_layer(
    name: &str,
    trials: usize,
    tol_override: Option<f64>,
    mutation: Mutation,
) -> Result<LayerReport> {
    let (default_tol, f): (f64, fn(usize, Mutation, &mut Worst) -> Result<()>) = match name {
        "covpool" => (SPD_TOL, trial_covpool),
        "bimap" => (SPD_TOL, trial_bimap),
        "reeig" => (SPD_TOL, trial_reeig),
        "logeig" => (SPD_TOL, trial_logeig),
        "vectorize" => (SPD_TOL, trial_vectorize),
        "conv" => (SPD_TOL, trial_conv),
        "batchnorm" => (SPD_TOL, trial_batchnorm),
        "block" => (SPD_TOL, trial_block),
        "fc" => (SPD_TOL, trial_fc),
        "rcnet" => (E2E_TOL, trial_rcnet),
        "srcnet" => (E2E_TOL, trial_srcnet),
        _ => {
            return Err(HarnessError::Config(format!(
                "unknown layer {name:?}; expected one of {LAYER_NAMES:?}"
            )))
        }
    };
    let tol = tol_override.unwrap_or(default_tol);
    let mut worst = Worst::default();
    for trial in 0..trials {
        f(trial, mutation, &mut worst)?;
    }
    Ok(LayerReport {
        layer: name.to_string(),
        trials,
        checks: worst.checks,
        worst_rel: worst.rel,
        tol,
        passed: worst.rel < tol,
    })
}

/// Running maximum of relative errors.
#[derive(Default)]
pub struct Worst {
    rel: f64,
    checks: usize,
}

impl Worst {
    /// Aggregate l2 comparison of two full gradient vectors. A tensor whose
    /// gradient is zero to within central-difference noise on both sides
    /// (a conv bias feeding a batch norm, say) carries no signal and is
    /// counted but not scored; a genuinely wrong zero still fails because
    /// the finite-difference side would be large.
    fn vectors(&mut self, analytic: &[f64], fd: &[f64]) {
        self.checks += analytic.len();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm(analytic) < NOISE_FLOOR && norm(fd) < NOISE_FLOOR {
            return;
        }
        let cmp = compare_grads(
            analytic,
            fd,
            &FdConfig {
                step: FD_STEP,
                rel_tol: 0.0,
                abs_tol: 0.0,
            },
        );
        self.rel = self.rel.max(cmp.rel_error);
    }

    /// Single probe (one entry or one direction), with a noise floor.
    fn scalar(&mut self, analytic: f64, fd: f64) {
        self.checks += 1;
        let scale = analytic.abs().max(fd.abs());
        if scale < NOISE_FLOOR {
            return;
        }
        self.rel = self.rel.max((analytic - fd).abs() / scale);
    }
}

// Seed layout: one block of streams per layer family so trials never share
// draws across drivers.
fn rng_for(family: u64, trial: usize, slot: u64) -> ChaCha8Rng {
    stream_rng(0x6e57 + family, trial as u64 * 16 + slot)
}

fn gaussian(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| randn(rng)).collect()).expect("shape matches data")
}

fn random_sym(d: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    sym_part(&gaussian(&[d, d], rng)).expect("square")
}

/// SPD matrix with eigenvalues spaced at least 2x the eigengap guard,
/// smallest at least 0.15. Returns the matrix and its ascending spectrum.
fn spd_with_gaps(d: usize, family: u64, trial: usize) -> (Tensor<f64>, Vec<f64>) {
    let mut rng = rng_for(family, trial, 0);
    let mut lambdas = Vec::with_capacity(d);
    let mut cur = 0.15 + 0.2 * rand::Rng::gen::<f64>(&mut rng);
    for _ in 0..d {
        lambdas.push(cur);
        cur += 2.0 * EIGENGAP_GUARD + 0.3 * rand::Rng::gen::<f64>(&mut rng);
    }
    for pair in lambdas.windows(2) {
        assert!(pair[1] - pair[0] >= 2.0 * EIGENGAP_GUARD, "spectrum guard");
    }
    let q = StiefelParam::<f64>::random(d, d, 0x6e57 + family, trial as u64 * 16 + 1)
        .expect("square stiefel point")
        .value()
        .clone();
    let lam = Tensor::from_diag(&lambdas);
    let x = sym_part(&q.transpose().matmul(&lam).matmul(&q)).expect("square");
    (x, lambdas)
}

/// Central difference over every entry of `x`, `loss` evaluated on copies.
fn fd_grad_entries(x: &Tensor<f64>, mut loss: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut fd = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut up = x.clone();
        up.data_mut()[i] += FD_STEP;
        let mut dn = x.clone();
        dn.data_mut()[i] -= FD_STEP;
        fd.push((loss(&up) - loss(&dn)) / (2.0 * FD_STEP));
    }
    fd
}

/// Symmetric-pair central differences for a symmetric input: entry (i, j)
/// and (j, i) move together, matching gradients defined on the symmetric
/// manifold. Returns (pair FD, pair analytic) vectors over i <= j.
fn fd_grad_sym_pairs(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut loss: impl FnMut(&Tensor<f64>) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let d = x.rows();
    let mut fd = Vec::new();
    let mut an = Vec::new();
    for i in 0..d {
        for j in i..d {
            let mut up = x.clone();
            let mut dn = x.clone();
            up.set(i, j, up.get(i, j) + FD_STEP);
            dn.set(i, j, dn.get(i, j) - FD_STEP);
            if i != j {
                up.set(j, i, up.get(j, i) + FD_STEP);
                dn.set(j, i, dn.get(j, i) - FD_STEP);
            }
            fd.push((loss(&up) - loss(&dn)) / (2.0 * FD_STEP));
            let a = if i == j {
                analytic.get(i, i)
            } else {
                analytic.get(i, j) + analytic.get(j, i)
            };
            an.push(a);
        }
    }
    (fd, an)
}

fn trial_covpool(trial: usize, _m: Mutation, worst: &mut Worst) -> Result<()> {
    let mut rng = rng_for(0, trial, 0);
    let t = gaussian(&[5, 7], &mut rng);
    let g = random_sym(5, &mut rng);
    let analytic = covpool_backward(&t, &g)?.wrt_input;
    let loss = |tm: &Tensor<f64>| {
        frobenius_inner(covpool_forward(tm).expect("valid features").values(), &g)
            .expect("same shape")
    };
    let fd = fd_grad_entries(&t, loss);
    worst.vectors(analytic.data(), &fd);
    Ok(())
}

fn trial_bimap(trial: usize, mutation: Mutation, worst: &mut Worst) -> Result<()> {
    let (x_t, _) = spd_with_gaps(6, 1, trial);
    let x = SpdMatrix::new(x_t.clone())?;
    let w = StiefelParam::<f64>::random(4, 6, 0x6e57 + 1, trial as u64 * 16 + 2)?
        .value()
        .clone();
    let mut rng = rng_for(1, trial, 3);
    let g = random_sym(4, &mut rng);
    let grads = bimap_backward(&x, &w, &g)?;

    // input gradient, on the symmetric manifold
    let loss_x = |xm: &Tensor<f64>| {
        let xs = SpdMatrix::new(xm.clone()).expect("perturbed input stays SPD");
        frobenius_inner(bimap_forward(&xs, &w).expect("dims fixed").values(), &g)
            .expect("same shape")
    };
    let (fd, an) = fd_grad_sym_pairs(&x_t, &grads.wrt_input, loss_x);
    worst.vectors(&an, &fd);

    // weight gradient, probed along tangent directions of the manifold
    let mut gw = grads.wrt_params.expect("bimap has a weight");
    if mutation == Mutation::FlipBimapWeightGrad {
        gw = gw.scale(-1.0);
    }
    for dir_i in 0..2 {
        let mut drng = rng_for(1, trial, 4 + dir_i);
        let ambient = gaussian(&[4, 6], &mut drng);
        let dir = stiefel_project(&w, &ambient)?;
        let dir = dir.scale(1.0 / dir.frob_norm());
        let loss_w = |wm: &Tensor<f64>| {
            frobenius_inner(bimap_forward(&x, wm).expect("dims fixed").values(), &g)
                .expect("same shape")
        };
        let w_up = stiefel_retract(&w, &dir.scale(FD_STEP))?;
        let w_dn = stiefel_retract(&w, &dir.scale(-FD_STEP))?;
        let fd = (loss_w(&w_up) - loss_w(&w_dn)) / (2.0 * FD_STEP);
        let analytic: f64 = gw.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        worst.scalar(analytic, fd);
    }
    Ok(())
}

fn trial_reeig(trial: usize, _m: Mutation, worst: &mut Worst) -> Result<()> {
    let (x_t, lam) = spd_with_gaps(5, 2, trial);
    // threshold mid-gap: two eigenvalues clamp, three pass through, and
    // every eigenvalue keeps at least the guard's distance from it
    let eps = 0.5 * (lam[1] + lam[2]);
    let x = SpdMatrix::new(x_t.clone())?;
    let mut rng = rng_for(2, trial, 3);
    let g = random_sym(5, &mut rng);
    let analytic = reeig_backward(&x, eps, &g)?.wrt_input;
    let loss = |xm: &Tensor<f64>| {
        let xs = SpdMatrix::new(xm.clone()).expect("perturbed input stays SPD");
        frobenius_inner(reeig_forward(&xs, eps).expect("valid eps").values(), &g)
            .expect("same shape")
    };
    let (fd, an) = fd_grad_sym_pairs(&x_t, &analytic, loss);
    worst.vectors(&an, &fd);
    Ok(())
}

fn trial_logeig(trial: usize, _m: Mutation, worst: &mut Worst) -> Result<()> {
    let (x_t, _) = spd_with_gaps(5, 3, trial);
    let x = SpdMatrix::new(x_t.clone())?;
    let mut rng = rng_for(3, trial, 3);
    let g = random_sym(5, &mut rng);
    let analytic = logeig_backward(&x, &g)?.wrt_input;
    let loss = |xm: &Tensor<f64>| {
        let xs = SpdMatrix::new(xm.clone()).expect("perturbed input stays SPD");
        frobenius_inner(&logeig_forward(&xs).expect("spectrum above floor"), &g)
            .expect("same shape")
    };
    let (fd, an) = fd_grad_sym_pairs(&x_t, &analytic, loss);
    worst.vectors(&an, &fd);
    Ok(())
}

fn trial_vectorize(trial: usize, _m: Mutation, worst: &mut Worst) -> Result<()> {
    let mut rng = rng_for(4, trial, 0);
    let y = random_sym(4, &mut rng);
    let gv = gaussian(&[spdnet_core::spd::vectorized_len(4)], &mut rng);
    let analytic = spd_vectorize_backward(&gv, 4)?;
    let loss = |ym: &Tensor<f64>| {
        frobenius_inner(&spd_vectorize(ym).expect("symmetric input"), &gv).expect("same shape")
    };
    let (fd, an) = fd_grad_sym_pairs(&y, &analytic, loss);
    worst.vectors(&an, &fd);
    Ok(())
}

fn trial_conv(trial: usize, _m: Mutation, worst: &mut Worst) -> Result<()> {
    let cfg = ConvCfg {
        in_ch: 2,
        out_ch: 3,
        kernel: 3,
        stride: 1,
        pad: 1,
    };
    let conv = Conv2d::<f64>::new(cfg, 0x6e57 + 5, trial as u64 * 16)?;
    let mut rng = rng_for(5, trial, 1);
    let x = gaussian(&[2, 2, 5, 4], &mut rng);
    let (y, cache) = conv.forward(&x)?;
    let g = gaussian(y.shape(), &mut rng);

    let mut worker = conv.clone();
    worker.zero_grads();
    let dx = worker.backward(&cache, &g)?;

    let loss_x = |xm: &Tensor<f64>| {
        frobenius_inner(&conv.forward(xm).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(dx.data(), &fd_grad_entries(&x, loss_x));

    let loss_w = |wm: &Tensor<f64>| {
        let mut c = conv.clone();
        *c.weight_mut().value_mut() = wm.clone();
        frobenius_inner(&c.forward(&x).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(
        worker.grad_weight().data(),
        &fd_grad_entries(conv.weight().value(), loss_w),
    );

    let loss_b = |bm: &Tensor<f64>| {
        let mut c = conv.clone();
        *c.bias_mut().value_mut() = bm.clone();
        frobenius_inner(&c.forward(&x).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(
        worker.grad_bias().data(),
        &fd_grad_entries(conv.bias().value(), loss_b),
    );
    Ok(())
}

fn trial_batchnorm(trial: usize, _m: Mutation, worst: &mut Worst) -> Result<()> {
    let mut bn = BatchNorm2d::<f64>::new(3)?;
    let mut rng = rng_for(6, trial, 0);
    // move affine parameters off their init so their gradients interact
    for v in bn.gamma_mut().value_mut().data_mut() {
        *v = 1.0 + 0.2 * randn(&mut rng);
    }
    for v in bn.beta_mut().value_mut().data_mut() {
        *v = 0.1 * randn(&mut rng);
    }
    let x = gaussian(&[4, 3, 2, 2], &mut rng);
    let g = gaussian(&[4, 3, 2, 2], &mut rng);

    let mut worker = bn.clone();
    worker.zero_grads();
    let (_, cache) = worker.forward_train(&x)?;
    let dx = worker.backward(&cache, &g)?;

    // train-mode statistics are recomputed per forward, so the loss is a
    // pure function of the perturbed input; clones keep running stats out
    let loss_x = |xm: &Tensor<f64>| {
        let mut b = bn.clone();
        frobenius_inner(&b.forward_train(xm).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(dx.data(), &fd_grad_entries(&x, loss_x));

    let loss_gamma = |gm: &Tensor<f64>| {
        let mut b = bn.clone();
        *b.gamma_mut().value_mut() = gm.clone();
        frobenius_inner(&b.forward_train(&x).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(
        worker.grad_gamma().data(),
        &fd_grad_entries(bn.gamma().value(), loss_gamma),
    );

    let loss_beta = |bm: &Tensor<f64>| {
        let mut b = bn.clone();
        *b.beta_mut().value_mut() = bm.clone();
        frobenius_inner(&b.forward_train(&x).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(
        worker.grad_beta().data(),
        &fd_grad_entries(bn.beta().value(), loss_beta),
    );
    Ok(())
}

fn trial_fc(trial: usize, _m: Mutation, worst: &mut Worst) -> Result<()> {
    let fc = Linear::<f64>::new(6, 4, 0x6e57 + 8, trial as u64 * 16)?;
    let mut rng = rng_for(8, trial, 1);
    let x = gaussian(&[3, 6], &mut rng);
    let (y, cache) = fc.forward(&x)?;
    let g = gaussian(y.shape(), &mut rng);

    let mut worker = fc.clone();
    worker.zero_grads();
    let dx = worker.backward(&cache, &g)?;

    let loss_x = |xm: &Tensor<f64>| {
        frobenius_inner(&fc.forward(xm).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(dx.data(), &fd_grad_entries(&x, loss_x));

    let loss_w = |wm: &Tensor<f64>| {
        let mut l = fc.clone();
        *l.weight_mut().value_mut() = wm.clone();
        frobenius_inner(&l.forward(&x).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(
        worker.grad_weight().data(),
        &fd_grad_entries(fc.weight().value(), loss_w),
    );

    let loss_b = |bm: &Tensor<f64>| {
        let mut l = fc.clone();
        *l.bias_mut().value_mut() = bm.clone();
        frobenius_inner(&l.forward(&x).expect("dims fixed").0, &g).expect("same shape")
    };
    worst.vectors(
        worker.grad_bias().data(),
        &fd_grad_entries(fc.bias().value(), loss_b),
    );
    Ok(())
}

/// Residual blocks: a 2-layer stack (stem + downsampling block) on even
/// trials, a 3-layer stack (adds an identity block) on odd ones. The loss
/// taps every layer output so the multi-path backward is exercised.
fn trial_block(trial: usize, _m: Mutation, worst: &mut Worst) -> Result<()> {
    let cfg = ConvStackCfg {
        layers: 2 + trial % 2,
        in_ch: 1,
        channels: 3,
        keep_channels: 2,
        input_h: 9,
        input_w: 8,
    };
    let stack = ConvStack::<f64>::new(cfg, 0x6e57 + 7, trial as u64 * 16)?;
    let mut rng = rng_for(7, trial, 1);
    let x = gaussian(&[2, 1, 9, 8], &mut rng);

    let mut worker = stack.clone();
    worker.zero_grads();
    let (outs, cache) = worker.forward_train(&x)?;
    let taps: Vec<Tensor<f64>> = outs.iter().map(|o| gaussian(o.shape(), &mut rng)).collect();
    let grads: Vec<Option<Tensor<f64>>> = taps.iter().cloned().map(Some).collect();
    let dx = worker.backward(&cache, grads)?;

    let loss = |s: &ConvStack<f64>, xm: &Tensor<f64>| {
        let mut probe = s.clone();
        let (outs, _) = probe.forward_train(xm).expect("dims fixed");
        outs.iter()
            .zip(&taps)
            .map(|(o, t)| frobenius_inner(o, t).expect("same shape"))
            .sum::<f64>()
    };
    worst.vectors(dx.data(), &fd_grad_entries(&x, |xm| loss(&stack, xm)));

    // every parameter tensor, probed through restore_tensors
    let mut names: Vec<String> = Vec::new();
    stack.visit_tensors(&mut |n, _| {
        if !n.contains("running") {
            names.push(n);
        }
    });
    for name in names {
        let base = stack_tensor(&stack, &name);
        let analytic = stack_grad(&worker, &name);
        let fd = fd_grad_entries(&base, |tm| {
            let mut probe = stack.clone();
            probe
                .restore_tensors(&mut |n: &str| {
                    if n == name {
                        Some(tm.clone())
                    } else {
                        Some(stack_tensor(&stack, n))
                    }
                })
                .expect("names cover the stack");
            loss(&probe, &x)
        });
        worst.vectors(analytic.data(), &fd);
    }
    Ok(())
}

fn stack_tensor(stack: &ConvStack<f64>, name: &str) -> Tensor<f64> {
    let mut out = None;
    stack.visit_tensors(&mut |n, t| {
        if n == name {
            out = Some(t.clone());
        }
    });
    out.unwrap_or_else(|| panic!("no stack tensor named {name}"))
}

fn stack_grad(stack: &ConvStack<f64>, name: &str) -> Tensor<f64> {
    let mut out = None;
    stack.visit_param_grads(&mut |n, t| {
        if n == name {
            out = Some(t.clone());
        }
    });
    out.unwrap_or_else(|| panic!("no stack gradient named {name}"))
}

fn miniature_rcnet() -> ModelConfig {
    let mut cfg = ModelConfig::rcnet();
    cfg.frontend = ConvStackCfg {
        layers: 2,
        in_ch: 1,
        channels: 5,
        keep_channels: 4,
        input_h: 12,
        input_w: 10,
    };
    cfg.spd_dims = vec![5, 3];
    cfg.dropout_rate = 0.0; // finite differences need a deterministic loss
    cfg
}

fn miniature_srcnet() -> ModelConfig {
    let mut cfg = miniature_rcnet();
    cfg.variant = ModelVariant::SrcNet;
    cfg.spd_dims = vec![8, 6, 4];
    cfg
}

fn trial_rcnet(trial: usize, m: Mutation, worst: &mut Worst) -> Result<()> {
    trial_model(&miniature_rcnet(), 9, trial, m, worst)
}

fn trial_srcnet(trial: usize, m: Mutation, worst: &mut Worst) -> Result<()> {
    trial_model(&miniature_srcnet(), 10, trial, m, worst)
}

/// End-to-end probe of a miniature model through softmax cross-entropy:
/// two entries of every Euclidean tensor plus one tangent direction per
/// BiMap weight.
fn trial_model(
    cfg: &ModelConfig,
    family: u64,
    trial: usize,
    mutation: Mutation,
    worst: &mut Worst,
) -> Result<()> {
    let mut model = Model::<f64>::new(cfg, 0x6e57 + family * 1000 + trial as u64)?;
    let mut rng = rng_for(family, trial, 0);
    let x = gaussian(&[2, 1, cfg.frontend.input_h, cfg.frontend.input_w], &mut rng);
    let labels = [trial % cfg.num_classes, (trial + 1) % cfg.num_classes];

    model.zero_grads();
    let (logits, cache) = model.forward_train(&x, &mut stream_rng(0, 0))?;
    let lg = cross_entropy(&logits, &labels)?;
    model.backward(&cache, &lg.grad_logits)?;

    let loss_with = |name: &str, value: &Tensor<f64>| -> f64 {
        let mut probe = model.clone();
        probe
            .restore_tensors(&mut |n: &str| {
                if n == name {
                    Some(value.clone())
                } else {
                    Some(model_tensor(&model, n))
                }
            })
            .expect("names cover the model");
        let (logits, _) = probe
            .forward_train(&x, &mut stream_rng(0, 0))
            .expect("dims fixed");
        cross_entropy(&logits, &labels).expect("labels valid").loss
    };

    let mut names: Vec<(String, usize)> = Vec::new();
    model.visit_tensors(&mut |n, t| {
        if !n.contains("running") && !n.contains("bimap") {
            names.push((n, t.len()));
        }
    });
    for (name, len) in names {
        let base = model_tensor(&model, &name);
        let analytic = model_grad(&model, &name);
        let picks = len.min(2);
        for p in 0..picks {
            let idx = p * len / picks;
            let mut up = base.clone();
            up.data_mut()[idx] += FD_STEP;
            let mut dn = base.clone();
            dn.data_mut()[idx] -= FD_STEP;
            let fd = (loss_with(&name, &up) - loss_with(&name, &dn)) / (2.0 * FD_STEP);
            worst.scalar(analytic.data()[idx], fd);
        }
    }

    let mut bimaps: Vec<String> = Vec::new();
    model.visit_tensors(&mut |n, _| {
        if n.contains("bimap") {
            bimaps.push(n);
        }
    });
    for (wi, name) in bimaps.iter().enumerate() {
        let w = model_tensor(&model, name);
        let mut gw = model_grad(&model, name);
        if mutation == Mutation::FlipBimapWeightGrad {
            gw = gw.scale(-1.0);
        }
        let mut drng = rng_for(family, trial, 8 + wi as u64);
        let ambient = gaussian(w.shape(), &mut drng);
        let dir = stiefel_project(&w, &ambient)?;
        let dir = dir.scale(1.0 / dir.frob_norm());
        let w_up = stiefel_retract(&w, &dir.scale(FD_STEP))?;
        let w_dn = stiefel_retract(&w, &dir.scale(-FD_STEP))?;
        let fd = (loss_with(name, &w_up) - loss_with(name, &w_dn)) / (2.0 * FD_STEP);
        let analytic: f64 = gw.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        worst.scalar(analytic, fd);
    }
    Ok(())
}

fn model_tensor(model: &Model<f64>, name: &str) -> Tensor<f64> {
    let mut out = None;
    model.visit_tensors(&mut |n, t| {
        if n == name {
            out = Some(t.clone());
        }
    });
    out.unwrap_or_else(|| panic!("no model tensor named {name}"))
}

fn model_grad(model: &Model<f64>, name: &str) -> Tensor<f64> {
    let mut out = None;
    model.visit_param_grads(&mut |n, t| {
        if n == name {
            out = Some(t.clone());
        }
    });
    out.unwrap_or_else(|| panic!("no model gradient named {name}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_layer_family_passes_at_tight_tolerance() {
        for name in ["covpool", "bimap", "reeig", "logeig", "vectorize"] {
            let r = check_layer(name, 3, None, Mutation::None).unwrap();
            assert!(r.passed, "{name}: worst rel {:.3e}", r.worst_rel);
            assert_eq!(r.tol, SPD_TOL);
            assert!(r.checks > 0);
        }
    }

    #[test]
    fn planted_sign_bug_is_detected() {
        let clean = check_layer("bimap", 3, None, Mutation::None).unwrap();
        assert!(clean.passed);
        let broken = check_layer("bimap", 3, None, Mutation::FlipBimapWeightGrad).unwrap();
        assert!(
            !broken.passed,
            "sign flip must fail, got rel {:.3e}",
            broken.worst_rel
        );
        assert!(broken.worst_rel > 1.0, "flipped gradient reads as ~200% off");
    }

    #[test]
    fn unknown_selector_and_zero_trials_are_config_errors() {
        assert_eq!(
            run_gradcheck(Some("softmax"), 3, None).unwrap_err().exit_code(),
            2
        );
        assert_eq!(run_gradcheck(None, 0, None).unwrap_err().exit_code(), 2);
    }
}
