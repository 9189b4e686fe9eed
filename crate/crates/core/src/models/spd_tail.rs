//! The SPD half of a covariance network: covariance pooling of a feature
//! matrix, a chain of BiMap + ReEig pairs, then LogEig and
//! half-vectorization. Samples are processed one at a time; eigendecompo-
//! sitions computed in the forward pass ride along in each [`SpdMatrix`]
//! and are reused by the backward pass.

use crate::error::{CoreError, Result};
use crate::spd::{
    bimap_backward, bimap_forward, covpool_backward, covpool_forward, logeig_backward,
    logeig_forward, reeig_backward, reeig_forward, spd_vectorize, spd_vectorize_backward,
    vectorized_len, SpdMatrix,
};
use crate::stiefel::{OptimizerConfig, StiefelParam};
use crate::tensor::{Scalar, Tensor};

/// BiMap weights plus the fixed dimension chain `d_0 > d_1 > ... > d_n`.
#[derive(Clone, Debug)]
pub struct SpdTail<T> {
    dims: Vec<usize>,
    eps: f64,
    weights: Vec<StiefelParam<T>>,
    grads: Vec<Tensor<T>>,
}

/// Per-sample intermediates of one tail forward pass.
#[derive(Debug)]
struct SampleCache<T> {
    features: Tensor<T>,
    pooled: SpdMatrix<T>,
    bimap_out: Vec<SpdMatrix<T>>,
    reeig_out: Vec<SpdMatrix<T>>,
}

#[derive(Debug)]
pub struct SpdTailCache<T> {
    samples: Vec<SampleCache<T>>,
}

impl<T: Scalar> SpdTail<T> {
    /// `dims` is the full chain including the input dimension; it must be
    /// strictly decreasing (equal neighbours would make BiMap square).
    pub fn new(dims: &[usize], eps: f64, seed: u64, stream_base: u64) -> Result<Self> {
        if dims.is_empty() || dims[0] == 0 {
            return Err(CoreError::Config("spd tail: empty dimension chain".into()));
        }
        if dims.windows(2).any(|w| w[1] >= w[0] || w[1] == 0) {
            return Err(CoreError::Config(format!(
                "spd tail: dimension chain {dims:?} must be strictly decreasing and positive"
            )));
        }
        if !(eps > 0.0) {
            return Err(CoreError::Config(format!(
                "spd tail: rectification eps must be positive, got {eps}"
            )));
        }
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut grads = Vec::with_capacity(dims.len() - 1);
        for (k, pair) in dims.windows(2).enumerate() {
            weights.push(StiefelParam::random(
                pair[1],
                pair[0],
                seed,
                stream_base + k as u64,
            )?);
            grads.push(Tensor::zeros(&[pair[1], pair[0]]));
        }
        Ok(SpdTail {
            dims: dims.to_vec(),
            eps,
            weights,
            grads,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Length of the vectorized output per sample.
    pub fn output_len(&self) -> usize {
        vectorized_len(*self.dims.last().expect("nonempty chain"))
    }

    /// Forward over a `[batch, d_0, M]` feature batch; returns
    /// `[batch, output_len]`.
    pub fn forward(&self, feats: &Tensor<T>) -> Result<(Tensor<T>, SpdTailCache<T>)> {
        if feats.rank() != 3 || feats.shape()[1] != self.dims[0] {
            return Err(CoreError::Dimension(format!(
                "spd tail: expected [batch, {}, M] features, got {:?}",
                self.dims[0],
                feats.shape()
            )));
        }
        let (b, d, m) = (feats.shape()[0], feats.shape()[1], feats.shape()[2]);
        let out_len = self.output_len();
        let mut out = Tensor::<T>::zeros(&[b, out_len]);
        let mut samples = Vec::with_capacity(b);
        for bi in 0..b {
            let t = Tensor::from_vec(&[d, m], feats.data()[bi * d * m..(bi + 1) * d * m].to_vec())?;
            let pooled = covpool_forward(&t)
                .map_err(|e| e.in_context(&format!("sample {bi} covpool")))?;
            let mut x = pooled.clone();
            let mut bimap_out = Vec::with_capacity(self.weights.len());
            let mut reeig_out = Vec::with_capacity(self.weights.len());
            for (k, w) in self.weights.iter().enumerate() {
                let y = bimap_forward(&x, w.value())
                    .map_err(|e| e.in_context(&format!("sample {bi} bimap {k}")))?;
                let z = reeig_forward(&y, self.eps)
                    .map_err(|e| e.in_context(&format!("sample {bi} reeig {k}")))?;
                x = z.clone();
                bimap_out.push(y);
                reeig_out.push(z);
            }
            let log = logeig_forward(&x)
                .map_err(|e| e.in_context(&format!("sample {bi} logeig")))?;
            let v = spd_vectorize(&log)?;
            out.data_mut()[bi * out_len..(bi + 1) * out_len].copy_from_slice(v.data());
            samples.push(SampleCache {
                features: t,
                pooled,
                bimap_out,
                reeig_out,
            });
        }
        Ok((out, SpdTailCache { samples }))
    }

    /// Backward over the whole batch; accumulates BiMap weight gradients
    /// (Euclidean, projection deferred to the optimizer step) and returns
    /// the gradient with respect to the input features `[batch, d_0, M]`.
    pub fn backward(&mut self, cache: &SpdTailCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let b = cache.samples.len();
        let out_len = self.output_len();
        if grad_out.rank() != 2 || grad_out.rows() != b || grad_out.cols() != out_len {
            return Err(CoreError::Dimension(format!(
                "spd tail backward: gradient {:?}, expected [{b}, {out_len}]",
                grad_out.shape()
            )));
        }
        let d0 = self.dims[0];
        let m = cache
            .samples
            .first()
            .map(|s| s.features.cols())
            .unwrap_or(0);
        let d_last = *self.dims.last().expect("nonempty chain");
        let mut grad_feats = Tensor::<T>::zeros(&[b, d0, m]);
        for (bi, sample) in cache.samples.iter().enumerate() {
            let gv = Tensor::from_vec(
                &[out_len],
                grad_out.data()[bi * out_len..(bi + 1) * out_len].to_vec(),
            )?;
            let g_sym = spd_vectorize_backward(&gv, d_last)?;
            let last = sample
                .reeig_out
                .last()
                .unwrap_or(&sample.pooled);
            let mut g = logeig_backward(last, &g_sym)
                .map_err(|e| e.in_context(&format!("sample {bi} logeig backward")))?
                .wrt_input;
            for k in (0..self.weights.len()).rev() {
                g = reeig_backward(&sample.bimap_out[k], self.eps, &g)
                    .map_err(|e| e.in_context(&format!("sample {bi} reeig {k} backward")))?
                    .wrt_input;
                let input = if k == 0 {
                    &sample.pooled
                } else {
                    &sample.reeig_out[k - 1]
                };
                let lg = bimap_backward(input, self.weights[k].value(), &g)
                    .map_err(|e| e.in_context(&format!("sample {bi} bimap {k} backward")))?;
                let wg = lg.wrt_params.expect("bimap backward always yields a weight gradient");
                for (acc, v) in self.grads[k].data_mut().iter_mut().zip(wg.data()) {
                    *acc += *v;
                }
                g = lg.wrt_input;
            }
            let lg = covpool_backward(&sample.features, &g)
                .map_err(|e| e.in_context(&format!("sample {bi} covpool backward")))?;
            grad_feats.data_mut()[bi * d0 * m..(bi + 1) * d0 * m]
                .copy_from_slice(lg.wrt_input.data());
        }
        Ok(grad_feats)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v = T::from_f64(0.0);
            }
        }
    }

    /// One Riemannian SGD step per BiMap weight.
    pub fn apply_step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        for (w, g) in self.weights.iter_mut().zip(&self.grads) {
            w.step(g, cfg)?;
        }
        Ok(())
    }

    pub fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for (k, w) in self.weights.iter().enumerate() {
            f(format!("{prefix}.bimap{}.weight", k + 1), w.value());
        }
    }

    pub fn visit_param_grads(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for (k, g) in self.grads.iter().enumerate() {
            f(format!("{prefix}.bimap{}.weight", k + 1), g);
        }
    }

    pub fn restore_tensors(
        &mut self,
        prefix: &str,
        lookup: &mut dyn FnMut(&str) -> Option<Tensor<T>>,
    ) -> Result<()> {
        for (k, w) in self.weights.iter_mut().enumerate() {
            let name = format!("{prefix}.bimap{}.weight", k + 1);
            let t = lookup(&name)
                .ok_or_else(|| CoreError::Checkpoint(format!("missing tensor record {name}")))?;
            w.restore(t)?;
        }
        Ok(())
    }

    /// Direct access to one BiMap weight (for manifold-aware probing).
    pub fn weight(&self, k: usize) -> &StiefelParam<T> {
        &self.weights[k]
    }

    pub fn weight_mut(&mut self, k: usize) -> &mut StiefelParam<T> {
        &mut self.weights[k]
    }

    pub fn num_bimaps(&self) -> usize {
        self.weights.len()
    }
}
