//! The training loop: seeded epoch shuffling, fixed-size batches with
//! gradient averaging, an SGD step per batch (Riemannian on BiMap
//! weights), early stopping on validation accuracy, and best-validation
//! checkpoint selection.

use crate::config::{config_hash, TrainConfig};
use crate::eval::evaluate_model;
use crate::{HarnessError, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use spdnet_core::models::{cross_entropy, Model};
use spdnet_core::rng::stream_rng;
use spdnet_data::{batch_tensor, split, RadargramSample, SplitSpec};
use std::time::Instant;

/// Disjoint index sets into one loaded sample list.
#[derive(Clone, Debug, Default)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Everything a finished run reports. Test accuracy always comes from the
/// epoch with the best validation accuracy (ties resolve to the earliest).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub config: TrainConfig,
    pub config_hash: String,
    pub seed: u64,
    /// Mean cross-entropy per epoch, in epoch order.
    pub train_loss: Vec<f64>,
    /// Validation accuracy per epoch, percent.
    pub val_accuracy: Vec<f64>,
    /// 1-based epoch whose checkpoint was retained.
    pub best_epoch: usize,
    /// Test accuracy of the retained checkpoint, percent.
    pub test_accuracy: f64,
    pub wall_time_s: f64,
}

// Stream offsets under the run seed; disjoint from the dataset generator's
// and splitter's stream usage because those draw from their own seeds.
const STREAM_SHUFFLE_BASE: u64 = 1_000;
const STREAM_DROPOUT_BASE: u64 = 500_000;

/// Trains on `indices.train` (with `train_labels` standing in for the true
/// labels, so sweeps can inject noise), validates and tests on the other
/// two splits. Returns the run report and the best-validation model.
pub fn train(
    cfg: &TrainConfig,
    samples: &[RadargramSample],
    indices: &SplitIndices,
    train_labels: &[usize],
) -> Result<(RunResult, Model<f32>)> {
    cfg.validate()?;
    if indices.train.is_empty() || indices.val.is_empty() || indices.test.is_empty() {
        return Err(HarnessError::Config(format!(
            "all three splits must be non-empty, got {}/{}/{}",
            indices.train.len(),
            indices.val.len(),
            indices.test.len()
        )));
    }
    if train_labels.len() != indices.train.len() {
        return Err(HarnessError::Train(format!(
            "{} labels for {} training samples",
            train_labels.len(),
            indices.train.len()
        )));
    }
    let k = model_classes(cfg);
    if let Some(&bad) = train_labels.iter().find(|&&l| l >= k) {
        return Err(HarnessError::Train(format!(
            "training label {bad} out of range for {k} classes"
        )));
    }

    let start = Instant::now();
    let mut model = Model::<f32>::new(&cfg.model, cfg.seed)?;
    let mut train_loss = Vec::new();
    let mut val_accuracy = Vec::new();
    // (accuracy, 1-based epoch, model snapshot)
    let mut best: Option<(f64, usize, Model<f32>)> = None;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..indices.train.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, STREAM_SHUFFLE_BASE + epoch as u64));
        let mut dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT_BASE + epoch as u64);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_indices: Vec<usize> = chunk.iter().map(|&p| indices.train[p]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&p| train_labels[p]).collect();
            let (x, _) = batch_tensor::<f32>(samples, &batch_indices)?;

            let step = (|| -> Result<f64> {
                model.zero_grads();
                let (logits, cache) = model.forward_train(&x, &mut dropout_rng)?;
                let lg = cross_entropy(&logits, &labels)?;
                if !lg.loss.is_finite() {
                    return Err(HarnessError::Train(format!("non-finite loss {}", lg.loss)));
                }
                model.backward(&cache, &lg.grad_logits)?;
                model.apply_step(&cfg.optim)?;
                Ok(lg.loss)
            })();
            let loss = step.map_err(|e| {
                HarnessError::Train(format!("epoch {epoch}, batch {}: {e}", bi + 1))
            })?;
            loss_sum += loss;
            batches += 1;
        }
        train_loss.push(loss_sum / batches as f64);

        let val = evaluate_model(&model, samples, &indices.val)?;
        val_accuracy.push(val.accuracy);
        let improved = best.as_ref().map_or(true, |(acc, _, _)| val.accuracy > *acc);
        if improved {
            best = Some((val.accuracy, epoch, model.clone()));
        } else if epoch - best.as_ref().expect("set on first epoch").1 >= cfg.patience {
            break;
        }
    }

    let (_, best_epoch, best_model) = best.expect("epochs >= 1 ran at least once");
    let test = evaluate_model(&best_model, samples, &indices.test)?;
    let result = RunResult {
        config: cfg.clone(),
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        train_loss,
        val_accuracy,
        best_epoch,
        test_accuracy: test.accuracy,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, best_model))
}

/// Plain protocol: stratified split at the config's ratios, true labels.
pub fn train_plain(
    cfg: &TrainConfig,
    samples: &[RadargramSample],
) -> Result<(RunResult, Model<f32>)> {
    let spec = SplitSpec {
        train_ratio: cfg.train_ratio,
        val_fraction: cfg.val_fraction,
        seed: cfg.seed,
    };
    let (train_idx, val, test) = split(samples, &spec)?;
    let labels: Vec<usize> = train_idx.iter().map(|&i| samples[i].label).collect();
    let indices = SplitIndices {
        train: train_idx,
        val,
        test,
    };
    train(cfg, samples, &indices, &labels)
}

fn model_classes(cfg: &TrainConfig) -> usize {
    cfg.model.num_classes
}
