//! Deterministic stratified splits and label-noise injection.

use crate::samples::{num_classes, RadargramSample};
use crate::{DataError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use spdnet_core::rng::stream_rng;

/// Three-way split plan: `train_ratio` of the data trains, and
/// `val_fraction` of the remainder validates (the rest tests).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The conventional split: `val_fraction` 0.5 halves the holdout.
    pub fn new(train_ratio: f64, seed: u64) -> Self {
        SplitSpec {
            train_ratio,
            val_fraction: 0.5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(DataError::Split(format!(
                "train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(DataError::Split(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Distributes `total` items over classes proportionally to `weights` by the
/// largest-remainder rule (ties broken by class index), so every class gets
/// within one item of its exact share.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|&q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().take(total - assigned) {
        counts[c] += 1;
    }
    counts
}

/// Seeded Fisher-Yates shuffle.
fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, 0);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Splits sample indices into (train, val, test).
///
/// A seeded shuffle fixes the order, then each class is cut so that every
/// split's class histogram deviates from exact proportionality by at most
/// one sample: the train total is `floor(train_ratio * n)` spread over
/// classes by largest remainder, and the validation share of each class's
/// holdout is allocated the same way.
pub fn split(
    samples: &[RadargramSample],
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let n = samples.len();
    if n == 0 {
        return Err(DataError::Split("cannot split an empty dataset".into()));
    }
    let k = num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in shuffled_indices(n, spec.seed) {
        let label = samples[i].label;
        if label >= k {
            return Err(DataError::Split(format!(
                "sample {i} carries label {label} outside 0..{k}"
            )));
        }
        by_class[label].push(i);
    }
    let class_sizes: Vec<f64> = by_class.iter().map(|c| c.len() as f64).collect();
    let train_total = (spec.train_ratio * n as f64).floor() as usize;
    let train_counts = largest_remainder(train_total, &class_sizes);

    let holdout_sizes: Vec<f64> = by_class
        .iter()
        .zip(&train_counts)
        .map(|(c, &t)| (c.len() - t.min(c.len())) as f64)
        .collect();
    let holdout_total: usize = holdout_sizes.iter().sum::<f64>() as usize;
    let val_total = (spec.val_fraction * holdout_total as f64).floor() as usize;
    let val_counts = largest_remainder(val_total, &holdout_sizes);

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        let t = train_counts[c].min(members.len());
        let v = val_counts[c].min(members.len() - t);
        train.extend(&members[..t]);
        val.extend(&members[t..t + v]);
        test.extend(&members[t + v..]);
    }
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        if part.is_empty() {
            return Err(DataError::Split(format!(
                "{name} split is empty for ratio {} / val fraction {} on {n} samples",
                spec.train_ratio, spec.val_fraction
            )));
        }
    }
    Ok((train, val, test))
}

/// One audited label flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flip {
    /// Position in the train index list passed to `inject_label_noise`.
    pub position: usize,
    pub old_label: usize,
    pub new_label: usize,
}

/// Audit log of an injection run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FlipLog {
    pub fraction_requested: String,
    pub flips: Vec<Flip>,
}

/// Relabels `floor(fraction * n)` of the given training labels, chosen
/// without replacement by seed; each victim receives a uniform label among
/// the other classes. Returns the new labels plus an audit log. Images are
/// never touched, only labels.
pub fn inject_label_noise(
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, FlipLog)> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(DataError::Split(format!(
            "mislabel fraction must lie in [0, 0.5], got {fraction}"
        )));
    }
    let k = num_classes();
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(DataError::Split(format!(
                "label {l} at position {i} outside 0..{k}"
            )));
        }
    }
    let n = labels.len();
    let n_flips = (fraction * n as f64).floor() as usize;
    let mut rng = stream_rng(seed, 1);
    // Partial Fisher-Yates picks the victims without replacement.
    let mut pool: Vec<usize> = (0..n).collect();
    let mut victims = Vec::with_capacity(n_flips);
    for i in 0..n_flips {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
        victims.push(pool[i]);
    }
    victims.sort_unstable();
    let mut out = labels.to_vec();
    let mut log = FlipLog {
        fraction_requested: format!("{fraction}"),
        flips: Vec::with_capacity(n_flips),
    };
    for &pos in &victims {
        let old = out[pos];
        let draw = rng.gen_range(0..k - 1);
        let new = if draw >= old { draw + 1 } else { draw };
        out[pos] = new;
        log.flips.push(Flip {
            position: pos,
            old_label: old,
            new_label: new,
        });
    }
    Ok((out, log))
}
