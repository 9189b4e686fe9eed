//! The three experiment protocols, each a grid of full train/eval runs:
//! train-ratio sweep, mislabel sweep (noise in the train split only), and
//! the four acquisition-shift scenarios with an in-distribution control.
//!
//! Results land in two deterministic CSVs (raw rows and an aggregate
//! summary) plus a JSON side report that carries the wall times, keeping
//! the CSVs byte-stable across reruns.

use crate::config::{config_hash, Protocol, TrainConfig};
use crate::stats::{box_stats, percentile};
use crate::train::{train, SplitIndices};
use crate::{HarnessError, Result};
use rand::seq::SliceRandom;
use serde::Serialize;
use spdnet_core::rng::stream_rng;
use spdnet_data::{
    apply_scenario, inject_label_noise, num_classes, split, RadargramSample, ShiftScenario,
    SplitSpec,
};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Train-ratio grid 0.1..=0.9 in steps of 0.1.
pub fn ratio_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Mislabel-fraction grid 0.0..=0.4 in steps of 0.05.
pub fn mislabel_grid() -> Vec<f64> {
    (0..=8).map(|i| i as f64 * 0.05).collect()
}

/// The four shift scenarios in report order.
pub fn default_scenarios() -> Vec<ShiftScenario> {
    ["A", "B", "C", "D"]
        .iter()
        .map(|n| ShiftScenario::from_name(n).expect("built-in scenario name"))
        .collect()
}

/// One finished sweep cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub protocol: String,
    /// Grid coordinate: a ratio, a fraction, or a scenario name.
    pub param: String,
    pub seed: u64,
    pub config_hash: String,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// A sweep's rows plus everything needed for the side report.
#[derive(Clone, Debug)]
pub struct SweepReport {
    pub protocol: Protocol,
    pub rows: Vec<SweepRow>,
    /// Per-row training wall time; report JSON only, never CSV.
    pub per_run_wall_s: Vec<f64>,
    pub wall_time_s: f64,
}

const RAW_HEADER: &str = "protocol,param,seed,config_hash,test_accuracy,best_epoch,epochs_run";

impl SweepReport {
    /// Raw per-run table, one row per (param, seed), UTF-8 with LF endings.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from(RAW_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{},{}\n",
                r.protocol, r.param, r.seed, r.config_hash, r.test_accuracy, r.best_epoch,
                r.epochs_run
            ));
        }
        out
    }

    /// Aggregate table: nearest-rank accuracy quantiles per grid point, or
    /// boxplot statistics for the scenario protocol.
    pub fn summary_csv(&self) -> String {
        let groups = group_by_param(&self.rows);
        let mut out = String::new();
        if self.protocol == Protocol::Scenario {
            out.push_str("protocol,param,n,q1,median,q3,whisker_lo,whisker_hi,num_outliers\n");
            for (param, accs) in &groups {
                let s = box_stats(accs);
                out.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                    self.protocol.name(),
                    param,
                    accs.len(),
                    s.q1,
                    s.median,
                    s.q3,
                    s.whisker_lo,
                    s.whisker_hi,
                    s.outliers.len()
                ));
            }
        } else {
            out.push_str("protocol,param,n,acc_p05,acc_p50,acc_p95\n");
            for (param, accs) in &groups {
                out.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{:.6}\n",
                    self.protocol.name(),
                    param,
                    accs.len(),
                    percentile(accs, 5.0),
                    percentile(accs, 50.0),
                    percentile(accs, 95.0)
                ));
            }
        }
        out
    }

    /// Median test accuracy per grid point, in first-appearance order.
    pub fn medians(&self) -> Vec<(String, f64)> {
        group_by_param(&self.rows)
            .into_iter()
            .map(|(param, accs)| (param, percentile(&accs, 50.0)))
            .collect()
    }

    /// Writes the raw CSV to `csv_path`, the summary next to it with a
    /// `_summary.csv` suffix, and the JSON report with `_report.json`.
    /// Returns the three paths written.
    pub fn write(&self, csv_path: &Path) -> Result<Vec<PathBuf>> {
        let summary_path = sibling(csv_path, "_summary.csv");
        let report_path = sibling(csv_path, "_report.json");
        std::fs::write(csv_path, self.raw_csv())?;
        std::fs::write(&summary_path, self.summary_csv())?;
        #[derive(Serialize)]
        struct RunEntry<'a> {
            #[serde(flatten)]
            row: &'a SweepRow,
            wall_time_s: f64,
        }
        #[derive(Serialize)]
        struct Report<'a> {
            protocol: &'a str,
            wall_time_s: f64,
            runs: Vec<RunEntry<'a>>,
        }
        let report = Report {
            protocol: self.protocol.name(),
            wall_time_s: self.wall_time_s,
            runs: self
                .rows
                .iter()
                .zip(&self.per_run_wall_s)
                .map(|(row, &wall_time_s)| RunEntry { row, wall_time_s })
                .collect(),
        };
        let mut json = serde_json::to_string_pretty(&report)
            .map_err(|e| HarnessError::Io(format!("report encode: {e}")))?;
        json.push('\n');
        std::fs::write(&report_path, json)?;
        Ok(vec![csv_path.to_path_buf(), summary_path, report_path])
    }
}

/// `foo.csv` -> `foo_summary.csv` etc.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Groups accuracies by param, preserving first-appearance order.
fn group_by_param(rows: &[SweepRow]) -> Vec<(String, Vec<f64>)> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(p, _)| *p == r.param) {
            Some((_, accs)) => accs.push(r.test_accuracy),
            None => groups.push((r.param.clone(), vec![r.test_accuracy])),
        }
    }
    groups
}

/// Parses a raw sweep CSV back into rows (for recomputing statistics).
pub fn read_raw_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RAW_HEADER => {}
        other => {
            return Err(HarnessError::Io(format!(
                "{}: unexpected CSV header {other:?}",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(HarnessError::Io(format!(
                "{}: line {}: expected 7 fields, got {}",
                path.display(),
                ln + 2,
                fields.len()
            )));
        }
        fn field<T: std::str::FromStr>(path: &Path, ln: usize, what: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| {
                HarnessError::Io(format!("{}: line {}: {what}: {e}", path.display(), ln + 2))
            })
        }
        rows.push(SweepRow {
            protocol: fields[0].to_string(),
            param: fields[1].to_string(),
            seed: field(path, ln, "seed", fields[2])?,
            config_hash: fields[3].to_string(),
            test_accuracy: field(path, ln, "test_accuracy", fields[4])?,
            best_epoch: field(path, ln, "best_epoch", fields[5])?,
            epochs_run: field(path, ln, "epochs_run", fields[6])?,
        });
    }
    Ok(rows)
}

/// Full train/eval per (ratio, seed): fresh stratified split at each
/// ratio, true labels throughout.
pub fn run_ratio_sweep(
    base: &TrainConfig,
    samples: &[RadargramSample],
    ratios: &[f64],
    seeds: &[u64],
) -> Result<SweepReport> {
    let start = Instant::now();
    let mut report = empty_report(Protocol::RatioSweep);
    for &ratio in ratios {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.protocol = Protocol::RatioSweep;
            cfg.train_ratio = ratio;
            cfg.seed = seed;
            let spec = SplitSpec {
                train_ratio: ratio,
                val_fraction: cfg.val_fraction,
                seed,
            };
            let (train_idx, val, test) = split(samples, &spec)?;
            let labels: Vec<usize> = train_idx.iter().map(|&i| samples[i].label).collect();
            let indices = SplitIndices {
                train: train_idx,
                val,
                test,
            };
            let (result, _) = train(&cfg, samples, &indices, &labels)?;
            push_row(&mut report, &cfg, format!("{ratio:.2}"), &result);
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Full train/eval per (fraction, seed) at the base train ratio. Label
/// noise goes into the train split only; validation and test labels are
/// never touched.
pub fn run_mislabel_sweep(
    base: &TrainConfig,
    samples: &[RadargramSample],
    fractions: &[f64],
    seeds: &[u64],
) -> Result<SweepReport> {
    let start = Instant::now();
    let mut report = empty_report(Protocol::MislabelSweep);
    for &fraction in fractions {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.protocol = Protocol::MislabelSweep;
            cfg.seed = seed;
            let spec = SplitSpec {
                train_ratio: cfg.train_ratio,
                val_fraction: cfg.val_fraction,
                seed,
            };
            let (train_idx, val, test) = split(samples, &spec)?;
            let clean: Vec<usize> = train_idx.iter().map(|&i| samples[i].label).collect();
            let (noisy, _log) = inject_label_noise(&clean, fraction, seed)?;
            let indices = SplitIndices {
                train: train_idx,
                val,
                test,
            };
            let (result, _) = train(&cfg, samples, &indices, &noisy)?;
            push_row(&mut report, &cfg, format!("{fraction:.2}"), &result);
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// An in-distribution control plus one run per shift scenario and seed.
/// Scenario test sets are fixed by their metadata filters; the scenario's
/// train/val sub-split keeps the control's train:val proportions.
pub fn run_scenarios(
    base: &TrainConfig,
    samples: &[RadargramSample],
    scenarios: &[ShiftScenario],
    seeds: &[u64],
) -> Result<SweepReport> {
    let start = Instant::now();
    let mut report = empty_report(Protocol::Scenario);
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.protocol = Protocol::Scenario;
        cfg.seed = seed;
        let spec = SplitSpec {
            train_ratio: cfg.train_ratio,
            val_fraction: cfg.val_fraction,
            seed,
        };
        let (train_idx, val, test) = split(samples, &spec)?;
        let labels: Vec<usize> = train_idx.iter().map(|&i| samples[i].label).collect();
        let indices = SplitIndices {
            train: train_idx,
            val,
            test,
        };
        let (result, _) = train(&cfg, samples, &indices, &labels)?;
        push_row(&mut report, &cfg, "control".to_string(), &result);
    }
    // val share of the scenario's trainval pool that reproduces the
    // control's overall train:val proportions
    let val_share = (1.0 - base.train_ratio) * base.val_fraction;
    let train_share = base.train_ratio / (base.train_ratio + val_share);
    for &scenario in scenarios {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.protocol = Protocol::Scenario;
            cfg.seed = seed;
            let (pool, test) = apply_scenario(samples, scenario)?;
            let (train_idx, val) = stratified_two_way(samples, &pool, train_share, seed)?;
            let labels: Vec<usize> = train_idx.iter().map(|&i| samples[i].label).collect();
            let indices = SplitIndices {
                train: train_idx,
                val,
                test,
            };
            let (result, _) = train(&cfg, samples, &indices, &labels)?;
            push_row(&mut report, &cfg, scenario.name().to_string(), &result);
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn empty_report(protocol: Protocol) -> SweepReport {
    SweepReport {
        protocol,
        rows: Vec::new(),
        per_run_wall_s: Vec::new(),
        wall_time_s: 0.0,
    }
}

fn push_row(
    report: &mut SweepReport,
    cfg: &TrainConfig,
    param: String,
    result: &crate::train::RunResult,
) {
    report.rows.push(SweepRow {
        protocol: report.protocol.name().to_string(),
        param,
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        test_accuracy: result.test_accuracy,
        best_epoch: result.best_epoch,
        epochs_run: result.train_loss.len(),
    });
    report.per_run_wall_s.push(result.wall_time_s);
}

// Stream offset for the scenario sub-split shuffle; the three-way splitter
// uses stream 0 and label noise stream 1 under the same seed.
const STREAM_SCENARIO_SPLIT: u64 = 2;

/// Splits an index pool into train/val, stratified by class with
/// largest-remainder allocation of `floor(train_share * n)` train slots.
fn stratified_two_way(
    samples: &[RadargramSample],
    pool: &[usize],
    train_share: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = num_classes();
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(&mut stream_rng(seed, STREAM_SCENARIO_SPLIT));
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &i in &shuffled {
        by_class[samples[i].label].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let total_train = (train_share * pool.len() as f64).floor() as usize;
    let quota = largest_remainder(total_train, &counts);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        train.extend_from_slice(&members[..quota[c]]);
        val.extend_from_slice(&members[quota[c]..]);
    }
    if train.is_empty() || val.is_empty() {
        return Err(HarnessError::Train(format!(
            "scenario sub-split degenerate: {} train / {} val from a pool of {}",
            train.len(),
            val.len(),
            pool.len()
        )));
    }
    Ok((train, val))
}

/// Allocates `total` slots across groups proportionally to `weights`,
/// rounding down and then handing leftovers to the largest remainders
/// (ties to the lowest index).
fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut alloc: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut leftover = total - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(total * weights[i] % sum), i));
    for &i in &order {
        if leftover == 0 {
            break;
        }
        alloc[i] += 1;
        leftover -= 1;
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_is_exact_and_fair() {
        assert_eq!(largest_remainder(10, &[1, 1, 1, 1]), vec![3, 3, 2, 2]);
        assert_eq!(largest_remainder(7, &[3, 3]), vec![4, 3]);
        assert_eq!(largest_remainder(0, &[5, 5]), vec![0, 0]);
        let alloc = largest_remainder(1108, &[396, 396, 396, 396]);
        assert_eq!(alloc.iter().sum::<usize>(), 1108);
        assert!(alloc.iter().all(|&a| a == 277));
    }

    #[test]
    fn grids_match_the_protocol_definitions() {
        let r = ratio_grid();
        assert_eq!(r.len(), 9);
        assert_eq!(r[0], 0.1);
        assert_eq!(r[8], 0.9);
        let m = mislabel_grid();
        assert_eq!(m.len(), 9);
        assert_eq!(m[0], 0.0);
        assert_eq!(m[8], 0.4);
        assert_eq!(default_scenarios().len(), 4);
    }

    #[test]
    fn csv_parses_back_to_the_same_rows() {
        let report = SweepReport {
            protocol: Protocol::RatioSweep,
            rows: vec![
                SweepRow {
                    protocol: "ratio_sweep".into(),
                    param: "0.10".into(),
                    seed: 3,
                    config_hash: "ab12cd34ef56ab78".into(),
                    test_accuracy: 81.25,
                    best_epoch: 4,
                    epochs_run: 9,
                },
                SweepRow {
                    protocol: "ratio_sweep".into(),
                    param: "0.20".into(),
                    seed: 4,
                    config_hash: "ab12cd34ef56ab78".into(),
                    test_accuracy: 90.0,
                    best_epoch: 2,
                    epochs_run: 2,
                },
            ],
            per_run_wall_s: vec![0.5, 0.6],
            wall_time_s: 1.1,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        report.write(&path).unwrap();
        let back = read_raw_csv(&path).unwrap();
        assert_eq!(back, report.rows);
        assert!(dir.path().join("sweep_summary.csv").exists());
        assert!(dir.path().join("sweep_report.json").exists());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'), "LF endings only");
    }

    #[test]
    fn summary_groups_by_param_in_order() {
        let mk = |param: &str, acc: f64| SweepRow {
            protocol: "ratio_sweep".into(),
            param: param.into(),
            seed: 0,
            config_hash: "x".into(),
            test_accuracy: acc,
            best_epoch: 1,
            epochs_run: 1,
        };
        let report = SweepReport {
            protocol: Protocol::RatioSweep,
            rows: vec![mk("0.10", 50.0), mk("0.20", 70.0), mk("0.10", 60.0)],
            per_run_wall_s: vec![0.0; 3],
            wall_time_s: 0.0,
        };
        let csv = report.summary_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("ratio_sweep,0.10,2,"));
        assert!(lines[2].starts_with("ratio_sweep,0.20,1,"));
        // n=2 nearest-rank: p50 is the lower value
        assert!(lines[1].contains(",50.000000,"));
        let medians = report.medians();
        assert_eq!(medians[0], ("0.10".to_string(), 50.0));
        assert_eq!(medians[1], ("0.20".to_string(), 70.0));
    }
}
