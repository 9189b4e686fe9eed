//! Command-line entry point: dataset generation, training, evaluation,
//! gradient verification, and experiment sweeps.
//!
//! Exit codes: 0 on success, 1 on runtime failure (including a failed
//! gradient check), 2 on configuration or usage errors.

use clap::{Parser, Subcommand, ValueEnum};
use gpr_sim::{generate_dataset, DatasetSpec};
use spdnet_core::models::{load_model, save_model};
use spdnet_data::load_dataset;
use spdnet_harness::{
    config_hash, default_scenarios, evaluate_model, mislabel_grid, ratio_grid, render_confusion,
    run_gradcheck, run_mislabel_sweep, run_ratio_sweep, run_scenarios, train_plain, HarnessError,
    Protocol, Result, TrainConfig,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "spdnet", version, about = "Covariance-pooling networks for radargram thumbnails")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a labelled radargram thumbnail dataset.
    GenData {
        /// JSON generation plan; defaults to the standard 1584-sample plan.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the plan's seed when given.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write the best-validation checkpoint.
    Train {
        /// JSON training configuration.
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory; overrides the configuration's `data_dir`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint output path; a run report lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint over a dataset directory.
    Eval {
        /// Checkpoint path.
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        /// Check a single layer; default runs the full suite.
        #[arg(long)]
        layer: Option<String>,
        /// Seeded trials per layer.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Override the per-layer tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a multi-seed protocol sweep and write raw/summary CSVs.
    Experiment {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// JSON training configuration shared by every run.
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds, counted up from the configuration's seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Raw CSV path; the summary CSV and JSON report land next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Ratio,
    Mislabel,
    Scenario,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(i32::from(e.exit_code()));
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::GenData { spec, out, seed } => {
            let mut plan = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        HarnessError::Config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    serde_json::from_str::<DatasetSpec>(&text).map_err(|e| {
                        HarnessError::Config(format!("bad plan {}: {e}", path.display()))
                    })?
                }
                None => DatasetSpec::new(seed.unwrap_or(0)),
            };
            if let Some(s) = seed {
                plan.seed = s;
            }
            let manifest = generate_dataset(&plan, &out)?;
            println!(
                "wrote {} samples (seed {}) to {}",
                manifest.samples.len(),
                manifest.seed,
                out.display()
            );
            Ok(0)
        }
        Cmd::Train { config, data, out } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(dir) = data {
                cfg.data_dir = dir;
            }
            let samples = load_dataset(&cfg.data_dir)?;
            let (result, model) = train_plain(&cfg, &samples)?;
            save_model(&model, &out)?;
            let report_path = out.with_extension("run.json");
            let mut text = serde_json::to_string_pretty(&result).map_err(|e| {
                HarnessError::Io(format!("run report serialize: {e}"))
            })?;
            text.push('\n');
            std::fs::write(&report_path, text)
                .map_err(|e| HarnessError::Io(format!("run report write: {e}")))?;
            println!(
                "config {} seed {}: best epoch {}, val {:.2}%, test {:.2}%",
                result.config_hash,
                result.seed,
                result.best_epoch,
                result.val_accuracy[result.best_epoch - 1],
                result.test_accuracy
            );
            println!("checkpoint {}", out.display());
            println!("report {}", report_path.display());
            Ok(0)
        }
        Cmd::Eval { ckpt, data } => {
            let (model, _cfg) = load_model::<f32>(&ckpt)?;
            let samples = load_dataset(&data)?;
            let indices: Vec<usize> = (0..samples.len()).collect();
            let eval = evaluate_model(&model, &samples, &indices)?;
            println!(
                "accuracy {:.2}% ({}/{} correct)",
                eval.accuracy,
                eval.correct(),
                eval.total
            );
            print!("{}", render_confusion(&eval.confusion));
            Ok(0)
        }
        Cmd::Gradcheck { layer, trials, tol } => {
            let report = run_gradcheck(layer.as_deref(), trials, tol)?;
            print!("{}", report.render());
            if report.passed() {
                println!("gradcheck passed");
                Ok(0)
            } else {
                println!("gradcheck FAILED");
                Ok(1)
            }
        }
        Cmd::Experiment {
            protocol,
            config,
            seeds,
            out,
        } => {
            if seeds == 0 {
                return Err(HarnessError::Config("--seeds must be positive".into()));
            }
            let mut cfg = TrainConfig::load(&config)?;
            cfg.protocol = match protocol {
                ProtocolArg::Ratio => Protocol::RatioSweep,
                ProtocolArg::Mislabel => Protocol::MislabelSweep,
                ProtocolArg::Scenario => Protocol::Scenario,
            };
            let samples = load_dataset(&cfg.data_dir)?;
            let seed_list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            let report = match cfg.protocol {
                Protocol::RatioSweep => run_ratio_sweep(&cfg, &samples, &ratio_grid(), &seed_list)?,
                Protocol::MislabelSweep => {
                    run_mislabel_sweep(&cfg, &samples, &mislabel_grid(), &seed_list)?
                }
                Protocol::Scenario => {
                    run_scenarios(&cfg, &samples, &default_scenarios(), &seed_list)?
                }
                Protocol::Plain => unreachable!("mapped from the protocol flag"),
            };
            let written = report.write(&out)?;
            println!(
                "{}: {} runs over {} seeds (config {})",
                report.protocol.name(),
                report.rows.len(),
                seeds,
                config_hash(&cfg)
            );
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
    }
}
