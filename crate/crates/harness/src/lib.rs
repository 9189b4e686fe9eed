//! Experiment harness: the training loop, evaluation, the three sweep
//! protocols (train-ratio, mislabel, shift scenarios), the gradient-check
//! runner, and deterministic CSV/JSON reporting.
//!
//! Everything downstream of a `(config, seed)` pair is reproducible to the
//! byte: shuffles, dropout, and label noise all draw from per-purpose
//! ChaCha8 streams, CSV floats are printed with fixed precision, and wall
//! times stay out of the CSVs (they live in the side run reports).

pub mod config;
pub mod eval;
pub mod gradcheck;
pub mod stats;
pub mod sweeps;
pub mod train;

pub use config::{config_hash, Protocol, TrainConfig};
pub use eval::{evaluate_model, render_confusion, Evaluation};
pub use gradcheck::{check_layer, run_gradcheck, GradReport, LayerReport, Mutation};
pub use stats::{box_stats, percentile, BoxStats};
pub use sweeps::{
    default_scenarios, mislabel_grid, ratio_grid, read_raw_csv, run_mislabel_sweep,
    run_ratio_sweep, run_scenarios, SweepReport, SweepRow,
};
pub use train::{train, train_plain, RunResult, SplitIndices};

use spdnet_core::CoreError;
use spdnet_data::DataError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Bad configuration or command line; maps to exit code 2.
    #[error("config: {0}")]
    Config(String),
    #[error("train: {0}")]
    Train(String),
    #[error("eval: {0}")]
    Eval(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sim(#[from] gpr_sim::SimError),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl HarnessError {
    /// CLI exit code: 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(CoreError::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
