//! Dataset plumbing for the radargram classifiers: loading generated
//! thumbnail datasets, deterministic stratified splits, label-noise
//! injection, and the four metadata-shift scenarios.
//!
//! Everything here is a pure function of its inputs and an explicit seed, so
//! experiment partitions are reproducible across runs and machines.

pub mod samples;
pub mod scenario;
pub mod split;

pub use samples::{batch_tensor, load_dataset, num_classes, RadargramSample};
pub use scenario::{apply_scenario, ShiftScenario};
pub use split::{inject_label_noise, split, Flip, FlipLog, SplitSpec};

/// Errors raised by dataset loading and partitioning.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    /// Manifest missing, unreadable, or malformed.
    #[error("manifest error: {0}")]
    Manifest(String),
    /// A sample file does not start with the expected magic bytes.
    #[error("bad magic in {0}")]
    BadMagic(String),
    /// A sample file ends before its declared payload.
    #[error("truncated sample file {0}")]
    Truncated(String),
    /// A manifest label falls outside the class range.
    #[error("label out of range in {file}: {label} (expected < {num_classes})")]
    LabelOutOfRange {
        file: String,
        label: usize,
        num_classes: usize,
    },
    /// Invalid split ratios or an empty resulting split.
    #[error("split error: {0}")]
    Split(String),
    /// A scenario filter matched no samples.
    #[error("scenario error: {0}")]
    Scenario(String),
    /// Other I/O failures.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, DataError>;
