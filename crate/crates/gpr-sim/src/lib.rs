//! Synthetic ground-penetrating-radar scenes for training hyperbola
//! classifiers.
//!
//! The simulator builds B-scan radargrams from closed-form two-way travel
//! times: a point target at depth `d` below an antenna at elevation `e`
//! produces the arrival `t(x) = 2 (e / c + sqrt(d^2 + (x - x0)^2) / v)`
//! sampled along the antenna track. Each buried-object class leaves a
//! distinct echo signature (amplitude, polarity, and spatial footprint), and
//! every scene adds horizontal soil layers, Poisson-distributed point
//! clutter, and white Gaussian noise. Thumbnails cropped around the object
//! box are resized to a fixed 112x60 grid and normalised to `[0, 1]`, which
//! is the input format of the downstream networks.
//!
//! All randomness flows through per-purpose ChaCha8 streams derived from a
//! single scene seed, so identical configurations reproduce byte-identical
//! datasets.

pub mod bscan;
pub mod dataset;
pub mod ricker;
pub mod scene;
pub mod thumbnail;

pub use bscan::{synthesize_bscan, travel_time_s, APERTURE_M, DT_S, DX_M, N_T, N_X};
pub use dataset::{
    generate_dataset, load_manifest, scene_for_sample, write_sample_file, DatasetSpec, Manifest,
    ManifestEntry, MANIFEST_FORMAT_VERSION, SAMPLE_MAGIC, THUMB_H, THUMB_W,
};
pub use ricker::{ricker, sampled_wavelet, RickerConfig};
pub use scene::{
    Layer, ObjectClass, SceneConfig, Soil, C_AIR_M_PER_S, ELEVATIONS_CM, FREQUENCIES_MHZ,
};
pub use thumbnail::{extract_thumbnail, object_box, BoundingBox};

/// Errors produced while validating configurations or rendering scenes.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    /// A configuration field is out of range or inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// Scene geometry cannot be imaged on the fixed acquisition grid.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Filesystem or serialisation failure while writing a dataset.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SimError>;
