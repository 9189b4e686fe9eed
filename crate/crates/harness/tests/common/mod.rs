//! Shared fixtures: a 32-sample synthetic dataset and a miniature model
//! that trains in seconds on full-size thumbnails.

use gpr_sim::{generate_dataset, DatasetSpec};
use spdnet_core::frontend::ConvStackCfg;
use spdnet_core::models::ModelConfig;
use spdnet_data::{load_dataset, RadargramSample};
use spdnet_harness::TrainConfig;
use std::path::Path;

/// 2 samples per (class, elevation) cell: 32 thumbnails over 4 classes.
pub fn tiny_spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        per_class_elevation: 2,
        seed,
        clutter_density_per_m2: 0.5,
        noise_sigma: 0.05,
    }
}

pub fn tiny_dataset(dir: &Path, seed: u64) -> Vec<RadargramSample> {
    generate_dataset(&tiny_spec(seed), dir).expect("generation succeeds");
    load_dataset(dir).expect("written dataset loads back")
}

/// Two conv layers, 8 channels, one 8 -> 6 projection: the smallest model
/// that still runs the full covariance pipeline on real thumbnails.
pub fn miniature_model() -> ModelConfig {
    let mut cfg = ModelConfig::rcnet();
    cfg.frontend = ConvStackCfg {
        layers: 2,
        in_ch: 1,
        channels: 8,
        keep_channels: 4,
        input_h: 112,
        input_w: 60,
    };
    cfg.spd_dims = vec![8, 6];
    cfg
}

pub fn tiny_config(data_dir: &Path) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.model = miniature_model();
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.train_ratio = 0.5;
    cfg.val_fraction = 0.5;
    cfg.data_dir = data_dir.to_path_buf();
    cfg
}
