//! Loading generated thumbnail datasets and assembling network batches.

use crate::{DataError, Result};
use gpr_sim::dataset::{load_manifest, ManifestEntry, SAMPLE_MAGIC};
use gpr_sim::scene::ObjectClass;
use spdnet_core::{Scalar, Tensor};
use std::path::Path;

/// Number of thumbnail classes.
pub fn num_classes() -> usize {
    ObjectClass::ALL.len()
}

/// One loaded thumbnail with its label and acquisition metadata.
#[derive(Debug, Clone)]
pub struct RadargramSample {
    /// Normalised thumbnail, shape `[112, 60]`, values in `[0, 1]`.
    pub image: Tensor<f32>,
    /// Class label in `0..num_classes()`.
    pub label: usize,
    /// Manifest row this sample came from.
    pub meta: ManifestEntry,
}

fn read_sample_file(path: &Path, name: &str) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::Truncated(format!("{name}: file missing")),
        _ => DataError::Io(format!("{name}: {e}")),
    })?;
    if bytes.len() < 4 || &bytes[0..4] != SAMPLE_MAGIC {
        return Err(DataError::BadMagic(name.to_string()));
    }
    if bytes.len() < 12 {
        return Err(DataError::Truncated(name.to_string()));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 4 * h * w;
    if bytes.len() < expected {
        return Err(DataError::Truncated(name.to_string()));
    }
    if bytes.len() > expected {
        return Err(DataError::Io(format!(
            "{name}: {} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let data: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(&[h, w], data)
        .map_err(|e| DataError::Io(format!("{name}: invalid dimensions: {e}")))
}

/// Loads every sample listed in the directory's manifest, in manifest order,
/// validating each file header and label.
pub fn load_dataset(dir: &Path) -> Result<Vec<RadargramSample>> {
    let manifest = load_manifest(dir).map_err(|e| DataError::Manifest(e.to_string()))?;
    let k = num_classes();
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in manifest.samples {
        if entry.label >= k {
            return Err(DataError::LabelOutOfRange {
                file: entry.file.clone(),
                label: entry.label,
                num_classes: k,
            });
        }
        let image = read_sample_file(&dir.join(&entry.file), &entry.file)?;
        samples.push(RadargramSample {
            image,
            label: entry.label,
            meta: entry,
        });
    }
    Ok(samples)
}

/// Stacks the selected samples into a `[B, 1, H, W]` input batch of scalar
/// type `T` plus the matching label vector.
pub fn batch_tensor<T: Scalar>(
    samples: &[RadargramSample],
    indices: &[usize],
) -> Result<(Tensor<T>, Vec<usize>)> {
    if indices.is_empty() {
        return Err(DataError::Split("empty batch".into()));
    }
    let shape = samples
        .get(indices[0])
        .ok_or_else(|| DataError::Split(format!("batch index {} out of range", indices[0])))?
        .image
        .shape()
        .to_vec();
    let (h, w) = (shape[0], shape[1]);
    let mut data = Vec::with_capacity(indices.len() * h * w);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let sample = samples
            .get(i)
            .ok_or_else(|| DataError::Split(format!("batch index {i} out of range")))?;
        if sample.image.shape() != shape.as_slice() {
            return Err(DataError::Split(format!(
                "sample {} shape {:?} differs from {:?}",
                sample.meta.file,
                sample.image.shape(),
                shape
            )));
        }
        data.extend(sample.image.data().iter().map(|&v| T::from_f64(v as f64)));
        labels.push(sample.label);
    }
    let batch = Tensor::from_vec(&[indices.len(), 1, h, w], data)
        .map_err(|e| DataError::Io(format!("batch assembly failed: {e}")))?;
    Ok((batch, labels))
}
