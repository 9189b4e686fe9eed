//! End-to-end dataset I/O against real generated directories: lossless
//! loading, distinct failure modes, and full-scale class balance.

use gpr_sim::dataset::{generate_dataset, DatasetSpec, SAMPLE_MAGIC};
use spdnet_data::{load_dataset, num_classes, split, DataError, SplitSpec};
use std::path::Path;

fn tiny_spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        per_class_elevation: 2,
        seed,
        clutter_density_per_m2: 0.5,
        noise_sigma: 0.05,
    }
}

fn generate_tiny(dir: &Path, seed: u64) -> gpr_sim::dataset::Manifest {
    generate_dataset(&tiny_spec(seed), dir).unwrap()
}

#[test]
fn loading_round_trips_pixel_payloads_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_tiny(dir.path(), 21);
    let samples = load_dataset(dir.path()).unwrap();
    assert_eq!(samples.len(), manifest.samples.len());
    for (sample, entry) in samples.iter().zip(&manifest.samples) {
        assert_eq!(sample.meta, *entry);
        assert_eq!(sample.label, entry.label);
        let bytes = std::fs::read(dir.path().join(&entry.file)).unwrap();
        let payload: Vec<f32> = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let loaded: Vec<f32> = sample.image.data().to_vec();
        assert_eq!(
            loaded.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            payload.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "pixels of {} not bitwise identical",
            entry.file
        );
    }
}

#[test]
fn corrupt_magic_is_reported_with_the_file_name() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_tiny(dir.path(), 4);
    let victim = &manifest.samples[3].file;
    let path = dir.path().join(victim);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0..4].copy_from_slice(b"JUNK");
    std::fs::write(&path, bytes).unwrap();
    match load_dataset(dir.path()) {
        Err(DataError::BadMagic(name)) => assert_eq!(&name, victim),
        other => panic!("expected BadMagic, got {other:?}"),
    }
}

#[test]
fn truncated_files_are_a_distinct_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_tiny(dir.path(), 5);
    let victim = &manifest.samples[0].file;
    let path = dir.path().join(victim);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    match load_dataset(dir.path()) {
        Err(DataError::Truncated(name)) => assert_eq!(&name, victim),
        other => panic!("expected Truncated, got {other:?}"),
    }
    assert_eq!(&bytes[0..4], SAMPLE_MAGIC);
}

#[test]
fn out_of_range_labels_are_a_distinct_error() {
    let dir = tempfile::tempdir().unwrap();
    generate_tiny(dir.path(), 6);
    let manifest_path = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).unwrap();
    let text = text.replacen("\"label\": 3", "\"label\": 9", 1);
    std::fs::write(&manifest_path, text).unwrap();
    match load_dataset(dir.path()) {
        Err(DataError::LabelOutOfRange { label, num_classes, .. }) => {
            assert_eq!(label, 9);
            assert_eq!(num_classes, 4);
        }
        other => panic!("expected LabelOutOfRange, got {other:?}"),
    }
}

#[test]
fn missing_manifest_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_dataset(dir.path()),
        Err(DataError::Manifest(_))
    ));
}

#[test]
fn default_scale_dataset_balances_and_splits_to_paper_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec::new(77);
    generate_dataset(&spec, dir.path()).unwrap();
    let samples = load_dataset(dir.path()).unwrap();
    assert_eq!(samples.len(), 1584);
    let mut hist = vec![0usize; num_classes()];
    for s in &samples {
        hist[s.label] += 1;
    }
    assert_eq!(hist, vec![396; 4]);
    let (train, val, test) = split(&samples, &SplitSpec::new(0.7, 0)).unwrap();
    assert_eq!((train.len(), val.len(), test.len()), (1108, 238, 238));
}
