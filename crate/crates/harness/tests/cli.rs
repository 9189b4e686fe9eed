//! The `spdnet` binary end to end: subcommand wiring, byte-deterministic
//! artifacts, and the exit-code contract (0 ok, 1 runtime, 2 config).

mod common;

use std::path::Path;
use std::process::Command;

fn spdnet(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_spdnet"))
        .args(args)
        .output()
        .expect("binary spawns");
    (
        out.status.code().expect("no signal"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Sorted (name, bytes) listing of a flat directory.
fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn gen_data_is_byte_deterministic_and_seed_overrides() {
    let root = tempfile::tempdir().unwrap();
    let spec_path = root.path().join("plan.json");
    let spec_json = serde_json::to_string(&common::tiny_spec(4)).unwrap();
    std::fs::write(&spec_path, spec_json).unwrap();
    let spec = spec_path.to_str().unwrap();

    let a = root.path().join("a");
    let b = root.path().join("b");
    let (code, out, err) = spdnet(&["gen-data", "--spec", spec, "--out", a.to_str().unwrap()]);
    assert_eq!(code, 0, "stderr: {err}");
    assert!(out.contains("32 samples"), "got: {out}");
    let (code, _, _) = spdnet(&["gen-data", "--spec", spec, "--out", b.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(dir_bytes(&a), dir_bytes(&b), "dataset bytes must not vary");

    let c = root.path().join("c");
    let (code, _, _) = spdnet(&[
        "gen-data",
        "--spec",
        spec,
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(code, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(c.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7, "--seed overrides the plan's seed");
}

#[test]
fn train_then_eval_roundtrip_with_identical_checkpoints() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    common::tiny_dataset(&data, 31);

    let cfg = common::tiny_config(&data);
    let cfg_path = root.path().join("train.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let cfg_arg = cfg_path.to_str().unwrap();

    let ckpt1 = root.path().join("m1.spdm");
    let ckpt2 = root.path().join("m2.spdm");
    let (code, out, err) = spdnet(&[
        "train",
        "--config",
        cfg_arg,
        "--out",
        ckpt1.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    assert!(out.contains("best epoch"), "got: {out}");
    assert!(ckpt1.with_extension("run.json").exists());

    let (code, _, _) = spdnet(&[
        "train",
        "--config",
        cfg_arg,
        "--out",
        ckpt2.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(&ckpt1).unwrap(),
        std::fs::read(&ckpt2).unwrap(),
        "checkpoint bytes must not vary across reruns"
    );

    let (code, out, err) = spdnet(&[
        "eval",
        "--ckpt",
        ckpt1.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    assert!(out.contains("accuracy"), "got: {out}");
    assert!(out.contains("true\\pred"), "confusion table printed: {out}");
}

#[test]
fn gradcheck_subcommand_exit_codes() {
    let (code, out, _) = spdnet(&["gradcheck", "--layer", "covpool", "--trials", "2"]);
    assert_eq!(code, 0);
    assert!(out.contains("gradcheck passed"), "got: {out}");

    let (code, _, err) = spdnet(&["gradcheck", "--layer", "softmax"]);
    assert_eq!(code, 2, "unknown layer is a usage error");
    assert!(err.contains("unknown layer"), "got: {err}");

    let (code, out, _) = spdnet(&[
        "gradcheck",
        "--layer",
        "covpool",
        "--trials",
        "2",
        "--tol",
        "1e-18",
    ]);
    assert_eq!(code, 1, "an impossible tolerance is a check failure");
    assert!(out.contains("FAIL"), "got: {out}");
}

#[test]
fn config_errors_exit_2_and_runtime_errors_exit_1() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    common::tiny_dataset(&data, 31);

    let mut cfg = common::tiny_config(&data);
    cfg.epochs = 0;
    let bad_cfg = root.path().join("bad.json");
    std::fs::write(&bad_cfg, serde_json::to_string(&cfg).unwrap()).unwrap();
    let (code, _, err) = spdnet(&[
        "train",
        "--config",
        bad_cfg.to_str().unwrap(),
        "--out",
        root.path().join("x.spdm").to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "stderr: {err}");

    let (code, _, _) = spdnet(&[
        "eval",
        "--ckpt",
        root.path().join("missing.spdm").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "a missing checkpoint is a runtime error");

    let (code, _, _) = spdnet(&["train", "--config", bad_cfg.to_str().unwrap()]);
    assert_eq!(code, 2, "clap rejects the missing --out");
}

#[test]
fn experiment_subcommand_writes_deterministic_csvs() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    common::tiny_dataset(&data, 31);

    let mut cfg = common::tiny_config(&data);
    cfg.epochs = 1;
    let cfg_path = root.path().join("exp.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let cfg_arg = cfg_path.to_str().unwrap();

    let a = root.path().join("a.csv");
    let b = root.path().join("b.csv");
    for out in [&a, &b] {
        let (code, stdout, err) = spdnet(&[
            "experiment",
            "--protocol",
            "mislabel",
            "--config",
            cfg_arg,
            "--seeds",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "stderr: {err}");
        assert!(stdout.contains("9 runs"), "9 noise fractions: {stdout}");
    }
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "raw CSV bytes must not vary across reruns"
    );
    assert_eq!(
        std::fs::read(root.path().join("a_summary.csv")).unwrap(),
        std::fs::read(root.path().join("b_summary.csv")).unwrap()
    );

    let (code, _, _) = spdnet(&[
        "experiment",
        "--protocol",
        "ratio",
        "--config",
        cfg_arg,
        "--seeds",
        "0",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "zero seeds is a usage error");
}
