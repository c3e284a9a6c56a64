use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn sqap(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sqap"));
    cmd.args(args).env_remove("SQAP_SEED");
    if let Some(s) = seed {
        cmd.env("SQAP_SEED", s);
    }
    cmd.output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{"scene": {"d_model": 64, "outlier_channels": [[5, 30.0]]}, "sweep": {"seeds": 4, "ratios": [0.3, 0.6]}}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

#[test]
fn run_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = sqap(
        &["run", "--config", &cfg, "--regime", "naive", "--ablation", "attn+ring"],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["record"]["regime"], "naive");
    assert_eq!(doc["record"]["ablation"], "attn+ring");
    assert_eq!(doc["kept"].as_array().unwrap().len(), 154);
    assert_eq!(doc["decile_rank_corr"].as_array().unwrap().len(), 10);
}

#[test]
fn seed_override_changes_the_scene() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |seed| {
        let out = sqap(&["run", "--config", &cfg], seed);
        assert!(out.status.success());
        let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        doc["record"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None), run(None));
    assert_ne!(run(None), run(Some("7")));
    assert_eq!(sqap(&["run", "--config", &cfg], Some("seven")).status.code(), Some(1));
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = sqap(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()], None);
        assert!(res.status.success());
    }
    assert_eq!(digest(&a), digest(&b));
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4 * 3);
    assert!(text.starts_with("ratio,seed,regime,ablation,topk_jaccard"));
}

#[test]
fn heatmap_writes_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("fp.pgm");
    let res = sqap(
        &[
            "heatmap",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--regime",
            "fp",
        ],
        None,
    );
    assert!(res.status.success());
    let bytes = fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(bytes.len(), 13 + 256);
    assert!(bytes[13..].contains(&255) && bytes[13..].contains(&0));
    let again = dir.path().join("fp2.pgm");
    sqap(
        &[
            "heatmap",
            "--config",
            &cfg,
            "--out",
            again.to_str().unwrap(),
            "--regime",
            "fp",
        ],
        None,
    );
    assert_eq!(digest(&out), digest(&again));
}

#[test]
fn bops_reports_the_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = sqap(&["bops", "--config", &cfg], None);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["baseline_bops"], "2121478963200");
    assert_eq!(doc["quant_speedup"], 16.0);
    assert_eq!(doc["pruned_seq_len"], 198);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let missing = dir.path().join("nope.json");
    assert_eq!(
        sqap(&["bops", "--config", missing.to_str().unwrap()], None)
            .status
            .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"prune": {"ratio": 2.0}}"#).unwrap();
    assert_eq!(
        sqap(&["bops", "--config", bad.to_str().unwrap()], None).status.code(),
        Some(1)
    );
    assert_eq!(
        sqap(&["run", "--config", &cfg, "--regime", "int8"], None).status.code(),
        Some(1)
    );
    let unwritable = dir.path().join("no_such_dir").join("out.csv");
    assert_eq!(
        sqap(
            &["sweep", "--config", &cfg, "--out", unwritable.to_str().unwrap()],
            None
        )
        .status
        .code(),
        Some(2)
    );
}
