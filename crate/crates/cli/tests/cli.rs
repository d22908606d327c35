//! End-to-end checks of the `ctxad` binary: stdout contracts, artifact
//! idempotency, and the structured exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_ctxad")
}

fn manifest_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests")
}

fn run(args: &[&str]) -> Output {
    Command::new(exe()).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn ingest_prints_stats_and_rewrites_identically() {
    let manifest = manifest_dir().join("cmc.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut blobs = Vec::new();
    for dir in &dirs {
        let out = Command::new(exe())
            .args(["ingest", "--manifest"])
            .arg(&manifest)
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains(
            "dataset cmc: 1,473 rows, 8 features, 29 anomalies (1.97%), avg cardinality 3.12"
        ));
        blobs.push(std::fs::read(dir.path().join("cmc.ds")).unwrap());
    }
    assert_eq!(blobs[0], blobs[1], "encoded dataset differs between identical runs");
}

#[test]
fn usage_error_exits_2() {
    let out = run(&["ingest", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_manifest_exits_3() {
    let out = run(&["ingest", "--manifest", "/nonexistent/x.toml", "--out-dir", "/tmp"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn unknown_context_column_exits_4() {
    let manifest = manifest_dir().join("cmc.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(exe())
        .args(["evaluate", "--context", "NotAColumn", "--seeds", "0", "--manifest"])
        .arg(&manifest)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_rejects_auto_context() {
    let manifest = manifest_dir().join("cmc.toml");
    let out = run(&[
        "train",
        "--context",
        "auto",
        "--manifest",
        manifest.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("concrete context"));
}

#[test]
fn train_writes_checkpoint_and_curves() {
    let manifest = manifest_dir().join("cmc.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(exe())
        .args(["train", "--context", "none", "--seed", "3", "--manifest"])
        .arg(&manifest)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("trained 6 epochs"));
    for suffix in ["ckpt", "train.json", "loss.csv"] {
        let path = dir.path().join(format!("cmc.no_context.seed3.{suffix}"));
        assert!(path.exists(), "missing {}", path.display());
    }
}

#[test]
fn restricted_manifest_sweeps_candidate_plus_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let csv = manifest_dir().join("../data/cmc.csv").canonicalize().unwrap();
    let manifest = dir.path().join("restricted.toml");
    std::fs::write(
        &manifest,
        format!(
            "name = \"restricted\"\npath = \"{}\"\nlabel_column = \"is_anomaly\"\n\
             positive_label = \"1\"\ncandidate_context_columns = [\"Wife_education\"]\n",
            csv.display()
        ),
    )
    .unwrap();
    let out = Command::new(exe())
        .args(["select-context", "--manifest"])
        .arg(&manifest)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("restricted.selection.json")).unwrap())
            .unwrap();
    let candidates = report["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 2, "expected candidate plus baseline");
    let mut names: Vec<&str> =
        candidates.iter().map(|c| c["candidate"].as_str().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["NO_CONTEXT", "Wife_education"]);
}

#[test]
fn single_class_labels_exit_6() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("ctx,a,b,label\n");
    for i in 0..80 {
        csv.push_str(&format!("c{},v{},w{},0\n", i % 3, (i * 7) % 4, (i * 5) % 4));
    }
    std::fs::write(dir.path().join("tiny.csv"), csv).unwrap();
    std::fs::write(
        dir.path().join("tiny.toml"),
        "name = \"tiny\"\npath = \"tiny.csv\"\nlabel_column = \"label\"\npositive_label = \"1\"\n",
    )
    .unwrap();
    let out = Command::new(exe())
        .args(["evaluate", "--context", "ctx", "--seeds", "0", "--manifest"])
        .arg(dir.path().join("tiny.toml"))
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(6), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn out_dir_env_var_is_honored() {
    let manifest = manifest_dir().join("cmc.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(exe())
        .args(["ingest", "--manifest"])
        .arg(&manifest)
        .env("CTXAD_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("cmc.ds").exists());
}

#[test]
fn report_renders_aligned_table() {
    let dir = tempfile::tempdir().unwrap();
    let summary = serde_json::json!({
        "dataset": "demo",
        "chosen_context": "ctx",
        "seeds": [{"seed": 0, "cwae_aucroc": 0.9, "wae_aucroc": 0.8}],
        "cwae_mean": 0.9,
        "cwae_stddev": 0.0,
        "wae_mean": 0.8,
        "wae_stddev": 0.0,
        "report_paths": []
    });
    let path = dir.path().join("demo.summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).unwrap()).unwrap();
    let out = Command::new(exe()).arg("report").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().starts_with("dataset"), "header row missing:\n{text}");
    assert!(text.contains("demo") && text.contains("0.900 +/- 0.000"), "row missing:\n{text}");
}
