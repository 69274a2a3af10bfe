use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "synth": { "train_count": 16, "test_count": 6, "frames": 8, "tube_frames": [4, 8] },
  "target": { "epochs": 15, "batch_size": 8 },
  "train": { "epochs": 2, "batch_size": 8 }
}"#;

fn counterfact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_counterfact")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = counterfact(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// gen, train-target, train-explain, eval into `root`.
fn pipeline(root: &Path, cfg: &Path, threads: &str) {
    let (data, tgt, expl, ev) = (root.join("data"), root.join("target"), root.join("explain"), root.join("eval"));
    let common = ["--config", s(cfg), "--seed", "7", "--threads", threads];
    ok(&[&["gen", "--out", s(&data)], &common[..]].concat());
    ok(&[&["train-target", "--data", s(&data), "--out", s(&tgt)], &common[..]].concat());
    let target = tgt.join("target.json");
    ok(&[&["train-explain", "--data", s(&data), "--target", s(&target), "--out", s(&expl)], &common[..]].concat());
    let model = expl.join("model");
    ok(&[&["eval", "--data", s(&data), "--target", s(&target), "--model", s(&model), "--out", s(&ev)], &common[..]].concat());
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.json");
    fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn selftest_passes() {
    let stdout = ok(&["selftest"]);
    assert!(stdout.contains("all 5 suites passed"), "{stdout}");
}

#[test]
fn pipeline_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    pipeline(&dir.path().join("a"), &cfg, "1");
    pipeline(&dir.path().join("b"), &cfg, "2");
    for f in [
        "eval/metrics.json",
        "eval/metrics.csv",
        "target/target.json",
        "explain/loss.csv",
        "explain/model/manifest.json",
        "explain/model/class_kernels_s0.cft",
        "explain/model/attribute_kernels_s1.cft",
        "data/samples/test-00003.cft",
    ] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
    assert!(dir.path().join("a/eval/run_manifest.json").exists());
}

#[test]
fn explain_outputs_and_rejects_identical_classes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let root = dir.path().join("run");
    pipeline(&root, &cfg, "1");
    let (data, target, model) = (root.join("data"), root.join("target/target.json"), root.join("explain/model"));
    let base = ["explain", "--data", s(&data), "--target", s(&target), "--model", s(&model), "--sample", "test-00000"];

    let json = ok(&[&base[..], &["--c-pos", "class0", "--c-neg", "class1", "--top-k", "2"]].concat());
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["c_pos"], "class0");
    assert_eq!(v["items"].as_array().unwrap().len(), 2);

    let out = counterfact(&[&base[..], &["--c-pos", "class1", "--c-neg", "class1"]].concat());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("identical classes"));
}

#[test]
fn missing_inputs_fail_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = counterfact(&["train-target", "--data", s(&dir.path().join("nope")), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("loading dataset"));
}

#[test]
fn bench_reports_slope() {
    let stdout = ok(&["bench", "--frames", "8,16", "--size", "4", "--reps", "1"]);
    assert!(stdout.contains("log-log slope"), "{stdout}");
}
