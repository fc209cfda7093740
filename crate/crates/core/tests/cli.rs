use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic").join(name)
}

fn premodel(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_premodel"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run premodel binary")
}

fn with_data(cmd: &str, out: &Path) -> Output {
    let (t, f, m) = (data("trace.csv"), data("features.csv"), data("models.csv"));
    premodel(
        &[cmd, "--trace", t.to_str().unwrap(), "--features", f.to_str().unwrap(), "--models", m.to_str().unwrap(), "--k-folds", "5"],
        out,
    )
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(with_data("validate", dir.path()).status.code(), Some(0));

    let trace = dir.path().join("bad_trace.csv");
    std::fs::write(&trace, "input_id,model_id,goal_met,score,latency_ms,energy_mj\nx,A,1,,0,\n").unwrap();
    let features = dir.path().join("features.csv");
    std::fs::write(&features, "input_id,f_a\nx,1\n").unwrap();
    let o = premodel(&["validate", "--trace", trace.to_str().unwrap(), "--features", features.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("latency"), "{}", stderr(&o));

    let o = premodel(&["validate", "--trace", "/nonexistent/trace.csv", "--features", features.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(premodel(&["no-such-command"], dir.path()).status.code(), Some(2));
}

#[test]
fn train_names_missing_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_data("train", dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("labels.csv"), "{}", stderr(&o));

    assert_eq!(with_data("label", dir.path()).status.code(), Some(0));
    let o = with_data("train", dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("selection.json"), "{}", stderr(&o));

    let o = with_data("predict", dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("premodel.json"), "{}", stderr(&o));
}

const PIPELINE: [&str; 7] = ["label", "select-features", "select-models", "train", "evaluate", "sweep", "predict"];

fn run_pipeline(out: &Path) {
    for cmd in PIPELINE {
        let o = with_data(cmd, out);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn pipeline_is_byte_identical_on_rerun() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for artifact in [
        "labels.csv",
        "feature_selection.json",
        "feature_selection.csv",
        "selection.json",
        "selection_log.csv",
        "premodel.json",
        "report.csv",
        "report.txt",
        "sweep.csv",
        "radius.csv",
        "predictions.csv",
    ] {
        let (x, y) = (std::fs::read(a.path().join(artifact)).unwrap(), std::fs::read(b.path().join(artifact)).unwrap());
        assert_eq!(x, y, "{artifact} differs between runs");
    }
    assert_eq!(names.len(), 11, "{names:?}");
}

#[test]
fn predict_prints_single_choice() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["label", "select-models", "train"] {
        assert_eq!(with_data(cmd, dir.path()).status.code(), Some(0));
    }
    let f = data("features.csv");
    let o = premodel(&["predict", "--features", f.to_str().unwrap(), "--input-id", "in000"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let choice = stdout(&o).trim().to_string();
    assert!(["fast", "accurate", "FAILURE"].contains(&choice.as_str()), "{choice}");

    let o = premodel(&["predict", "--features", f.to_str().unwrap(), "--input-id", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_has_twelve_rows() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(with_data("sweep", dir.path()).status.code(), Some(0));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 13);
}

#[test]
fn scored_trace_needs_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    std::fs::write(
        &trace,
        "input_id,model_id,goal_met,score,latency_ms,energy_mj\nx,A,,0.7,1,\nx,B,,0.9,2,\ny,A,,0.2,1,\ny,B,,0.95,2,\n",
    )
    .unwrap();
    let features = dir.path().join("features.csv");
    std::fs::write(&features, "input_id,f_a\nx,1\ny,2\n").unwrap();
    let (t, f) = (trace.to_str().unwrap(), features.to_str().unwrap());
    assert_eq!(premodel(&["label", "--trace", t, "--features", f], dir.path()).status.code(), Some(2));
    let o = premodel(&["label", "--trace", t, "--features", f, "--threshold", "0.8"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(labels, "input_id,label\nx,B\ny,B\n");
}
