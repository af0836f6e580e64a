use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rupture::harness::{parse_report_csv, read_fold_records, FoldRecord};

fn rupture(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rupture"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, participants: &str) {
    let out = rupture(&["synth", "--out", s(dir), "--participants", participants, "--seed", "3", "--profile", "separable"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const RUN_CONFIG: &str = r#"{"scheme": "error_detection", "cell": "gru", "fusion": "intermediate",
    "modalities": ["facial", "pose"], "representation": "pca", "hidden": 6, "epochs": 2}"#;

#[test]
fn synth_then_validate_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    synth(&corpus, "2");
    assert!(corpus.join("manifest.json").exists());
    assert!(corpus.join("P01_facial.csv").exists());
    let out = rupture(&["validate", "--corpus", s(&corpus)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok: 2 sessions"));
}

#[test]
fn synth_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "2");
    synth(&b, "2");
    for name in ["manifest.json", "P02_text.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn validate_reports_every_problem_with_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    synth(&corpus, "2");
    let manifest_path = corpus.join("manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["participants"][0]["error_onsets"] = serde_json::json!([500, 100, 5000]);
    fs::write(&manifest_path, manifest.to_string()).unwrap();
    let csv_path = corpus.join("P02_audio.csv");
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[4].split(',').map(String::from).collect();
    cells[2] = "NaN".into();
    lines[4] = cells.join(",");
    fs::write(&csv_path, lines.join("\n") + "\n").unwrap();

    let out = rupture(&["validate", "--corpus", s(&corpus)]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("P01: onset 5000"), "{stdout}");
    assert!(stdout.contains("P01: onsets not strictly increasing"), "{stdout}");
    assert!(stdout.contains("P02: audio: non-finite value at row 3"), "{stdout}");

    // Loading an invalid corpus for training is also a validation failure.
    let config = tmp.path().join("run.json");
    fs::write(&config, RUN_CONFIG).unwrap();
    let run = rupture(&["run", "--corpus", s(&corpus), "--config", s(&config), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!tmp.path().join("o").join("folds.jsonl").exists());
}

#[test]
fn missing_corpus_is_a_runtime_error() {
    let out = rupture(&["validate", "--corpus", "/nonexistent/corpus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_records_checkpoints_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    synth(&corpus, "2");
    let config = tmp.path().join("run.json");
    fs::write(&config, RUN_CONFIG).unwrap();
    let out_dir = tmp.path().join("out");
    let out = rupture(&["run", "--corpus", s(&corpus), "--config", s(&config), "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let records = read_fold_records(out_dir.join("folds.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    for r in &records {
        let FoldRecord::Completed(f) = r else { panic!("fold skipped") };
        assert!(f.test_size > 0);
        let ck = out_dir.join("checkpoints").join(format!("c000_{}.ckpt", f.participant_id));
        let loaded = rupture::checkpoint::Checkpoint::load(&ck).unwrap();
        assert_eq!(format!("{:016x}", loaded.checksum()), f.checkpoint_checksum);
    }
    let rows = parse_report_csv(&fs::read_to_string(out_dir.join("report.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].cells[0], "GRU");
    assert_eq!(rows[0].cells[3], "PCA");
    assert!(rows[0].best);
    assert!(fs::read_to_string(out_dir.join("report.md")).unwrap().contains("| *Error Detection* |"));

    let csv = rupture(&["report", "--in", s(&out_dir), "--format", "csv"]);
    assert!(csv.status.success());
    assert_eq!(String::from_utf8_lossy(&csv.stdout), fs::read_to_string(out_dir.join("report.csv")).unwrap());
}

#[test]
fn run_rejects_a_grid_config() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    synth(&corpus, "1");
    let config = tmp.path().join("grid.json");
    fs::write(&config, r#"{"cell": ["lstm", "gru"], "epochs": 1}"#).unwrap();
    let out = rupture(&["run", "--corpus", s(&corpus), "--config", s(&config), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("use `grid`"));
}

#[test]
fn interrupted_grid_resumes_from_records() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    synth(&corpus, "2");
    let config = tmp.path().join("grid.json");
    fs::write(
        &config,
        r#"{"scheme": "successive_discrimination", "cell": ["lstm", "gru"], "modalities": ["audio"], "hidden": 4, "epochs": 2}"#,
    )
    .unwrap();
    let full = tmp.path().join("full");
    assert!(rupture(&["grid", "--corpus", s(&corpus), "--config", s(&config), "--out", s(&full)]).status.success());
    let records = fs::read_to_string(full.join("folds.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 4);

    // Keep only the first record, as if the run had been interrupted.
    let partial = tmp.path().join("partial");
    fs::create_dir_all(&partial).unwrap();
    let first = records.lines().next().unwrap();
    let mut forged: serde_json::Value = serde_json::from_str(first).unwrap();
    forged["wall_time_s"] = serde_json::json!(-1.0);
    fs::write(partial.join("folds.jsonl"), format!("{forged}\n")).unwrap();
    assert!(rupture(&["grid", "--corpus", s(&corpus), "--config", s(&config), "--out", s(&partial)]).status.success());

    let resumed = read_fold_records(partial.join("folds.jsonl")).unwrap();
    assert_eq!(resumed.len(), 4);
    // The preserved record was reused rather than retrained.
    let FoldRecord::Completed(f) = &resumed[0] else { panic!() };
    assert_eq!(f.wall_time_s, -1.0);
    assert_eq!(
        fs::read(full.join("report.csv")).unwrap(),
        fs::read(partial.join("report.csv")).unwrap()
    );
}
