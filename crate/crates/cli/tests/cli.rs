//! CLI surface checks: exit codes, error categories, formats, sampling.

use std::path::{Path, PathBuf};
use std::process::Command;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn handoff(args: &[&str]) -> (Option<i32>, String, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_handoff"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn handoff");
    (
        output.status.code(),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn demo_problems() -> Vec<String> {
    let root = repo_root();
    [
        "problems/aime_demo.jsonl",
        "problems/gsm8k_demo.jsonl",
        "problems/leetcode_demo.jsonl",
    ]
    .iter()
    .map(|p| root.join("fixtures").join(p).to_string_lossy().into_owned())
    .collect()
}

#[test]
fn unknown_variant_exits_2_with_usage_category() {
    let root = repo_root();
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, stderr) = handoff(&[
        "run",
        "--config",
        root.join("fixtures/config/demo.json").to_str().unwrap(),
        "--variant",
        "zigzag",
        "--run-dir",
        tmp.path().join("r").to_str().unwrap(),
        "--problems",
        root.join("fixtures/problems/gsm8k_demo.jsonl")
            .to_str()
            .unwrap(),
    ]);
    assert_eq!(code, Some(2));
    assert!(stderr.starts_with("error[usage]:"), "{stderr}");
}

#[test]
fn missing_config_exits_2() {
    let root = repo_root();
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, stderr) = handoff(&[
        "run",
        "--config",
        "/nonexistent/config.json",
        "--variant",
        "nar_ar",
        "--run-dir",
        tmp.path().join("r").to_str().unwrap(),
        "--problems",
        root.join("fixtures/problems/gsm8k_demo.jsonl")
            .to_str()
            .unwrap(),
    ]);
    assert_eq!(code, Some(2));
    assert!(stderr.starts_with("error[config]:"), "{stderr}");
}

#[test]
fn validate_flags_bad_corpus_with_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.jsonl");
    std::fs::write(
        &path,
        concat!(
            r#"{"id":"x1","set_name":"bad","task_kind":"math","statement":"q","gold":{"value":"1200","convention":"aime_integer"}}"#,
            "\n",
            r#"{"id":"x2","set_name":"bad","task_kind":"code","statement":"q","gold":{"tests":[],"limits":{}}}"#,
            "\n"
        ),
    )
    .unwrap();
    let (code, stdout, stderr) = handoff(&["validate", "--problems", path.to_str().unwrap()]);
    assert_eq!(code, Some(3));
    assert!(stdout.contains("out of range"), "{stdout}");
    assert!(stdout.contains("empty test suite"), "{stdout}");
    // The error itself stays a single machine-parseable line.
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error[data]:"), "{stderr}");
}

#[test]
fn validate_clean_corpus_exits_0() {
    let root = repo_root();
    let (code, stdout, _) = handoff(&[
        "validate",
        "--problems",
        root.join("fixtures/problems/aime_pool.jsonl")
            .to_str()
            .unwrap(),
    ]);
    assert_eq!(code, Some(0));
    assert!(stdout.contains("clean (30 problems)"), "{stdout}");
}

#[test]
fn compare_with_mismatched_totals_lists_differences() {
    let root = repo_root();
    let tmp = tempfile::tempdir().unwrap();
    // Clone the shipped run dir, then drop two records so totals differ.
    let shipped = root.join("fixtures/runs/nar_ar");
    let clone = tmp.path().join("truncated");
    std::fs::create_dir_all(clone.join("records")).unwrap();
    std::fs::copy(shipped.join("manifest.json"), clone.join("manifest.json")).unwrap();
    for entry in std::fs::read_dir(shipped.join("records")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.starts_with("gsm-q01") || name.starts_with("gsm-q02") {
            continue;
        }
        std::fs::copy(&path, clone.join("records").join(&name)).unwrap();
    }
    let problems = demo_problems();
    let mut args = vec![
        "compare",
        "--run-a",
        shipped.to_str().unwrap(),
        "--run-b",
        clone.to_str().unwrap(),
        "--problems",
    ];
    let refs: Vec<&str> = problems.iter().map(String::as_str).collect();
    args.extend(&refs);
    let (code, _, stderr) = handoff(&args);
    assert_eq!(code, Some(2));
    assert!(stderr.contains("gsm8k_demo"), "{stderr}");
    assert!(stderr.contains("10 items vs 8"), "{stderr}");
}

#[test]
fn markdown_report_round_trips_through_a_table_parser() {
    let root = repo_root();
    let problems = demo_problems();
    let run_dir = root.join("fixtures/runs/nar_ar");
    let mut args = vec![
        "report",
        "--run-dir",
        run_dir.to_str().unwrap(),
        "--format",
        "markdown",
        "--problems",
    ];
    let refs: Vec<&str> = problems.iter().map(String::as_str).collect();
    args.extend(&refs);
    let (code, stdout, _) = handoff(&args);
    assert_eq!(code, Some(0));

    // Minimal pipe-table parser: header row, separator, data rows.
    let table_lines: Vec<&str> = stdout.lines().take_while(|l| l.starts_with('|')).collect();
    assert!(table_lines.len() >= 3, "{stdout}");
    let parse_row = |line: &str| -> Vec<String> {
        line.trim()
            .trim_matches('|')
            .split('|')
            .map(|cell| cell.trim().to_string())
            .collect()
    };
    let header = parse_row(table_lines[0]);
    let separator = parse_row(table_lines[1]);
    let data = parse_row(table_lines[2]);
    assert_eq!(header.len(), data.len());
    assert_eq!(header.len(), separator.len());
    assert!(separator.iter().all(|cell| cell.chars().all(|c| c == '-')));
    assert_eq!(header[0], "variant");
    assert_eq!(*header.last().unwrap(), "average");
    assert_eq!(data[0], "nar_ar");
    assert_eq!(*data.last().unwrap(), "78%");
}

#[test]
fn grade_is_idempotent_on_a_copied_run() {
    let root = repo_root();
    let tmp = tempfile::tempdir().unwrap();
    let shipped = root.join("fixtures/runs/nar_nar");
    let clone = tmp.path().join("clone");
    std::fs::create_dir_all(clone.join("records")).unwrap();
    std::fs::copy(shipped.join("manifest.json"), clone.join("manifest.json")).unwrap();
    for entry in std::fs::read_dir(shipped.join("records")).unwrap() {
        let path = entry.unwrap().path();
        std::fs::copy(&path, clone.join("records").join(path.file_name().unwrap())).unwrap();
    }
    let problems = demo_problems();
    let refs: Vec<&str> = problems.iter().map(String::as_str).collect();
    let config = root.join("fixtures/config/demo.json");
    let grade = || {
        let mut args = vec![
            "grade",
            "--config",
            config.to_str().unwrap(),
            "--run-dir",
            clone.to_str().unwrap(),
            "--problems",
        ];
        args.extend(&refs);
        handoff(&args)
    };
    let (code, stdout, stderr) = grade();
    assert_eq!(code, Some(0), "{stderr}");
    assert_eq!(stdout.trim(), "0 changed verdicts");
    let (code, stdout, _) = grade();
    assert_eq!(code, Some(0));
    assert_eq!(stdout.trim(), "0 changed verdicts");
}

#[test]
fn run_with_sampling_selects_the_pinned_subset() {
    let root = repo_root();
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("sampled");
    // The demo fixtures cover every aime_demo problem, so any sampled
    // subset replays cleanly.
    let (code, stdout, stderr) = handoff(&[
        "run",
        "--config",
        root.join("fixtures/config/demo.json").to_str().unwrap(),
        "--variant",
        "nar_ar",
        "--sample",
        "5",
        "--seed",
        "3",
        "--run-dir",
        run_dir.to_str().unwrap(),
        "--problems",
        root.join("fixtures/problems/aime_demo.jsonl")
            .to_str()
            .unwrap(),
    ]);
    assert_eq!(code, Some(0), "{stderr}");
    assert!(stdout.contains("variant aime_demo average"), "{stdout}");
    let records = std::fs::read_dir(run_dir.join("records")).unwrap().count();
    assert_eq!(records, 5);
    // Same seed, fresh dir: identical subset.
    let rerun_dir = tmp.path().join("sampled2");
    let (code, _, _) = handoff(&[
        "run",
        "--config",
        root.join("fixtures/config/demo.json").to_str().unwrap(),
        "--variant",
        "nar_ar",
        "--sample",
        "5",
        "--seed",
        "3",
        "--run-dir",
        rerun_dir.to_str().unwrap(),
        "--problems",
        root.join("fixtures/problems/aime_demo.jsonl")
            .to_str()
            .unwrap(),
    ]);
    assert_eq!(code, Some(0));
    let names = |dir: &Path| {
        let mut v: Vec<String> = std::fs::read_dir(dir.join("records"))
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    };
    assert_eq!(names(&run_dir), names(&rerun_dir));

    // A different seed into the same dir invalidates the cached subset
    // instead of mixing two samples.
    let (code, _, _) = handoff(&[
        "run",
        "--config",
        root.join("fixtures/config/demo.json").to_str().unwrap(),
        "--variant",
        "nar_ar",
        "--sample",
        "5",
        "--seed",
        "4",
        "--run-dir",
        run_dir.to_str().unwrap(),
        "--problems",
        root.join("fixtures/problems/aime_demo.jsonl")
            .to_str()
            .unwrap(),
    ]);
    assert_eq!(code, Some(0));
    assert_eq!(
        std::fs::read_dir(run_dir.join("records")).unwrap().count(),
        5,
        "stale sample records must be invalidated"
    );
    assert_ne!(names(&run_dir), names(&rerun_dir));
}

#[test]
fn json_report_matches_frozen_golden_bytes() {
    let root = repo_root();
    let problems = demo_problems();
    let run_dir = root.join("fixtures/runs/nar_ar");
    let mut args = vec![
        "report",
        "--run-dir",
        run_dir.to_str().unwrap(),
        "--format",
        "json",
        "--problems",
    ];
    let refs: Vec<&str> = problems.iter().map(String::as_str).collect();
    args.extend(&refs);
    let (code, stdout, _) = handoff(&args);
    assert_eq!(code, Some(0));
    assert_eq!(
        stdout,
        include_str!("data/report_nar_ar.json"),
        "JSON report drifted from the frozen golden"
    );
    // And reading it back is lossless.
    let parsed = handoff_core::report::parse_run_report(&stdout).unwrap();
    assert_eq!(parsed.micro_average.percent_string(0), "78");
}

#[test]
fn record_fixture_missing_transcript_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, stderr) = handoff(&[
        "record-fixture",
        "/nonexistent/transcript.log",
        tmp.path().join("out.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(code, Some(3));
    assert!(stderr.starts_with("error[io]:"), "{stderr}");
}
