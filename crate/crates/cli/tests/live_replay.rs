//! Live/replay equivalence: a live run recorded to a fixture and re-run
//! in replay mode reproduces the same records and report.

use std::path::Path;
use std::process::Command;

use handoff_core::gateway::stub::StubServer;
use handoff_core::report::parse_run_report;

fn handoff(args: &[&str]) -> (bool, String, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_handoff"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn handoff");
    (
        output.status.success(),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn record_bytes(run_dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(run_dir.join("records")).expect("records dir") {
        let path = entry.expect("entry").path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).expect("bytes"),
            ));
        }
    }
    files.sort();
    files
}

#[test]
fn recorded_live_run_replays_identically() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let templates_dir = root.join("config/templates").canonicalize().unwrap();
    let tmp = tempfile::tempdir().unwrap();

    let think_server = StubServer::with_handler(
        vec![],
        Box::new(|req, _i| {
            // Trace content depends on the request so traces differ per
            // problem.
            let digest = handoff_core::canon::digest_str(&req.to_string());
            format!("<think>outline {}</think>", &digest[7..15])
        }),
    );
    let answer_server = StubServer::with_handler(
        vec![],
        Box::new(|_req, _i| "<answer>\\boxed{11}</answer>".to_string()),
    );

    let problems_path = tmp.path().join("probs.jsonl");
    let mut lines = String::new();
    for i in 1..=6 {
        let gold = if i <= 4 { 11 } else { 12 };
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "id": format!("lr-{i:02}"),
                "set_name": "live_replay",
                "task_kind": "math",
                "statement": format!("Problem {i}: find the fixed value."),
                "gold": {"value": gold.to_string(), "convention": "gsm8k_numeric"}
            })
        ));
    }
    std::fs::write(&problems_path, lines).unwrap();

    let templates = serde_json::json!({
        "think_math": templates_dir.join("think_math.json"),
        "think_code": templates_dir.join("think_code.json"),
        "answer_math": templates_dir.join("answer_math.json"),
        "answer_code": templates_dir.join("answer_code.json")
    });
    let live_config_path = tmp.path().join("live.json");
    std::fs::write(
        &live_config_path,
        serde_json::json!({
            "backends": [
                {"id": "nar", "kind": "http", "endpoint": think_server.url(), "model_name": "nar-sim"},
                {"id": "ar", "kind": "http", "endpoint": answer_server.url(), "model_name": "ar-sim"}
            ],
            "templates": templates
        })
        .to_string(),
    )
    .unwrap();

    // Live run against the stubs.
    let live_dir = tmp.path().join("live_run");
    let (ok, _, stderr) = handoff(&[
        "run",
        "--config",
        live_config_path.to_str().unwrap(),
        "--variant",
        "nar_ar",
        "--run-dir",
        live_dir.to_str().unwrap(),
        "--problems",
        problems_path.to_str().unwrap(),
    ]);
    assert!(ok, "live run failed: {stderr}");

    // Record the transcript into one fixture; keys embed the backend id,
    // so both replay backends can share the file.
    let fixture_path = tmp.path().join("recorded.jsonl");
    let (ok, stdout, stderr) = handoff(&[
        "record-fixture",
        live_dir.join("transcript.log").to_str().unwrap(),
        fixture_path.to_str().unwrap(),
    ]);
    assert!(ok, "record-fixture failed: {stderr}");
    assert!(stdout.contains("12 entries"), "{stdout}");

    let replay_config_path = tmp.path().join("replay.json");
    std::fs::write(
        &replay_config_path,
        serde_json::json!({
            "backends": [
                {"id": "nar", "kind": "replay", "fixture_path": fixture_path},
                {"id": "ar", "kind": "replay", "fixture_path": fixture_path}
            ],
            "templates": templates
        })
        .to_string(),
    )
    .unwrap();

    let replay_dir = tmp.path().join("replay_run");
    let (ok, _, stderr) = handoff(&[
        "run",
        "--config",
        replay_config_path.to_str().unwrap(),
        "--variant",
        "nar_ar",
        "--run-dir",
        replay_dir.to_str().unwrap(),
        "--problems",
        problems_path.to_str().unwrap(),
    ]);
    assert!(ok, "replay run failed: {stderr}");

    // Records reproduce byte for byte, latencies included (the fixture
    // carries the live run's recorded values).
    assert_eq!(record_bytes(&live_dir), record_bytes(&replay_dir));

    // Reports agree on everything except the manifest digest, which
    // legitimately differs because the backend config differs.
    let report_for = |dir: &Path| {
        let (ok, stdout, stderr) = handoff(&[
            "report",
            "--run-dir",
            dir.to_str().unwrap(),
            "--format",
            "json",
            "--problems",
            problems_path.to_str().unwrap(),
        ]);
        assert!(ok, "report failed: {stderr}");
        parse_run_report(&stdout).expect("report JSON")
    };
    let mut live_report = report_for(&live_dir);
    let mut replay_report = report_for(&replay_dir);
    assert_ne!(live_report.manifest_digest, replay_report.manifest_digest);
    live_report.manifest_digest.clear();
    replay_report.manifest_digest.clear();
    assert_eq!(live_report, replay_report);
}
