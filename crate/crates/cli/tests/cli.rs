//! End-to-end tests of the `cbu` binary: help output, exit-code taxonomy,
//! and a small scoring run against the scripted mock backend.

use std::path::{Path, PathBuf};
use std::process::Command;

fn cbu() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbu"))
}

fn write_dataset(dir: &Path) {
    let problems = r#"{"id":"p1","group_id":"g1","statement":"question one [q1]","gold_answer":"35","neighborhoods":[{"id":"p1-n1","statement":"variant one of q1","gold_answer":"35"},{"id":"p1-n2","statement":"variant two of q1","gold_answer":"35"}]}
{"id":"p2","group_id":"g1","statement":"question two [q2]","gold_answer":"12","neighborhoods":[{"id":"p2-n1","statement":"variant one of q2","gold_answer":"35"},{"id":"p2-n2","statement":"variant two of q2","gold_answer":"35"}]}
"#;
    let mut candidates = String::new();
    for problem in ["p1", "p2"] {
        for i in 0..2 {
            candidates.push_str(&format!(
                "{{\"id\":\"{problem}-c{i}\",\"problem_id\":\"{problem}\",\"source\":\"llm\",\"label\":\"correct\",\"solution_text\":\"a [good] solution {i} for {problem}\"}}\n"
            ));
        }
        for i in 2..5 {
            candidates.push_str(&format!(
                "{{\"id\":\"{problem}-c{i}\",\"problem_id\":\"{problem}\",\"source\":\"llm\",\"label\":\"wrong\",\"solution_text\":\"a flawed solution {i} for {problem}\"}}\n"
            ));
        }
        candidates.push_str(&format!(
            "{{\"id\":\"{problem}-h\",\"problem_id\":\"{problem}\",\"source\":\"human\",\"label\":\"correct\",\"solution_text\":\"an expert [good] writeup for {problem}\"}}\n"
        ));
    }
    std::fs::write(dir.join("problems.jsonl"), problems).unwrap();
    std::fs::write(dir.join("candidates.jsonl"), candidates).unwrap();
}

fn write_backend(dir: &Path) -> PathBuf {
    let path = dir.join("backend.json");
    std::fs::write(
        &path,
        r#"{
  "kind": "mock",
  "backend_id": "mock-main",
  "max_in_flight": 8,
  "script": {
    "rules": [
      {"matcher": "[good]", "success_prob": 0.9,
       "correct_completion": "reasoning... \\boxed{35}", "wrong_completion": "\\boxed{0}"},
      {"matcher": "", "success_prob": 0.15,
       "correct_completion": "reasoning... \\boxed{35}", "wrong_completion": "\\boxed{0}"}
    ],
    "seed": 11
  }
}"#,
    )
    .unwrap();
    path
}

#[test]
fn help_matches_golden() {
    let output = cbu().arg("--help").output().unwrap();
    assert!(output.status.success());
    let rendered = String::from_utf8(output.stdout).unwrap();

    let golden_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/help.golden.txt");
    if std::env::var_os("CBU_REGEN_GOLDENS").is_some() {
        std::fs::create_dir_all(golden_path.parent().unwrap()).unwrap();
        std::fs::write(&golden_path, &rendered).unwrap();
    }
    let golden = std::fs::read_to_string(&golden_path).expect("help golden present");
    assert_eq!(rendered, golden, "--help drifted from tests/data/help.golden.txt");

    for flag in [
        "--config",
        "--dataset",
        "--backend",
        "--T",
        "--scheme",
        "--seed",
        "--out",
        "--strict-pool",
        "--tie-mode",
        "--bootstrap-mode",
        "--probe-protocol",
        "--human-policy",
    ] {
        assert!(rendered.contains(flag), "help is missing {flag}");
    }
}

#[test]
fn missing_config_file_exits_2() {
    let output = cbu()
        .args(["--config", "/nonexistent/run.conf", "ingest"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_dataset_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("problems.jsonl"), "this is not json\n").unwrap();
    std::fs::write(dir.path().join("candidates.jsonl"), "").unwrap();
    let output = cbu()
        .args(["--dataset"])
        .arg(dir.path())
        .args(["--out"])
        .arg(dir.path().join("out"))
        .arg("ingest")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn unknown_backend_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let output = cbu()
        .args(["--dataset"])
        .arg(dir.path())
        .args(["--backend", "/nonexistent/backend.json"])
        .args(["--out"])
        .arg(dir.path().join("out"))
        .args(["score-cbu", "--T", "2"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn score_then_metrics_produces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let backend = write_backend(dir.path());
    let out = dir.path().join("out");

    let status = cbu()
        .args(["--dataset"])
        .arg(dir.path())
        .args(["--backend"])
        .arg(&backend)
        .args(["--out"])
        .arg(&out)
        .args(["--T", "8", "--seed", "7"])
        .arg("score-cbu")
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["scores.jsonl", "rollouts.jsonl", "rollout_index.jsonl", "cache.jsonl", "manifest.json"] {
        assert!(out.join(file).exists(), "missing {file}");
    }

    let status = cbu()
        .args(["--dataset"])
        .arg(dir.path())
        .args(["--out"])
        .arg(&out)
        .arg("metrics")
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "cbu");
    assert!(report["questions"]["p1"]["auc"]["value"].is_number());

    // Bootstrap over the recorded rollouts emits one point per subsample size.
    let status = cbu()
        .args(["--out"])
        .arg(&out)
        .args(["--seed", "7", "bootstrap"])
        .status()
        .unwrap();
    assert!(status.success());
    let curve: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("error_curve.json")).unwrap())
            .unwrap();
    assert_eq!(curve["curves"]["cbu"]["points"].as_array().unwrap().len(), 5);
}

#[test]
fn judge_scoring_works_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let backend = dir.path().join("judge_backend.json");
    std::fs::write(
        &backend,
        r#"{
  "kind": "mock",
  "backend_id": "mock-judge",
  "script": {
    "rules": [
      {"matcher": "[good]", "success_prob": 1.0,
       "correct_completion": "Summary: solid\n\nScore: 9", "wrong_completion": "Score: 2"},
      {"matcher": "", "success_prob": 0.0,
       "correct_completion": "Score: 9", "wrong_completion": "Summary: weak\n\nScore: 3"}
    ],
    "seed": 5
  }
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");

    let status = cbu()
        .args(["--dataset"])
        .arg(dir.path())
        .args(["--backend"])
        .arg(&backend)
        .args(["--out"])
        .arg(&out)
        .args(["--T", "4", "--scheme", "ten-point", "--seed", "1"])
        .arg("score-judge")
        .status()
        .unwrap();
    assert!(status.success());

    let scores = std::fs::read_to_string(out.join("scores.jsonl")).unwrap();
    assert!(scores.lines().count() > 0);
    assert!(scores.contains("\"method\":\"judge\""));
}
