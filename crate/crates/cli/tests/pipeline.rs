//! Full-pipeline integration: solvability rollouts, utility and judge
//! scoring into one run directory, metrics, bootstrap over both methods,
//! probes over joint features, curation, audits, and report assembly.

use std::path::{Path, PathBuf};

use cbu_cli::{ops, Overrides, ResolvedConfig};

fn write_dataset(dir: &Path, problems: usize) {
    let mut problem_lines = String::new();
    let mut candidate_lines = String::new();
    for p in 0..problems {
        problem_lines.push_str(&format!(
            "{{\"id\":\"p{p}\",\"group_id\":\"g{}\",\"statement\":\"question {p} [hardness:{}]\",\"gold_answer\":\"35\",\"neighborhoods\":[\
             {{\"id\":\"p{p}-n0\",\"statement\":\"variant 0 of question {p}\",\"gold_answer\":\"35\"}},\
             {{\"id\":\"p{p}-n1\",\"statement\":\"variant 1 of question {p}\",\"gold_answer\":\"35\"}}]}}\n",
            p / 2,
            p % 2
        ));
        for c in 0..2 {
            candidate_lines.push_str(&format!(
                "{{\"id\":\"p{p}-c{c}\",\"problem_id\":\"p{p}\",\"source\":\"llm\",\"label\":\"correct\",\"solution_text\":\"[exemplar:good] derivation {c} for {p}\"}}\n"
            ));
        }
        for c in 2..5 {
            candidate_lines.push_str(&format!(
                "{{\"id\":\"p{p}-c{c}\",\"problem_id\":\"p{p}\",\"source\":\"llm\",\"label\":\"wrong\",\"solution_text\":\"flawed derivation {c} for {p}\"}}\n"
            ));
        }
        candidate_lines.push_str(&format!(
            "{{\"id\":\"p{p}-h\",\"problem_id\":\"p{p}\",\"source\":\"human\",\"label\":\"correct\",\"solution_text\":\"[exemplar:good] expert sketch for {p}\"}}\n"
        ));
    }
    std::fs::write(dir.join("problems.jsonl"), problem_lines).unwrap();
    std::fs::write(dir.join("candidates.jsonl"), candidate_lines).unwrap();
}

/// Good exemplars make variants mostly solvable; the judge prompt contains
/// the candidate text too, so the same marker drives judge scores apart.
fn write_backend(path: &Path) {
    let spec = serde_json::json!({
        "kind": "mock",
        "backend_id": "mock-pipeline",
        "max_in_flight": 8,
        "script": {
            "rules": [
                {"matcher": "Score: <integer from 1 to 10>", "success_prob": 0.0,
                 "correct_completion": "unused",
                 "wrong_completion": "judged below"},
                {"matcher": "[exemplar:good]", "success_prob": 0.9,
                 "correct_completion": "so \\boxed{35}",
                 "wrong_completion": "so \\boxed{0}"},
                {"matcher": "", "success_prob": 0.2,
                 "correct_completion": "so \\boxed{35}",
                 "wrong_completion": "so \\boxed{0}"}
            ],
            "seed": 41
        }
    });
    std::fs::write(path, serde_json::to_string(&spec).unwrap()).unwrap();
}

/// Judge mock: high scores when the prompt carries the good-exemplar
/// marker, low otherwise.
fn write_judge_backend(path: &Path) {
    let spec = serde_json::json!({
        "kind": "mock",
        "backend_id": "mock-pipeline-judge",
        "max_in_flight": 8,
        "script": {
            "rules": [
                {"matcher": "[exemplar:good]", "success_prob": 0.8,
                 "correct_completion": "Summary: strong\n\nScore: 9",
                 "wrong_completion": "Summary: okay\n\nScore: 6"},
                {"matcher": "", "success_prob": 0.7,
                 "correct_completion": "Summary: weak\n\nScore: 3",
                 "wrong_completion": "Summary: partial\n\nScore: 5"}
            ],
            "seed": 43
        }
    });
    std::fs::write(path, serde_json::to_string(&spec).unwrap()).unwrap();
}

fn config(dir: &Path, backend: &Path, out: &Path, t: u32) -> ResolvedConfig {
    cbu_cli::resolve(&Overrides {
        dataset: Some(dir.to_path_buf()),
        backend: Some(backend.to_path_buf()),
        out: Some(out.to_path_buf()),
        t: Some(t),
        seed: Some(9),
        ..Default::default()
    })
    .unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn full_pipeline_over_one_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 6);
    let backend = dir.path().join("backend.json");
    write_backend(&backend);
    let judge_backend = dir.path().join("judge_backend.json");
    write_judge_backend(&judge_backend);
    let out = dir.path().join("out");

    // Ingest validates and normalizes.
    let cfg = config(dir.path(), &backend, &out, 8);
    let ingest = ops::ingest(&cfg).unwrap();
    assert_eq!(ingest.problems, 6);
    assert_eq!(ingest.groups, 3);

    // Bare-attempt solvability.
    let summary = ops::rollout_solvability(&cfg).await.unwrap();
    assert_eq!(summary.problems, 6);
    let store = cbu_store::RunStore::open(&out).unwrap();
    let solvability = store.load_solvability().unwrap();
    assert_eq!(solvability.len(), 6);
    assert!(solvability.iter().all(|s| s.k == 8));

    // Utility scoring, then judge scoring into the same directory.
    let summary = ops::score_cbu(&cfg).await.unwrap();
    assert_eq!(summary.candidates_scored, 36);
    let judge_cfg = config(dir.path(), &judge_backend, &out, 8);
    let summary = ops::score_judge(&judge_cfg).await.unwrap();
    assert_eq!(summary.candidates_scored, 36);

    let scores = store.load_scores().unwrap();
    let cbu_count = scores
        .iter()
        .filter(|s| s.method == cbu_core::model::Method::Cbu)
        .count();
    let judge_count = scores
        .iter()
        .filter(|s| s.method == cbu_core::model::Method::Judge)
        .count();
    assert_eq!((cbu_count, judge_count), (36, 36));

    // Re-running utility scoring replaces its rows and leaves judge rows.
    let rerun = ops::score_cbu(&cfg).await.unwrap();
    assert_eq!(rerun.gateway_calls, 0, "warm cache should satisfy the rerun");
    let scores_after = store.load_scores().unwrap();
    assert_eq!(scores_after.len(), scores.len());

    // Metrics require a method choice now that two are present.
    let err = ops::metrics(&cfg).unwrap_err();
    assert!(matches!(err, cbu_cli::CliError::Data(_)));
    let mut method_cfg = cfg.clone();
    method_cfg.method = Some(cbu_core::model::Method::Cbu);
    let report = ops::metrics(&method_cfg).unwrap();
    assert_eq!(report.questions.len(), 6);
    assert_eq!(report.groups.len(), 3);
    assert!(report.overall.auc.value().unwrap() > 0.8);
    assert!(report.overall.human_win.value().is_some());

    // Bootstrap sees both unit kinds.
    let curve = ops::bootstrap(&method_cfg).unwrap();
    assert!(curve.curves.contains_key("cbu"));
    assert!(curve.curves.contains_key("judge"));
    assert_eq!(curve.curves["cbu"].points.len(), 5);

    // Probe rows: cbu, judge, and the joint configuration.
    let probe = ops::regress(&method_cfg).unwrap();
    let feature_sets: Vec<String> = probe.rows.iter().map(|r| r.features.join("+")).collect();
    assert!(feature_sets.contains(&"cbu".to_string()));
    assert!(feature_sets.contains(&"judge".to_string()));
    assert!(feature_sets.contains(&"judge+cbu".to_string()));
    for row in &probe.rows {
        assert!(row.kfold_accuracy.is_some());
        assert!((0.0..=1.0).contains(&row.in_sample_accuracy));
    }

    // Audit the wrong-labeled candidates with a strict-JSON mock.
    let audit_backend = dir.path().join("audit_backend.json");
    let spec = serde_json::json!({
        "kind": "mock",
        "backend_id": "mock-audit",
        "script": {
            "rules": [{
                "matcher": "", "success_prob": 1.0,
                "correct_completion": "{\"categories\": [{\"id\": 1, \"name\": \"Incorrect reasoning\", \"evidence\": [{\"quote\": \"flawed derivation\", \"analysis\": {\"claim\": \"c\", \"why_problematic\": \"w\", \"what_needed\": \"n\"}}]}]}",
                "wrong_completion": "unused"
            }],
            "seed": 47
        }
    });
    std::fs::write(&audit_backend, serde_json::to_string(&spec).unwrap()).unwrap();
    let audit_cfg = config(dir.path(), &audit_backend, &out, 1);
    let records = ops::audit(&audit_cfg).await.unwrap();
    assert_eq!(records.len(), 18);
    assert!(records.iter().all(|r| r.parse_error.is_none()));
    let tagged = records[0].categories.as_ref().unwrap();
    assert_eq!(tagged[0].id, 1);
    assert!(!tagged[0].evidence[0].quote_violation);

    // Report assembly folds in curves, probes, and score diagnostics.
    let report = ops::report(&method_cfg).unwrap();
    assert!(!report.error_curves.is_empty());
    assert!(!report.probe.is_empty());
    assert_eq!(report.above_average.len(), 3);
    let gap = report.score_gap.as_ref().expect("score gap present");
    assert!(!gap.bins.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn curation_pipeline_filters_monotonically() {
    let dir = tempfile::tempdir().unwrap();
    let questions = dir.path().join("questions.jsonl");

    // q-keep: solvable in band, unanimous big-integer answer.
    // q-easy: above the band. q-disagree: solvers disagree.
    // q-small: unanimous but answer below the floor.
    // q-estimate: no attached solvability; estimated through the backend.
    let lines = [
        r#"{"id":"q-keep","statement":"keep me [band]","proposed_answers":{"a":"2048","b":"2,048","c":"02048"},"solvability":{"question_id":"q-keep","k":1024,"successes":300,"avg_at_k":0.29296875}}"#,
        r#"{"id":"q-easy","statement":"too easy","proposed_answers":{"a":"4096","b":"4096","c":"4096"},"solvability":{"question_id":"q-easy","k":1024,"successes":900,"avg_at_k":0.87890625}}"#,
        r#"{"id":"q-disagree","statement":"contested [band]","proposed_answers":{"a":"1234","b":"1234","c":"1235"},"solvability":{"question_id":"q-disagree","k":1024,"successes":300,"avg_at_k":0.29296875}}"#,
        r#"{"id":"q-small","statement":"small answer [band]","proposed_answers":{"a":"35","b":"35","c":"35"},"solvability":{"question_id":"q-small","k":1024,"successes":300,"avg_at_k":0.29296875}}"#,
        r#"{"id":"q-estimate","statement":"estimate me [band]","proposed_answers":{"a":"5000","b":"5000","c":"5000"}}"#,
    ];
    std::fs::write(&questions, lines.join("\n") + "\n").unwrap();

    let backend = dir.path().join("backend.json");
    let spec = serde_json::json!({
        "kind": "mock",
        "backend_id": "mock-curate",
        "script": {
            "rules": [
                {"matcher": "[band]", "success_prob": 0.3,
                 "correct_completion": "\\boxed{5000}", "wrong_completion": "\\boxed{1}"},
                {"matcher": "", "success_prob": 0.9,
                 "correct_completion": "\\boxed{5000}", "wrong_completion": "\\boxed{1}"}
            ],
            "seed": 53
        }
    });
    std::fs::write(&backend, serde_json::to_string(&spec).unwrap()).unwrap();

    let out = dir.path().join("out");
    let cfg = cbu_cli::resolve(&Overrides {
        dataset: Some(questions),
        backend: Some(backend),
        out: Some(out.clone()),
        t: Some(64),
        seed: Some(13),
        ..Default::default()
    })
    .unwrap();

    let report = ops::curate(&cfg).await.unwrap();
    assert_eq!(report.input, 5);
    assert!(report.after_solvability <= report.input);
    assert!(report.after_band <= report.after_solvability);
    assert!(report.after_agreement <= report.after_band);
    assert!(report.after_floor <= report.after_agreement);
    assert!(report.dropped.contains_key("q-easy"));
    assert!(report.dropped.contains_key("q-disagree"));
    assert!(report.dropped.contains_key("q-small"));
    assert!(!report.dropped.contains_key("q-keep"));

    let curated: Vec<ops::CuratedQuestion> =
        cbu_store::read_jsonl(&out.join("curated.jsonl")).unwrap();
    let keep = curated.iter().find(|q| q.id == "q-keep").unwrap();
    assert_eq!(keep.gold_answer, "2048");

    // Idempotence: a second pass over the curated output keeps everything.
    let estimate_kept = curated.iter().any(|q| q.id == "q-estimate");
    for question in &curated {
        assert!(question.solvability.avg_at_k > 0.05 && question.solvability.avg_at_k < 0.5);
    }
    // The estimated question may fall in or out of the band depending on
    // the draw; when kept, its adopted answer passed the floor.
    if estimate_kept {
        let q = curated.iter().find(|q| q.id == "q-estimate").unwrap();
        assert_eq!(q.gold_answer, "5000");
    }
    let path = out.join("curation_report.json");
    assert!(path.exists());
}

#[test]
fn report_on_empty_directory_is_schema_valid() {
    let dir = tempfile::tempdir().unwrap();
    let out: PathBuf = dir.path().join("out");
    let cfg = cbu_cli::resolve(&Overrides {
        out: Some(out.clone()),
        ..Default::default()
    })
    .unwrap();
    let report = ops::report(&cfg).unwrap();
    assert!(report.questions.is_empty());
    assert!(out.join("report.json").exists());
    assert!(out.join("manifest.json").exists());
}
