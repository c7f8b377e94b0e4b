//! One function per subcommand. Every operation writes its artifacts into
//! the run directory plus a manifest describing the configuration, and is
//! resumable: rollout-producing operations consult the cache first, so a
//! rerun over a warm cache issues zero backend calls and converges to the
//! identical artifact set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use cbu_core::curation::{agreement_filter, band_filter, integer_floor_check, CandidateQuestion};
use cbu_core::metrics::{
    above_average_rate, aggregate, compute_metric_set, CandidateClass, LabeledScores, MetricSet,
    QuestionGapInput, ScoredEntry,
};
use cbu_core::model::{
    group_problems, validate_pool, validate_problem, Candidate, CandidatePool, Label, Method,
    Problem, ScoreRecord, Source,
};
use cbu_core::scoring::SolvabilityEstimate;
use cbu_core::stats::{
    bootstrap_error, fit_probe, probe_accuracy, ErrorCurve, ProbeProtocol, RolloutPool,
};
use cbu_core::verdict::AuditCategory;
use cbu_engine::BareQuestion;
use cbu_store::{
    export_json, read_jsonl, write_jsonl, EvaluationReport, ManifestFlags, ProbeRow, RunManifest,
    RunStore,
};

use crate::config::{build_engine, BackendSpec, ProbeProtocolChoice, ResolvedConfig};
use crate::error::CliError;

/// Links rollout records back to what they scored. One record per rendered
/// prompt (all rollout indices of that prompt share it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutIndexRecord {
    pub prompt_hash: String,
    pub kind: String,
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood_id: Option<String>,
    pub scale_low: f64,
    pub scale_high: f64,
}

/// One audited (question, solution) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub problem_id: String,
    pub candidate_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<AuditCategory>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

/// Counters returned by the scoring operations.
#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub problems: usize,
    pub candidates_scored: usize,
    pub missing_scores: usize,
    pub failed_rollouts: u64,
    pub gateway_calls: u64,
    pub skipped_problems: Vec<String>,
}

fn load_dataset(config: &ResolvedConfig) -> Result<(Vec<Problem>, Vec<Candidate>), CliError> {
    let dir = config.dataset_dir()?;
    let problems: Vec<Problem> = read_jsonl(&dir.join("problems.jsonl"))?;
    let candidates: Vec<Candidate> = read_jsonl(&dir.join("candidates.jsonl"))?;
    if problems.is_empty() {
        return Err(CliError::Data(format!(
            "no problems found in {}",
            dir.join("problems.jsonl").display()
        )));
    }
    Ok((problems, candidates))
}

fn pools_in_order(problems: &[Problem], candidates: &[Candidate]) -> Vec<CandidatePool> {
    let mut by_problem: BTreeMap<&str, Vec<Candidate>> = BTreeMap::new();
    for candidate in candidates {
        by_problem
            .entry(candidate.problem_id.as_str())
            .or_default()
            .push(candidate.clone());
    }
    problems
        .iter()
        .map(|problem| CandidatePool {
            problem_id: problem.id.clone(),
            candidates: by_problem.remove(problem.id.as_str()).unwrap_or_default(),
        })
        .collect()
}

/// Artifacts retained from previous runs in the same directory, with every
/// record produced by the kind being re-run stripped out. Scoring into one
/// directory accumulates methods (cbu + judge) while staying idempotent:
/// re-running a subcommand replaces exactly its own records.
struct RetainedArtifacts {
    scores: Vec<ScoreRecord>,
    rollouts: Vec<cbu_core::model::Rollout>,
    index: Vec<RolloutIndexRecord>,
}

fn load_retained(
    store: &RunStore,
    replace_kind: &str,
    replace_method: Option<Method>,
) -> Result<RetainedArtifacts, CliError> {
    let index: Vec<RolloutIndexRecord> = read_jsonl(&store.path("rollout_index.jsonl"))?;
    let (dropped, kept): (Vec<_>, Vec<_>) =
        index.into_iter().partition(|r| r.kind == replace_kind);
    let dropped_hashes: BTreeSet<String> = dropped.into_iter().map(|r| r.prompt_hash).collect();
    let rollouts = store
        .load_rollouts()?
        .into_iter()
        .filter(|r| !dropped_hashes.contains(&r.prompt_hash))
        .collect();
    let scores = store
        .load_scores()?
        .into_iter()
        .filter(|s| Some(s.method) != replace_method)
        .collect();
    Ok(RetainedArtifacts {
        scores,
        rollouts,
        index: kept,
    })
}

fn write_artifacts(store: &RunStore, artifacts: &RetainedArtifacts) -> Result<(), CliError> {
    write_jsonl(&store.path("scores.jsonl"), &artifacts.scores)?;
    write_jsonl(&store.path("rollouts.jsonl"), &artifacts.rollouts)?;
    write_jsonl(&store.path("rollout_index.jsonl"), &artifacts.index)?;
    Ok(())
}

fn manifest_flags(config: &ResolvedConfig) -> ManifestFlags {
    ManifestFlags {
        tie_mode: config.tie_mode.clone(),
        bootstrap_mode: match config.bootstrap_mode {
            cbu_core::stats::ResampleMode::WithReplacement => "replacement".to_string(),
            cbu_core::stats::ResampleMode::WithoutReplacement => "subsample".to_string(),
        },
        probe_protocol: config.probe_protocol.label(),
        strict_pool: config.strict_pool,
        human_policy: match config.human_policy {
            cbu_core::metrics::HumanPolicy::Exclude => "exclude".to_string(),
            cbu_core::metrics::HumanPolicy::Include => "include".to_string(),
        },
        boxed_literal: "single-brace".to_string(),
    }
}

fn write_manifest(
    store: &RunStore,
    config: &ResolvedConfig,
    subcommand: &str,
    backend: Option<&BackendSpec>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new(format!("{subcommand}-seed{}", config.seed), subcommand);
    manifest.t = Some(config.t);
    manifest.seeds.insert("run".to_string(), config.seed);
    manifest.flags = manifest_flags(config);
    manifest.dataset = config.dataset.as_ref().map(|p| p.display().to_string());
    if let Some(spec) = backend {
        manifest.backends.push(spec.describe());
    }
    store.write_manifest(&manifest)?;
    Ok(())
}

/// Validation report written by `ingest`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub problems: usize,
    pub candidates: usize,
    pub groups: usize,
    pub problem_violations: Vec<String>,
    pub pool_violations: BTreeMap<String, Vec<String>>,
}

/// Validate and normalize a dataset into the run directory.
pub fn ingest(config: &ResolvedConfig) -> Result<IngestReport, CliError> {
    let (problems, candidates) = load_dataset(config)?;
    let store = RunStore::open(&config.out)?;

    let mut problem_violations: Vec<String> = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for problem in &problems {
        for violation in validate_problem(problem) {
            problem_violations.push(violation.to_string());
        }
        if !seen_ids.insert(problem.id.as_str()) {
            problem_violations.push(format!("duplicate problem id {:?}", problem.id));
        }
    }

    let known_problems: BTreeSet<&str> = problems.iter().map(|p| p.id.as_str()).collect();
    for candidate in &candidates {
        if !known_problems.contains(candidate.problem_id.as_str()) {
            problem_violations.push(format!(
                "candidate {:?} references unknown problem {:?}",
                candidate.id, candidate.problem_id
            ));
        }
    }

    let mut pool_violations = BTreeMap::new();
    for pool in pools_in_order(&problems, &candidates) {
        if pool.candidates.is_empty() {
            continue;
        }
        let violations = validate_pool(&pool, config.strict_pool);
        if !violations.is_empty() {
            pool_violations.insert(
                pool.problem_id.clone(),
                violations.iter().map(|v| v.to_string()).collect(),
            );
        }
    }

    let groups = group_problems(&problems);
    let report = IngestReport {
        problems: problems.len(),
        candidates: candidates.len(),
        groups: groups.len(),
        problem_violations,
        pool_violations,
    };
    export_json(&report, &store.path("ingest_report.json"))?;
    store.write_problems(&problems)?;
    store.write_candidates(&candidates)?;
    write_manifest(&store, config, "ingest", None)?;

    if !report.problem_violations.is_empty() || !report.pool_violations.is_empty() {
        return Err(CliError::Data(format!(
            "dataset failed validation: {} problem violation(s), {} pool(s) with violations (see ingest_report.json)",
            report.problem_violations.len(),
            report.pool_violations.len()
        )));
    }
    Ok(report)
}

/// Bare-attempt solvability (avg@k) for every problem in the dataset.
pub async fn rollout_solvability(config: &ResolvedConfig) -> Result<RunSummary, CliError> {
    let (problems, _) = load_dataset(config)?;
    let store = RunStore::open(&config.out)?;
    let spec = BackendSpec::load(config.backend_path()?)?;
    let (mut engine, rollout_config) = build_engine(&spec, &store, config.seed)?;

    let mut artifacts = load_retained(&store, "bare", None)?;
    let mut estimates = Vec::new();
    let mut summary = RunSummary {
        problems: problems.len(),
        ..RunSummary::default()
    };

    for problem in &problems {
        let question = BareQuestion {
            id: problem.id.clone(),
            statement: problem.statement.clone(),
            gold_answer: problem.gold_answer.clone(),
        };
        let outcome = engine
            .estimate_solvability(&question, config.t, &rollout_config)
            .await?;
        summary.failed_rollouts += u64::from(outcome.failed_rollouts);
        artifacts.index.push(RolloutIndexRecord {
            prompt_hash: outcome.prompt_hash.clone(),
            kind: "bare".to_string(),
            problem_id: problem.id.clone(),
            candidate_id: None,
            neighborhood_id: None,
            scale_low: 0.0,
            scale_high: 1.0,
        });
        artifacts.rollouts.extend(outcome.rollouts);
        match outcome.estimate {
            Some(estimate) => estimates.push(estimate),
            None => summary.missing_scores += 1,
        }
    }

    store.write_solvability(&estimates)?;
    write_artifacts(&store, &artifacts)?;
    write_manifest(&store, config, "rollout", Some(&spec))?;
    summary.gateway_calls = engine.gateway().metrics().calls();
    if summary.missing_scores == summary.problems {
        return Err(CliError::Backend(
            "every solvability run failed at the backend".to_string(),
        ));
    }
    Ok(summary)
}

/// Utility-score every candidate via exemplar-conditioned rollouts.
pub async fn score_cbu(config: &ResolvedConfig) -> Result<RunSummary, CliError> {
    let (problems, candidates) = load_dataset(config)?;
    let store = RunStore::open(&config.out)?;
    let spec = BackendSpec::load(config.backend_path()?)?;
    let (mut engine, rollout_config) = build_engine(&spec, &store, config.seed)?;

    let mut artifacts = load_retained(&store, "cbu", Some(Method::Cbu))?;
    let mut summary = RunSummary::default();

    for (problem, pool) in problems.iter().zip(pools_in_order(&problems, &candidates)) {
        if problem.neighborhoods.is_empty() {
            log::warn!(
                "problem {:?} has no neighborhood questions; skipped for utility scoring",
                problem.id
            );
            summary.skipped_problems.push(problem.id.clone());
            continue;
        }
        summary.problems += 1;
        for candidate in &pool.candidates {
            let outcome = engine
                .score_cbu(problem, candidate, config.t, &rollout_config)
                .await?;
            summary.failed_rollouts += u64::from(outcome.failed_rollouts);
            for (neighborhood_id, prompt_hash) in &outcome.neighborhood_hashes {
                artifacts.index.push(RolloutIndexRecord {
                    prompt_hash: prompt_hash.clone(),
                    kind: "cbu".to_string(),
                    problem_id: problem.id.clone(),
                    candidate_id: Some(candidate.id.clone()),
                    neighborhood_id: Some(neighborhood_id.clone()),
                    scale_low: 0.0,
                    scale_high: 1.0,
                });
            }
            artifacts.rollouts.extend(outcome.rollouts);
            match outcome.estimate {
                Some(estimate) => {
                    artifacts.scores.push(estimate.to_score_record());
                    summary.candidates_scored += 1;
                }
                None => summary.missing_scores += 1,
            }
        }
    }

    write_artifacts(&store, &artifacts)?;
    write_manifest(&store, config, "score-cbu", Some(&spec))?;
    summary.gateway_calls = engine.gateway().metrics().calls();
    if summary.problems == 0 {
        return Err(CliError::Data(
            "no problem in the dataset has neighborhood questions".to_string(),
        ));
    }
    Ok(summary)
}

/// Judge-score every candidate under the configured scheme.
pub async fn score_judge(config: &ResolvedConfig) -> Result<RunSummary, CliError> {
    let (problems, candidates) = load_dataset(config)?;
    let store = RunStore::open(&config.out)?;
    let spec = BackendSpec::load(config.backend_path()?)?;
    let (mut engine, rollout_config) = build_engine(&spec, &store, config.seed)?;

    let mut artifacts = load_retained(&store, "judge", Some(Method::Judge))?;
    let mut summary = RunSummary::default();
    let (scale_low, scale_high) = config.scheme.scale();

    for (problem, pool) in problems.iter().zip(pools_in_order(&problems, &candidates)) {
        summary.problems += 1;
        for candidate in &pool.candidates {
            let outcome = engine
                .score_judge(problem, candidate, config.scheme, config.t, &rollout_config)
                .await?;
            summary.failed_rollouts += u64::from(outcome.failed_rollouts);
            artifacts.index.push(RolloutIndexRecord {
                prompt_hash: outcome.prompt_hash.clone(),
                kind: "judge".to_string(),
                problem_id: problem.id.clone(),
                candidate_id: Some(candidate.id.clone()),
                neighborhood_id: None,
                scale_low,
                scale_high,
            });
            artifacts.rollouts.extend(outcome.rollouts);
            match outcome.aggregate {
                Some(aggregate) => {
                    artifacts.scores.push(ScoreRecord {
                        candidate_id: candidate.id.clone(),
                        method: Method::Judge,
                        value: aggregate.value,
                        support: aggregate.support,
                        components: None,
                    });
                    summary.candidates_scored += 1;
                }
                None => summary.missing_scores += 1,
            }
        }
    }

    write_artifacts(&store, &artifacts)?;
    write_manifest(&store, config, "score-judge", Some(&spec))?;
    summary.gateway_calls = engine.gateway().metrics().calls();
    Ok(summary)
}

fn select_method(
    scores: &[ScoreRecord],
    requested: Option<Method>,
) -> Result<Method, CliError> {
    let present: BTreeSet<Method> = scores.iter().map(|s| s.method).collect();
    if let Some(method) = requested {
        if !present.contains(&method) {
            return Err(CliError::Data(format!(
                "no scores with method {method:?} in scores.jsonl"
            )));
        }
        return Ok(method);
    }
    match present.len() {
        0 => Err(CliError::Data("scores.jsonl is empty".to_string())),
        1 => Ok(present.into_iter().next().unwrap()),
        _ => Err(CliError::Data(
            "scores.jsonl mixes methods; set method = cbu|judge|genrm_adapter in the config file"
                .to_string(),
        )),
    }
}

fn method_name(method: Method) -> &'static str {
    match method {
        Method::Cbu => "cbu",
        Method::Judge => "judge",
        Method::GenrmAdapter => "genrm_adapter",
    }
}

/// Per-question labeled pools plus the questions skipped for having no
/// usable entries (with reasons).
type LabeledPools = (BTreeMap<String, LabeledScores>, BTreeMap<String, String>);

fn labeled_scores_per_question(
    problems: &[Problem],
    candidates: &[Candidate],
    scores: &[ScoreRecord],
    method: Method,
) -> Result<LabeledPools, CliError> {
    let mut by_candidate: BTreeMap<&str, f64> = BTreeMap::new();
    for score in scores.iter().filter(|s| s.method == method) {
        by_candidate.insert(score.candidate_id.as_str(), score.value);
    }

    let mut per_question = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for problem in problems {
        let mut entries = Vec::new();
        let mut unlabeled = 0usize;
        let mut unscored = 0usize;
        for candidate in candidates.iter().filter(|c| c.problem_id == problem.id) {
            let Some(label) = candidate.label else {
                unlabeled += 1;
                continue;
            };
            let Some(&score) = by_candidate.get(candidate.id.as_str()) else {
                unscored += 1;
                continue;
            };
            entries.push(ScoredEntry {
                candidate_id: candidate.id.clone(),
                score,
                label,
                is_human: candidate.source == Source::Human,
            });
        }
        if entries.is_empty() {
            skipped.insert(
                problem.id.clone(),
                format!("no usable entries ({unlabeled} unlabeled, {unscored} unscored)"),
            );
            continue;
        }
        let labeled = LabeledScores::new(entries)
            .map_err(|e| CliError::Data(format!("problem {:?}: {e}", problem.id)))?;
        per_question.insert(problem.id.clone(), labeled);
    }
    Ok((per_question, skipped))
}

/// Compute the five ranking metrics per question and aggregate over variant
/// groups.
pub fn metrics(config: &ResolvedConfig) -> Result<EvaluationReport, CliError> {
    let (problems, candidates) = load_dataset(config)?;
    let store = RunStore::open(&config.out)?;
    let scores = store.load_scores()?;
    let method = select_method(&scores, config.method)?;

    let (per_question_scores, skipped) =
        labeled_scores_per_question(&problems, &candidates, &scores, method)?;
    let per_question: BTreeMap<String, MetricSet> = per_question_scores
        .iter()
        .map(|(qid, scores)| (qid.clone(), compute_metric_set(scores, config.human_policy)))
        .collect();

    let groups = group_problems(&problems);
    let aggregated = aggregate(&per_question, &groups);

    let mut report = EvaluationReport::from_aggregated(per_question, aggregated);
    report.method = Some(method_name(method).to_string());
    report.human_policy = Some(manifest_flags(config).human_policy);
    report.skipped_questions = skipped;
    store.write_report(&report)?;
    write_manifest(&store, config, "metrics", None)?;
    Ok(report)
}

/// One candidate's unit scores with their scale bounds.
type UnitPool = (Vec<f64>, (f64, f64));

/// Error-curve document written by `bootstrap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurveDoc {
    pub schema: String,
    pub mode: String,
    pub seed: u64,
    pub resamples: usize,
    /// Aggregated (across candidates) mean error per subsample size, keyed
    /// by scoring method.
    pub curves: BTreeMap<String, ErrorCurve>,
    pub candidates_used: BTreeMap<String, usize>,
    pub candidates_skipped: BTreeMap<String, usize>,
}

/// Subsampling error curves from recorded rollouts.
pub fn bootstrap(config: &ResolvedConfig) -> Result<ErrorCurveDoc, CliError> {
    let store = RunStore::open(&config.out)?;
    let rollouts = store.load_rollouts()?;
    let index: Vec<RolloutIndexRecord> = read_jsonl(&store.path("rollout_index.jsonl"))?;
    if rollouts.is_empty() || index.is_empty() {
        return Err(CliError::Data(
            "no recorded rollouts; run score-cbu or score-judge first".to_string(),
        ));
    }

    // Unit pools per (kind, candidate): verdicts for utility rollouts,
    // parsed scores for judge rollouts.
    let by_hash: BTreeMap<&str, &RolloutIndexRecord> = index
        .iter()
        .map(|record| (record.prompt_hash.as_str(), record))
        .collect();
    let mut pools: BTreeMap<(String, String), UnitPool> = BTreeMap::new();
    for rollout in &rollouts {
        let Some(record) = by_hash.get(rollout.prompt_hash.as_str()) else {
            continue;
        };
        let Some(candidate_id) = &record.candidate_id else {
            continue;
        };
        let unit = match record.kind.as_str() {
            "cbu" => rollout.verdict.map(f64::from),
            "judge" => rollout.parsed_score,
            _ => None,
        };
        let Some(unit) = unit else { continue };
        pools
            .entry((record.kind.clone(), candidate_id.clone()))
            .or_insert_with(|| (Vec::new(), (record.scale_low, record.scale_high)))
            .0
            .push(unit);
    }
    if pools.is_empty() {
        return Err(CliError::Data("no usable unit scores in rollouts".to_string()));
    }

    let max_n = *config.bootstrap_n.iter().max().unwrap();
    let mut curves = BTreeMap::new();
    let mut used = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let mut per_kind: BTreeMap<String, Vec<UnitPool>> = BTreeMap::new();
    for ((kind, _candidate), pool) in pools {
        per_kind.entry(kind).or_default().push(pool);
    }

    for (kind, candidate_pools) in per_kind {
        let mut totals: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        let mut used_count = 0usize;
        let mut skipped_count = 0usize;
        for (offset, (units, scale)) in candidate_pools.into_iter().enumerate() {
            if config.bootstrap_mode == cbu_core::stats::ResampleMode::WithoutReplacement
                && units.len() < max_n
            {
                skipped_count += 1;
                continue;
            }
            let pool = RolloutPool::new(units, scale)?;
            let curve = bootstrap_error(
                &pool,
                &config.bootstrap_n,
                config.bootstrap_resamples,
                config.bootstrap_mode,
                config.seed.wrapping_add(offset as u64),
            )?;
            used_count += 1;
            for point in curve.points {
                let slot = totals.entry(point.n).or_insert((0.0, 0));
                slot.0 += point.mean_normalized_error;
                slot.1 += 1;
            }
        }
        if used_count == 0 {
            skipped.insert(kind.clone(), skipped_count);
            continue;
        }
        let points = totals
            .into_iter()
            .map(|(n, (sum, count))| cbu_core::stats::ErrorCurvePoint {
                n,
                mean_normalized_error: sum / count as f64,
                resamples: config.bootstrap_resamples,
            })
            .collect();
        curves.insert(
            kind.clone(),
            ErrorCurve {
                mode: config.bootstrap_mode,
                seed: config.seed,
                points,
            },
        );
        used.insert(kind.clone(), used_count);
        skipped.insert(kind, skipped_count);
    }

    let doc = ErrorCurveDoc {
        schema: "cbu-error-curve/v1".to_string(),
        mode: manifest_flags(config).bootstrap_mode,
        seed: config.seed,
        resamples: config.bootstrap_resamples,
        curves,
        candidates_used: used,
        candidates_skipped: skipped,
    };
    export_json(&doc, &store.path("error_curve.json"))?;
    write_manifest(&store, config, "bootstrap", None)?;
    Ok(doc)
}

/// Probe document written by `regress`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDoc {
    pub schema: String,
    pub regularization: f64,
    pub seed: u64,
    pub rows: Vec<ProbeRow>,
}

/// Fit correctness probes on validator scores, singly and jointly.
pub fn regress(config: &ResolvedConfig) -> Result<ProbeDoc, CliError> {
    let (_, candidates) = load_dataset(config)?;
    let store = RunStore::open(&config.out)?;
    let scores = store.load_scores()?;
    if scores.is_empty() {
        return Err(CliError::Data("scores.jsonl is empty".to_string()));
    }

    let mut per_method: BTreeMap<Method, BTreeMap<&str, f64>> = BTreeMap::new();
    for score in &scores {
        per_method
            .entry(score.method)
            .or_default()
            .insert(score.candidate_id.as_str(), score.value);
    }
    let methods: Vec<Method> = per_method.keys().copied().collect();

    let mut feature_sets: Vec<Vec<Method>> = methods.iter().map(|&m| vec![m]).collect();
    if per_method.contains_key(&Method::Judge) && per_method.contains_key(&Method::Cbu) {
        feature_sets.push(vec![Method::Judge, Method::Cbu]);
    }

    let labeled: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.source == Source::Llm && c.label.is_some())
        .collect();
    if labeled.is_empty() {
        return Err(CliError::Data("no labeled model candidates in dataset".to_string()));
    }

    let mut rows = Vec::new();
    for set in feature_sets {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for candidate in &labeled {
            let row: Option<Vec<f64>> = set
                .iter()
                .map(|m| per_method[m].get(candidate.id.as_str()).copied())
                .collect();
            if let Some(row) = row {
                features.push(row);
                labels.push(u8::from(candidate.label == Some(Label::Correct)));
            }
        }
        if features.len() < 4 {
            log::warn!("feature set {set:?} has only {} samples; skipped", features.len());
            continue;
        }
        let positives = labels.iter().filter(|&&y| y == 1).count();
        if positives == 0 || positives == labels.len() {
            log::warn!("feature set {set:?} has a single class; skipped");
            continue;
        }
        let model = fit_probe(&features, &labels, config.regularization)
            .map_err(|e| CliError::Data(format!("probe fit failed for {set:?}: {e}")))?;
        let in_sample = probe_accuracy(&model, &features, &labels, ProbeProtocol::InSample)?;
        let (kfold_accuracy, kfold_k) = match config.probe_protocol {
            ProbeProtocolChoice::InSample => (None, None),
            ProbeProtocolChoice::KFold(k) => {
                let k = k.min(features.len());
                let accuracy = probe_accuracy(
                    &model,
                    &features,
                    &labels,
                    ProbeProtocol::KFold {
                        k,
                        seed: config.seed,
                    },
                )?;
                (Some(accuracy), Some(k))
            }
        };
        rows.push(ProbeRow {
            features: set.iter().map(|&m| method_name(m).to_string()).collect(),
            samples: features.len(),
            in_sample_accuracy: in_sample,
            kfold_accuracy,
            kfold_k,
        });
    }

    if rows.is_empty() {
        return Err(CliError::Data(
            "no feature configuration had enough labeled samples".to_string(),
        ));
    }
    let doc = ProbeDoc {
        schema: "cbu-probe/v1".to_string(),
        regularization: config.regularization,
        seed: config.seed,
        rows,
    };
    export_json(&doc, &store.path("probe_report.json"))?;
    write_manifest(&store, config, "regress", None)?;
    Ok(doc)
}

/// A curated neighborhood question with its adopted gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedQuestion {
    pub id: String,
    pub statement: String,
    pub gold_answer: String,
    pub solvability: SolvabilityEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub input: usize,
    pub after_solvability: usize,
    pub after_band: usize,
    pub after_agreement: usize,
    pub after_floor: usize,
    pub dropped: BTreeMap<String, String>,
}

/// Filter candidate questions into a curated neighborhood set:
/// solvability -> band -> agreement -> integer floor.
pub async fn curate(config: &ResolvedConfig) -> Result<CurationReport, CliError> {
    let questions_path = config.dataset_dir()?;
    let questions_file = if questions_path.is_dir() {
        questions_path.join("questions.jsonl")
    } else {
        questions_path.to_path_buf()
    };
    let questions: Vec<CandidateQuestion> = read_jsonl(&questions_file)?;
    if questions.is_empty() {
        return Err(CliError::Data(format!(
            "no candidate questions in {}",
            questions_file.display()
        )));
    }
    let store = RunStore::open(&config.out)?;

    let backend = match &config.backend {
        Some(path) => {
            let spec = BackendSpec::load(path)?;
            Some((build_engine(&spec, &store, config.seed)?, spec))
        }
        None => None,
    };
    let mut engine_and_config = backend.map(|((engine, rollout_config), spec)| {
        (engine, rollout_config, spec)
    });

    let mut dropped = BTreeMap::new();
    let input = questions.len();

    // Stage 1: attach solvability (estimate through the backend when absent).
    let mut with_solvability = Vec::new();
    for mut question in questions {
        if question.solvability.is_none() {
            let agreement = agreement_filter(&question, &required_solvers(config, &question));
            if let (Some((engine, rollout_config, _)), Some(gold)) =
                (&mut engine_and_config, agreement.adopted_answer)
            {
                let outcome = engine
                    .estimate_solvability(
                        &BareQuestion {
                            id: question.id.clone(),
                            statement: question.statement.clone(),
                            gold_answer: gold,
                        },
                        config.t,
                        rollout_config,
                    )
                    .await?;
                question.solvability = outcome.estimate;
            }
        }
        match question.solvability {
            Some(_) => with_solvability.push(question),
            None => {
                dropped.insert(
                    question.id.clone(),
                    "no solvability estimate available".to_string(),
                );
            }
        }
    }
    let after_solvability = with_solvability.len();

    // Stage 2: intermediate-solvability band, strict on both sides.
    let mut banded = Vec::new();
    for question in with_solvability {
        if band_filter(&question, config.band_low, config.band_high)
            .map_err(|e| CliError::Data(e.to_string()))?
        {
            banded.push(question);
        } else {
            let avg = question.solvability.as_ref().unwrap().avg_at_k;
            dropped.insert(
                question.id.clone(),
                format!("solvability {avg:.4} outside ({}, {})", config.band_low, config.band_high),
            );
        }
    }
    let after_band = banded.len();

    // Stage 3: unanimous final answer across required solvers.
    let mut agreed = Vec::new();
    for question in banded {
        let outcome = agreement_filter(&question, &required_solvers(config, &question));
        match (outcome.keep, outcome.adopted_answer) {
            (true, Some(answer)) => agreed.push((question, answer)),
            _ => {
                dropped.insert(
                    question.id.clone(),
                    outcome.reason.unwrap_or_else(|| "no proposed answers".to_string()),
                );
            }
        }
    }
    let after_agreement = agreed.len();

    // Stage 4: integer floor on the adopted answer, when enabled.
    let mut curated = Vec::new();
    for (question, answer) in agreed {
        if let Some(floor) = config.integer_floor {
            if !integer_floor_check(&answer, floor) {
                dropped.insert(
                    question.id.clone(),
                    format!("answer {answer:?} is not an integer greater than {floor}"),
                );
                continue;
            }
        }
        curated.push(CuratedQuestion {
            id: question.id.clone(),
            statement: question.statement.clone(),
            gold_answer: answer,
            solvability: question.solvability.unwrap(),
        });
    }
    let after_floor = curated.len();

    write_jsonl(&store.path("curated.jsonl"), &curated)?;
    let report = CurationReport {
        input,
        after_solvability,
        after_band,
        after_agreement,
        after_floor,
        dropped,
    };
    export_json(&report, &store.path("curation_report.json"))?;
    let spec = engine_and_config.as_ref().map(|(_, _, spec)| spec.clone());
    write_manifest(&store, config, "curate", spec.as_ref())?;
    Ok(report)
}

fn required_solvers<'a>(
    config: &'a ResolvedConfig,
    question: &'a CandidateQuestion,
) -> Vec<&'a str> {
    match &config.required_solvers {
        Some(solvers) => solvers.iter().map(String::as_str).collect(),
        None => question.proposed_answers.keys().map(String::as_str).collect(),
    }
}

/// Run the reasoning-failure audit over wrong-labeled candidates (or all
/// candidates with `audit_all = true`).
pub async fn audit(config: &ResolvedConfig) -> Result<Vec<AuditRecord>, CliError> {
    let (problems, candidates) = load_dataset(config)?;
    let store = RunStore::open(&config.out)?;
    let spec = BackendSpec::load(config.backend_path()?)?;
    let (mut engine, rollout_config) = build_engine(&spec, &store, config.seed)?;

    let by_id: BTreeMap<&str, &Problem> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut artifacts = load_retained(&store, "audit", None)?;
    let mut records = Vec::new();
    for candidate in &candidates {
        if !config.audit_all && candidate.label != Some(Label::Wrong) {
            continue;
        }
        let Some(problem) = by_id.get(candidate.problem_id.as_str()) else {
            continue;
        };
        let outcome = engine.audit(problem, candidate, &rollout_config).await?;
        if let Some(rollout) = &outcome.rollout {
            artifacts.index.push(RolloutIndexRecord {
                prompt_hash: rollout.prompt_hash.clone(),
                kind: "audit".to_string(),
                problem_id: problem.id.clone(),
                candidate_id: Some(candidate.id.clone()),
                neighborhood_id: None,
                scale_low: 0.0,
                scale_high: 1.0,
            });
            artifacts.rollouts.push(rollout.clone());
        }
        records.push(AuditRecord {
            problem_id: outcome.problem_id,
            candidate_id: outcome.candidate_id,
            categories: outcome.categories,
            parse_error: outcome.parse_error,
        });
    }
    if records.is_empty() {
        return Err(CliError::Data(
            "no candidates selected for audit (wrong-labeled by default)".to_string(),
        ));
    }
    write_artifacts(&store, &artifacts)?;
    write_jsonl(&store.path("audit.jsonl"), &records)?;
    write_manifest(&store, config, "audit", Some(&spec))?;
    Ok(records)
}

/// Assemble the final report from whatever artifacts exist in the run
/// directory: ranking metrics, error curves, probe rows, score-gap by
/// difficulty, and above-average scoring rates.
pub fn report(config: &ResolvedConfig) -> Result<EvaluationReport, CliError> {
    let store = RunStore::open(&config.out)?;
    let mut report = if store.path("report.json").exists() {
        store.load_report()?
    } else {
        EvaluationReport::empty()
    };

    if store.path("error_curve.json").exists() {
        let bytes = std::fs::read(store.path("error_curve.json"))
            .map_err(|e| CliError::Data(e.to_string()))?;
        let doc: ErrorCurveDoc =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Data(e.to_string()))?;
        report.error_curves = doc.curves;
    }

    if store.path("probe_report.json").exists() {
        let bytes = std::fs::read(store.path("probe_report.json"))
            .map_err(|e| CliError::Data(e.to_string()))?;
        let doc: ProbeDoc =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Data(e.to_string()))?;
        report.probe = doc.rows;
    }

    // Score diagnostics need the dataset (labels) and recorded scores.
    if let (Some(_), true) = (&config.dataset, store.path("scores.jsonl").exists()) {
        let (problems, candidates) = load_dataset(config)?;
        let scores = store.load_scores()?;
        if let Ok(method) = select_method(&scores, config.method) {
            let (per_question, _) =
                labeled_scores_per_question(&problems, &candidates, &scores, method)?;
            let question_scores: Vec<LabeledScores> = per_question.values().cloned().collect();
            report.above_average = vec![
                above_average_rate(&question_scores, CandidateClass::CorrectLlm),
                above_average_rate(&question_scores, CandidateClass::CorrectHuman),
                above_average_rate(&question_scores, CandidateClass::Wrong),
            ];

            let solvability = store.load_solvability().unwrap_or_default();
            if !solvability.is_empty() {
                let difficulty_by_question: BTreeMap<&str, f64> = solvability
                    .iter()
                    .map(|s| (s.question_id.as_str(), cbu_core::scoring::difficulty(s)))
                    .collect();
                let inputs: Vec<QuestionGapInput> = per_question
                    .iter()
                    .filter_map(|(qid, scores)| {
                        difficulty_by_question.get(qid.as_str()).map(|&difficulty| {
                            QuestionGapInput {
                                question_id: qid.clone(),
                                difficulty,
                                scores: scores.clone(),
                            }
                        })
                    })
                    .collect();
                if !inputs.is_empty() {
                    report.score_gap = Some(cbu_core::metrics::score_gap_by_difficulty(&inputs, 10));
                }
            }
        }
    }

    store.write_report(&report)?;
    write_manifest(&store, config, "report", None)?;
    Ok(report)
}
