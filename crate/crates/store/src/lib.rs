//! Persistent, append-only storage for datasets, rollouts, scores, and run
//! manifests, plus the content-addressed rollout cache.
//!
//! Layout of a run directory:
//!
//! ```text
//! out/
//!   problems.jsonl     {id, group_id, statement, gold_answer, neighborhoods: [...]}
//!   candidates.jsonl   {id, problem_id, source, label?, solution_text}
//!   rollouts.jsonl     {backend_id, prompt_hash, sampling_digest, index, completion, verdict?, parsed_score?}
//!   scores.jsonl       {candidate_id, method, value, support, components?}
//!   solvability.jsonl  {question_id, k, successes, avg_at_k}
//!   cache.jsonl        rollout cache records (key fields + prompt + completion)
//!   report.json        evaluation report
//!   manifest.json      run manifest
//! ```
//!
//! One writer per file; readers may run concurrently.

mod cache;
mod jsonl;
mod manifest;
mod report;

pub use cache::{prompt_hash, sampling_digest, CacheKey, CacheRecord, RolloutCache};
pub use jsonl::{append_jsonl, read_jsonl, write_jsonl};
pub use manifest::{shipped_template_digests, ManifestFlags, RunManifest};
pub use report::{
    export_json, export_report, load_report, EvaluationReport, ProbeRow, REPORT_SCHEMA,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use cbu_core::model::{Candidate, Problem, Rollout, ScoreRecord};
use cbu_core::scoring::SolvabilityEstimate;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at {path}:{line}: {detail}")]
    MalformedLine {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("failed to encode record: {detail}")]
    Encode { detail: String },
    #[error("cache integrity violation: {detail}")]
    CacheConflict { detail: String },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Typed access to one run directory.
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<RunStore, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn load_problems(&self) -> Result<Vec<Problem>, StoreError> {
        read_jsonl(&self.path("problems.jsonl"))
    }

    pub fn write_problems(&self, problems: &[Problem]) -> Result<(), StoreError> {
        write_jsonl(&self.path("problems.jsonl"), problems)
    }

    pub fn load_candidates(&self) -> Result<Vec<Candidate>, StoreError> {
        read_jsonl(&self.path("candidates.jsonl"))
    }

    pub fn write_candidates(&self, candidates: &[Candidate]) -> Result<(), StoreError> {
        write_jsonl(&self.path("candidates.jsonl"), candidates)
    }

    pub fn append_rollouts(&self, rollouts: &[Rollout]) -> Result<(), StoreError> {
        append_jsonl(&self.path("rollouts.jsonl"), rollouts)
    }

    pub fn reset_rollouts(&self) -> Result<(), StoreError> {
        write_jsonl::<Rollout>(&self.path("rollouts.jsonl"), &[])
    }

    pub fn load_rollouts(&self) -> Result<Vec<Rollout>, StoreError> {
        read_jsonl(&self.path("rollouts.jsonl"))
    }

    pub fn append_scores(&self, scores: &[ScoreRecord]) -> Result<(), StoreError> {
        append_jsonl(&self.path("scores.jsonl"), scores)
    }

    pub fn reset_scores(&self) -> Result<(), StoreError> {
        write_jsonl::<ScoreRecord>(&self.path("scores.jsonl"), &[])
    }

    pub fn load_scores(&self) -> Result<Vec<ScoreRecord>, StoreError> {
        read_jsonl(&self.path("scores.jsonl"))
    }

    pub fn write_solvability(&self, estimates: &[SolvabilityEstimate]) -> Result<(), StoreError> {
        write_jsonl(&self.path("solvability.jsonl"), estimates)
    }

    pub fn load_solvability(&self) -> Result<Vec<SolvabilityEstimate>, StoreError> {
        read_jsonl(&self.path("solvability.jsonl"))
    }

    pub fn open_cache(&self) -> Result<RolloutCache, StoreError> {
        RolloutCache::open(self.path("cache.jsonl"))
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        export_json(manifest, &self.path("manifest.json"))
    }

    pub fn write_report(&self, report: &EvaluationReport) -> Result<(), StoreError> {
        export_report(report, &self.path("report.json"))
    }

    pub fn load_report(&self) -> Result<EvaluationReport, StoreError> {
        load_report(&self.path("report.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cbu_core::model::{Label, Method, Source};
    use std::collections::BTreeMap;

    #[test]
    fn dataset_files_round_trip_canonically() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();

        let problems = vec![Problem {
            id: "p1".to_string(),
            group_id: "g1".to_string(),
            statement: "statement".to_string(),
            gold_answer: "35".to_string(),
            neighborhoods: vec![cbu_core::model::NeighborhoodQuestion {
                id: "p1-n1".to_string(),
                statement: "variant".to_string(),
                gold_answer: "12".to_string(),
            }],
            metadata: BTreeMap::new(),
        }];
        store.write_problems(&problems).unwrap();
        let first = std::fs::read(store.path("problems.jsonl")).unwrap();
        let loaded = store.load_problems().unwrap();
        assert_eq!(loaded, problems);
        store.write_problems(&loaded).unwrap();
        let second = std::fs::read(store.path("problems.jsonl")).unwrap();
        assert_eq!(first, second);

        let candidates = vec![Candidate {
            id: "c1".to_string(),
            problem_id: "p1".to_string(),
            source: Source::Llm,
            label: Some(Label::Correct),
            solution_text: "text".to_string(),
        }];
        store.write_candidates(&candidates).unwrap();
        assert_eq!(store.load_candidates().unwrap(), candidates);

        let scores = vec![ScoreRecord {
            candidate_id: "c1".to_string(),
            method: Method::Cbu,
            value: 0.5,
            support: 32,
            components: None,
        }];
        store.append_scores(&scores).unwrap();
        assert_eq!(store.load_scores().unwrap(), scores);
    }

    #[test]
    fn score_reset_then_append_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let score = ScoreRecord {
            candidate_id: "c1".to_string(),
            method: Method::Judge,
            value: 7.5,
            support: 64,
            components: None,
        };
        store.append_scores(std::slice::from_ref(&score)).unwrap();
        let first = std::fs::read(store.path("scores.jsonl")).unwrap();
        store.reset_scores().unwrap();
        store.append_scores(std::slice::from_ref(&score)).unwrap();
        let second = std::fs::read(store.path("scores.jsonl")).unwrap();
        assert_eq!(first, second);
    }
}
