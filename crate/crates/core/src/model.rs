//! Shared data model: problems, neighborhood questions, candidate solutions,
//! rollouts, and score records.
//!
//! Values are immutable after construction and safe to share across tasks.
//! Struct field order matches the on-disk JSONL schemas, so serializing a
//! decoded record reproduces the original bytes for canonical input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A verifiable variant question attached to a target problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodQuestion {
    pub id: String,
    pub statement: String,
    pub gold_answer: String,
}

/// A target question with its gold answer and neighborhood variants.
///
/// `group_id` names the original-question family; variant questions share the
/// group of the question they were derived from and metric aggregation
/// averages within a group before averaging across groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub group_id: String,
    pub statement: String,
    pub gold_answer: String,
    pub neighborhoods: Vec<NeighborhoodQuestion>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Who produced a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Llm,
    Human,
}

/// Ground-truth correctness label for a candidate, when known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Wrong,
}

/// One proposed solution to a problem.
///
/// `label` is optional: unlabeled pools can still be scored, only the
/// labeled ranking metrics require it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub problem_id: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub solution_text: String,
}

/// The candidate set under evaluation for one problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub problem_id: String,
    pub candidates: Vec<Candidate>,
}

/// One backend completion for a rendered prompt.
///
/// `(backend_id, prompt_hash, sampling_digest, index)` identifies the rollout
/// within a run; `verdict` is attached only after verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub backend_id: String,
    pub prompt_hash: String,
    pub sampling_digest: String,
    pub index: u32,
    pub completion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed_score: Option<f64>,
}

/// Which validator produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cbu,
    Judge,
    GenrmAdapter,
}

/// Per-neighborhood success tally backing a utility value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodCount {
    pub neighborhood_id: String,
    pub successes: u32,
    pub trials: u32,
}

/// One validator's scalar score for one candidate.
///
/// `support` counts the rollouts that actually contributed to `value`
/// (failed or unparseable rollouts are excluded and reduce support).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub candidate_id: String,
    pub method: Method,
    pub value: f64,
    pub support: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<NeighborhoodCount>>,
}

/// A structural problem found while validating a candidate pool.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PoolViolation {
    /// The pool has no candidates at all.
    EmptyPool,
    DuplicateCandidateId { id: String },
    /// A candidate references a different problem than the pool.
    ForeignProblemId { candidate_id: String, found: String },
    EmptySolutionText { candidate_id: String },
    /// Strict mode: a candidate without a correctness label.
    UnlabeledCandidate { candidate_id: String },
    /// Strict mode: the pool does not hold exactly 9 model candidates
    /// split 4 correct / 5 wrong.
    CompositionMismatch { llm: usize, correct: usize, wrong: usize },
    /// Strict mode: more than one human-written solution.
    TooManyHuman { found: usize },
}

impl std::fmt::Display for PoolViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PoolViolation::EmptyPool => write!(f, "candidate pool is empty"),
            PoolViolation::DuplicateCandidateId { id } => {
                write!(f, "duplicate candidate id {:?}", id)
            }
            PoolViolation::ForeignProblemId { candidate_id, found } => write!(
                f,
                "candidate {:?} references problem {:?} instead of the pool's problem",
                candidate_id, found
            ),
            PoolViolation::EmptySolutionText { candidate_id } => {
                write!(f, "candidate {:?} has empty solution text", candidate_id)
            }
            PoolViolation::UnlabeledCandidate { candidate_id } => {
                write!(f, "candidate {:?} is unlabeled in strict mode", candidate_id)
            }
            PoolViolation::CompositionMismatch { llm, correct, wrong } => write!(
                f,
                "strict composition requires 9 llm candidates (4 correct / 5 wrong), found {} ({} correct / {} wrong)",
                llm, correct, wrong
            ),
            PoolViolation::TooManyHuman { found } => {
                write!(f, "at most 1 human candidate allowed, found {}", found)
            }
        }
    }
}

/// Validate a candidate pool, returning every violation found.
///
/// Structural checks (duplicates, foreign problem ids, empty texts) always
/// run. With `strict` set, the pool must additionally hold exactly 9 model
/// candidates labeled 4 correct / 5 wrong and at most one human candidate.
/// The result is sorted, so it is insensitive to candidate order.
pub fn validate_pool(pool: &CandidatePool, strict: bool) -> Vec<PoolViolation> {
    let mut violations = Vec::new();

    if pool.candidates.is_empty() {
        violations.push(PoolViolation::EmptyPool);
        return violations;
    }

    let mut seen = std::collections::BTreeSet::new();
    for candidate in &pool.candidates {
        if !seen.insert(candidate.id.as_str()) {
            violations.push(PoolViolation::DuplicateCandidateId {
                id: candidate.id.clone(),
            });
        }
        if candidate.problem_id != pool.problem_id {
            violations.push(PoolViolation::ForeignProblemId {
                candidate_id: candidate.id.clone(),
                found: candidate.problem_id.clone(),
            });
        }
        if candidate.solution_text.is_empty() {
            violations.push(PoolViolation::EmptySolutionText {
                candidate_id: candidate.id.clone(),
            });
        }
    }

    if strict {
        let llm: Vec<_> = pool
            .candidates
            .iter()
            .filter(|c| c.source == Source::Llm)
            .collect();
        let humans = pool.candidates.len() - llm.len();

        for candidate in &llm {
            if candidate.label.is_none() {
                violations.push(PoolViolation::UnlabeledCandidate {
                    candidate_id: candidate.id.clone(),
                });
            }
        }
        let correct = llm
            .iter()
            .filter(|c| c.label == Some(Label::Correct))
            .count();
        let wrong = llm.iter().filter(|c| c.label == Some(Label::Wrong)).count();
        if llm.len() != 9 || correct != 4 || wrong != 5 {
            violations.push(PoolViolation::CompositionMismatch {
                llm: llm.len(),
                correct,
                wrong,
            });
        }
        if humans > 1 {
            violations.push(PoolViolation::TooManyHuman { found: humans });
        }
    }

    violations.sort();
    violations.dedup();
    violations
}

/// A data problem found while validating a single `Problem` record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProblemViolation {
    EmptyId,
    EmptyGroupId { problem_id: String },
    EmptyGoldAnswer { question_id: String },
    DuplicateNeighborhoodId { problem_id: String, id: String },
}

impl std::fmt::Display for ProblemViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProblemViolation::EmptyId => write!(f, "problem id is empty"),
            ProblemViolation::EmptyGroupId { problem_id } => {
                write!(f, "problem {:?} has empty group_id", problem_id)
            }
            ProblemViolation::EmptyGoldAnswer { question_id } => {
                write!(f, "question {:?} has empty gold_answer", question_id)
            }
            ProblemViolation::DuplicateNeighborhoodId { problem_id, id } => {
                write!(f, "problem {:?} repeats neighborhood id {:?}", problem_id, id)
            }
        }
    }
}

/// Check the invariants of one problem record.
pub fn validate_problem(problem: &Problem) -> Vec<ProblemViolation> {
    let mut violations = Vec::new();
    if problem.id.is_empty() {
        violations.push(ProblemViolation::EmptyId);
    }
    if problem.group_id.is_empty() {
        violations.push(ProblemViolation::EmptyGroupId {
            problem_id: problem.id.clone(),
        });
    }
    if problem.gold_answer.is_empty() {
        violations.push(ProblemViolation::EmptyGoldAnswer {
            question_id: problem.id.clone(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for neighborhood in &problem.neighborhoods {
        if !seen.insert(neighborhood.id.as_str()) {
            violations.push(ProblemViolation::DuplicateNeighborhoodId {
                problem_id: problem.id.clone(),
                id: neighborhood.id.clone(),
            });
        }
        if neighborhood.gold_answer.is_empty() {
            violations.push(ProblemViolation::EmptyGoldAnswer {
                question_id: neighborhood.id.clone(),
            });
        }
    }
    violations
}

/// Partition problems into their original-question families.
///
/// Problem ids are kept in input order within each group; groups are keyed
/// and iterated in sorted order.
pub fn group_problems(problems: &[Problem]) -> BTreeMap<String, Vec<String>> {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for problem in problems {
        groups
            .entry(problem.group_id.clone())
            .or_default()
            .push(problem.id.clone());
    }
    groups
}
