//! Filters for building neighborhood-question sets from external sources:
//! a solvability band, multi-solver answer agreement, and an integer floor
//! on answers. All filters are pure and idempotent.

use std::collections::BTreeMap;

use num::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::SolvabilityEstimate;
use crate::verdict::normalize_answer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurationError {
    #[error("question {question_id:?} has no solvability estimate attached")]
    MissingSolvability { question_id: String },
}

/// A question under curation, with provisional answers from one or more
/// solvers and an optional solvability estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateQuestion {
    pub id: String,
    pub statement: String,
    #[serde(default)]
    pub proposed_answers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solvability: Option<SolvabilityEstimate>,
}

/// Keep questions of intermediate solvability: `low < avg@k < high`, strict
/// on both sides. Defaults are `0.05` and `0.5`.
pub fn band_filter(
    question: &CandidateQuestion,
    low: f64,
    high: f64,
) -> Result<bool, CurationError> {
    let solvability =
        question
            .solvability
            .as_ref()
            .ok_or_else(|| CurationError::MissingSolvability {
                question_id: question.id.clone(),
            })?;
    Ok(low < solvability.avg_at_k && solvability.avg_at_k < high)
}

pub const DEFAULT_BAND_LOW: f64 = 0.05;
pub const DEFAULT_BAND_HIGH: f64 = 0.5;

/// Outcome of the multi-solver agreement check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementOutcome {
    pub keep: bool,
    /// The common normalized answer when all required solvers agree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adopted_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Keep a question only when every required solver proposed the same
/// normalized final answer; the common value is adopted as the gold answer.
/// Answer comparison uses the verifier's normalizer, so "035" and "35" agree.
pub fn agreement_filter(question: &CandidateQuestion, required_solvers: &[&str]) -> AgreementOutcome {
    let mut normalized: Option<String> = None;
    for solver in required_solvers {
        let Some(answer) = question.proposed_answers.get(*solver) else {
            return AgreementOutcome {
                keep: false,
                adopted_answer: None,
                reason: Some(format!("missing answer from solver {solver:?}")),
            };
        };
        let candidate = normalize_answer(answer);
        match &normalized {
            None => normalized = Some(candidate),
            Some(existing) if *existing != candidate => {
                return AgreementOutcome {
                    keep: false,
                    adopted_answer: None,
                    reason: Some("solvers disagree on the final answer".to_string()),
                };
            }
            Some(_) => {}
        }
    }
    AgreementOutcome {
        keep: normalized.is_some(),
        adopted_answer: normalized,
        reason: None,
    }
}

pub const DEFAULT_INTEGER_FLOOR: i64 = 1000;

/// Pass iff the answer parses as an integer strictly greater than `floor`.
pub fn integer_floor_check(answer: &str, floor: i64) -> bool {
    let normalized = normalize_answer(answer);
    match normalized.parse::<BigInt>() {
        Ok(value) => value > BigInt::from(floor),
        Err(_) => false,
    }
}
