//! Pure aggregation behind the scoring operations: utility estimates from
//! verified rollout counts, solvability and difficulty, and judge-score
//! averaging. Rollout generation itself lives behind the backend gateway;
//! everything here is deterministic arithmetic over recorded verdicts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Method, NeighborhoodCount, ScoreRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("utility estimation requires at least one neighborhood")]
    NoNeighborhoods,
    #[error("neighborhood {neighborhood_id:?} recorded {successes} successes over {trials} trials")]
    BadCounts {
        neighborhood_id: String,
        successes: u32,
        trials: u32,
    },
    #[error("neighborhood trials are unequal ({0} vs {1}); enable ragged trials to allow this")]
    UnequalTrials(u32, u32),
    #[error("no trials contributed to the estimate")]
    ZeroSupport,
    #[error("solvability requires k >= 1")]
    ZeroAttempts,
    #[error("solvability recorded {successes} successes over {k} attempts")]
    BadSolvability { successes: u32, k: u32 },
}

/// Whether every neighborhood must contribute the same number of trials.
///
/// Standard runs use `Uniform`; `Ragged` permits unequal trials (for example
/// after transport failures reduced support) and weights the mean by trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPolicy {
    #[default]
    Uniform,
    Ragged,
}

/// A candidate's estimated utility: pooled accuracy over neighborhood
/// rollouts, with per-neighborhood counts retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub candidate_id: String,
    pub per_neighborhood: Vec<NeighborhoodCount>,
    pub value: f64,
}

impl UtilityEstimate {
    /// Build the estimate from verified per-neighborhood counts.
    ///
    /// The value is total successes over total trials, so it lies in [0, 1]
    /// and `value * support` is an integer.
    pub fn from_counts(
        candidate_id: impl Into<String>,
        per_neighborhood: Vec<NeighborhoodCount>,
        policy: TrialPolicy,
    ) -> Result<UtilityEstimate, ScoringError> {
        if per_neighborhood.is_empty() {
            return Err(ScoringError::NoNeighborhoods);
        }
        for count in &per_neighborhood {
            if count.successes > count.trials {
                return Err(ScoringError::BadCounts {
                    neighborhood_id: count.neighborhood_id.clone(),
                    successes: count.successes,
                    trials: count.trials,
                });
            }
        }
        if policy == TrialPolicy::Uniform {
            let first = per_neighborhood[0].trials;
            if let Some(other) = per_neighborhood.iter().find(|c| c.trials != first) {
                return Err(ScoringError::UnequalTrials(first, other.trials));
            }
        }
        let successes: u32 = per_neighborhood.iter().map(|c| c.successes).sum();
        let trials: u32 = per_neighborhood.iter().map(|c| c.trials).sum();
        if trials == 0 {
            return Err(ScoringError::ZeroSupport);
        }
        Ok(UtilityEstimate {
            candidate_id: candidate_id.into(),
            per_neighborhood,
            value: f64::from(successes) / f64::from(trials),
        })
    }

    /// Total trials contributing to the value.
    pub fn support(&self) -> u32 {
        self.per_neighborhood.iter().map(|c| c.trials).sum()
    }

    pub fn to_score_record(&self) -> ScoreRecord {
        ScoreRecord {
            candidate_id: self.candidate_id.clone(),
            method: Method::Cbu,
            value: self.value,
            support: self.support(),
            components: Some(self.per_neighborhood.clone()),
        }
    }
}

/// Bare-attempt solve rate for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvabilityEstimate {
    pub question_id: String,
    pub k: u32,
    pub successes: u32,
    pub avg_at_k: f64,
}

impl SolvabilityEstimate {
    pub fn new(
        question_id: impl Into<String>,
        k: u32,
        successes: u32,
    ) -> Result<SolvabilityEstimate, ScoringError> {
        if k == 0 {
            return Err(ScoringError::ZeroAttempts);
        }
        if successes > k {
            return Err(ScoringError::BadSolvability { successes, k });
        }
        Ok(SolvabilityEstimate {
            question_id: question_id.into(),
            k,
            successes,
            avg_at_k: f64::from(successes) / f64::from(k),
        })
    }
}

/// Difficulty as the complement of the solve rate: 0 = fully solved,
/// 1 = essentially unsolved.
pub fn difficulty(estimate: &SolvabilityEstimate) -> f64 {
    1.0 - estimate.avg_at_k
}

/// Mean over parseable judge calls, with bookkeeping for dropped rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeAggregate {
    pub value: f64,
    /// Number of parseable rollouts contributing to the mean.
    pub support: u32,
    pub unparseable: u32,
}

/// Average the parseable judge scores. Unparseable rollouts are dropped
/// from the mean and counted; with zero parseable rollouts there is no
/// score at all (`None`), never a fabricated value.
pub fn aggregate_judge_scores(parseable: &[f64], unparseable: u32) -> Option<JudgeAggregate> {
    if parseable.is_empty() {
        return None;
    }
    Some(JudgeAggregate {
        value: parseable.iter().sum::<f64>() / parseable.len() as f64,
        support: parseable.len() as u32,
        unparseable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn count(id: &str, successes: u32, trials: u32) -> NeighborhoodCount {
        NeighborhoodCount {
            neighborhood_id: id.to_string(),
            successes,
            trials,
        }
    }

    #[test]
    fn all_correct_rollouts_give_unit_value() {
        let estimate = UtilityEstimate::from_counts(
            "c1",
            vec![count("n1", 8, 8), count("n2", 8, 8)],
            TrialPolicy::Uniform,
        )
        .unwrap();
        assert_eq!(estimate.value, 1.0);
        assert_eq!(estimate.support(), 16);
    }

    #[test]
    fn pooled_mean_matches_direct_count() {
        let estimate = UtilityEstimate::from_counts(
            "c1",
            vec![count("a", 3, 4), count("b", 1, 4)],
            TrialPolicy::Uniform,
        )
        .unwrap();
        assert_eq!(estimate.value, 0.5);
    }

    #[test]
    fn default_budget_support_is_neighborhoods_times_t() {
        let counts: Vec<NeighborhoodCount> =
            (0..2).map(|i| count(&format!("n{i}"), 10, 64)).collect();
        let estimate = UtilityEstimate::from_counts("c1", counts, TrialPolicy::Uniform).unwrap();
        assert_eq!(estimate.support(), 128);
        let record = estimate.to_score_record();
        assert_eq!(record.support, 128);
        assert_eq!(record.method, Method::Cbu);
    }

    #[test]
    fn unequal_trials_require_ragged_policy() {
        let counts = vec![count("a", 3, 4), count("b", 1, 3)];
        let err =
            UtilityEstimate::from_counts("c1", counts.clone(), TrialPolicy::Uniform).unwrap_err();
        assert!(matches!(err, ScoringError::UnequalTrials(4, 3)));
        let estimate = UtilityEstimate::from_counts("c1", counts, TrialPolicy::Ragged).unwrap();
        assert_eq!(estimate.value, 4.0 / 7.0);
    }

    #[test]
    fn empty_neighborhood_set_is_a_configuration_error() {
        let err = UtilityEstimate::from_counts("c1", vec![], TrialPolicy::Uniform).unwrap_err();
        assert!(matches!(err, ScoringError::NoNeighborhoods));
    }

    #[test]
    fn judge_mean_drops_unparseable_rollouts() {
        let aggregate = aggregate_judge_scores(&[7.0, 7.0, 7.0, 7.0], 0).unwrap();
        assert_eq!(aggregate.value, 7.0);
        assert_eq!(aggregate.support, 4);

        let aggregate = aggregate_judge_scores(&[10.0, 6.0], 2).unwrap();
        assert_eq!(aggregate.value, 8.0);
        assert_eq!(aggregate.support, 2);
        assert_eq!(aggregate.unparseable, 2);

        assert!(aggregate_judge_scores(&[], 4).is_none());
    }

    #[test]
    fn binary_judge_scores_average_to_acceptance_rate() {
        let aggregate = aggregate_judge_scores(&[1.0, 0.0, 1.0, 1.0], 0).unwrap();
        assert_eq!(aggregate.value, 0.75);
    }

    #[test]
    fn solvability_and_difficulty() {
        let estimate = SolvabilityEstimate::new("q1", 64, 16).unwrap();
        assert_eq!(estimate.avg_at_k, 0.25);
        assert_eq!(difficulty(&estimate), 0.75);

        let unsolved = SolvabilityEstimate::new("q1", 64, 0).unwrap();
        assert_eq!(unsolved.avg_at_k, 0.0);
        assert_eq!(difficulty(&unsolved), 1.0);

        let solved = SolvabilityEstimate::new("q1", 64, 64).unwrap();
        assert_eq!(difficulty(&solved), 0.0);

        let big = SolvabilityEstimate::new("q1", 1024, 100).unwrap();
        assert_eq!(big.k, 1024);
        assert!((big.avg_at_k - 100.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_counts_are_rejected() {
        assert!(SolvabilityEstimate::new("q", 0, 0).is_err());
        assert!(SolvabilityEstimate::new("q", 4, 5).is_err());
        assert!(UtilityEstimate::from_counts("c", vec![count("n", 5, 4)], TrialPolicy::Uniform)
            .is_err());
    }

    proptest! {
        /// Flipping one failed rollout to a success raises the value by
        /// exactly 1 over the total trial count.
        #[test]
        fn utility_is_monotone_in_verdicts(
            s1 in 0u32..8, s2 in 0u32..8,
        ) {
            let base = UtilityEstimate::from_counts(
                "c",
                vec![count("a", s1, 8), count("b", s2, 8)],
                TrialPolicy::Uniform,
            ).unwrap();
            let bumped = UtilityEstimate::from_counts(
                "c",
                vec![count("a", s1 + 1, 8), count("b", s2, 8)],
                TrialPolicy::Uniform,
            ).unwrap();
            prop_assert!((bumped.value - base.value - 1.0 / 16.0).abs() < 1e-15);
        }

        #[test]
        fn utility_is_order_invariant_and_integral(
            s1 in 0u32..=8, s2 in 0u32..=8, s3 in 0u32..=8,
        ) {
            let counts = vec![count("a", s1, 8), count("b", s2, 8), count("c", s3, 8)];
            let forward =
                UtilityEstimate::from_counts("c", counts.clone(), TrialPolicy::Uniform).unwrap();
            let mut reversed_counts = counts;
            reversed_counts.reverse();
            let reversed =
                UtilityEstimate::from_counts("c", reversed_counts, TrialPolicy::Uniform).unwrap();
            prop_assert_eq!(forward.value, reversed.value);
            prop_assert!((0.0..=1.0).contains(&forward.value));
            let scaled = forward.value * f64::from(forward.support());
            prop_assert!((scaled - scaled.round()).abs() < 1e-9);
        }
    }
}
