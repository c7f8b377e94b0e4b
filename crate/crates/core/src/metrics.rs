//! Labeled-pool ranking metrics with tie handling and variant-group averaging.
//!
//! All five metrics are computed in exact rational arithmetic and exposed
//! both as exact values and as `f64` conveniences. Ties are resolved as the
//! expected value over uniformly random tie orderings, which is the unique
//! deterministic, permutation-invariant resolution; judge scales are integer
//! valued, so ties are the common case rather than the corner case.

use std::collections::BTreeMap;

use num::{BigInt, BigRational, FromPrimitive, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Label;

/// One candidate's score together with its evaluation label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub candidate_id: String,
    pub score: f64,
    pub label: Label,
    pub is_human: bool,
}

/// A labeled, scored candidate pool for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    entries: Vec<ScoredEntry>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("more than one human candidate in labeled pool")]
    MultipleHumans,
    #[error("non-finite score for candidate {candidate_id:?}")]
    NonFiniteScore { candidate_id: String },
}

impl LabeledScores {
    pub fn new(entries: Vec<ScoredEntry>) -> Result<Self, MetricsError> {
        if entries.iter().filter(|e| e.is_human).count() > 1 {
            return Err(MetricsError::MultipleHumans);
        }
        if let Some(bad) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(MetricsError::NonFiniteScore {
                candidate_id: bad.candidate_id.clone(),
            });
        }
        Ok(LabeledScores { entries })
    }

    pub fn entries(&self) -> &[ScoredEntry] {
        &self.entries
    }
}

/// Whether the human-written solution participates in the ranking metrics
/// (Acc@1, Recall@5, AUC, MeanWin). HumanWin always compares the human
/// solution against the wrong candidates, regardless of this policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanPolicy {
    #[default]
    Exclude,
    Include,
}

/// A metric value, or the reason it is undefined for this pool.
///
/// Undefined outcomes propagate as explicit reasons instead of zeros so that
/// aggregation never silently deflates averages.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricOutcome {
    Defined(f64),
    Undefined(String),
}

impl MetricOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricOutcome::Defined(v) => Some(*v),
            MetricOutcome::Undefined(_) => None,
        }
    }

    fn from_exact(exact: Result<BigRational, String>) -> Self {
        match exact {
            Ok(v) => MetricOutcome::Defined(v.to_f64().unwrap_or(f64::NAN)),
            Err(reason) => MetricOutcome::Undefined(reason),
        }
    }
}

impl Serialize for MetricOutcome {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        match self {
            MetricOutcome::Defined(v) => {
                let mut s = serializer.serialize_struct("MetricOutcome", 1)?;
                s.serialize_field("value", v)?;
                s.end()
            }
            MetricOutcome::Undefined(reason) => {
                let mut s = serializer.serialize_struct("MetricOutcome", 2)?;
                s.serialize_field("value", &Option::<f64>::None)?;
                s.serialize_field("reason", reason)?;
                s.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for MetricOutcome {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            value: Option<f64>,
            #[serde(default)]
            reason: Option<String>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ok(match raw.value {
            Some(v) => MetricOutcome::Defined(v),
            None => MetricOutcome::Undefined(raw.reason.unwrap_or_default()),
        })
    }
}

/// The five ranking metrics for one pool or one aggregation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub acc_at_1: MetricOutcome,
    pub recall_at_5: MetricOutcome,
    pub auc: MetricOutcome,
    pub human_win: MetricOutcome,
    pub mean_win: MetricOutcome,
}

impl MetricSet {
    pub const METRIC_NAMES: [&'static str; 5] =
        ["acc_at_1", "recall_at_5", "auc", "human_win", "mean_win"];

    pub fn outcomes(&self) -> [(&'static str, &MetricOutcome); 5] {
        [
            ("acc_at_1", &self.acc_at_1),
            ("recall_at_5", &self.recall_at_5),
            ("auc", &self.auc),
            ("human_win", &self.human_win),
            ("mean_win", &self.mean_win),
        ]
    }
}

fn ratio(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

fn exact_score(score: f64) -> BigRational {
    // Scores are validated finite; every finite f64 is an exact rational.
    BigRational::from_float(score).expect("finite score")
}

fn mean_exact(scores: &[f64]) -> BigRational {
    let sum: BigRational = scores.iter().map(|&s| exact_score(s)).sum();
    sum / BigRational::from_usize(scores.len()).unwrap()
}

/// 1 / 0.5 / 0 comparison used by the win metrics.
fn win_indicator(lhs: &BigRational, rhs: &BigRational) -> BigRational {
    match lhs.cmp(rhs) {
        std::cmp::Ordering::Greater => ratio(1, 1),
        std::cmp::Ordering::Equal => ratio(1, 2),
        std::cmp::Ordering::Less => ratio(0, 1),
    }
}

fn ranking_entries(scores: &LabeledScores, policy: HumanPolicy) -> Vec<&ScoredEntry> {
    scores
        .entries
        .iter()
        .filter(|e| policy == HumanPolicy::Include || !e.is_human)
        .collect()
}

/// Expected label of the top-ranked candidate, exact.
///
/// A tie at the top resolves to the mean label over the tied-top set.
pub fn acc_at_1_exact(
    scores: &LabeledScores,
    policy: HumanPolicy,
) -> Result<BigRational, String> {
    let entries = ranking_entries(scores, policy);
    if entries.is_empty() {
        return Err("no rankable candidates".to_string());
    }
    let top = entries
        .iter()
        .map(|e| e.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<_> = entries.iter().filter(|e| e.score == top).collect();
    let correct = tied.iter().filter(|e| e.label == Label::Correct).count();
    Ok(ratio(correct as i64, tied.len() as i64))
}

/// Expected fraction of correct candidates ranked in the top five, exact.
///
/// Candidates tied across the fifth-place boundary occupy the remaining
/// slots with equal probability.
pub fn recall_at_5_exact(
    scores: &LabeledScores,
    policy: HumanPolicy,
) -> Result<BigRational, String> {
    let entries = ranking_entries(scores, policy);
    let total_correct = entries.iter().filter(|e| e.label == Label::Correct).count();
    if total_correct == 0 {
        return Err("no correct candidates".to_string());
    }
    if entries.len() <= 5 {
        return Ok(ratio(1, 1));
    }

    let mut ordered: Vec<f64> = entries.iter().map(|e| e.score).collect();
    ordered.sort_by(|a, b| b.total_cmp(a));
    let threshold = ordered[4];

    let correct_above = entries
        .iter()
        .filter(|e| e.label == Label::Correct && e.score > threshold)
        .count();
    let strictly_above = entries.iter().filter(|e| e.score > threshold).count();
    let boundary: Vec<_> = entries.iter().filter(|e| e.score == threshold).collect();
    let boundary_correct = boundary
        .iter()
        .filter(|e| e.label == Label::Correct)
        .count();
    let open_slots = 5 - strictly_above;

    let expected_in_top5 = BigRational::from_i64(correct_above as i64).unwrap()
        + ratio(boundary_correct as i64, 1) * ratio(open_slots as i64, boundary.len() as i64);
    Ok(expected_in_top5 / BigRational::from_i64(total_correct as i64).unwrap())
}

/// Pairwise correct-above-wrong separability with ties half-credited, exact.
pub fn auc_exact(scores: &LabeledScores, policy: HumanPolicy) -> Result<BigRational, String> {
    let entries = ranking_entries(scores, policy);
    let correct: Vec<f64> = entries
        .iter()
        .filter(|e| e.label == Label::Correct)
        .map(|e| e.score)
        .collect();
    let wrong: Vec<f64> = entries
        .iter()
        .filter(|e| e.label == Label::Wrong)
        .map(|e| e.score)
        .collect();
    if correct.is_empty() {
        return Err("no correct candidates".to_string());
    }
    if wrong.is_empty() {
        return Err("no wrong candidates".to_string());
    }

    let mut numerator = BigRational::zero();
    for &c in &correct {
        for &w in &wrong {
            if c > w {
                numerator += ratio(1, 1);
            } else if c == w {
                numerator += ratio(1, 2);
            }
        }
    }
    Ok(numerator / ratio((correct.len() * wrong.len()) as i64, 1))
}

/// Whether the human-written solution scores above the mean wrong score,
/// with equality half-credited, exact.
pub fn human_win_exact(scores: &LabeledScores) -> Result<BigRational, String> {
    let human = scores
        .entries
        .iter()
        .find(|e| e.is_human)
        .ok_or_else(|| "no human candidate".to_string())?;
    let wrong: Vec<f64> = scores
        .entries
        .iter()
        .filter(|e| !e.is_human && e.label == Label::Wrong)
        .map(|e| e.score)
        .collect();
    if wrong.is_empty() {
        return Err("no wrong candidates".to_string());
    }
    Ok(win_indicator(&exact_score(human.score), &mean_exact(&wrong)))
}

/// Whether the mean correct score exceeds the mean wrong score, with
/// equality half-credited, exact.
pub fn mean_win_exact(scores: &LabeledScores, policy: HumanPolicy) -> Result<BigRational, String> {
    let entries = ranking_entries(scores, policy);
    let correct: Vec<f64> = entries
        .iter()
        .filter(|e| e.label == Label::Correct)
        .map(|e| e.score)
        .collect();
    let wrong: Vec<f64> = entries
        .iter()
        .filter(|e| e.label == Label::Wrong)
        .map(|e| e.score)
        .collect();
    if correct.is_empty() {
        return Err("no correct candidates".to_string());
    }
    if wrong.is_empty() {
        return Err("no wrong candidates".to_string());
    }
    Ok(win_indicator(&mean_exact(&correct), &mean_exact(&wrong)))
}

pub fn acc_at_1(scores: &LabeledScores) -> MetricOutcome {
    MetricOutcome::from_exact(acc_at_1_exact(scores, HumanPolicy::default()))
}

pub fn recall_at_5(scores: &LabeledScores) -> MetricOutcome {
    MetricOutcome::from_exact(recall_at_5_exact(scores, HumanPolicy::default()))
}

pub fn auc(scores: &LabeledScores) -> MetricOutcome {
    MetricOutcome::from_exact(auc_exact(scores, HumanPolicy::default()))
}

pub fn human_win(scores: &LabeledScores) -> MetricOutcome {
    MetricOutcome::from_exact(human_win_exact(scores))
}

pub fn mean_win(scores: &LabeledScores) -> MetricOutcome {
    MetricOutcome::from_exact(mean_win_exact(scores, HumanPolicy::default()))
}

/// Compute all five metrics for one pool under the given human policy.
pub fn compute_metric_set(scores: &LabeledScores, policy: HumanPolicy) -> MetricSet {
    MetricSet {
        acc_at_1: MetricOutcome::from_exact(acc_at_1_exact(scores, policy)),
        recall_at_5: MetricOutcome::from_exact(recall_at_5_exact(scores, policy)),
        auc: MetricOutcome::from_exact(auc_exact(scores, policy)),
        human_win: MetricOutcome::from_exact(human_win_exact(scores)),
        mean_win: MetricOutcome::from_exact(mean_win_exact(scores, policy)),
    }
}

/// Group-averaged metrics: per-group means plus the across-group mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMetrics {
    pub per_group: BTreeMap<String, MetricSet>,
    pub overall: MetricSet,
    /// Per metric, how many questions had the metric undefined.
    pub undefined_counts: BTreeMap<String, usize>,
}

fn mean_outcomes<'a, I: Iterator<Item = &'a MetricOutcome>>(outcomes: I) -> MetricOutcome {
    let values: Vec<f64> = outcomes.filter_map(MetricOutcome::value).collect();
    if values.is_empty() {
        MetricOutcome::Undefined("undefined for every member".to_string())
    } else {
        MetricOutcome::Defined(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn mean_metric_sets<'a, I: Iterator<Item = &'a MetricSet> + Clone>(sets: I) -> MetricSet {
    MetricSet {
        acc_at_1: mean_outcomes(sets.clone().map(|s| &s.acc_at_1)),
        recall_at_5: mean_outcomes(sets.clone().map(|s| &s.recall_at_5)),
        auc: mean_outcomes(sets.clone().map(|s| &s.auc)),
        human_win: mean_outcomes(sets.clone().map(|s| &s.human_win)),
        mean_win: mean_outcomes(sets.map(|s| &s.mean_win)),
    }
}

/// Two-level average: mean within each variant group, then across groups.
/// Undefined entries are excluded from their level's mean and counted.
pub fn aggregate(
    per_question: &BTreeMap<String, MetricSet>,
    groups: &BTreeMap<String, Vec<String>>,
) -> AggregatedMetrics {
    let mut per_group = BTreeMap::new();
    for (group_id, members) in groups {
        let sets: Vec<&MetricSet> = members
            .iter()
            .filter_map(|qid| per_question.get(qid))
            .collect();
        if sets.is_empty() {
            continue;
        }
        per_group.insert(group_id.clone(), mean_metric_sets(sets.iter().copied()));
    }
    let overall = mean_metric_sets(per_group.values());

    let mut undefined_counts = BTreeMap::new();
    for name in MetricSet::METRIC_NAMES {
        undefined_counts.insert(name.to_string(), 0usize);
    }
    for set in per_question.values() {
        for (name, outcome) in set.outcomes() {
            if outcome.value().is_none() {
                *undefined_counts.get_mut(name).unwrap() += 1;
            }
        }
    }

    AggregatedMetrics {
        per_group,
        overall,
        undefined_counts,
    }
}

/// Candidate class selector for score diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateClass {
    CorrectLlm,
    CorrectHuman,
    Wrong,
}

impl CandidateClass {
    fn selects(&self, entry: &ScoredEntry) -> bool {
        match self {
            CandidateClass::CorrectLlm => !entry.is_human && entry.label == Label::Correct,
            CandidateClass::CorrectHuman => entry.is_human && entry.label == Label::Correct,
            CandidateClass::Wrong => entry.label == Label::Wrong,
        }
    }
}

/// Fraction of selected candidates scored strictly above their own
/// question's mean score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AboveAverageRate {
    pub class: CandidateClass,
    pub above: usize,
    pub total: usize,
    pub rate: f64,
}

/// For each question, compare every selected candidate's score against the
/// mean score over that question's whole candidate set.
pub fn above_average_rate(questions: &[LabeledScores], class: CandidateClass) -> AboveAverageRate {
    let mut above = 0usize;
    let mut total = 0usize;
    for question in questions {
        let entries = question.entries();
        if entries.is_empty() {
            continue;
        }
        let mean = mean_exact(&entries.iter().map(|e| e.score).collect::<Vec<_>>());
        for entry in entries.iter().filter(|e| class.selects(e)) {
            total += 1;
            if exact_score(entry.score) > mean {
                above += 1;
            }
        }
    }
    AboveAverageRate {
        class,
        above,
        total,
        rate: if total == 0 {
            0.0
        } else {
            above as f64 / total as f64
        },
    }
}

/// Mean correct-minus-wrong score gap for the questions falling in one
/// difficulty bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyBinGap {
    pub bin: usize,
    pub low: f64,
    pub high: f64,
    pub questions: usize,
    pub mean_gap: f64,
}

/// Per-question input for the score-gap analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionGapInput {
    pub question_id: String,
    pub difficulty: f64,
    pub scores: LabeledScores,
}

/// Output of [`score_gap_by_difficulty`]; empty bins are omitted from
/// `bins` and listed in `empty_bins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGapCurve {
    pub bins: Vec<DifficultyBinGap>,
    pub empty_bins: Vec<usize>,
}

/// Bin questions by difficulty and report the mean (mean correct - mean
/// wrong) score gap per bin. Questions missing a class are skipped.
pub fn score_gap_by_difficulty(questions: &[QuestionGapInput], bin_count: usize) -> ScoreGapCurve {
    assert!(bin_count >= 1, "at least one difficulty bin required");
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); bin_count];
    for question in questions {
        let entries = question.scores.entries();
        let correct: Vec<f64> = entries
            .iter()
            .filter(|e| e.label == Label::Correct)
            .map(|e| e.score)
            .collect();
        let wrong: Vec<f64> = entries
            .iter()
            .filter(|e| e.label == Label::Wrong)
            .map(|e| e.score)
            .collect();
        if correct.is_empty() || wrong.is_empty() {
            continue;
        }
        let gap = correct.iter().sum::<f64>() / correct.len() as f64
            - wrong.iter().sum::<f64>() / wrong.len() as f64;
        let clamped = question.difficulty.clamp(0.0, 1.0);
        let bin = ((clamped * bin_count as f64) as usize).min(bin_count - 1);
        gaps[bin].push(gap);
    }

    let width = 1.0 / bin_count as f64;
    let mut bins = Vec::new();
    let mut empty_bins = Vec::new();
    for (i, bucket) in gaps.iter().enumerate() {
        if bucket.is_empty() {
            empty_bins.push(i);
            continue;
        }
        bins.push(DifficultyBinGap {
            bin: i,
            low: i as f64 * width,
            high: (i + 1) as f64 * width,
            questions: bucket.len(),
            mean_gap: bucket.iter().sum::<f64>() / bucket.len() as f64,
        });
    }
    ScoreGapCurve { bins, empty_bins }
}
