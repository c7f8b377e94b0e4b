//! The evaluation report document: per-question and group-averaged metric
//! values plus optional analysis blocks, exported with stable field order
//! so identical inputs produce identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use cbu_core::metrics::{
    AboveAverageRate, AggregatedMetrics, MetricOutcome, MetricSet, ScoreGapCurve,
};
use cbu_core::stats::ErrorCurve;

use crate::StoreError;

pub const REPORT_SCHEMA: &str = "cbu-report/v1";

/// Probe accuracies for one feature configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub features: Vec<String>,
    pub samples: usize,
    pub in_sample_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kfold_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kfold_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_policy: Option<String>,
    pub questions: BTreeMap<String, MetricSet>,
    pub groups: BTreeMap<String, MetricSet>,
    pub overall: MetricSet,
    pub undefined_counts: BTreeMap<String, usize>,
    /// Questions whose pools had no usable scores, with reasons.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub skipped_questions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub error_curves: BTreeMap<String, ErrorCurve>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probe: Vec<ProbeRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_gap: Option<ScoreGapCurve>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub above_average: Vec<AboveAverageRate>,
}

fn undefined_set(reason: &str) -> MetricSet {
    let undefined = || MetricOutcome::Undefined(reason.to_string());
    MetricSet {
        acc_at_1: undefined(),
        recall_at_5: undefined(),
        auc: undefined(),
        human_win: undefined(),
        mean_win: undefined(),
    }
}

impl EvaluationReport {
    /// A schema-valid skeleton with no questions.
    pub fn empty() -> EvaluationReport {
        EvaluationReport {
            schema: REPORT_SCHEMA.to_string(),
            method: None,
            human_policy: None,
            questions: BTreeMap::new(),
            groups: BTreeMap::new(),
            overall: undefined_set("no questions evaluated"),
            undefined_counts: MetricSet::METRIC_NAMES
                .iter()
                .map(|&name| (name.to_string(), 0usize))
                .collect(),
            skipped_questions: BTreeMap::new(),
            error_curves: BTreeMap::new(),
            probe: Vec::new(),
            score_gap: None,
            above_average: Vec::new(),
        }
    }

    pub fn from_aggregated(
        per_question: BTreeMap<String, MetricSet>,
        aggregated: AggregatedMetrics,
    ) -> EvaluationReport {
        EvaluationReport {
            questions: per_question,
            groups: aggregated.per_group,
            overall: aggregated.overall,
            undefined_counts: aggregated.undefined_counts,
            ..EvaluationReport::empty()
        }
    }
}

/// Serialize any report-like document with stable two-space indentation and
/// a trailing newline.
pub fn export_json<T: Serialize>(value: &T, path: &Path) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| StoreError::io(path, e))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| StoreError::Encode {
        detail: e.to_string(),
    })?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| StoreError::io(path, e))
}

/// Write the evaluation report to disk.
pub fn export_report(report: &EvaluationReport, path: &Path) -> Result<(), StoreError> {
    export_json(report, path)
}

pub fn load_report(path: &Path) -> Result<EvaluationReport, StoreError> {
    let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::MalformedLine {
        path: path.display().to_string(),
        line: 0,
        detail: e.to_string(),
    })
}
