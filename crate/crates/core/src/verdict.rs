//! Final-answer extraction and validator-score parsing.
//!
//! Everything here is pure text processing. Absence of a boxed answer is a
//! value, not an error; a completion that cannot be parsed into a judge score
//! is an error so callers can record it as an unparseable rollout.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The final answer extracted from a completion, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    /// Exact text between the braces of the winning boxed expression.
    pub raw_span: String,
    /// Normalized form used for comparison; empty when not found.
    pub canonical: String,
    pub found: bool,
}

impl ParsedAnswer {
    pub fn not_found() -> Self {
        ParsedAnswer {
            raw_span: String::new(),
            canonical: String::new(),
            found: false,
        }
    }
}

static INTEGER_FORM: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[+-]?[0-9]+$").unwrap());

/// Normalize an answer string for comparison: trim whitespace, strip comma
/// thousands separators, and canonicalize sign and leading zeros on integer
/// forms. Non-integer answers are compared as trimmed exact strings.
pub fn normalize_answer(answer: &str) -> String {
    let trimmed = answer.trim();
    let stripped = trimmed.replace(',', "");
    if INTEGER_FORM.is_match(&stripped) {
        let (negative, digits) = match stripped.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, stripped.strip_prefix('+').unwrap_or(&stripped)),
        };
        let digits = digits.trim_start_matches('0');
        if digits.is_empty() {
            return "0".to_string();
        }
        if negative {
            return format!("-{digits}");
        }
        return digits.to_string();
    }
    trimmed.to_string()
}

/// Extract the last brace-balanced `\boxed{...}` expression from a completion.
///
/// Reasoning traces often restate drafts before committing to an answer, so
/// the last balanced occurrence wins. An occurrence whose braces never close
/// is skipped.
pub fn extract_boxed(completion: &str) -> ParsedAnswer {
    const MARKER: &str = "\\boxed{";
    let bytes = completion.as_bytes();
    let mut last_span: Option<&str> = None;
    let mut search_from = 0;

    while let Some(rel) = completion[search_from..].find(MARKER) {
        let open = search_from + rel + MARKER.len() - 1;
        let mut depth = 0usize;
        let mut close = None;
        for (offset, &byte) in bytes[open..].iter().enumerate() {
            match byte {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(open + offset);
                        break;
                    }
                }
                _ => {}
            }
        }
        match close {
            Some(end) => {
                last_span = Some(&completion[open + 1..end]);
                search_from = end + 1;
            }
            // Unterminated box: nothing later can close it either.
            None => break,
        }
    }

    match last_span {
        Some(span) => ParsedAnswer {
            raw_span: span.to_string(),
            canonical: normalize_answer(span),
            found: true,
        },
        None => ParsedAnswer::not_found(),
    }
}

/// Binary verifier: 1 iff the extracted answer matches the gold answer under
/// normalization, 0 otherwise (including when nothing was extracted).
pub fn verify_answer(parsed: &ParsedAnswer, gold: &str) -> u8 {
    debug_assert!(!gold.is_empty(), "gold answer must be non-empty");
    if parsed.found && parsed.canonical == normalize_answer(gold) {
        1
    } else {
        0
    }
}

/// Judge scoring scheme, selecting the output convention to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeScheme {
    /// `Score: k` with k an integer from 1 to 10.
    TenPoint,
    /// `<score>k</score>` with k an integer from 0 to 7.
    Proofgrader,
    /// `Accepted: [[Y]]` or `Accepted: [[N]]`.
    UqBinary,
}

impl JudgeScheme {
    /// Inclusive score bounds for the scheme.
    pub fn scale(&self) -> (f64, f64) {
        match self {
            JudgeScheme::TenPoint => (1.0, 10.0),
            JudgeScheme::Proofgrader => (0.0, 7.0),
            JudgeScheme::UqBinary => (0.0, 1.0),
        }
    }
}

/// A parsed judge rating together with its scheme and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub scheme: JudgeScheme,
    pub value: f64,
    pub scale: (f64, f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no {pattern} pattern found in completion")]
    NoMatch { pattern: &'static str },
    #[error("score {value} outside [{low}, {high}]")]
    OutOfRange { value: i64, low: i64, high: i64 },
    #[error("malformed audit payload: {0}")]
    MalformedAudit(String),
}

static TEN_POINT: Lazy<Regex> = Lazy::new(|| Regex::new(r"Score:\s*(-?[0-9]+)").unwrap());
static SCORE_TAG: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"<score>\s*(-?[0-9]+)\s*</score>").unwrap());
static ACCEPTED: Lazy<Regex> = Lazy::new(|| Regex::new(r"Accepted:\s*\[\[(Y|N)\]\]").unwrap());

fn last_integer_match(re: &Regex, completion: &str, pattern: &'static str) -> Result<i64, ParseError> {
    let capture = re
        .captures_iter(completion)
        .last()
        .ok_or(ParseError::NoMatch { pattern })?;
    capture[1]
        .parse::<i64>()
        .map_err(|_| ParseError::NoMatch { pattern })
}

/// Parse a judge completion into a verdict under the given scheme.
///
/// The last occurrence of the scheme's pattern wins. Integers outside the
/// scheme's bounds are range errors, not clamped.
pub fn parse_judge_score(completion: &str, scheme: JudgeScheme) -> Result<JudgeVerdict, ParseError> {
    let value = match scheme {
        JudgeScheme::TenPoint => {
            let value = last_integer_match(&TEN_POINT, completion, "Score: <integer>")?;
            if !(1..=10).contains(&value) {
                return Err(ParseError::OutOfRange {
                    value,
                    low: 1,
                    high: 10,
                });
            }
            value as f64
        }
        JudgeScheme::Proofgrader => {
            let value = last_integer_match(&SCORE_TAG, completion, "<score>...</score>")?;
            if !(0..=7).contains(&value) {
                return Err(ParseError::OutOfRange {
                    value,
                    low: 0,
                    high: 7,
                });
            }
            value as f64
        }
        JudgeScheme::UqBinary => {
            let capture = ACCEPTED
                .captures_iter(completion)
                .last()
                .ok_or(ParseError::NoMatch {
                    pattern: "Accepted: [[Y]] / [[N]]",
                })?;
            if &capture[1] == "Y" {
                1.0
            } else {
                0.0
            }
        }
    };
    Ok(JudgeVerdict {
        scheme,
        value,
        scale: scheme.scale(),
    })
}

/// One quoted piece of evidence from an error-audit completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvidence {
    pub quote: String,
    /// Set when the quote is not a verbatim substring of the audited solution.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub quote_violation: bool,
}

/// One tagged failure category from an error-audit completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCategory {
    pub id: u8,
    pub name: String,
    pub evidence: Vec<AuditEvidence>,
    /// Set for ids outside the documented 1-4 taxonomy.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub outside_taxonomy: bool,
}

#[derive(Deserialize)]
struct RawAuditPayload {
    categories: Vec<RawAuditCategory>,
}

#[derive(Deserialize)]
struct RawAuditCategory {
    id: u8,
    name: String,
    #[serde(default)]
    evidence: Vec<RawAuditEvidence>,
}

#[derive(Deserialize)]
struct RawAuditEvidence {
    quote: String,
}

fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        if let Some(body) = rest.strip_suffix("```") {
            return body.trim();
        }
    }
    trimmed
}

/// Parse a strict-JSON error-audit completion.
///
/// When `solution_text` is supplied, every quote is checked to be a verbatim
/// substring of it; a failing quote is flagged but its category is retained.
/// Ids 1-4 are the documented taxonomy; 5 and 6 are accepted and flagged.
pub fn parse_error_audit(
    completion: &str,
    solution_text: Option<&str>,
) -> Result<Vec<AuditCategory>, ParseError> {
    let payload: RawAuditPayload = serde_json::from_str(strip_code_fence(completion))
        .map_err(|e| ParseError::MalformedAudit(e.to_string()))?;

    let mut categories = Vec::with_capacity(payload.categories.len());
    for raw in payload.categories {
        if !(1..=6).contains(&raw.id) {
            return Err(ParseError::OutOfRange {
                value: raw.id as i64,
                low: 1,
                high: 6,
            });
        }
        let evidence = raw
            .evidence
            .into_iter()
            .map(|e| {
                let quote_violation = match solution_text {
                    Some(text) => !text.contains(&e.quote),
                    None => false,
                };
                AuditEvidence {
                    quote: e.quote,
                    quote_violation,
                }
            })
            .collect();
        categories.push(AuditCategory {
            id: raw.id,
            name: raw.name,
            evidence,
            outside_taxonomy: raw.id > 4,
        });
    }
    Ok(categories)
}
