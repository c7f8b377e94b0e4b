//! Orchestrates scoring runs: renders prompts, issues rollouts through the
//! gateway (consulting the cache first), verifies or parses completions,
//! and aggregates them into utility, judge, and solvability estimates.
//!
//! Verdicts and parsed scores are always recomputed from the completion
//! text, so a cached completion and a fresh one take the same path; the
//! cache only short-circuits generation.

use std::collections::BTreeMap;

use thiserror::Error;

use cbu_core::model::{Candidate, NeighborhoodCount, Problem, Rollout};
use cbu_core::scoring::{
    aggregate_judge_scores, JudgeAggregate, SolvabilityEstimate, TrialPolicy, UtilityEstimate,
};
use cbu_core::template::{render, Template, TemplateError, TemplateId};
use cbu_core::verdict::{
    extract_boxed, parse_error_audit, parse_judge_score, verify_answer, AuditCategory, JudgeScheme,
};
use cbu_gateway::{Gateway, GenerationRequest, SamplingParams};
use cbu_store::{CacheKey, CacheRecord, RolloutCache, StoreError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Per-run generation settings shared by the scoring operations.
#[derive(Debug, Clone)]
pub struct RolloutConfig {
    pub backend_id: String,
    pub sampling: SamplingParams,
}

/// Instruction used for bare solve attempts (solvability estimation),
/// which run without any exemplar in context.
pub const BARE_ATTEMPT_INSTRUCTION: &str =
    "Solve the provided question below and output the final answer in the following format: \\boxed{N}.";

fn bare_prompt(statement: &str) -> String {
    format!("{BARE_ATTEMPT_INSTRUCTION}\n\n{statement}")
}

/// A question that can be attempted bare: statement plus gold answer.
#[derive(Debug, Clone)]
pub struct BareQuestion {
    pub id: String,
    pub statement: String,
    pub gold_answer: String,
}

/// One planned generation: the prompt with its cache identity.
struct PlannedCall {
    key: CacheKey,
    request: GenerationRequest,
}

/// Outcome of scoring one candidate with neighborhood rollouts.
#[derive(Debug)]
pub struct CbuOutcome {
    /// Absent when every rollout failed at transport level.
    pub estimate: Option<UtilityEstimate>,
    pub rollouts: Vec<Rollout>,
    pub failed_rollouts: u32,
    /// (neighborhood id, prompt hash) per neighborhood question.
    pub neighborhood_hashes: Vec<(String, String)>,
}

/// Outcome of judge-scoring one candidate.
#[derive(Debug)]
pub struct JudgeOutcome {
    /// Absent when no rollout produced a parseable score.
    pub aggregate: Option<JudgeAggregate>,
    pub rollouts: Vec<Rollout>,
    pub failed_rollouts: u32,
    pub prompt_hash: String,
}

#[derive(Debug)]
pub struct SolvabilityOutcome {
    /// Absent when every attempt failed at transport level.
    pub estimate: Option<SolvabilityEstimate>,
    pub rollouts: Vec<Rollout>,
    pub failed_rollouts: u32,
    pub prompt_hash: String,
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub problem_id: String,
    pub candidate_id: String,
    pub categories: Option<Vec<AuditCategory>>,
    pub parse_error: Option<String>,
    pub rollout: Option<Rollout>,
}

/// Scoring engine: a gateway plus the rollout cache.
pub struct Engine {
    gateway: Gateway,
    cache: RolloutCache,
}

impl Engine {
    pub fn new(gateway: Gateway, cache: RolloutCache) -> Engine {
        Engine { gateway, cache }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn cache(&self) -> &RolloutCache {
        &self.cache
    }

    fn require_backend(&self, backend_id: &str) -> Result<(), EngineError> {
        if self.gateway.has_backend(backend_id) {
            Ok(())
        } else {
            Err(EngineError::Config(format!(
                "backend {backend_id:?} is not configured"
            )))
        }
    }

    /// Run every planned call, consulting the cache first and persisting
    /// fresh completions. Returns per-call completions in plan order; a
    /// transport-level failure yields `None` for its slot.
    async fn run_calls(
        &mut self,
        calls: Vec<PlannedCall>,
    ) -> Result<Vec<Option<String>>, EngineError> {
        let mut completions: Vec<Option<String>> = vec![None; calls.len()];
        let mut pending = Vec::new();

        for (slot, call) in calls.iter().enumerate() {
            match self.cache.get(&call.key, &call.request.prompt)? {
                Some(record) => completions[slot] = Some(record.completion.clone()),
                None => pending.push(slot),
            }
        }

        if !pending.is_empty() {
            let requests: Vec<GenerationRequest> = pending
                .iter()
                .map(|&slot| calls[slot].request.clone())
                .collect();
            let results = self.gateway.generate_batch(&requests).await;
            for (&slot, result) in pending.iter().zip(results) {
                match result {
                    Ok(completion) => {
                        let call = &calls[slot];
                        self.cache.put(CacheRecord {
                            backend_id: call.key.backend_id.clone(),
                            prompt_hash: call.key.prompt_hash.clone(),
                            sampling_digest: call.key.sampling_digest.clone(),
                            index: call.key.index,
                            prompt: call.request.prompt.clone(),
                            completion: completion.clone(),
                            verdict: None,
                            parsed_score: None,
                        })?;
                        completions[slot] = Some(completion);
                    }
                    Err(error) => {
                        log::warn!(
                            "rollout failed (backend {}, index {}): {error}; excluded with support decremented",
                            calls[slot].key.backend_id,
                            calls[slot].key.index
                        );
                    }
                }
            }
        }
        Ok(completions)
    }

    fn plan_call(
        &self,
        config: &RolloutConfig,
        template_tag: &str,
        prompt: String,
        index: u32,
    ) -> PlannedCall {
        let canonical = config.sampling.canonical();
        PlannedCall {
            key: CacheKey::new(&config.backend_id, template_tag, &prompt, &canonical, index),
            request: GenerationRequest {
                backend_id: config.backend_id.clone(),
                prompt,
                sampling: config.sampling.clone(),
                index,
            },
        }
    }

    /// Utility of one candidate: issue `t` exemplar-conditioned rollouts per
    /// neighborhood question, verify each final answer, and pool the counts.
    pub async fn score_cbu(
        &mut self,
        problem: &Problem,
        candidate: &Candidate,
        t: u32,
        config: &RolloutConfig,
    ) -> Result<CbuOutcome, EngineError> {
        if problem.neighborhoods.is_empty() {
            return Err(EngineError::Config(format!(
                "problem {:?} has no neighborhood questions",
                problem.id
            )));
        }
        if t == 0 {
            return Err(EngineError::Config("t must be at least 1".to_string()));
        }
        self.require_backend(&config.backend_id)?;

        let template = Template::get(TemplateId::Cbu);
        let mut calls = Vec::with_capacity(problem.neighborhoods.len() * t as usize);
        for neighborhood in &problem.neighborhoods {
            let bindings = BTreeMap::from([
                ("original_question", problem.statement.as_str()),
                ("candidate_solution", candidate.solution_text.as_str()),
                ("variant_question", neighborhood.statement.as_str()),
            ]);
            let prompt = render(&template, &bindings)?;
            for index in 0..t {
                calls.push(self.plan_call(config, "cbu", prompt.clone(), index));
            }
        }
        let keys: Vec<(String, String)> = calls
            .iter()
            .map(|c| (c.key.prompt_hash.clone(), c.key.sampling_digest.clone()))
            .collect();

        let completions = self.run_calls(calls).await?;

        let mut counts = Vec::with_capacity(problem.neighborhoods.len());
        let mut rollouts = Vec::new();
        let mut failed = 0u32;
        for (n_index, neighborhood) in problem.neighborhoods.iter().enumerate() {
            let mut successes = 0u32;
            let mut trials = 0u32;
            for index in 0..t {
                let slot = n_index * t as usize + index as usize;
                match &completions[slot] {
                    Some(completion) => {
                        let verdict =
                            verify_answer(&extract_boxed(completion), &neighborhood.gold_answer);
                        trials += 1;
                        successes += u32::from(verdict);
                        rollouts.push(Rollout {
                            backend_id: config.backend_id.clone(),
                            prompt_hash: keys[slot].0.clone(),
                            sampling_digest: keys[slot].1.clone(),
                            index,
                            completion: completion.clone(),
                            verdict: Some(verdict),
                            parsed_score: None,
                        });
                    }
                    None => failed += 1,
                }
            }
            counts.push(NeighborhoodCount {
                neighborhood_id: neighborhood.id.clone(),
                successes,
                trials,
            });
        }

        let total_trials: u32 = counts.iter().map(|c| c.trials).sum();
        let estimate = if total_trials == 0 {
            log::warn!(
                "candidate {:?} has no usable rollouts; no utility recorded",
                candidate.id
            );
            None
        } else {
            Some(
                UtilityEstimate::from_counts(candidate.id.clone(), counts, TrialPolicy::Ragged)
                    .expect("counts validated during accumulation"),
            )
        };
        let neighborhood_hashes = problem
            .neighborhoods
            .iter()
            .enumerate()
            .map(|(n_index, neighborhood)| {
                (
                    neighborhood.id.clone(),
                    keys[n_index * t as usize].0.clone(),
                )
            })
            .collect();
        Ok(CbuOutcome {
            estimate,
            rollouts,
            failed_rollouts: failed,
            neighborhood_hashes,
        })
    }

    /// Judge-score one candidate with `t` independent calls under the given
    /// scheme; the mean is over parseable calls only.
    pub async fn score_judge(
        &mut self,
        problem: &Problem,
        candidate: &Candidate,
        scheme: JudgeScheme,
        t: u32,
        config: &RolloutConfig,
    ) -> Result<JudgeOutcome, EngineError> {
        if t == 0 {
            return Err(EngineError::Config("t must be at least 1".to_string()));
        }
        self.require_backend(&config.backend_id)?;

        let template_id = match scheme {
            JudgeScheme::TenPoint => TemplateId::JudgeDefault,
            JudgeScheme::Proofgrader => TemplateId::JudgeProofgrader,
            JudgeScheme::UqBinary => TemplateId::JudgeUq,
        };
        let template = Template::get(template_id);
        let bindings = BTreeMap::from([
            ("original_question", problem.statement.as_str()),
            ("candidate_solution", candidate.solution_text.as_str()),
        ]);
        let prompt = render(&template, &bindings)?;
        let tag = template_id.name();
        let calls: Vec<PlannedCall> = (0..t)
            .map(|index| self.plan_call(config, tag, prompt.clone(), index))
            .collect();
        let keys: Vec<(String, String)> = calls
            .iter()
            .map(|c| (c.key.prompt_hash.clone(), c.key.sampling_digest.clone()))
            .collect();

        let completions = self.run_calls(calls).await?;

        let mut parseable = Vec::new();
        let mut unparseable = 0u32;
        let mut failed = 0u32;
        let mut rollouts = Vec::new();
        for (index, completion) in completions.iter().enumerate() {
            let Some(completion) = completion else {
                failed += 1;
                continue;
            };
            let parsed = parse_judge_score(completion, scheme);
            let parsed_score = match &parsed {
                Ok(verdict) => {
                    parseable.push(verdict.value);
                    Some(verdict.value)
                }
                Err(error) => {
                    unparseable += 1;
                    log::warn!(
                        "unparseable judge rollout for candidate {:?} (index {index}): {error}",
                        candidate.id
                    );
                    None
                }
            };
            rollouts.push(Rollout {
                backend_id: config.backend_id.clone(),
                prompt_hash: keys[index].0.clone(),
                sampling_digest: keys[index].1.clone(),
                index: index as u32,
                completion: completion.clone(),
                verdict: None,
                parsed_score,
            });
        }

        let aggregate = aggregate_judge_scores(&parseable, unparseable);
        if aggregate.is_none() {
            log::warn!(
                "candidate {:?} produced no parseable judge scores; excluded from metrics",
                candidate.id
            );
        }
        Ok(JudgeOutcome {
            aggregate,
            rollouts,
            failed_rollouts: failed,
            prompt_hash: keys[0].0.clone(),
        })
    }

    /// Bare-attempt solve rate over `k` attempts (no exemplar in context).
    pub async fn estimate_solvability(
        &mut self,
        question: &BareQuestion,
        k: u32,
        config: &RolloutConfig,
    ) -> Result<SolvabilityOutcome, EngineError> {
        if k == 0 {
            return Err(EngineError::Config("k must be at least 1".to_string()));
        }
        self.require_backend(&config.backend_id)?;

        let prompt = bare_prompt(&question.statement);
        let calls: Vec<PlannedCall> = (0..k)
            .map(|index| self.plan_call(config, "bare", prompt.clone(), index))
            .collect();
        let keys: Vec<(String, String)> = calls
            .iter()
            .map(|c| (c.key.prompt_hash.clone(), c.key.sampling_digest.clone()))
            .collect();

        let completions = self.run_calls(calls).await?;

        let mut successes = 0u32;
        let mut attempts = 0u32;
        let mut failed = 0u32;
        let mut rollouts = Vec::new();
        for (index, completion) in completions.iter().enumerate() {
            let Some(completion) = completion else {
                failed += 1;
                continue;
            };
            let verdict = verify_answer(&extract_boxed(completion), &question.gold_answer);
            attempts += 1;
            successes += u32::from(verdict);
            rollouts.push(Rollout {
                backend_id: config.backend_id.clone(),
                prompt_hash: keys[index].0.clone(),
                sampling_digest: keys[index].1.clone(),
                index: index as u32,
                completion: completion.clone(),
                verdict: Some(verdict),
                parsed_score: None,
            });
        }

        let estimate = if attempts == 0 {
            log::warn!("question {:?} has no usable attempts", question.id);
            None
        } else {
            Some(
                SolvabilityEstimate::new(question.id.clone(), attempts, successes)
                    .expect("successes bounded by attempts"),
            )
        };
        Ok(SolvabilityOutcome {
            estimate,
            rollouts,
            failed_rollouts: failed,
            prompt_hash: keys[0].0.clone(),
        })
    }

    /// One reasoning-failure audit pass over a (question, solution) pair.
    pub async fn audit(
        &mut self,
        problem: &Problem,
        candidate: &Candidate,
        config: &RolloutConfig,
    ) -> Result<AuditOutcome, EngineError> {
        self.require_backend(&config.backend_id)?;
        let template = Template::get(TemplateId::ErrorAudit);
        let bindings = BTreeMap::from([
            ("original_question", problem.statement.as_str()),
            ("candidate_solution", candidate.solution_text.as_str()),
        ]);
        let prompt = render(&template, &bindings)?;
        let call = self.plan_call(config, TemplateId::ErrorAudit.name(), prompt, 0);
        let key = (call.key.prompt_hash.clone(), call.key.sampling_digest.clone());
        let completions = self.run_calls(vec![call]).await?;

        let Some(completion) = completions.into_iter().next().flatten() else {
            return Ok(AuditOutcome {
                problem_id: problem.id.clone(),
                candidate_id: candidate.id.clone(),
                categories: None,
                parse_error: Some("generation failed".to_string()),
                rollout: None,
            });
        };
        let (categories, parse_error) =
            match parse_error_audit(&completion, Some(&candidate.solution_text)) {
                Ok(categories) => (Some(categories), None),
                Err(error) => (None, Some(error.to_string())),
            };
        Ok(AuditOutcome {
            problem_id: problem.id.clone(),
            candidate_id: candidate.id.clone(),
            categories,
            parse_error,
            rollout: Some(Rollout {
                backend_id: config.backend_id.clone(),
                prompt_hash: key.0,
                sampling_digest: key.1,
                index: 0,
                completion,
                verdict: None,
                parsed_score: None,
            }),
        })
    }
}
