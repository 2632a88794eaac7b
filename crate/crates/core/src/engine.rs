//! Rollout execution and batch orchestration.
//!
//! A rollout drives the conversation state machine from the opening QUERY to
//! FINALIZE, alternating between the user and assistant backends, then scores
//! the result and applies the validity filters. Batches run every
//! (query, interpretation) pair `n_r` times with per-rollout sampled
//! coefficients on a bounded worker pool; output order is stable regardless
//! of interleaving, so equal seeds give byte-identical output at any
//! parallelism.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    build_assistant_prompt, build_user_prompt, build_user_query_prompt, ActRequest, AgentBackend,
    AgentError, PromptError, TemplateStore, UserPromptPurpose,
};
use crate::protocol::{ConversationState, Phase, ProtocolError};
use crate::scoring::{self, normalize_text, token_f1, ScoringMode};
use crate::types::{
    CostCoefficients, QueryExample, Role, Rollout, Turn, ValidityReason, ValidityVerdict,
};

fn default_n_rollouts() -> u32 {
    192
}

fn default_alpha_grid() -> Vec<f64> {
    vec![0.0, 2.0, 20.0]
}

fn default_beta_grid() -> Vec<f64> {
    vec![0.1, 0.7, 5.0]
}

fn default_max_clarifications() -> u32 {
    1
}

fn default_f1_threshold() -> f64 {
    0.1
}

fn default_ignore_threshold() -> f64 {
    0.5
}

fn default_parallel() -> usize {
    4
}

/// Run-level settings. The defaults mirror the shipped open-domain QA
/// configuration: 192 rollouts per interpretation, coefficient grids
/// {0, 2, 20} x {0.1, 0.7, 5.0}, one clarification, and validity thresholds
/// of 0.1 (F1) and 0.5 (user-ignore fraction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_n_rollouts")]
    pub n_rollouts_per_interpretation: u32,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_beta_grid")]
    pub beta_grid: Vec<f64>,
    #[serde(default = "default_max_clarifications")]
    pub max_clarifications: u32,
    #[serde(default)]
    pub scoring_mode: ScoringMode,
    #[serde(default = "default_f1_threshold")]
    pub f1_validity_threshold: f64,
    #[serde(default = "default_ignore_threshold")]
    pub ignore_fraction_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel_rollouts: usize,
    #[serde(default)]
    pub use_thoughts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_rollouts_per_interpretation: default_n_rollouts(),
            alpha_grid: default_alpha_grid(),
            beta_grid: default_beta_grid(),
            max_clarifications: default_max_clarifications(),
            scoring_mode: ScoringMode::default(),
            f1_validity_threshold: default_f1_threshold(),
            ignore_fraction_threshold: default_ignore_threshold(),
            seed: 0,
            max_parallel_rollouts: default_parallel(),
            use_thoughts: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n_rollouts_per_interpretation == 0 {
            return Err(EngineError::Config("n_rollouts_per_interpretation must be >= 1".into()));
        }
        if self.alpha_grid.is_empty() || self.beta_grid.is_empty() {
            return Err(EngineError::Config("coefficient grids must be non-empty".into()));
        }
        for &alpha in &self.alpha_grid {
            CostCoefficients::new(alpha, 0.0)
                .map_err(|e| EngineError::Config(format!("alpha_grid: {e}")))?;
        }
        for &beta in &self.beta_grid {
            CostCoefficients::new(0.0, beta)
                .map_err(|e| EngineError::Config(format!("beta_grid: {e}")))?;
        }
        for (name, value) in [
            ("f1_validity_threshold", self.f1_validity_threshold),
            ("ignore_fraction_threshold", self.ignore_fraction_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EngineError::Config(format!("{name} must lie in [0, 1], got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend configuration error: {0}")]
    Backend(String),
    #[error("sink write failed after {written} rollout(s): {source}")]
    Sink {
        written: usize,
        source: std::io::Error,
    },
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// Deterministic stream of draws, stable across platforms and runs.
pub struct RolloutRng(ChaCha8Rng);

impl RolloutRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[(self.next_u64() % items.len() as u64) as usize]
    }
}

/// Stable per-rollout seed derived from the run seed and rollout identity,
/// so coefficient draws do not depend on scheduling.
fn derive_seed(run_seed: u64, query_id: &str, interpretation: usize, ordinal: u32) -> u64 {
    let mut h = 0xcbf29ce484222325u64; // FNV-1a
    for byte in query_id.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut mix = |value: u64| {
        h ^= value;
        h = h.wrapping_mul(0x9e3779b97f4a7c15);
        h ^= h >> 29;
    };
    mix(run_seed);
    mix(interpretation as u64);
    mix(ordinal as u64);
    h
}

/// Independent uniform draws from each grid.
pub fn sample_coefficients(
    rng: &mut RolloutRng,
    alpha_grid: &[f64],
    beta_grid: &[f64],
) -> CostCoefficients {
    let alpha = *rng.pick(alpha_grid);
    let beta = *rng.pick(beta_grid);
    CostCoefficients { alpha, beta }
}

/// Execute one conversation to completion. Backend failures and protocol
/// violations produce a rollout marked invalid rather than an error; only
/// configuration problems abort.
pub fn run_rollout(
    example: &Arc<QueryExample>,
    interpretation_index: usize,
    coefficients: CostCoefficients,
    user: &dyn AgentBackend,
    assistant: &dyn AgentBackend,
    config: &RunConfig,
    templates: &TemplateStore,
    rollout_id: String,
) -> Result<Rollout, EngineError> {
    let mut state = ConversationState::new(
        Arc::clone(example),
        interpretation_index,
        coefficients,
        config.max_clarifications,
    )
    .map_err(|e| EngineError::Internal(e.to_string()))?;

    let fail = |state: &ConversationState, reason: ValidityReason| -> Rollout {
        let mut rollout = Rollout {
            rollout_id: rollout_id.clone(),
            query_id: example.id.clone(),
            interpretation_index,
            coefficients,
            turns: state.turns.clone(),
            final_answer: String::new(),
            reward: None,
            valid: None,
            invalid_reason: None,
        };
        rollout.set_verdict(ValidityVerdict::invalid(reason));
        rollout
    };

    let turn_limit = 3 + 2 * config.max_clarifications + 2;
    while state.phase != Phase::Terminal {
        if state.turns.len() as u32 >= turn_limit {
            return Ok(fail(&state, ValidityReason::ProtocolViolation));
        }
        let (role, backend, prompt) = match state.phase {
            Phase::AwaitUserQuery => (Role::User, user, build_user_query_prompt(&state)?),
            Phase::AwaitUserClarResponse => (
                Role::User,
                user,
                build_user_prompt(&state, UserPromptPurpose::ClarificationResponse, templates)?,
            ),
            Phase::AwaitUserFinalize => (
                Role::User,
                user,
                build_user_prompt(&state, UserPromptPurpose::Finalize, templates)?,
            ),
            Phase::AwaitAssistant => (
                Role::Assistant,
                assistant,
                build_assistant_prompt(&state, config.use_thoughts, templates)?,
            ),
            Phase::Terminal => unreachable!("loop guard"),
        };
        let allowed = state
            .allowed_actions()
            .map_err(|e| EngineError::Internal(e.to_string()))?;
        let decision = match backend.act(&ActRequest {
            state: &state,
            role,
            prompt: &prompt,
            allowed: &allowed,
        }) {
            Ok(decision) => decision,
            Err(AgentError::Recoverable { .. }) => {
                return Ok(fail(&state, ValidityReason::ParseFailure));
            }
            Err(AgentError::Config(message)) => return Err(EngineError::Backend(message)),
        };
        let turn = Turn {
            role,
            prompt: prompt.rendered,
            thought: decision.thought,
            action: decision.action,
            observation: decision.observation,
        };
        state = match state.advance(turn) {
            Ok(next) => next,
            Err(ProtocolError::Terminal) => {
                return Err(EngineError::Internal("advance on terminal state".into()))
            }
            Err(_) => return Ok(fail(&state, ValidityReason::ProtocolViolation)),
        };
    }

    let interpretation = example.interpretations[interpretation_index].clone();
    let mut rollout = state
        .into_rollout(rollout_id)
        .ok_or_else(|| EngineError::Internal("terminal state without final answer".into()))?;
    let breakdown = scoring::reward(&rollout, &interpretation, config.scoring_mode)
        .map_err(|e| EngineError::Internal(e.to_string()))?;
    rollout.reward = Some(breakdown);
    Ok(rollout)
}

/// Fraction of the user's final-answer tokens that never appear in the
/// assistant's answer. High values mean the user ignored the assistant.
fn ignored_fraction(final_answer: &str, assistant_answer: &str) -> f64 {
    let final_tokens = normalize_text(final_answer);
    if final_tokens.is_empty() {
        return 0.0;
    }
    let assistant_tokens: std::collections::BTreeSet<String> =
        normalize_text(assistant_answer).into_iter().collect();
    let missing = final_tokens
        .iter()
        .filter(|tok| !assistant_tokens.contains(*tok))
        .count();
    missing as f64 / final_tokens.len() as f64
}

/// Apply the validity filters in order: execution faults pass through, then
/// the user-ignore check, then the F1 threshold.
pub fn validate_rollout(
    rollout: &Rollout,
    interpretation: &crate::types::Interpretation,
    config: &RunConfig,
) -> ValidityVerdict {
    if let Some(verdict) = rollout.verdict() {
        if !verdict.valid {
            return verdict;
        }
    }
    if rollout.turns.len() >= 2 {
        let assistant_answer = &rollout.turns[rollout.turns.len() - 2].observation;
        if ignored_fraction(&rollout.final_answer, assistant_answer)
            > config.ignore_fraction_threshold
        {
            return ValidityVerdict::invalid(ValidityReason::UserIgnoredAssistant);
        }
    }
    let best_f1 = interpretation
        .gold_answers
        .iter()
        .map(|gold| token_f1(&rollout.final_answer, gold, config.scoring_mode))
        .fold(0.0, f64::max);
    if best_f1 < config.f1_validity_threshold {
        return ValidityVerdict::invalid(ValidityReason::LowF1);
    }
    ValidityVerdict::ok()
}

/// Where completed rollouts go. Implementations need not be thread-safe; the
/// engine serializes writes.
pub trait RolloutSink {
    fn write(&mut self, rollout: &Rollout) -> std::io::Result<()>;
}

/// Verdict counts for a finished batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    pub ok: usize,
    pub low_f1: usize,
    pub user_ignored: usize,
    pub parse_failure: usize,
    pub protocol_violation: usize,
}

impl BatchSummary {
    fn record(&mut self, reason: ValidityReason) {
        self.total += 1;
        match reason {
            ValidityReason::Ok => self.ok += 1,
            ValidityReason::LowF1 => self.low_f1 += 1,
            ValidityReason::UserIgnoredAssistant => self.user_ignored += 1,
            ValidityReason::ParseFailure => self.parse_failure += 1,
            ValidityReason::ProtocolViolation => self.protocol_violation += 1,
        }
    }
}

impl std::fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} rollouts: {} valid, {} low-F1, {} user-ignored, {} parse failures, {} protocol violations",
            self.total, self.ok, self.low_f1, self.user_ignored, self.parse_failure,
            self.protocol_violation
        )
    }
}

struct TaskSpec {
    query_index: usize,
    interpretation_index: usize,
    ordinal: u32,
}

/// Run `n_r` rollouts for every (query, interpretation) pair, score and
/// validate each, and stream them to the sink sorted by (query,
/// interpretation, ordinal) no matter how workers interleave.
pub fn run_batch(
    dataset: &[QueryExample],
    config: &RunConfig,
    user: &dyn AgentBackend,
    assistant: &dyn AgentBackend,
    templates: &TemplateStore,
    sink: &mut dyn RolloutSink,
) -> Result<BatchSummary, EngineError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(EngineError::Config("dataset is empty".into()));
    }
    let examples: Vec<Arc<QueryExample>> =
        dataset.iter().map(|q| Arc::new(q.clone())).collect();

    let mut tasks = Vec::new();
    for (query_index, example) in examples.iter().enumerate() {
        for interpretation_index in 0..example.interpretations.len() {
            for ordinal in 0..config.n_rollouts_per_interpretation {
                tasks.push(TaskSpec {
                    query_index,
                    interpretation_index,
                    ordinal,
                });
            }
        }
    }

    let n_tasks = tasks.len();
    let n_workers = config.max_parallel_rollouts.max(1).min(n_tasks.max(1));
    let next_task = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<Rollout, EngineError>)>();

    let mut summary = BatchSummary::default();
    let mut written = 0usize;
    let mut first_error: Option<EngineError> = None;

    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            let tx = tx.clone();
            let tasks = &tasks;
            let examples = &examples;
            let next_task = &next_task;
            scope.spawn(move || loop {
                let index = next_task.fetch_add(1, Ordering::Relaxed);
                if index >= n_tasks {
                    break;
                }
                let task = &tasks[index];
                let example = &examples[task.query_index];
                let mut rng = RolloutRng::new(derive_seed(
                    config.seed,
                    &example.id,
                    task.interpretation_index,
                    task.ordinal,
                ));
                let coefficients =
                    sample_coefficients(&mut rng, &config.alpha_grid, &config.beta_grid);
                let rollout_id = format!(
                    "{}-i{}-r{:05}",
                    example.id, task.interpretation_index, task.ordinal
                );
                let result = run_rollout(
                    example,
                    task.interpretation_index,
                    coefficients,
                    user,
                    assistant,
                    config,
                    templates,
                    rollout_id,
                )
                .map(|mut rollout| {
                    let interpretation =
                        &example.interpretations[task.interpretation_index];
                    let verdict = validate_rollout(&rollout, interpretation, config);
                    rollout.set_verdict(verdict);
                    rollout
                });
                if tx.send((index, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Reorder-release: write strictly in task order.
        let mut pending: BTreeMap<usize, Result<Rollout, EngineError>> = BTreeMap::new();
        let mut next_to_write = 0usize;
        for (index, result) in rx {
            pending.insert(index, result);
            while let Some(result) = pending.remove(&next_to_write) {
                next_to_write += 1;
                if first_error.is_some() {
                    continue;
                }
                match result {
                    Ok(rollout) => {
                        if rollout.is_valid() {
                            if let Err(e) = rollout.check_structure() {
                                first_error = Some(EngineError::Internal(e.to_string()));
                                continue;
                            }
                        }
                        match sink.write(&rollout) {
                            Ok(()) => {
                                written += 1;
                                summary.record(
                                    rollout
                                        .verdict()
                                        .map(|v| v.reason)
                                        .unwrap_or(ValidityReason::Ok),
                                );
                                if written % 1000 == 0 {
                                    log::info!("{written}/{n_tasks} rollouts written");
                                }
                            }
                            Err(source) => {
                                first_error = Some(EngineError::Sink { written, source });
                            }
                        }
                    }
                    Err(e) => first_error = Some(e),
                }
            }
        }
    });

    match first_error {
        Some(error) => {
            log::warn!("batch aborted after {written} rollouts: {error}");
            Err(error)
        }
        None => {
            log::info!("batch complete: {summary}");
            Ok(summary)
        }
    }
}
