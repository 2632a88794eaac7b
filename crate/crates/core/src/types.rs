//! Domain types shared across the pipeline: queries, interpretations,
//! cost coefficients, turns, rollouts, and validity verdicts.
//!
//! All types are immutable value objects after construction and are safe to
//! share across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which agent produced a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    User,
    Assistant,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::User => write!(f, "USER"),
            Role::Assistant => write!(f, "ASSISTANT"),
        }
    }
}

/// The six protocol actions. QUERY/RESPOND/FINALIZE belong to the user
/// simulator; CLARIFY/ANSWER/MULTI_ANS belong to the assistant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Query,
    Clarify,
    Respond,
    Answer,
    MultiAns,
    Finalize,
}

impl Action {
    /// The agent allowed to take this action.
    pub fn role(self) -> Role {
        match self {
            Action::Query | Action::Respond | Action::Finalize => Role::User,
            Action::Clarify | Action::Answer | Action::MultiAns => Role::Assistant,
        }
    }

    /// Single-letter label used in compact sequence displays.
    pub fn letter(self) -> char {
        match self {
            Action::Query => 'Q',
            Action::Clarify => 'C',
            Action::Respond => 'R',
            Action::Answer => 'A',
            Action::MultiAns => 'M',
            Action::Finalize => 'F',
        }
    }

    /// All six actions, in declaration order.
    pub const ALL: [Action; 6] = [
        Action::Query,
        Action::Clarify,
        Action::Respond,
        Action::Answer,
        Action::MultiAns,
        Action::Finalize,
    ];
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Action::Query => "QUERY",
            Action::Clarify => "CLARIFY",
            Action::Respond => "RESPOND",
            Action::Answer => "ANSWER",
            Action::MultiAns => "MULTI_ANS",
            Action::Finalize => "FINALIZE",
        };
        write!(f, "{name}")
    }
}

/// The ordered action labels a rollout coarsens to; the unit over which
/// expected reward is maximized. Equality is exact and elementwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSequence(pub Vec<Action>);

impl ActionSequence {
    pub fn new(actions: Vec<Action>) -> Self {
        Self(actions)
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, action: Action) -> bool {
        self.0.contains(&action)
    }

    /// Compact single-letter form, e.g. "QCRAF".
    pub fn compact(&self) -> String {
        self.0.iter().map(|a| a.letter()).collect()
    }
}

impl std::fmt::Display for ActionSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Per-clarification (alpha) and per-word (beta) penalties. Both must be
/// finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub alpha: f64,
    pub beta: f64,
}

impl CostCoefficients {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ValidationError> {
        let c = Self { alpha, beta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(ValidationError::BadCoefficient {
                name: "alpha",
                value: self.alpha,
            });
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(ValidationError::BadCoefficient {
                name: "beta",
                value: self.beta,
            });
        }
        Ok(())
    }

    /// Bit-exact grouping key. Clustering matches coefficients exactly, so
    /// 2.0 and 2.0000001 land in different clusters.
    pub fn key(&self) -> CoefficientKey {
        CoefficientKey(self.alpha.to_bits(), self.beta.to_bits())
    }
}

/// Hashable/orderable bit-exact identity of a coefficient pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoefficientKey(pub u64, pub u64);

/// An unambiguous rephrasing of a query, with its gold answer alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub text: String,
    pub gold_answers: Vec<String>,
}

impl Interpretation {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.text.trim().is_empty() {
            return Err(ValidationError::EmptyInterpretationText);
        }
        if self.gold_answers.is_empty() {
            return Err(ValidationError::NoGoldAnswers);
        }
        if self.gold_answers.iter().any(|a| a.trim().is_empty()) {
            return Err(ValidationError::EmptyGoldAnswer);
        }
        Ok(())
    }
}

/// A potentially ambiguous query: the query text, its interpretations with
/// gold answers, an optional private context visible only to the assistant,
/// and an optional distribution over interpretations (uniform when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryExample {
    pub id: String,
    pub query_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub ambiguous: bool,
    pub interpretations: Vec<Interpretation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl QueryExample {
    /// Check all invariants. Returns soft warnings (e.g. an ambiguous query
    /// with a single interpretation) on success.
    pub fn validate(&self) -> Result<Vec<String>, ValidationError> {
        if self.id.trim().is_empty() {
            return Err(ValidationError::EmptyQueryId);
        }
        if self.interpretations.is_empty() {
            return Err(ValidationError::NoInterpretations { id: self.id.clone() });
        }
        for interp in &self.interpretations {
            interp.validate().map_err(|source| ValidationError::InQuery {
                id: self.id.clone(),
                source: Box::new(source),
            })?;
        }
        if let Some(weights) = &self.weights {
            if weights.len() != self.interpretations.len() {
                return Err(ValidationError::WeightCountMismatch {
                    id: self.id.clone(),
                    weights: weights.len(),
                    interpretations: self.interpretations.len(),
                });
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(ValidationError::NegativeWeight { id: self.id.clone() });
            }
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(ValidationError::WeightSum {
                    id: self.id.clone(),
                    sum,
                });
            }
        }
        let mut warnings = Vec::new();
        if self.ambiguous && self.interpretations.len() < 2 {
            warnings.push(format!(
                "query {}: flagged ambiguous but has a single interpretation",
                self.id
            ));
        }
        Ok(warnings)
    }

    /// The distribution over interpretations: the declared weights, or
    /// uniform when none were given.
    pub fn effective_weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => {
                let n = self.interpretations.len();
                vec![1.0 / n as f64; n]
            }
        }
    }
}

/// One step of a conversation: the acting agent, the prompt it saw, an
/// optional thought, the chosen action, and the observation it produced.
///
/// The prompt is stored fully rendered so rollouts can be replayed and
/// turned into training data without re-rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub prompt: String,
    pub thought: Option<String>,
    pub action: Action,
    pub observation: String,
}

/// Accuracy and penalty terms of a scored rollout.
/// `total = accuracy - alpha * n_clarifications - beta * answer_words`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: f64,
    pub n_clarifications: u32,
    pub answer_words: u32,
    pub alpha: f64,
    pub beta: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Assemble a breakdown from its parts, computing the total.
    pub fn compute(
        accuracy: f64,
        n_clarifications: u32,
        answer_words: u32,
        coefficients: CostCoefficients,
    ) -> Self {
        let total = accuracy
            - coefficients.alpha * n_clarifications as f64
            - coefficients.beta * answer_words as f64;
        Self {
            accuracy,
            n_clarifications,
            answer_words,
            alpha: coefficients.alpha,
            beta: coefficients.beta,
            total,
        }
    }
}

/// Why a rollout was kept or discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidityReason {
    #[serde(rename = "OK")]
    Ok,
    LowF1,
    UserIgnoredAssistant,
    ParseFailure,
    ProtocolViolation,
}

impl std::fmt::Display for ValidityReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ValidityReason::Ok => "OK",
            ValidityReason::LowF1 => "LowF1",
            ValidityReason::UserIgnoredAssistant => "UserIgnoredAssistant",
            ValidityReason::ParseFailure => "ParseFailure",
            ValidityReason::ProtocolViolation => "ProtocolViolation",
        };
        write!(f, "{name}")
    }
}

/// Validity filter outcome. `reason` is `Ok` iff `valid` is true.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityVerdict {
    pub valid: bool,
    pub reason: ValidityReason,
}

impl ValidityVerdict {
    pub fn ok() -> Self {
        Self {
            valid: true,
            reason: ValidityReason::Ok,
        }
    }

    pub fn invalid(reason: ValidityReason) -> Self {
        debug_assert!(reason != ValidityReason::Ok);
        Self {
            valid: false,
            reason,
        }
    }
}

/// One complete simulated conversation plus its score and validity verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub rollout_id: String,
    pub query_id: String,
    pub interpretation_index: usize,
    #[serde(flatten)]
    pub coefficients: CostCoefficients,
    pub turns: Vec<Turn>,
    pub final_answer: String,
    pub reward: Option<RewardBreakdown>,
    pub valid: Option<bool>,
    pub invalid_reason: Option<ValidityReason>,
}

impl Rollout {
    /// True once a verdict was recorded and the rollout passed every filter.
    pub fn is_valid(&self) -> bool {
        self.valid == Some(true)
    }

    pub fn verdict(&self) -> Option<ValidityVerdict> {
        match (self.valid, self.invalid_reason) {
            (Some(true), _) => Some(ValidityVerdict::ok()),
            (Some(false), Some(reason)) => Some(ValidityVerdict::invalid(reason)),
            (Some(false), None) => None,
            (None, _) => None,
        }
    }

    pub fn set_verdict(&mut self, verdict: ValidityVerdict) {
        self.valid = Some(verdict.valid);
        self.invalid_reason = if verdict.valid {
            None
        } else {
            Some(verdict.reason)
        };
    }

    pub fn n_clarifications(&self) -> u32 {
        self.turns
            .iter()
            .filter(|t| t.action == Action::Clarify)
            .count() as u32
    }

    /// Check the structural invariants of a completed rollout: alternation
    /// starting with USER, QUERY first, FINALIZE last, final answer equal to
    /// the last observation, and roles matching actions.
    pub fn check_structure(&self) -> Result<(), ValidationError> {
        if self.turns.is_empty() {
            return Err(ValidationError::Structural {
                rollout_id: self.rollout_id.clone(),
                detail: "no turns".into(),
            });
        }
        for (i, turn) in self.turns.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if turn.role != expected {
                return Err(ValidationError::Structural {
                    rollout_id: self.rollout_id.clone(),
                    detail: format!("turn {i} has role {} but {expected} was due", turn.role),
                });
            }
            if turn.action.role() != turn.role {
                return Err(ValidationError::Structural {
                    rollout_id: self.rollout_id.clone(),
                    detail: format!("turn {i}: {} is not a {} action", turn.action, turn.role),
                });
            }
        }
        if self.turns[0].action != Action::Query {
            return Err(ValidationError::Structural {
                rollout_id: self.rollout_id.clone(),
                detail: "first action is not QUERY".into(),
            });
        }
        let last = self.turns.last().expect("non-empty");
        if last.action != Action::Finalize {
            return Err(ValidationError::Structural {
                rollout_id: self.rollout_id.clone(),
                detail: "last action is not FINALIZE".into(),
            });
        }
        if last.observation != self.final_answer {
            return Err(ValidationError::Structural {
                rollout_id: self.rollout_id.clone(),
                detail: "final_answer differs from the last observation".into(),
            });
        }
        Ok(())
    }
}

/// Invariant violations raised while constructing or checking domain values.
#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("{name} must be finite and non-negative, got {value}")]
    BadCoefficient { name: &'static str, value: f64 },
    #[error("query id is empty")]
    EmptyQueryId,
    #[error("interpretation text is empty")]
    EmptyInterpretationText,
    #[error("interpretation has no gold answers")]
    NoGoldAnswers,
    #[error("gold answer is empty after trimming")]
    EmptyGoldAnswer,
    #[error("query {id} has no interpretations")]
    NoInterpretations { id: String },
    #[error("query {id}: {source}")]
    InQuery {
        id: String,
        source: Box<ValidationError>,
    },
    #[error("query {id}: {weights} weights for {interpretations} interpretations")]
    WeightCountMismatch {
        id: String,
        weights: usize,
        interpretations: usize,
    },
    #[error("query {id}: weights must be finite and non-negative")]
    NegativeWeight { id: String },
    #[error("query {id}: weights sum to {sum}, expected 1")]
    WeightSum { id: String, sum: f64 },
    #[error("rollout {rollout_id}: {detail}")]
    Structural { rollout_id: String, detail: String },
}
