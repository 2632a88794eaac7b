//! Conversation protocol state machine.
//!
//! Legal conversations follow `QUERY,(CLARIFY,RESPOND)*,(ANSWER|MULTI_ANS),FINALIZE`
//! with the clarification loop bounded by a per-run budget. `advance` is a
//! pure transition: it validates a turn against the current phase and returns
//! the successor state, so states can be shared freely across threads.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Action, ActionSequence, CostCoefficients, QueryExample, Role, Rollout, Turn};

/// Whose move it is, and what kind of move is due.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    AwaitUserQuery,
    AwaitAssistant,
    AwaitUserClarResponse,
    AwaitUserFinalize,
    Terminal,
}

impl Phase {
    pub fn acting_role(self) -> Option<Role> {
        match self {
            Phase::AwaitUserQuery | Phase::AwaitUserClarResponse | Phase::AwaitUserFinalize => {
                Some(Role::User)
            }
            Phase::AwaitAssistant => Some(Role::Assistant),
            Phase::Terminal => None,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Phase::AwaitUserQuery => "AwaitUserQuery",
            Phase::AwaitAssistant => "AwaitAssistant",
            Phase::AwaitUserClarResponse => "AwaitUserClarResponse",
            Phase::AwaitUserFinalize => "AwaitUserFinalize",
            Phase::Terminal => "Terminal",
        };
        write!(f, "{name}")
    }
}

/// One clarification question and, once the user has replied, its response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationExchange {
    pub question: String,
    pub response: Option<String>,
}

/// Full conversation state: the query under discussion, the sampled
/// interpretation, the coefficient pair, the clarification history, and the
/// turns taken so far.
#[derive(Debug, Clone)]
pub struct ConversationState {
    pub query: Arc<QueryExample>,
    pub interpretation_index: usize,
    pub coefficients: CostCoefficients,
    pub history: Vec<ClarificationExchange>,
    pub phase: Phase,
    pub clarifications_used: u32,
    pub max_clarifications: u32,
    pub last_assistant_answer: Option<String>,
    pub final_answer: Option<String>,
    pub turns: Vec<Turn>,
}

/// A phase/role/action combination the protocol forbids.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("conversation is terminal; no further actions are allowed")]
    Terminal,
    #[error("action {action} is illegal in phase {phase}")]
    IllegalAction { phase: String, action: String },
    #[error("role {role} cannot take action {action}")]
    RoleMismatch { role: String, action: String },
    #[error("observation must be non-empty for action {action}")]
    EmptyObservation { action: String },
    #[error("thoughts are only allowed on assistant turns")]
    UserThought,
    #[error("interpretation index {index} out of range for query {query_id}")]
    BadInterpretation { query_id: String, index: usize },
}

impl ConversationState {
    /// Fresh state in `AwaitUserQuery`.
    pub fn new(
        query: Arc<QueryExample>,
        interpretation_index: usize,
        coefficients: CostCoefficients,
        max_clarifications: u32,
    ) -> Result<Self, ProtocolError> {
        if interpretation_index >= query.interpretations.len() {
            return Err(ProtocolError::BadInterpretation {
                query_id: query.id.clone(),
                index: interpretation_index,
            });
        }
        Ok(Self {
            query,
            interpretation_index,
            coefficients,
            history: Vec::new(),
            phase: Phase::AwaitUserQuery,
            clarifications_used: 0,
            max_clarifications,
            last_assistant_answer: None,
            final_answer: None,
            turns: Vec::new(),
        })
    }

    /// The interpretation sampled for this conversation.
    pub fn interpretation(&self) -> &crate::types::Interpretation {
        &self.query.interpretations[self.interpretation_index]
    }

    /// The clarification question awaiting a user response, if any.
    pub fn pending_clarification(&self) -> Option<&str> {
        match self.phase {
            Phase::AwaitUserClarResponse => self
                .history
                .last()
                .filter(|x| x.response.is_none())
                .map(|x| x.question.as_str()),
            _ => None,
        }
    }

    /// Completed (question, response) pairs, oldest first.
    pub fn completed_history(&self) -> impl Iterator<Item = (&str, &str)> {
        self.history
            .iter()
            .filter_map(|x| x.response.as_deref().map(|r| (x.question.as_str(), r)))
    }

    /// Actions legal in the current phase. Errors on a terminal state.
    pub fn allowed_actions(&self) -> Result<Vec<Action>, ProtocolError> {
        match self.phase {
            Phase::Terminal => Err(ProtocolError::Terminal),
            Phase::AwaitUserQuery => Ok(vec![Action::Query]),
            Phase::AwaitUserClarResponse => Ok(vec![Action::Respond]),
            Phase::AwaitUserFinalize => Ok(vec![Action::Finalize]),
            Phase::AwaitAssistant => {
                let mut actions = Vec::with_capacity(3);
                if self.clarifications_used < self.max_clarifications {
                    actions.push(Action::Clarify);
                }
                actions.push(Action::Answer);
                actions.push(Action::MultiAns);
                Ok(actions)
            }
        }
    }

    /// Validate `turn` against the current phase and return the successor
    /// state with the turn appended. The input state is left untouched.
    pub fn advance(&self, turn: Turn) -> Result<ConversationState, ProtocolError> {
        if self.phase == Phase::Terminal {
            return Err(ProtocolError::Terminal);
        }
        if turn.action.role() != turn.role {
            return Err(ProtocolError::RoleMismatch {
                role: turn.role.to_string(),
                action: turn.action.to_string(),
            });
        }
        if turn.role == Role::User && turn.thought.as_deref().is_some_and(|t| !t.is_empty()) {
            return Err(ProtocolError::UserThought);
        }
        if turn.observation.trim().is_empty() {
            return Err(ProtocolError::EmptyObservation {
                action: turn.action.to_string(),
            });
        }
        let allowed = self.allowed_actions()?;
        if !allowed.contains(&turn.action) {
            return Err(ProtocolError::IllegalAction {
                phase: self.phase.to_string(),
                action: turn.action.to_string(),
            });
        }

        let mut next = self.clone();
        match turn.action {
            Action::Query => {
                next.phase = Phase::AwaitAssistant;
            }
            Action::Clarify => {
                next.clarifications_used += 1;
                next.history.push(ClarificationExchange {
                    question: turn.observation.clone(),
                    response: None,
                });
                next.phase = Phase::AwaitUserClarResponse;
            }
            Action::Respond => {
                let pending = next
                    .history
                    .last_mut()
                    .expect("AwaitUserClarResponse implies a pending exchange");
                pending.response = Some(turn.observation.clone());
                next.phase = Phase::AwaitAssistant;
            }
            Action::Answer | Action::MultiAns => {
                next.last_assistant_answer = Some(turn.observation.clone());
                next.phase = Phase::AwaitUserFinalize;
            }
            Action::Finalize => {
                next.final_answer = Some(turn.observation.clone());
                next.phase = Phase::Terminal;
            }
        }
        next.turns.push(turn);
        Ok(next)
    }

    /// Package a terminal state into a `Rollout`. Reward and verdict are
    /// filled in later by the engine.
    pub fn into_rollout(self, rollout_id: String) -> Option<Rollout> {
        if self.phase != Phase::Terminal {
            return None;
        }
        let final_answer = self.final_answer.clone()?;
        Some(Rollout {
            rollout_id,
            query_id: self.query.id.clone(),
            interpretation_index: self.interpretation_index,
            coefficients: self.coefficients,
            turns: self.turns,
            final_answer,
            reward: None,
            valid: None,
            invalid_reason: None,
        })
    }
}

/// The ordered action labels of a rollout's turns. Deterministic and
/// idempotent; observations are ignored.
pub fn coarsen(rollout: &Rollout) -> ActionSequence {
    ActionSequence::new(rollout.turns.iter().map(|t| t.action).collect())
}

/// True iff `rollout` coarsens exactly to `seq`.
pub fn is_compatible(rollout: &Rollout, seq: &ActionSequence) -> bool {
    rollout.turns.len() == seq.len()
        && rollout
            .turns
            .iter()
            .zip(seq.actions())
            .all(|(t, a)| t.action == *a)
}

/// Every legal action sequence with at most `max_clarifications` clarification
/// exchanges: shortest first, ANSWER before MULTI_ANS at equal length.
/// There are `2 * (max_clarifications + 1)` of them.
pub fn enumerate_sequences(max_clarifications: u32) -> Vec<ActionSequence> {
    let mut sequences = Vec::with_capacity(2 * (max_clarifications as usize + 1));
    for n_clar in 0..=max_clarifications {
        for last in [Action::Answer, Action::MultiAns] {
            let mut actions = Vec::with_capacity(3 + 2 * n_clar as usize);
            actions.push(Action::Query);
            for _ in 0..n_clar {
                actions.push(Action::Clarify);
                actions.push(Action::Respond);
            }
            actions.push(last);
            actions.push(Action::Finalize);
            sequences.push(ActionSequence::new(actions));
        }
    }
    sequences
}
