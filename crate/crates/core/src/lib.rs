//! Self-play rollout engine and data pipeline for steerable clarification
//! policies.
//!
//! A user simulator and an assistant play out question-answering
//! conversations under a strict action protocol
//! (`QUERY,(CLARIFY,RESPOND)*,(ANSWER|MULTI_ANS),FINALIZE`). Each rollout is
//! scored with cost-penalized accuracy: token F1 of the final answer minus
//! `alpha` per clarification and `beta` per word of the assistant's answer.
//! The selection stage clusters rollouts by coefficient pair, estimates the
//! expected reward of each coarsened action sequence, and emits the
//! assistant turns of the best compatible rollouts as fine-tuning data. The
//! evaluation stage reports rewards, action rates, steerability sweeps, and
//! the hindsight-oracle comparison.

pub mod agents;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod eval;
pub mod persist;
pub mod protocol;
pub mod scoring;
pub mod selection;
pub mod types;

pub use types::{
    Action, ActionSequence, CoefficientKey, CostCoefficients, Interpretation, QueryExample,
    RewardBreakdown, Role, Rollout, Turn, ValidityReason, ValidityVerdict,
};
