//! Agent backends: prompt construction, reply parsing, deterministic
//! scripted policies, and a remote chat-endpoint client.

pub mod parse;
pub mod prompts;
pub mod remote;
pub mod scripted;

use thiserror::Error;

use crate::protocol::ConversationState;
use crate::types::{Action, Role};

pub use parse::{format_action_line, format_target, parse_agent_output, ParseError, ParsedAction};
pub use prompts::{
    build_assistant_prompt, build_user_prompt, build_user_query_prompt, PromptBundle, PromptError,
    TemplateStore, UserPromptPurpose,
};
pub use remote::{RemoteAgent, RemoteEndpointConfig};
pub use scripted::{
    AssistantPolicy, FinalizePolicy, KnowledgeEntry, KnowledgeTable, ResolvedAnswer,
    RewardEstimates, ScriptedAssistant, ScriptedUser, ScriptedUserConfig,
};

/// Everything a backend sees when asked to act: the conversation state, the
/// role it is playing, the rendered prompt, and the actions it may take.
#[derive(Debug)]
pub struct ActRequest<'a> {
    pub state: &'a ConversationState,
    pub role: Role,
    pub prompt: &'a PromptBundle,
    pub allowed: &'a [Action],
}

/// A backend's move: an optional thought, the chosen action, the observation
/// text, and how many endpoint attempts it took (always 1 for scripted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentDecision {
    pub thought: Option<String>,
    pub action: Action,
    pub observation: String,
    pub attempts: u32,
}

impl AgentDecision {
    pub fn simple(action: Action, observation: impl Into<String>) -> Self {
        Self {
            thought: None,
            action,
            observation: observation.into(),
            attempts: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    /// The backend could not produce a usable action (endpoint down, reply
    /// unparseable after retries). The engine marks the rollout invalid and
    /// moves on.
    #[error("recoverable backend failure after {attempts} attempt(s): {reason}")]
    Recoverable { reason: String, attempts: u32 },
    /// The backend is misconfigured and will never work; abort the run.
    #[error("backend configuration error: {0}")]
    Config(String),
}

/// A user simulator or assistant. Implementations must be thread-safe; the
/// engine calls `act` from its worker pool.
pub trait AgentBackend: Send + Sync {
    fn descriptor(&self) -> String;
    fn act(&self, request: &ActRequest<'_>) -> Result<AgentDecision, AgentError>;
}
