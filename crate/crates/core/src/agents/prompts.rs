//! Prompt template loading and rendering.
//!
//! The templates ship with the crate (see `templates/`) and can be overridden
//! from a directory for experimentation. Placeholders use the `{NAME_VAR}`
//! convention; rendering fails if any placeholder survives substitution.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::protocol::{ConversationState, Phase};
use crate::types::Action;

pub const TEMPLATE_ASSISTANT_PLAIN: &str = "assistant_plain";
pub const TEMPLATE_ASSISTANT_COT: &str = "assistant_cot";
pub const TEMPLATE_USER_CLARIFICATION: &str = "user_clarification";
pub const TEMPLATE_USER_FINALIZE: &str = "user_finalize";
pub const TEMPLATE_USER_QUERY: &str = "user_query";
pub const TEMPLATE_AMBIGUITY_FILTER: &str = "ambiguity_filter";

// The opening user turn has no shipped template; the environment hands the
// user simulator the query and its sampled interpretation directly.
const USER_QUERY_TEMPLATE: &str = "Potentially ambiguous question: {AMBIG_QUERY_VAR}\nUnambiguous question: {UNAMBIG_QUERY_VAR}";

/// A rendered prompt plus the substitutions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub template_id: String,
    pub rendered: String,
    pub variables: BTreeMap<String, String>,
}

/// Which user-simulator prompt to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserPromptPurpose {
    ClarificationResponse,
    Finalize,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template file {path} is missing or unreadable: {detail}")]
    MissingTemplate { path: String, detail: String },
    #[error("template {template_id} still contains placeholder {placeholder} after rendering")]
    UnsubstitutedPlaceholder {
        template_id: String,
        placeholder: String,
    },
    #[error("cannot build a {wanted} prompt in phase {phase}")]
    PhaseMismatch { wanted: String, phase: String },
}

/// The five shipped templates, either embedded or loaded from an override
/// directory.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    assistant_plain: String,
    assistant_cot: String,
    user_clarification: String,
    user_finalize: String,
    ambiguity_filter: String,
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateStore {
    /// The templates compiled into the binary.
    pub fn builtin() -> Self {
        Self {
            assistant_plain: include_str!("../../templates/assistant_plain.txt").to_string(),
            assistant_cot: include_str!("../../templates/assistant_cot.txt").to_string(),
            user_clarification: include_str!("../../templates/user_clarification.txt").to_string(),
            user_finalize: include_str!("../../templates/user_finalize.txt").to_string(),
            ambiguity_filter: include_str!("../../templates/ambiguity_filter.txt").to_string(),
        }
    }

    /// Load all templates from `dir`, expecting the shipped file names.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| -> Result<String, PromptError> {
            let path = dir.join(format!("{name}.txt"));
            std::fs::read_to_string(&path).map_err(|e| PromptError::MissingTemplate {
                path: path.display().to_string(),
                detail: e.to_string(),
            })
        };
        Ok(Self {
            assistant_plain: read(TEMPLATE_ASSISTANT_PLAIN)?,
            assistant_cot: read(TEMPLATE_ASSISTANT_COT)?,
            user_clarification: read(TEMPLATE_USER_CLARIFICATION)?,
            user_finalize: read(TEMPLATE_USER_FINALIZE)?,
            ambiguity_filter: read(TEMPLATE_AMBIGUITY_FILTER)?,
        })
    }

    /// The ambiguity screening prompt. Shipped for completeness; the pipeline
    /// never executes it.
    pub fn ambiguity_filter(&self) -> &str {
        &self.ambiguity_filter
    }
}

/// Coefficients render with one decimal for integral values ("10.0"), and
/// shortest-form otherwise ("0.1").
pub fn format_coefficient(value: f64) -> String {
    if value.fract() == 0.0 {
        format!("{value:.1}")
    } else {
        format!("{value}")
    }
}

fn render(
    template_id: &str,
    template: &str,
    variables: BTreeMap<String, String>,
) -> Result<PromptBundle, PromptError> {
    let mut rendered = template.trim_end().to_string();
    for (name, value) in &variables {
        rendered = rendered.replace(&format!("{{{name}}}"), value);
    }
    if let Some(placeholder) = find_placeholder(&rendered) {
        return Err(PromptError::UnsubstitutedPlaceholder {
            template_id: template_id.to_string(),
            placeholder,
        });
    }
    Ok(PromptBundle {
        template_id: template_id.to_string(),
        rendered,
        variables,
    })
}

/// Scan for a `{SOME_VAR}` marker left in the text.
fn find_placeholder(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = text[i + 1..].find('}') {
                let inner = &text[i + 1..i + 1 + end];
                if inner.ends_with("_VAR")
                    && inner.bytes().all(|b| b.is_ascii_uppercase() || b == b'_')
                {
                    return Some(format!("{{{inner}}}"));
                }
            }
        }
        i += 1;
    }
    None
}

fn history_block(state: &ConversationState) -> String {
    let mut block = String::new();
    for (question, response) in state.completed_history() {
        block.push_str("\nCLARIFICATION QUESTION : ");
        block.push_str(question);
        block.push_str("\nANSWER TO CLARIFICATION : ");
        block.push_str(response);
    }
    block
}

fn context_block(state: &ConversationState) -> String {
    match &state.query.context {
        Some(context) => format!("CONTEXT : {context}\n"),
        None => String::new(),
    }
}

/// Render the allowed-action set the way the in-context examples do:
/// `{`CLARIFY', `MULTI_ANSWER', `ANSWER'}`.
fn allowed_actions_block(allowed: &[Action]) -> String {
    let ordered = [
        (Action::Clarify, "CLARIFY"),
        (Action::MultiAns, "MULTI_ANSWER"),
        (Action::Answer, "ANSWER"),
    ];
    let names: Vec<String> = ordered
        .iter()
        .filter(|(action, _)| allowed.contains(action))
        .map(|(_, name)| format!("`{name}'"))
        .collect();
    format!("{{{}}}", names.join(", "))
}

/// Assistant prompt: coefficients, optional private context, the ambiguous
/// query, the clarification history, and (chain-of-thought variant) the
/// currently allowed actions.
pub fn build_assistant_prompt(
    state: &ConversationState,
    use_thoughts: bool,
    store: &TemplateStore,
) -> Result<PromptBundle, PromptError> {
    if state.phase != Phase::AwaitAssistant {
        return Err(PromptError::PhaseMismatch {
            wanted: "assistant".into(),
            phase: state.phase.to_string(),
        });
    }
    let mut variables = BTreeMap::new();
    variables.insert(
        "ALPHA_VAR".to_string(),
        format!("**{}**", format_coefficient(state.coefficients.alpha)),
    );
    variables.insert(
        "BETA_VAR".to_string(),
        format!("**{}**", format_coefficient(state.coefficients.beta)),
    );
    variables.insert("AMBIG_QUERY_VAR".to_string(), state.query.query_text.clone());
    variables.insert("CONTEXT_VAR".to_string(), context_block(state));
    variables.insert(
        "OPTIONAL_CLARIFICATION_QUESTIONS_VAR".to_string(),
        history_block(state),
    );
    let (template_id, template) = if use_thoughts {
        let allowed = state.allowed_actions().expect("non-terminal");
        variables.insert(
            "ALLOWED_ACTIONS_VAR".to_string(),
            allowed_actions_block(&allowed),
        );
        (TEMPLATE_ASSISTANT_COT, store.assistant_cot.as_str())
    } else {
        (TEMPLATE_ASSISTANT_PLAIN, store.assistant_plain.as_str())
    };
    render(template_id, template, variables)
}

/// User-simulator prompt for answering a clarification question or for
/// turning the assistant's answer into the final answer.
pub fn build_user_prompt(
    state: &ConversationState,
    purpose: UserPromptPurpose,
    store: &TemplateStore,
) -> Result<PromptBundle, PromptError> {
    let mut variables = BTreeMap::new();
    variables.insert("AMBIG_QUERY_VAR".to_string(), state.query.query_text.clone());
    variables.insert(
        "UNAMBIG_QUERY_VAR".to_string(),
        state.interpretation().text.clone(),
    );
    match purpose {
        UserPromptPurpose::ClarificationResponse => {
            let Some(pending) = state.pending_clarification() else {
                return Err(PromptError::PhaseMismatch {
                    wanted: "clarification-response".into(),
                    phase: state.phase.to_string(),
                });
            };
            variables.insert("CLARIF_QUERY_VAR".to_string(), pending.to_string());
            render(
                TEMPLATE_USER_CLARIFICATION,
                &store.user_clarification,
                variables,
            )
        }
        UserPromptPurpose::Finalize => {
            if state.phase != Phase::AwaitUserFinalize {
                return Err(PromptError::PhaseMismatch {
                    wanted: "finalize".into(),
                    phase: state.phase.to_string(),
                });
            }
            let answer = state
                .last_assistant_answer
                .clone()
                .expect("AwaitUserFinalize implies an assistant answer");
            variables.insert("FRIEND_ANSWER_VAR".to_string(), answer);
            render(TEMPLATE_USER_FINALIZE, &store.user_finalize, variables)
        }
    }
}

/// Prompt snapshot for the opening QUERY turn.
pub fn build_user_query_prompt(state: &ConversationState) -> Result<PromptBundle, PromptError> {
    if state.phase != Phase::AwaitUserQuery {
        return Err(PromptError::PhaseMismatch {
            wanted: "query".into(),
            phase: state.phase.to_string(),
        });
    }
    let mut variables = BTreeMap::new();
    variables.insert("AMBIG_QUERY_VAR".to_string(), state.query.query_text.clone());
    variables.insert(
        "UNAMBIG_QUERY_VAR".to_string(),
        state.interpretation().text.clone(),
    );
    render(TEMPLATE_USER_QUERY, USER_QUERY_TEMPLATE, variables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CostCoefficients, Interpretation, QueryExample, Role, Turn};
    use std::sync::Arc;

    fn state_with(alpha: f64, beta: f64, context: Option<&str>) -> ConversationState {
        let query = Arc::new(QueryExample {
            id: "q1".into(),
            query_text: "in what year did the first harry potter come out?".into(),
            context: context.map(str::to_string),
            ambiguous: true,
            interpretations: vec![
                Interpretation {
                    text: "in what year did the first harry potter book come out in the uk?".into(),
                    gold_answers: vec!["1997".into()],
                },
                Interpretation {
                    text: "in what year did the first harry potter book come out in the us?".into(),
                    gold_answers: vec!["1998".into()],
                },
            ],
            weights: None,
        });
        ConversationState::new(query, 0, CostCoefficients::new(alpha, beta).unwrap(), 1).unwrap()
    }

    fn advance(state: &ConversationState, action: Action, obs: &str) -> ConversationState {
        state
            .advance(Turn {
                role: action.role(),
                prompt: String::new(),
                thought: None,
                action,
                observation: obs.into(),
            })
            .unwrap()
    }

    #[test]
    fn assistant_prompt_contains_coefficients_and_no_history() {
        let state = advance(&state_with(10.0, 1.0, None), Action::Query, "q");
        let bundle =
            build_assistant_prompt(&state, false, &TemplateStore::builtin()).unwrap();
        assert!(bundle.rendered.contains("ALPHA : **10.0**"));
        assert!(bundle.rendered.contains("BETA : **1.0**"));
        // The in-context examples keep their clarification lines; the live
        // block after the final QUESTION line must be empty.
        let tail = bundle
            .rendered
            .rsplit("QUESTION : ")
            .next()
            .unwrap();
        assert!(!tail.contains("CLARIFICATION QUESTION"));
        assert_eq!(bundle.template_id, TEMPLATE_ASSISTANT_PLAIN);
    }

    #[test]
    fn assistant_prompt_renders_one_history_pair() {
        let state = advance(&state_with(0.1, 0.7, None), Action::Query, "q");
        let state = advance(&state, Action::Clarify, "the book or the movie?");
        let state = advance(&state, Action::Respond, "the book");
        let bundle =
            build_assistant_prompt(&state, false, &TemplateStore::builtin()).unwrap();
        let tail = bundle.rendered.rsplit("ALPHA : **0.1**").next().unwrap();
        assert_eq!(tail.matches("CLARIFICATION QUESTION :").count(), 1);
        assert!(tail.contains("CLARIFICATION QUESTION : the book or the movie?"));
        assert!(tail.contains("ANSWER TO CLARIFICATION : the book"));
    }

    #[test]
    fn cot_prompt_excludes_clarify_when_budget_spent() {
        let state = advance(&state_with(2.0, 0.7, None), Action::Query, "q");
        let state = advance(&state, Action::Clarify, "which?");
        let state = advance(&state, Action::Respond, "that one");
        let bundle = build_assistant_prompt(&state, true, &TemplateStore::builtin()).unwrap();
        let tail = bundle.rendered.rsplit("ALPHA : **2.0**").next().unwrap();
        assert!(tail.contains("ALLOWED_ACTIONS : {`MULTI_ANSWER', `ANSWER'}"));
        assert_eq!(bundle.template_id, TEMPLATE_ASSISTANT_COT);
    }

    #[test]
    fn assistant_prompt_covers_full_state() {
        // q, h, c, alpha, beta must all surface in the rendered prompt.
        let state = advance(
            &state_with(20.0, 5.0, Some("Principal $212,000")),
            Action::Query,
            "q",
        );
        let state = advance(&state, Action::Clarify, "which category?");
        let state = advance(&state, Action::Respond, "other current assets");
        let bundle = build_assistant_prompt(&state, false, &TemplateStore::builtin()).unwrap();
        for needle in [
            "in what year did the first harry potter come out?",
            "which category?",
            "other current assets",
            "CONTEXT : Principal $212,000",
            "**20.0**",
            "**5.0**",
        ] {
            assert!(bundle.rendered.contains(needle), "missing {needle:?}");
        }
    }

    #[test]
    fn user_clarification_prompt() {
        let state = advance(&state_with(1.0, 1.0, None), Action::Query, "q");
        let state = advance(&state, Action::Clarify, "the book or the movie?");
        let bundle = build_user_prompt(
            &state,
            UserPromptPurpose::ClarificationResponse,
            &TemplateStore::builtin(),
        )
        .unwrap();
        assert!(bundle
            .rendered
            .contains("Clarification question: the book or the movie?"));
        assert!(bundle
            .rendered
            .contains("Unambiguous question: in what year did the first harry potter book come out in the uk?"));
    }

    #[test]
    fn user_finalize_prompt_embeds_friend_answer() {
        let state = advance(&state_with(1.0, 1.0, None), Action::Query, "q");
        let state = advance(
            &state,
            Action::MultiAns,
            "The book came out in the uk in 1997 and in the us in 1998.",
        );
        let bundle =
            build_user_prompt(&state, UserPromptPurpose::Finalize, &TemplateStore::builtin())
                .unwrap();
        assert!(bundle.rendered.contains(
            "FRIEND's ANSWER: The book came out in the uk in 1997 and in the us in 1998."
        ));
    }

    #[test]
    fn purpose_phase_mismatch_errors() {
        let state = advance(&state_with(1.0, 1.0, None), Action::Query, "q");
        assert!(build_user_prompt(
            &state,
            UserPromptPurpose::Finalize,
            &TemplateStore::builtin()
        )
        .is_err());
        let mut forged = state.clone();
        forged.phase = Phase::AwaitUserQuery;
        assert!(build_assistant_prompt(&forged, false, &TemplateStore::builtin()).is_err());
    }

    #[test]
    fn no_placeholder_survives() {
        let state = advance(&state_with(0.0, 0.1, Some("ctx")), Action::Query, "q");
        for use_thoughts in [false, true] {
            let bundle =
                build_assistant_prompt(&state, use_thoughts, &TemplateStore::builtin()).unwrap();
            assert!(find_placeholder(&bundle.rendered).is_none());
        }
        let bundle = build_user_query_prompt(&state_with(0.0, 0.1, None)).unwrap();
        assert!(bundle.rendered.contains("Potentially ambiguous question:"));
    }

    #[test]
    fn placeholder_detection() {
        assert_eq!(
            find_placeholder("x {ALPHA_VAR} y"),
            Some("{ALPHA_VAR}".to_string())
        );
        // Allowed-actions braces are not placeholders.
        assert_eq!(find_placeholder("{`CLARIFY', `ANSWER'}"), None);
        assert_eq!(find_placeholder("no vars"), None);
    }

    #[test]
    fn coefficient_formatting() {
        assert_eq!(format_coefficient(10.0), "10.0");
        assert_eq!(format_coefficient(0.1), "0.1");
        assert_eq!(format_coefficient(5.0), "5.0");
        assert_eq!(format_coefficient(0.7), "0.7");
        assert_eq!(format_coefficient(0.0), "0.0");
    }

    #[test]
    fn template_dir_override_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            TemplateStore::from_dir(dir.path()),
            Err(PromptError::MissingTemplate { .. })
        ));
        let assistant =
            "Q: {AMBIG_QUERY_VAR}\nA: {ALPHA_VAR} B: {BETA_VAR}\nX: {CONTEXT_VAR}{OPTIONAL_CLARIFICATION_QUESTIONS_VAR}";
        for (name, body) in [
            (TEMPLATE_ASSISTANT_PLAIN, assistant),
            (TEMPLATE_ASSISTANT_COT, assistant),
            (
                TEMPLATE_USER_CLARIFICATION,
                "Q: {AMBIG_QUERY_VAR}\nU: {UNAMBIG_QUERY_VAR}\nC: {CLARIF_QUERY_VAR}",
            ),
            (
                TEMPLATE_USER_FINALIZE,
                "Q: {AMBIG_QUERY_VAR}\nU: {UNAMBIG_QUERY_VAR}\nF: {FRIEND_ANSWER_VAR}",
            ),
            (TEMPLATE_AMBIGUITY_FILTER, "QUESTION: <question>"),
        ] {
            std::fs::write(dir.path().join(format!("{name}.txt")), body).unwrap();
        }
        let store = TemplateStore::from_dir(dir.path()).unwrap();
        let state = advance(&state_with(1.0, 2.0, None), Action::Query, "q");
        let bundle = build_assistant_prompt(&state, false, &store).unwrap();
        assert!(bundle.rendered.contains("A: **1.0** B: **2.0**"));
    }
}
