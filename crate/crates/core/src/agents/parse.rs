//! Parsing and formatting of agent replies.
//!
//! Agents answer with an optional `THOUGHT : ...` block followed by a single
//! `ACTION : **VERB** : payload` line. The wire verbs differ slightly from
//! the protocol action names: MULTI_ANSWER aliases MULTI_ANS,
//! ANSWER_CLARIFICATION is the user's RESPOND, and a user replying ANSWER in
//! the finalize phase means FINALIZE.

use thiserror::Error;

use crate::types::{Action, Role};

/// Parsed agent reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAction {
    pub thought: Option<String>,
    pub action: Action,
    pub observation: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no ACTION line found in reply: {raw:?}")]
    NoAction { raw: String },
    #[error("unknown action verb {verb:?} in reply: {raw:?}")]
    UnknownAction { verb: String, raw: String },
    #[error("action {action} is not allowed here; reply was: {raw:?}")]
    Disallowed { action: Action, raw: String },
    #[error("ACTION line has an empty payload in reply: {raw:?}")]
    EmptyPayload { raw: String },
}

/// Split a line of the form `ACTION : **VERB** : payload` into verb and
/// payload. Asterisk wrapping and spacing around the colons are lenient.
fn split_action_line(line: &str) -> Option<(String, String)> {
    let trimmed = line.trim_start();
    let rest = trimmed.strip_prefix("ACTION")?;
    let rest = rest.trim_start();
    let rest = rest.strip_prefix(':')?;
    let rest = rest.trim_start().trim_start_matches('*');
    let verb: String = rest
        .chars()
        .take_while(|c| c.is_ascii_uppercase() || *c == '_')
        .collect();
    if verb.is_empty() {
        return None;
    }
    let after = rest[verb.len()..].trim_start_matches('*').trim_start();
    let payload = after.strip_prefix(':').map(str::trim).unwrap_or("");
    Some((verb, payload.to_string()))
}

fn verb_to_action(verb: &str, role: Role) -> Option<Action> {
    let base = match verb {
        "ANSWER" => Action::Answer,
        "MULTI_ANSWER" | "MULTI_ANS" => Action::MultiAns,
        "CLARIFY" => Action::Clarify,
        "ANSWER_CLARIFICATION" => Action::Respond,
        _ => return None,
    };
    // The finalize template instructs the user to reply with ANSWER; in a
    // user turn that maps to FINALIZE.
    if role == Role::User && base == Action::Answer {
        Some(Action::Finalize)
    } else {
        Some(base)
    }
}

/// Extract the optional thought and the last ACTION line from a raw reply.
/// Thoughts from user turns are dropped; only the assistant thinks.
pub fn parse_agent_output(
    raw: &str,
    role: Role,
    allowed: &[Action],
) -> Result<ParsedAction, ParseError> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut action_line_idx = None;
    for (idx, line) in lines.iter().enumerate() {
        if split_action_line(line).is_some() {
            action_line_idx = Some(idx);
        }
    }
    let Some(action_idx) = action_line_idx else {
        return Err(ParseError::NoAction { raw: raw.to_string() });
    };
    let (verb, payload) = split_action_line(lines[action_idx]).expect("checked above");
    let action = verb_to_action(&verb, role).ok_or_else(|| ParseError::UnknownAction {
        verb,
        raw: raw.to_string(),
    })?;
    if !allowed.contains(&action) {
        return Err(ParseError::Disallowed {
            action,
            raw: raw.to_string(),
        });
    }
    if payload.is_empty() {
        return Err(ParseError::EmptyPayload { raw: raw.to_string() });
    }

    let thought = if role == Role::Assistant {
        extract_thought(&lines[..action_idx])
    } else {
        None
    };
    Ok(ParsedAction {
        thought,
        action,
        observation: payload,
    })
}

/// The text between `THOUGHT :` and the action line, if any.
fn extract_thought(lines_before_action: &[&str]) -> Option<String> {
    let start = lines_before_action.iter().position(|line| {
        let t = line.trim_start();
        t.strip_prefix("THOUGHT")
            .map(|rest| rest.trim_start().starts_with(':'))
            .unwrap_or(false)
    })?;
    let first = lines_before_action[start]
        .trim_start()
        .strip_prefix("THOUGHT")
        .unwrap()
        .trim_start()
        .strip_prefix(':')
        .unwrap()
        .trim();
    let mut parts = vec![first.to_string()];
    for line in &lines_before_action[start + 1..] {
        parts.push(line.trim_end().to_string());
    }
    let thought = parts.join("\n").trim().to_string();
    if thought.is_empty() {
        None
    } else {
        Some(thought)
    }
}

/// Canonical wire verb for an action, if it has one. QUERY turns are driven
/// by the environment and never serialized as an ACTION line.
pub fn canonical_verb(action: Action) -> Option<&'static str> {
    match action {
        Action::Answer => Some("ANSWER"),
        Action::MultiAns => Some("MULTI_ANSWER"),
        Action::Clarify => Some("CLARIFY"),
        Action::Respond => Some("ANSWER_CLARIFICATION"),
        Action::Finalize => Some("ANSWER"),
        Action::Query => None,
    }
}

/// Render the canonical `ACTION : **VERB** : payload` line.
pub fn format_action_line(action: Action, payload: &str) -> Option<String> {
    canonical_verb(action).map(|verb| format!("ACTION : **{verb}** : {payload}"))
}

/// Render a training target: the thought (when present) followed by the
/// canonical action line. Round-trips through `parse_agent_output`.
pub fn format_target(thought: Option<&str>, action: Action, payload: &str) -> Option<String> {
    let line = format_action_line(action, payload)?;
    match thought {
        Some(t) if !t.trim().is_empty() => Some(format!("THOUGHT : {t}\n{line}")),
        _ => Some(line),
    }
}
