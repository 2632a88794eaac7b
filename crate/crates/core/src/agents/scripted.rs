//! Deterministic scripted agents.
//!
//! The scripted user answers clarification questions by span extraction over
//! the interpretation text and never consults gold answers, so test runs are
//! hermetic. The scripted assistant plays fixed action policies or a
//! reward-aware policy that thresholds on the decision margin; its answer
//! text comes from a supplied knowledge table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ActRequest, AgentBackend, AgentDecision, AgentError};
use crate::protocol::{enumerate_sequences, Phase};
use crate::scoring::{decision_margin, normalize_text};
use crate::types::Action;

/// Function words ignored when matching question words against the
/// interpretation text. Articles are already removed by normalization.
const STOPWORDS: [&str; 40] = [
    "about", "and", "are", "as", "at", "be", "been", "by", "did", "do", "does", "for", "from",
    "how", "i", "if", "in", "into", "is", "it", "its", "mean", "meaning", "of", "on", "or",
    "that", "this", "to", "was", "were", "what", "when", "where", "which", "while", "who", "why",
    "with", "you",
];

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// How the scripted user turns the assistant's answer into a final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FinalizePolicy {
    /// Pass the assistant answer through verbatim.
    #[serde(rename = "COPY_ASSISTANT")]
    CopyAssistant,
    /// For multi-answers, pick the clause matching the interpretation and
    /// emit its answer span; direct answers are copied.
    #[default]
    #[serde(rename = "SELECT_FROM_MULTI")]
    SelectFromMulti,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ScriptedUserConfig {
    #[serde(default)]
    pub finalize_policy: FinalizePolicy,
}

/// Deterministic user simulator.
#[derive(Debug, Clone, Default)]
pub struct ScriptedUser {
    pub config: ScriptedUserConfig,
}

impl ScriptedUser {
    pub fn new(config: ScriptedUserConfig) -> Self {
        Self { config }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum TokenKind {
    /// Article, stopword, or punctuation-only token.
    Neutral,
    /// Content token present in the interpretation text.
    Matched,
    /// Content token absent from the interpretation text.
    Unmatched,
}

fn classify(raw: &str, interp_tokens: &BTreeSet<String>) -> TokenKind {
    match normalize_text(raw).pop() {
        None => TokenKind::Neutral,
        Some(tok) if is_stopword(&tok) => TokenKind::Neutral,
        Some(tok) if interp_tokens.contains(&tok) => TokenKind::Matched,
        Some(_) => TokenKind::Unmatched,
    }
}

fn is_article(raw: &str) -> bool {
    matches!(raw.to_lowercase().as_str(), "a" | "an" | "the")
}

fn trim_span(tokens: &[&str]) -> String {
    tokens
        .join(" ")
        .trim_end_matches(['.', ',', ';', '!', '?'])
        .to_string()
}

/// Answer a clarification question from the interpretation text alone: the
/// longest span of question words that all occur in the interpretation,
/// keeping a leading article. "I do not know." when nothing overlaps.
fn answer_clarification(clarification: &str, interpretation: &str) -> String {
    let interp_tokens: BTreeSet<String> = normalize_text(interpretation).into_iter().collect();
    let raw: Vec<&str> = clarification.split_whitespace().collect();
    let kinds: Vec<TokenKind> = raw.iter().map(|t| classify(t, &interp_tokens)).collect();

    // Maximal runs free of unmatched content words, scored by matched count.
    let mut best: Option<(usize, usize, usize)> = None; // (matched, start, end)
    let mut run_start = 0;
    for end in 0..=raw.len() {
        let boundary = end == raw.len() || kinds[end] == TokenKind::Unmatched;
        if boundary {
            if run_start < end {
                let matched_idx: Vec<usize> = (run_start..end)
                    .filter(|i| kinds[*i] == TokenKind::Matched)
                    .collect();
                if let (Some(&first), Some(&last)) = (matched_idx.first(), matched_idx.last()) {
                    // Keep an immediately preceding article ("the book").
                    let mut span_start = first;
                    while span_start > run_start && is_article(raw[span_start - 1]) {
                        span_start -= 1;
                    }
                    let candidate = (matched_idx.len(), span_start, last);
                    if best.map_or(true, |(m, ..)| matched_idx.len() > m) {
                        best = Some(candidate);
                    }
                }
            }
            run_start = end + 1;
        }
    }
    match best {
        Some((_, start, end)) => trim_span(&raw[start..=end]),
        None => "I do not know.".to_string(),
    }
}

/// Split a multi-answer into clause candidates.
fn clauses(text: &str) -> Vec<&str> {
    text.split(['.', ';', '!', '?', '\n'])
        .flat_map(|sentence| sentence.split(" and "))
        .flat_map(|part| part.split(", "))
        .map(str::trim)
        .filter(|part| !part.is_empty())
        .collect()
}

/// Pick the clause of a multi-answer that best matches the interpretation
/// and emit its answer span (the trailing tokens not drawn from the
/// interpretation text).
fn select_from_multi(multi_answer: &str, interpretation: &str) -> String {
    let interp_tokens: BTreeSet<String> = normalize_text(interpretation).into_iter().collect();
    let candidates = clauses(multi_answer);
    if candidates.is_empty() {
        return multi_answer.trim().to_string();
    }
    let mut best: Option<(usize, i64)> = None; // (index, score)
    for (idx, clause) in candidates.iter().enumerate() {
        let mut matched = 0i64;
        let mut unmatched = 0i64;
        for token in clause.split_whitespace() {
            match classify(token, &interp_tokens) {
                TokenKind::Matched => matched += 1,
                TokenKind::Unmatched => unmatched += 1,
                TokenKind::Neutral => {}
            }
        }
        let score = matched * 1000 - unmatched;
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((idx, score));
        }
    }
    let clause = candidates[best.expect("non-empty").0];
    let raw: Vec<&str> = clause.split_whitespace().collect();
    let residue: Vec<bool> = raw
        .iter()
        .map(|t| classify(t, &interp_tokens) == TokenKind::Unmatched)
        .collect();
    // Trailing residue run is the answer span; fall back to all residue
    // tokens, then to the whole clause.
    let tail_start = (0..raw.len())
        .rev()
        .take_while(|i| residue[*i])
        .last();
    if let Some(start) = tail_start {
        return trim_span(&raw[start..]);
    }
    let all_residue: Vec<&str> = raw
        .iter()
        .zip(&residue)
        .filter(|(_, r)| **r)
        .map(|(t, _)| *t)
        .collect();
    if !all_residue.is_empty() {
        return trim_span(&all_residue);
    }
    trim_span(&raw)
}

impl AgentBackend for ScriptedUser {
    fn descriptor(&self) -> String {
        format!("scripted-user({:?})", self.config.finalize_policy)
    }

    fn act(&self, request: &ActRequest<'_>) -> Result<AgentDecision, AgentError> {
        let state = request.state;
        let decision = match state.phase {
            Phase::AwaitUserQuery => {
                AgentDecision::simple(Action::Query, state.query.query_text.clone())
            }
            Phase::AwaitUserClarResponse => {
                let clarification = state
                    .pending_clarification()
                    .ok_or_else(|| AgentError::Config("no pending clarification".into()))?;
                AgentDecision::simple(
                    Action::Respond,
                    answer_clarification(clarification, &state.interpretation().text),
                )
            }
            Phase::AwaitUserFinalize => {
                let answer = state
                    .last_assistant_answer
                    .as_deref()
                    .ok_or_else(|| AgentError::Config("no assistant answer to finalize".into()))?;
                let was_multi = state
                    .turns
                    .last()
                    .is_some_and(|t| t.action == Action::MultiAns);
                let text = match (self.config.finalize_policy, was_multi) {
                    (FinalizePolicy::SelectFromMulti, true) => {
                        select_from_multi(answer, &state.interpretation().text)
                    }
                    _ => answer.to_string(),
                };
                AgentDecision::simple(Action::Finalize, text)
            }
            other => {
                return Err(AgentError::Config(format!(
                    "scripted user cannot act in phase {other}"
                )))
            }
        };
        Ok(decision)
    }
}

/// Estimated accuracy gains used by the reward-aware policy: how much one
/// clarification or a multi-answer improves expected accuracy, and how many
/// extra words a multi-answer costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardEstimates {
    pub delta_clarify: f64,
    pub delta_multi: f64,
    pub multi_extra_words: u32,
}

impl Default for RewardEstimates {
    fn default() -> Self {
        Self {
            delta_clarify: 30.0,
            delta_multi: 40.0,
            multi_extra_words: 12,
        }
    }
}

/// Canned answers for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KnowledgeEntry {
    /// What CLARIFY asks.
    #[serde(default)]
    pub clarification_question: String,
    /// Best-guess direct answer with no clarification history.
    #[serde(default)]
    pub direct_answer: String,
    /// The MULTI_ANS payload.
    #[serde(default)]
    pub multi_answer: String,
    /// Post-clarification answers keyed by hint words matched against the
    /// user's clarification response.
    #[serde(default)]
    pub resolved: Vec<ResolvedAnswer>,
    /// Per-query override of the reward-aware estimates.
    #[serde(default)]
    pub estimates: Option<RewardEstimates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAnswer {
    pub hint: String,
    pub answer: String,
}

/// Canned answers by query id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KnowledgeTable {
    pub entries: BTreeMap<String, KnowledgeEntry>,
}

impl KnowledgeTable {
    pub fn get(&self, query_id: &str) -> Option<&KnowledgeEntry> {
        self.entries.get(query_id)
    }

    pub fn insert(&mut self, query_id: impl Into<String>, entry: KnowledgeEntry) {
        self.entries.insert(query_id.into(), entry);
    }
}

/// Scripted assistant behavior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssistantPolicy {
    AlwaysAnswer,
    AlwaysMulti,
    AlwaysClarifyThenAnswer,
    AlwaysClarifyThenMulti,
    /// Pick the action sequence with the best decision margin under the
    /// supplied (or per-query) reward estimates.
    RewardAware(RewardEstimates),
}

impl AssistantPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            AssistantPolicy::AlwaysAnswer => "always_answer",
            AssistantPolicy::AlwaysMulti => "always_multi",
            AssistantPolicy::AlwaysClarifyThenAnswer => "always_clarify_then_answer",
            AssistantPolicy::AlwaysClarifyThenMulti => "always_clarify_then_multi",
            AssistantPolicy::RewardAware(_) => "reward_aware",
        }
    }
}

/// Deterministic assistant playing a fixed or reward-aware policy with
/// canned payloads.
#[derive(Debug, Clone, Default)]
pub struct ScriptedAssistant {
    policy: Option<AssistantPolicy>,
    knowledge: KnowledgeTable,
}

const MISSING_KNOWLEDGE: &str = "unknown";

impl ScriptedAssistant {
    pub fn new(policy: AssistantPolicy, knowledge: KnowledgeTable) -> Self {
        Self {
            policy: Some(policy),
            knowledge,
        }
    }

    fn policy(&self) -> AssistantPolicy {
        self.policy.unwrap_or(AssistantPolicy::AlwaysAnswer)
    }

    /// Argmax decision margin over the legal sequences consistent with the
    /// clarifications already spent. Iteration order (shorter first, ANSWER
    /// before MULTI_ANS) breaks ties toward the cheaper sequence.
    fn reward_aware_action(
        &self,
        request: &ActRequest<'_>,
        estimates: RewardEstimates,
    ) -> Action {
        let state = request.state;
        let used = state.clarifications_used;
        let can_clarify = request.allowed.contains(&Action::Clarify);
        let alpha = state.coefficients.alpha;
        let beta = state.coefficients.beta;
        let mut best: Option<(f64, Action)> = None;
        for seq in enumerate_sequences(state.max_clarifications) {
            let n_clar = seq
                .actions()
                .iter()
                .filter(|a| **a == Action::Clarify)
                .count() as u32;
            if n_clar < used || (n_clar > used && !can_clarify) {
                continue;
            }
            let is_multi = seq.contains(Action::MultiAns);
            let gain = match (n_clar > 0, is_multi) {
                (false, false) => 0.0,
                (true, false) => estimates.delta_clarify,
                (false, true) => estimates.delta_multi,
                (true, true) => estimates.delta_clarify.max(estimates.delta_multi),
            };
            let extra_words = if is_multi { estimates.multi_extra_words } else { 0 };
            let margin = decision_margin(gain, alpha, beta, extra_words, n_clar);
            let next_action = if n_clar > used {
                Action::Clarify
            } else if is_multi {
                Action::MultiAns
            } else {
                Action::Answer
            };
            if best.map_or(true, |(m, _)| margin > m) {
                best = Some((margin, next_action));
            }
        }
        best.map(|(_, a)| a).unwrap_or(Action::Answer)
    }

    fn resolve_answer(&self, request: &ActRequest<'_>, entry: &KnowledgeEntry) -> String {
        let last_response = request
            .state
            .completed_history()
            .last()
            .map(|(_, response)| response.to_string());
        if let Some(response) = last_response {
            let response_tokens: BTreeSet<String> = normalize_text(&response).into_iter().collect();
            let mut best: Option<(usize, &ResolvedAnswer)> = None;
            for resolved in &entry.resolved {
                let overlap = normalize_text(&resolved.hint)
                    .into_iter()
                    .filter(|tok| response_tokens.contains(tok))
                    .count();
                if overlap > 0 && best.map_or(true, |(n, _)| overlap > n) {
                    best = Some((overlap, resolved));
                }
            }
            if let Some((_, resolved)) = best {
                return resolved.answer.clone();
            }
        }
        if entry.direct_answer.is_empty() {
            MISSING_KNOWLEDGE.to_string()
        } else {
            entry.direct_answer.clone()
        }
    }
}

impl AgentBackend for ScriptedAssistant {
    fn descriptor(&self) -> String {
        format!("scripted-assistant({})", self.policy().name())
    }

    fn act(&self, request: &ActRequest<'_>) -> Result<AgentDecision, AgentError> {
        let state = request.state;
        if state.phase != Phase::AwaitAssistant {
            return Err(AgentError::Config(format!(
                "scripted assistant cannot act in phase {}",
                state.phase
            )));
        }
        let can_clarify = request.allowed.contains(&Action::Clarify);
        let entry = self.knowledge.get(&state.query.id);
        let action = match self.policy() {
            AssistantPolicy::AlwaysAnswer => Action::Answer,
            AssistantPolicy::AlwaysMulti => Action::MultiAns,
            AssistantPolicy::AlwaysClarifyThenAnswer => {
                if state.clarifications_used == 0 && can_clarify {
                    Action::Clarify
                } else {
                    Action::Answer
                }
            }
            AssistantPolicy::AlwaysClarifyThenMulti => {
                if state.clarifications_used == 0 && can_clarify {
                    Action::Clarify
                } else {
                    Action::MultiAns
                }
            }
            AssistantPolicy::RewardAware(defaults) => {
                let estimates = entry.and_then(|e| e.estimates).unwrap_or(defaults);
                self.reward_aware_action(request, estimates)
            }
        };
        let observation = match (action, entry) {
            (_, None) => MISSING_KNOWLEDGE.to_string(),
            (Action::Clarify, Some(e)) if !e.clarification_question.is_empty() => {
                e.clarification_question.clone()
            }
            (Action::Clarify, Some(_)) => MISSING_KNOWLEDGE.to_string(),
            (Action::MultiAns, Some(e)) if !e.multi_answer.is_empty() => e.multi_answer.clone(),
            (Action::MultiAns, Some(_)) => MISSING_KNOWLEDGE.to_string(),
            (_, Some(e)) => self.resolve_answer(request, e),
        };
        Ok(AgentDecision::simple(action, observation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::prompts::{build_user_query_prompt, PromptBundle};
    use crate::protocol::ConversationState;
    use crate::types::{CostCoefficients, Interpretation, QueryExample, Turn};
    use std::sync::Arc;

    fn harry_potter() -> Arc<QueryExample> {
        Arc::new(QueryExample {
            id: "hp".into(),
            query_text: "in what year did the first harry potter come out?".into(),
            context: None,
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
        })
    }

    fn knowledge() -> KnowledgeTable {
        let mut table = KnowledgeTable::default();
        table.insert(
            "hp",
            KnowledgeEntry {
                clarification_question: "the uk or the us?".into(),
                direct_answer: "1997".into(),
                multi_answer: "The book came out in the uk in 1997 and in the us in 1998.".into(),
                resolved: vec![
                    ResolvedAnswer { hint: "uk".into(), answer: "1997".into() },
                    ResolvedAnswer { hint: "us".into(), answer: "1998".into() },
                ],
                estimates: None,
            },
        );
        table
    }

    fn state(interp: usize, alpha: f64, beta: f64) -> ConversationState {
        ConversationState::new(
            harry_potter(),
            interp,
            CostCoefficients::new(alpha, beta).unwrap(),
            1,
        )
        .unwrap()
    }

    fn step(state: &ConversationState, action: Action, obs: &str) -> ConversationState {
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

    fn act(backend: &dyn AgentBackend, state: &ConversationState) -> AgentDecision {
        let prompt = PromptBundle {
            template_id: "test".into(),
            rendered: String::new(),
            variables: Default::default(),
        };
        let allowed = state.allowed_actions().unwrap();
        let role = state.phase.acting_role().unwrap();
        backend
            .act(&ActRequest {
                state,
                role,
                prompt: &prompt,
                allowed: &allowed,
            })
            .unwrap()
    }

    #[test]
    fn user_query_emits_query_verbatim() {
        let s = state(0, 1.0, 1.0);
        let d = act(&ScriptedUser::default(), &s);
        assert_eq!(d.action, Action::Query);
        assert_eq!(d.observation, s.query.query_text);
        // The opening prompt snapshot renders too.
        assert!(build_user_query_prompt(&s).is_ok());
    }

    #[test]
    fn user_answers_clarification_by_overlap() {
        let s = step(&state(0, 1.0, 1.0), Action::Query, "q");
        let s = step(&s, Action::Clarify, "the book or the movie?");
        let d = act(&ScriptedUser::default(), &s);
        assert_eq!(d.action, Action::Respond);
        assert_eq!(d.observation, "the book");
    }

    #[test]
    fn user_answers_uk_vs_us() {
        for (interp, expected) in [(0, "the uk"), (1, "the us")] {
            let s = step(&state(interp, 1.0, 1.0), Action::Query, "q");
            let s = step(&s, Action::Clarify, "the uk or the us?");
            let d = act(&ScriptedUser::default(), &s);
            assert_eq!(d.observation, expected, "interpretation {interp}");
        }
    }

    #[test]
    fn user_does_not_know_without_overlap() {
        let s = step(&state(0, 1.0, 1.0), Action::Query, "q");
        let s = step(&s, Action::Clarify, "hard cover or soft cover?");
        let d = act(&ScriptedUser::default(), &s);
        assert_eq!(d.observation, "I do not know.");
    }

    #[test]
    fn user_finalize_selects_from_multi() {
        for (interp, expected) in [(0, "1997"), (1, "1998")] {
            let s = step(&state(interp, 1.0, 1.0), Action::Query, "q");
            let s = step(
                &s,
                Action::MultiAns,
                "The book came out in the uk in 1997 and in the us in 1998.",
            );
            let d = act(&ScriptedUser::default(), &s);
            assert_eq!(d.action, Action::Finalize);
            assert_eq!(d.observation, expected, "interpretation {interp}");
        }
    }

    #[test]
    fn user_finalize_copies_direct_answers() {
        let s = step(&state(0, 1.0, 1.0), Action::Query, "q");
        let s = step(&s, Action::Answer, "1997");
        let d = act(&ScriptedUser::default(), &s);
        assert_eq!(d.observation, "1997");
        // COPY_ASSISTANT copies even multi-answers.
        let s2 = step(&state(0, 1.0, 1.0), Action::Query, "q");
        let s2 = step(&s2, Action::MultiAns, "uk 1997 and us 1998");
        let copying = ScriptedUser::new(ScriptedUserConfig {
            finalize_policy: FinalizePolicy::CopyAssistant,
        });
        assert_eq!(act(&copying, &s2).observation, "uk 1997 and us 1998");
    }

    #[test]
    fn user_emits_no_gold_tokens_it_never_saw() {
        // No-parametric-knowledge check: every emitted token must come from
        // the query, the clarification question, the assistant answer, or
        // the fixed fallback phrase.
        let s = step(&state(0, 1.0, 1.0), Action::Query, "q");
        let s = step(&s, Action::Clarify, "the book or the movie?");
        let d = act(&ScriptedUser::default(), &s);
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for source in [
            s.query.query_text.as_str(),
            "the book or the movie?",
            "I do not know.",
        ] {
            seen.extend(normalize_text(source));
        }
        for token in normalize_text(&d.observation) {
            assert!(seen.contains(&token), "token {token:?} appeared from nowhere");
        }
    }

    #[test]
    fn scripted_agents_are_deterministic() {
        let s = step(&state(0, 1.0, 1.0), Action::Query, "q");
        let s = step(&s, Action::Clarify, "the uk or the us?");
        let user = ScriptedUser::default();
        let first = act(&user, &s);
        for _ in 0..5 {
            assert_eq!(act(&user, &s), first);
        }
    }

    #[test]
    fn fixed_policies() {
        let s = step(&state(0, 1.0, 1.0), Action::Query, "q");
        let answer = ScriptedAssistant::new(AssistantPolicy::AlwaysAnswer, knowledge());
        assert_eq!(act(&answer, &s).action, Action::Answer);
        assert_eq!(act(&answer, &s).observation, "1997");

        let multi = ScriptedAssistant::new(AssistantPolicy::AlwaysMulti, knowledge());
        assert_eq!(act(&multi, &s).action, Action::MultiAns);

        let clarify = ScriptedAssistant::new(AssistantPolicy::AlwaysClarifyThenAnswer, knowledge());
        let d = act(&clarify, &s);
        assert_eq!(d.action, Action::Clarify);
        assert_eq!(d.observation, "the uk or the us?");
        // After the exchange the policy answers using the resolved hint.
        let s = step(&s, Action::Clarify, &d.observation);
        let s = step(&s, Action::Respond, "the us");
        let d = act(&clarify, &s);
        assert_eq!(d.action, Action::Answer);
        assert_eq!(d.observation, "1998");
    }

    #[test]
    fn knowledge_miss_stays_legal() {
        let s = step(&state(0, 1.0, 1.0), Action::Query, "q");
        let empty = ScriptedAssistant::new(AssistantPolicy::AlwaysAnswer, KnowledgeTable::default());
        let d = act(&empty, &s);
        assert_eq!(d.observation, "unknown");
    }

    #[test]
    fn reward_aware_never_clarifies_when_alpha_exceeds_delta() {
        // delta_clarify = 10 < alpha = 20: the clarify margin is negative for
        // every clarify sequence, so the policy answers or multi-answers.
        let estimates = RewardEstimates {
            delta_clarify: 10.0,
            delta_multi: 0.0,
            multi_extra_words: 12,
        };
        let assistant = ScriptedAssistant::new(AssistantPolicy::RewardAware(estimates), knowledge());
        for beta in [0.1, 0.7, 5.0] {
            let s = step(&state(0, 20.0, beta), Action::Query, "q");
            let d = act(&assistant, &s);
            assert_ne!(d.action, Action::Clarify, "beta {beta}");
        }
    }

    #[test]
    fn reward_aware_prefers_multi_when_words_are_cheap() {
        // Margin 50 - 0.1 * 12 = 48.8 beats answering directly (0) and any
        // clarify arm (alpha 20 vs delta_clarify 0).
        let estimates = RewardEstimates {
            delta_clarify: 0.0,
            delta_multi: 50.0,
            multi_extra_words: 12,
        };
        let assistant = ScriptedAssistant::new(AssistantPolicy::RewardAware(estimates), knowledge());
        let s = step(&state(0, 20.0, 0.1), Action::Query, "q");
        assert_eq!(act(&assistant, &s).action, Action::MultiAns);
    }

    #[test]
    fn reward_aware_clarifies_when_cheap_then_answers() {
        let estimates = RewardEstimates::default(); // delta_clarify 30
        let assistant = ScriptedAssistant::new(AssistantPolicy::RewardAware(estimates), knowledge());
        let s = step(&state(0, 2.0, 5.0), Action::Query, "q");
        let d = act(&assistant, &s);
        assert_eq!(d.action, Action::Clarify);
        let s = step(&s, Action::Clarify, &d.observation);
        let s = step(&s, Action::Respond, "the uk");
        let d = act(&assistant, &s);
        assert_eq!(d.action, Action::Answer);
        assert_eq!(d.observation, "1997");
    }

    #[test]
    fn reward_aware_ties_break_toward_answer() {
        // All margins zero: QAF wins over QMF and the clarify arms.
        let estimates = RewardEstimates {
            delta_clarify: 0.0,
            delta_multi: 0.0,
            multi_extra_words: 0,
        };
        let assistant = ScriptedAssistant::new(AssistantPolicy::RewardAware(estimates), knowledge());
        let s = step(&state(0, 0.0, 0.0), Action::Query, "q");
        assert_eq!(act(&assistant, &s).action, Action::Answer);
    }

    #[test]
    fn stopword_list_is_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }
}
