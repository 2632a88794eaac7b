//! Answer normalization, token-level F1, word counting, and the
//! cost-penalized reward `total = accuracy - alpha * n_clar - beta * words`.
//!
//! Normalization follows the SQuAD convention: lowercase, strip ASCII
//! punctuation, drop the articles a/an/the, split on whitespace. Accuracy is
//! reported on a 0-100 scale so it composes with the shipped coefficient
//! grids. The numeric-aware mode canonicalizes number tokens (commas, dollar
//! signs, trailing percent signs, wrapping punctuation) and compares them as
//! decimal values; when both strings carry numbers but share none, the score
//! is zero regardless of text overlap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Action, CostCoefficients, Interpretation, RewardBreakdown, Rollout};

/// How answers are matched against gold strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ScoringMode {
    /// Plain SQuAD-style token F1.
    #[default]
    #[serde(rename = "PLAIN_TOKEN_F1")]
    PlainTokenF1,
    /// Token F1 with number canonicalization, for table/finance-style data.
    #[serde(rename = "NUMERIC_AWARE_F1")]
    NumericAwareF1,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoringError {
    #[error("rollout {rollout_id} is not a complete conversation ({detail})")]
    IncompleteRollout { rollout_id: String, detail: String },
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Normalized token list: lowercased, ASCII punctuation stripped, articles
/// removed, whitespace collapsed.
pub fn normalize_text(s: &str) -> Vec<String> {
    let lowered = s.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped
        .split_whitespace()
        .filter(|tok| !ARTICLES.contains(tok))
        .map(str::to_string)
        .collect()
}

/// Number of whitespace-separated words; 0 for blank input. Used for the
/// beta penalty, which counts raw words without any normalization.
pub fn count_words(s: &str) -> u32 {
    s.split_whitespace().count() as u32
}

/// Canonical decimal value of a number-like token, if it is one. Commas and
/// dollar signs are dropped anywhere in the token; other wrapping ASCII
/// punctuation (percent signs, parentheses, trailing periods) is trimmed
/// from the ends. Tokens without a digit, or that do not parse to a finite
/// value, are not numbers.
fn canonical_number(token: &str) -> Option<f64> {
    if !token.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    let cleaned: String = token.chars().filter(|c| *c != ',' && *c != '$').collect();
    let trimmed = cleaned
        .trim_matches(|c: char| c.is_ascii_punctuation() && c != '-' && c != '+' && c != '.');
    let value: f64 = trimmed.parse().ok()?;
    if !value.is_finite() {
        return None;
    }
    // Collapse -0.0 so it matches 0.
    Some(if value == 0.0 { 0.0 } else { value })
}

/// Bag element in numeric-aware mode: either a canonical number (by bit
/// pattern) or a normalized text token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum BagToken {
    Number(u64),
    Text(String),
}

fn plain_bag(s: &str) -> BTreeMap<BagToken, usize> {
    let mut bag = BTreeMap::new();
    for tok in normalize_text(s) {
        *bag.entry(BagToken::Text(tok)).or_insert(0) += 1;
    }
    bag
}

fn numeric_bag(s: &str) -> (BTreeMap<BagToken, usize>, bool) {
    let mut bag = BTreeMap::new();
    let mut has_number = false;
    for raw in s.split_whitespace() {
        match canonical_number(raw) {
            Some(value) => {
                has_number = true;
                *bag.entry(BagToken::Number(value.to_bits())).or_insert(0) += 1;
            }
            None => {
                for tok in normalize_text(raw) {
                    *bag.entry(BagToken::Text(tok)).or_insert(0) += 1;
                }
            }
        }
    }
    (bag, has_number)
}

fn bag_overlap(a: &BTreeMap<BagToken, usize>, b: &BTreeMap<BagToken, usize>) -> usize {
    a.iter()
        .filter_map(|(tok, n)| b.get(tok).map(|m| n.min(m)))
        .sum()
}

fn bag_size(bag: &BTreeMap<BagToken, usize>) -> usize {
    bag.values().sum()
}

/// Bag-of-tokens F1 in [0, 1]. Symmetric; 1 when both token lists are empty,
/// 0 when exactly one is.
pub fn token_f1(prediction: &str, gold: &str, mode: ScoringMode) -> f64 {
    let (pred_bag, gold_bag) = match mode {
        ScoringMode::PlainTokenF1 => (plain_bag(prediction), plain_bag(gold)),
        ScoringMode::NumericAwareF1 => {
            let (pred_bag, pred_has_num) = numeric_bag(prediction);
            let (gold_bag, gold_has_num) = numeric_bag(gold);
            if pred_has_num && gold_has_num {
                let shares_number = pred_bag.keys().any(|tok| {
                    matches!(tok, BagToken::Number(_)) && gold_bag.contains_key(tok)
                });
                if !shares_number {
                    return 0.0;
                }
            }
            (pred_bag, gold_bag)
        }
    };
    let pred_n = bag_size(&pred_bag);
    let gold_n = bag_size(&gold_bag);
    if pred_n == 0 && gold_n == 0 {
        return 1.0;
    }
    if pred_n == 0 || gold_n == 0 {
        return 0.0;
    }
    let overlap = bag_overlap(&pred_bag, &gold_bag);
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred_n as f64;
    let recall = overlap as f64 / gold_n as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Percent accuracy: 100 times the best token F1 over the interpretation's
/// gold answer alternatives.
pub fn accuracy(prediction: &str, interpretation: &Interpretation, mode: ScoringMode) -> f64 {
    100.0
        * interpretation
            .gold_answers
            .iter()
            .map(|gold| token_f1(prediction, gold, mode))
            .fold(0.0, f64::max)
}

/// Score a complete rollout: accuracy of the user's final answer against the
/// sampled interpretation, penalized by the clarification count and by the
/// word count of the assistant's final answer (the penultimate observation).
pub fn reward(
    rollout: &Rollout,
    interpretation: &Interpretation,
    mode: ScoringMode,
) -> Result<RewardBreakdown, ScoringError> {
    if rollout.turns.len() < 3 {
        return Err(ScoringError::IncompleteRollout {
            rollout_id: rollout.rollout_id.clone(),
            detail: format!("{} turns, need at least 3", rollout.turns.len()),
        });
    }
    let last = rollout.turns.last().expect("non-empty");
    if last.action != Action::Finalize {
        return Err(ScoringError::IncompleteRollout {
            rollout_id: rollout.rollout_id.clone(),
            detail: format!("last action is {}, not FINALIZE", last.action),
        });
    }
    let acc = accuracy(&rollout.final_answer, interpretation, mode);
    let n_clar = rollout.n_clarifications();
    let assistant_answer = &rollout.turns[rollout.turns.len() - 2].observation;
    let words = count_words(assistant_answer);
    Ok(RewardBreakdown::compute(
        acc,
        n_clar,
        words,
        rollout.coefficients,
    ))
}

/// Net gain of a richer strategy over answering directly:
/// `delta_acc - alpha * extra_clar - beta * extra_words`. Positive means the
/// richer strategy dominates.
pub fn decision_margin(
    delta_acc: f64,
    alpha: f64,
    beta: f64,
    extra_words: u32,
    extra_clar: u32,
) -> f64 {
    delta_acc - alpha * extra_clar as f64 - beta * extra_words as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ConversationState;
    use crate::types::{QueryExample, Turn};
    use std::sync::Arc;

    fn interp(golds: &[&str]) -> Interpretation {
        Interpretation {
            text: "test".into(),
            gold_answers: golds.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn normalize_removes_articles() {
        assert_eq!(normalize_text("The book"), vec!["book"]);
        assert_eq!(normalize_text("A man an apple THE end"), vec!["man", "apple", "end"]);
    }

    #[test]
    fn normalize_strips_punctuation_and_splits() {
        assert_eq!(normalize_text("April 1, 2016"), vec!["april", "1", "2016"]);
        assert_eq!(normalize_text("Don't   stop!"), vec!["dont", "stop"]);
        assert_eq!(normalize_text(""), Vec::<String>::new());
        assert_eq!(normalize_text("  \t "), Vec::<String>::new());
    }

    #[test]
    fn f1_exact_match() {
        assert_eq!(token_f1("1939", "1939", ScoringMode::PlainTokenF1), 1.0);
    }

    #[test]
    fn f1_partial_overlap_hand_computed() {
        // Bags {april, 1, 2016} vs {april, 1, 2017}: overlap 2 of 3 each,
        // P = R = 2/3, F1 = 2/3.
        let f1 = token_f1("April 1, 2016", "April 1, 2017", ScoringMode::PlainTokenF1);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_empty_cases() {
        assert_eq!(token_f1("", "", ScoringMode::PlainTokenF1), 1.0);
        assert_eq!(token_f1("", "x", ScoringMode::PlainTokenF1), 0.0);
        assert_eq!(token_f1("x", "", ScoringMode::PlainTokenF1), 0.0);
        // "the" normalizes to nothing.
        assert_eq!(token_f1("the", "the", ScoringMode::PlainTokenF1), 1.0);
    }

    #[test]
    fn f1_is_symmetric() {
        for (a, b) in [
            ("April 1, 2016", "April 1, 2017"),
            ("the quick brown fox", "a quick fox"),
            ("", "x y z"),
        ] {
            let fwd = token_f1(a, b, ScoringMode::PlainTokenF1);
            let rev = token_f1(b, a, ScoringMode::PlainTokenF1);
            assert_eq!(fwd, rev);
        }
    }

    #[test]
    fn f1_uses_multiset_counts() {
        // pred {x:2}, gold {x:1, y:1}: overlap 1, P=1/2, R=1/2.
        let f1 = token_f1("x x", "x y", ScoringMode::PlainTokenF1);
        assert!((f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn numeric_mode_canonicalizes_commas_and_currency() {
        assert_eq!(token_f1("212,000", "212000", ScoringMode::NumericAwareF1), 1.0);
        assert_eq!(token_f1("$212,000", "212000", ScoringMode::NumericAwareF1), 1.0);
        assert_eq!(token_f1("50%", "50", ScoringMode::NumericAwareF1), 1.0);
        assert_eq!(token_f1("-1,328", "-1328", ScoringMode::NumericAwareF1), 1.0);
    }

    #[test]
    fn numeric_mode_preserves_decimal_points() {
        // Plain normalization strips the period, turning 1.5 into 15.
        assert_eq!(token_f1("1.5", "1.50", ScoringMode::NumericAwareF1), 1.0);
        assert_eq!(token_f1("1.5", "15", ScoringMode::NumericAwareF1), 0.0);
    }

    #[test]
    fn disjoint_numbers_zero_out_text_overlap() {
        let pred = "212,000 dollars";
        let gold = "212,001 dollars";
        assert_eq!(token_f1(pred, gold, ScoringMode::NumericAwareF1), 0.0);
        assert!(token_f1(pred, gold, ScoringMode::PlainTokenF1) > 0.0);
    }

    #[test]
    fn numeric_mode_matches_plain_without_numbers() {
        for (a, b) in [
            ("the quick brown fox", "a quick fox"),
            ("Don't stop", "do not stop"),
            ("", "hello"),
        ] {
            assert_eq!(
                token_f1(a, b, ScoringMode::NumericAwareF1),
                token_f1(a, b, ScoringMode::PlainTokenF1),
                "mismatch on ({a:?}, {b:?})"
            );
        }
    }

    #[test]
    fn accuracy_takes_max_over_golds() {
        assert_eq!(accuracy("1997", &interp(&["1997"]), ScoringMode::PlainTokenF1), 100.0);
        assert_eq!(accuracy("2018", &interp(&["2020"]), ScoringMode::PlainTokenF1), 0.0);
        // f1 vs "1997" is 1.0 and vs "june 1997" is 2/3; the max wins.
        assert_eq!(
            accuracy("1997", &interp(&["1997", "june 1997"]), ScoringMode::PlainTokenF1),
            100.0
        );
    }

    #[test]
    fn count_words_is_raw_whitespace_runs() {
        assert_eq!(count_words("April 1, 2016"), 3);
        assert_eq!(count_words("1939"), 1);
        assert_eq!(count_words(""), 0);
        assert_eq!(count_words("   "), 0);
        assert_eq!(
            count_words("The book came out in the uk in 1997 and in the us in 1998."),
            15
        );
    }

    fn rollout_with(
        n_clar: u32,
        assistant_answer: &str,
        final_answer: &str,
        alpha: f64,
        beta: f64,
    ) -> Rollout {
        let query = Arc::new(QueryExample {
            id: "q".into(),
            query_text: "q?".into(),
            context: None,
            ambiguous: false,
            interpretations: vec![interp(&["x"])],
            weights: None,
        });
        let mut state = ConversationState::new(
            query,
            0,
            CostCoefficients::new(alpha, beta).unwrap(),
            n_clar,
        )
        .unwrap();
        let mut push = |state: &ConversationState, action: Action, obs: &str| {
            state
                .advance(Turn {
                    role: action.role(),
                    prompt: String::new(),
                    thought: None,
                    action,
                    observation: obs.into(),
                })
                .unwrap()
        };
        state = push(&state, Action::Query, "q?");
        for _ in 0..n_clar {
            state = push(&state, Action::Clarify, "which?");
            state = push(&state, Action::Respond, "this one");
        }
        state = push(&state, Action::Answer, assistant_answer);
        state = push(&state, Action::Finalize, final_answer);
        state.into_rollout("r0".into()).unwrap()
    }

    #[test]
    fn reward_from_rollout_parts() {
        // acc 100, one clarification, ten answer words, alpha 10, beta 0.1.
        let r = rollout_with(1, "a b c d e f g h i 1997", "1997", 10.0, 0.1);
        let b = reward(&r, &interp(&["1997"]), ScoringMode::PlainTokenF1).unwrap();
        assert_eq!(b.accuracy, 100.0);
        assert_eq!(b.n_clarifications, 1);
        assert_eq!(b.answer_words, 10);
        assert!((b.total - 89.0).abs() < 1e-9);
    }

    #[test]
    fn reward_zero_accuracy() {
        let r = rollout_with(0, "wrong", "wrong", 2.0, 0.7);
        let b = reward(&r, &interp(&["right"]), ScoringMode::PlainTokenF1).unwrap();
        assert_eq!(b.accuracy, 0.0);
        assert!((b.total - (-0.7)).abs() < 1e-12);
    }

    #[test]
    fn reward_two_clarifications() {
        let r = rollout_with(2, "1997", "1997", 1.0, 10.0);
        let b = reward(&r, &interp(&["1997"]), ScoringMode::PlainTokenF1).unwrap();
        assert_eq!(b.n_clarifications, 2);
        assert!((b.total - 88.0).abs() < 1e-9);
    }

    #[test]
    fn reward_rejects_truncated_rollouts() {
        let mut r = rollout_with(0, "x", "x", 0.0, 0.0);
        r.turns.truncate(2);
        assert!(matches!(
            reward(&r, &interp(&["x"]), ScoringMode::PlainTokenF1),
            Err(ScoringError::IncompleteRollout { .. })
        ));
    }

    #[test]
    fn reward_recompute_matches_stored() {
        let mut r = rollout_with(1, "in the uk in 1997 and in the us in 1998", "1997", 20.0, 5.0);
        let b = reward(&r, &interp(&["1997"]), ScoringMode::PlainTokenF1).unwrap();
        r.reward = Some(b);
        let again = reward(&r, &interp(&["1997"]), ScoringMode::PlainTokenF1).unwrap();
        assert_eq!(r.reward.unwrap(), again);
    }

    #[test]
    fn margin_rules() {
        assert_eq!(decision_margin(50.0, 20.0, 0.0, 0, 1), 30.0);
        assert_eq!(decision_margin(50.0, 0.0, 5.0, 12, 0), -10.0);
        assert_eq!(decision_margin(20.0, 20.0, 0.0, 0, 1), 0.0);
    }
}
