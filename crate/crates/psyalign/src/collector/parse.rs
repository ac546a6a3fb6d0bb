//! Extract and grade the final answer from a raw model response.
//!
//! Ordered rule list: a structured `Final answer: X` marker wins (last
//! occurrence); otherwise fall back to the last standalone option label,
//! yes/no token, or numeric token depending on the item's answer format.

use std::sync::OnceLock;

use regex::Regex;

use super::prompt::{answer_format, AnswerFormat};
use super::CollectError;
use crate::response::Item;

/// A graded answer: whether it was correct, and the label that was chosen
/// when the item has labelled options (or the yes/no token for binary items).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub correct: bool,
    pub chosen_label: Option<String>,
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)final\s+answer\s*[:\-]?\s*([A-Za-z0-9][A-Za-z0-9.\-]*)")
            .expect("static pattern compiles")
    })
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9.\-]+").expect("static pattern compiles"))
}

fn normalize(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '-' && c != '.')
        .to_ascii_uppercase()
}

/// The last structured-marker capture, if any.
fn marker_candidate(raw: &str) -> Option<String> {
    marker_regex()
        .captures_iter(raw)
        .last()
        .map(|c| normalize(&c[1]))
        .filter(|s| !s.is_empty())
}

/// The last standalone token satisfying `accept`.
fn last_token(raw: &str, accept: impl Fn(&str) -> bool) -> Option<String> {
    token_regex()
        .find_iter(raw)
        .map(|m| normalize(m.as_str()))
        .filter(|t| !t.is_empty() && accept(t))
        .last()
}

fn grade_choice(candidate: &str, item: &Item) -> Result<ParsedAnswer, CollectError> {
    let label = item
        .options
        .iter()
        .find(|o| o.label.eq_ignore_ascii_case(candidate))
        .map(|o| o.label.clone())
        .ok_or_else(|| CollectError::Unparseable {
            item: item.id.clone(),
        })?;
    let answer = item
        .correct_answer
        .as_deref()
        .ok_or_else(|| CollectError::Ungradeable {
            item: item.id.clone(),
        })?;
    Ok(ParsedAnswer {
        correct: label.eq_ignore_ascii_case(answer),
        chosen_label: Some(label),
    })
}

fn grade_binary(candidate: &str, item: &Item) -> Result<ParsedAnswer, CollectError> {
    match candidate {
        "YES" => Ok(ParsedAnswer {
            correct: true,
            chosen_label: Some("yes".into()),
        }),
        "NO" => Ok(ParsedAnswer {
            correct: false,
            chosen_label: Some("no".into()),
        }),
        _ => Err(CollectError::Unparseable {
            item: item.id.clone(),
        }),
    }
}

fn grade_numeric(candidate: &str, item: &Item) -> Result<ParsedAnswer, CollectError> {
    let value: f64 = candidate
        .parse()
        .map_err(|_| CollectError::Unparseable {
            item: item.id.clone(),
        })?;
    let answer: f64 = item
        .correct_answer
        .as_deref()
        .and_then(|a| a.trim().parse().ok())
        .ok_or_else(|| CollectError::Ungradeable {
            item: item.id.clone(),
        })?;
    Ok(ParsedAnswer {
        correct: (value - answer).abs() <= 1e-9 * answer.abs().max(1.0),
        chosen_label: Some(candidate.to_string()),
    })
}

/// Pure function of (raw text, item): no hidden state.
pub fn parse_answer(raw: &str, item: &Item) -> Result<ParsedAnswer, CollectError> {
    let format = answer_format(item);
    let candidate = marker_candidate(raw).or_else(|| match format {
        AnswerFormat::ChoiceLetter => last_token(raw, |t| {
            item.options.iter().any(|o| o.label.eq_ignore_ascii_case(t))
        }),
        AnswerFormat::BinaryKnownWord => last_token(raw, |t| t == "YES" || t == "NO"),
        AnswerFormat::FreeNumeric => last_token(raw, |t| t.parse::<f64>().is_ok()),
    });
    let candidate = candidate.ok_or_else(|| CollectError::Unparseable {
        item: item.id.clone(),
    })?;
    match format {
        AnswerFormat::ChoiceLetter => grade_choice(&candidate, item),
        AnswerFormat::BinaryKnownWord => grade_binary(&candidate, item),
        AnswerFormat::FreeNumeric => grade_numeric(&candidate, item),
    }
}
