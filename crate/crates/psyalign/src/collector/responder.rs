//! Pluggable response sources: a generic HTTP endpoint speaking a minimal
//! JSON contract, and a synthetic 1PL responder used as a closed-loop test
//! double.

use std::collections::HashMap;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{answer_format, AnswerFormat};
use crate::irt::sigmoid;
use crate::response::{Item, ItemBank};
use crate::rng;

#[derive(Debug, Error)]
pub enum ResponderError {
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint reply is missing the `text` field")]
    MalformedReply,
    #[error("no difficulty known for item `{0}`")]
    UnknownItem(String),
    #[error("no ability known for person `{0}`")]
    UnknownPerson(String),
}

/// Connection and sampling settings shared by every request in a collection
/// run. Temperature is a responder parameter, passed through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponderConfig {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_length")]
    pub max_output_length: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(
        default = "default_timeout_secs",
        rename = "request_timeout_secs"
    )]
    pub request_timeout_secs: f64,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_max_output_length() -> usize {
    512
}
fn default_retry_limit() -> u32 {
    2
}
fn default_timeout_secs() -> f64 {
    30.0
}

impl Default for ResponderConfig {
    fn default() -> Self {
        ResponderConfig {
            endpoint: String::new(),
            temperature: default_temperature(),
            max_output_length: default_max_output_length(),
            retry_limit: default_retry_limit(),
            request_timeout_secs: default_timeout_secs(),
        }
    }
}

impl ResponderConfig {
    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs.max(0.0))
    }
}

/// One request to a responder. `attempt` counts retries of the same cell.
#[derive(Debug, Clone)]
pub struct ResponderRequest<'a> {
    pub person_id: &'a str,
    pub item_id: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: usize,
    pub attempt: u32,
}

/// A source of raw response text. Implementations must be `Sync`: different
/// persons are collected concurrently.
pub trait Responder: Sync {
    fn respond(&self, request: &ResponderRequest<'_>) -> Result<String, ResponderError>;
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct WireReply {
    text: Option<String>,
}

/// POSTs `{"prompt", "temperature", "max_tokens"}` and expects
/// `{"text": ...}` back. Non-2xx statuses and timeouts surface as errors so
/// the collection loop can retry.
pub struct HttpResponder {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpResponder {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        HttpResponder {
            endpoint: endpoint.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Responder for HttpResponder {
    fn respond(&self, request: &ResponderRequest<'_>) -> Result<String, ResponderError> {
        let reply = self
            .agent
            .post(&self.endpoint)
            .send_json(WireRequest {
                prompt: request.prompt,
                temperature: request.temperature,
                max_tokens: request.max_tokens,
            })
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => ResponderError::Status(code),
                ureq::Error::Transport(t) => ResponderError::Transport(t.to_string()),
            })?;
        let reply: WireReply = reply
            .into_json()
            .map_err(|e| ResponderError::Transport(e.to_string()))?;
        reply.text.ok_or(ResponderError::MalformedReply)
    }
}

/// Where a synthetic responder's ability comes from.
#[derive(Debug, Clone)]
enum AbilitySource {
    Shared(f64),
    PerPerson(HashMap<String, f64>),
}

/// Answers correctly with the 1PL probability for (ability, item
/// difficulty), emitting a correctly formatted answer string: the correct
/// label, or a uniformly random wrong label when incorrect. Fully
/// deterministic given the seed - each (person, item, attempt) triple draws
/// from its own derived stream, so collection order cannot matter.
pub struct SyntheticResponder {
    ability: AbilitySource,
    items: HashMap<String, Item>,
    difficulties: HashMap<String, f64>,
    seed: u64,
}

impl SyntheticResponder {
    pub fn new(
        ability: f64,
        bank: &ItemBank,
        difficulties: &HashMap<String, f64>,
        seed: u64,
    ) -> Self {
        SyntheticResponder {
            ability: AbilitySource::Shared(ability),
            items: bank
                .items()
                .iter()
                .map(|i| (i.id.clone(), i.clone()))
                .collect(),
            difficulties: difficulties.clone(),
            seed,
        }
    }

    /// Per-person abilities, for simulating a heterogeneous population.
    pub fn with_person_abilities(
        abilities: HashMap<String, f64>,
        bank: &ItemBank,
        difficulties: &HashMap<String, f64>,
        seed: u64,
    ) -> Self {
        SyntheticResponder {
            ability: AbilitySource::PerPerson(abilities),
            items: bank
                .items()
                .iter()
                .map(|i| (i.id.clone(), i.clone()))
                .collect(),
            difficulties: difficulties.clone(),
            seed,
        }
    }

    fn ability_for(&self, person_id: &str) -> Result<f64, ResponderError> {
        match &self.ability {
            AbilitySource::Shared(theta) => Ok(*theta),
            AbilitySource::PerPerson(map) => map
                .get(person_id)
                .copied()
                .ok_or_else(|| ResponderError::UnknownPerson(person_id.to_string())),
        }
    }
}

impl Responder for SyntheticResponder {
    fn respond(&self, request: &ResponderRequest<'_>) -> Result<String, ResponderError> {
        let item = self
            .items
            .get(request.item_id)
            .ok_or_else(|| ResponderError::UnknownItem(request.item_id.to_string()))?;
        let difficulty = self
            .difficulties
            .get(request.item_id)
            .copied()
            .ok_or_else(|| ResponderError::UnknownItem(request.item_id.to_string()))?;
        let theta = self.ability_for(request.person_id)?;

        let label = format!(
            "synthetic:{}:{}:{}",
            request.person_id, request.item_id, request.attempt
        );
        let mut stream = rng::stream(self.seed, &label, 0);
        let correct = stream.random::<f64>() < sigmoid(theta - difficulty);

        let text = match answer_format(item) {
            AnswerFormat::ChoiceLetter => {
                let answer = item
                    .correct_answer
                    .as_deref()
                    .ok_or_else(|| ResponderError::UnknownItem(item.id.clone()))?;
                let chosen = if correct {
                    answer.to_string()
                } else {
                    let wrong: Vec<&str> = item
                        .options
                        .iter()
                        .map(|o| o.label.as_str())
                        .filter(|l| !l.eq_ignore_ascii_case(answer))
                        .collect();
                    if wrong.is_empty() {
                        answer.to_string()
                    } else {
                        wrong[stream.random_range(0..wrong.len())].to_string()
                    }
                };
                format!("Final answer: {chosen}")
            }
            AnswerFormat::BinaryKnownWord => {
                format!("Final answer: {}", if correct { "yes" } else { "no" })
            }
            AnswerFormat::FreeNumeric => {
                let answer = item
                    .correct_answer
                    .as_deref()
                    .ok_or_else(|| ResponderError::UnknownItem(item.id.clone()))?;
                if correct {
                    format!("Final answer: {answer}")
                } else {
                    format!("Final answer: {}", stream.random_range(0..1000))
                }
            }
        };
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::Choice;

    fn bank() -> ItemBank {
        ItemBank::new(vec![Item {
            id: "q1".into(),
            text: Some("?".into()),
            options: ["A", "B", "C", "D"]
                .iter()
                .map(|l| Choice {
                    label: l.to_string(),
                    text: l.to_string(),
                })
                .collect(),
            correct_answer: Some("B".into()),
        }])
        .unwrap()
    }

    fn request<'a>(person: &'a str, item: &'a str, attempt: u32) -> ResponderRequest<'a> {
        ResponderRequest {
            person_id: person,
            item_id: item,
            prompt: "",
            temperature: 0.0,
            max_tokens: 16,
            attempt,
        }
    }

    #[test]
    fn matched_ability_answers_about_half_correct() {
        let difficulties: HashMap<String, f64> = [("q1".to_string(), 0.3)].into();
        let responder = SyntheticResponder::new(0.3, &bank(), &difficulties, 5);
        let mut correct = 0;
        let n = 4000;
        for i in 0..n {
            let person = format!("p{i}");
            let text = responder.respond(&request(&person, "q1", 0)).unwrap();
            if text.ends_with("B") {
                correct += 1;
            }
        }
        let rate = correct as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.03, "rate {rate}");
    }

    #[test]
    fn saturated_ability_answers_the_correct_label() {
        let difficulties: HashMap<String, f64> = [("q1".to_string(), 0.0)].into();
        let responder = SyntheticResponder::new(10.0, &bank(), &difficulties, 5);
        for i in 0..200 {
            let person = format!("p{i}");
            let text = responder.respond(&request(&person, "q1", 0)).unwrap();
            assert_eq!(text, "Final answer: B");
        }
    }

    #[test]
    fn responses_are_order_independent() {
        let difficulties: HashMap<String, f64> = [("q1".to_string(), 0.0)].into();
        let responder = SyntheticResponder::new(0.0, &bank(), &difficulties, 5);
        let first = responder.respond(&request("p1", "q1", 0)).unwrap();
        // Interleave other calls; the (person, item, attempt) stream is fixed.
        let _ = responder.respond(&request("p2", "q1", 0)).unwrap();
        let _ = responder.respond(&request("p3", "q1", 1)).unwrap();
        assert_eq!(first, responder.respond(&request("p1", "q1", 0)).unwrap());
    }

    #[test]
    fn unknown_item_errors() {
        let difficulties: HashMap<String, f64> = [("q1".to_string(), 0.0)].into();
        let responder = SyntheticResponder::new(0.0, &bank(), &difficulties, 5);
        assert!(matches!(
            responder.respond(&request("p1", "nope", 0)),
            Err(ResponderError::UnknownItem(_))
        ));
    }
}
