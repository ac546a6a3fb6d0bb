//! Assemble model responses into a response matrix: render a persona prompt
//! per (person, item), query a responder, parse and grade the reply, and
//! keep a full transcript.

mod parse;
mod prompt;
mod responder;

pub use parse::{parse_answer, ParsedAnswer};
pub use prompt::{
    answer_format, persona_block, render_prompt, AnswerFormat, HistoryEntry, PromptKind,
    PromptTemplates, RenderedPrompt,
};
pub use responder::{
    HttpResponder, Responder, ResponderConfig, ResponderError, ResponderRequest,
    SyntheticResponder,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::{Cell, Item, PersonProfile, ResponseMatrix};

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("template `{template}`: {message}")]
    Template { template: String, message: String },
    #[error("person `{person}` is missing persona attribute `{attribute}`")]
    MissingAttribute { person: String, attribute: String },
    #[error("item `{0}` has no text to prompt with")]
    ItemWithoutText(String),
    #[error("no final answer found in response to item `{item}`")]
    Unparseable { item: String },
    #[error("item `{item}` has no stored correct answer to grade against")]
    Ungradeable { item: String },
    #[error("collection job has no items")]
    NoItems,
    #[error("collection job has no persons")]
    NoPersons,
    #[error(transparent)]
    Response(#[from] crate::response::ResponseError),
}

/// How much of a person's earlier answers each prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HistoryPolicy {
    /// No history block.
    None,
    /// Prior items with the responses predicted so far.
    #[default]
    Predicted,
    /// Prior items with predicted responses plus the true answer where the
    /// item bank has one.
    PredictedWithTrueAnswers,
}

/// One full collection run: who answers, what they answer, and how prompts
/// are built.
#[derive(Debug, Clone)]
pub struct CollectionJob {
    pub persons: Vec<PersonProfile>,
    pub items: Vec<Item>,
    pub prompt_kind: PromptKind,
    pub attribute_subset: Option<Vec<String>>,
    pub history_policy: HistoryPolicy,
    pub seed: u64,
}

/// One prompt/response exchange, one line of the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub person_id: String,
    pub item_id: String,
    pub prompt: String,
    pub raw_response: Option<String>,
    pub parsed: Option<String>,
    pub graded: Option<bool>,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionOutcome {
    pub matrix: ResponseMatrix,
    pub transcript: Vec<TranscriptEntry>,
}

impl CollectionOutcome {
    /// Transcript as JSON Lines.
    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.transcript {
            out.push_str(&serde_json::to_string(entry).expect("transcript entries serialize"));
            out.push('\n');
        }
        out
    }
}

fn validate_job(job: &CollectionJob) -> Result<(), CollectError> {
    if job.items.is_empty() {
        return Err(CollectError::NoItems);
    }
    if job.persons.is_empty() {
        return Err(CollectError::NoPersons);
    }
    for item in &job.items {
        if item.text.as_deref().map_or(true, |t| t.trim().is_empty()) {
            return Err(CollectError::ItemWithoutText(item.id.clone()));
        }
    }
    // Persona coverage is a configuration error: check the whole roster up
    // front so a bad subset aborts before any requests go out.
    if let Some(subset) = &job.attribute_subset {
        for person in &job.persons {
            for name in subset {
                if !person.attributes.contains_key(name) {
                    return Err(CollectError::MissingAttribute {
                        person: person.person_id.clone(),
                        attribute: name.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

struct PersonRun {
    cells: Vec<Cell>,
    transcript: Vec<TranscriptEntry>,
}

fn collect_person(
    job: &CollectionJob,
    templates: &PromptTemplates,
    responder: &dyn Responder,
    config: &ResponderConfig,
    person: &PersonProfile,
) -> Result<PersonRun, CollectError> {
    let mut cells = Vec::with_capacity(job.items.len());
    let mut transcript = Vec::new();
    let mut history: Vec<HistoryEntry> = Vec::new();

    // Items are strictly sequential within a person: each prompt carries the
    // answers predicted so far.
    for item in &job.items {
        let mut resolved: Option<ParsedAnswer> = None;
        for attempt in 0..=config.retry_limit {
            let prompt = render_prompt(
                templates,
                job.prompt_kind,
                person,
                item,
                &history,
                job.attribute_subset.as_deref(),
            )?;
            let request = ResponderRequest {
                person_id: &person.person_id,
                item_id: &item.id,
                prompt: &prompt.text,
                temperature: config.temperature,
                max_tokens: config.max_output_length,
                attempt,
            };
            match responder.respond(&request) {
                Ok(raw) => match parse_answer(&raw, item) {
                    Ok(parsed) => {
                        transcript.push(TranscriptEntry {
                            person_id: person.person_id.clone(),
                            item_id: item.id.clone(),
                            prompt: prompt.text,
                            raw_response: Some(raw),
                            parsed: parsed.chosen_label.clone(),
                            graded: Some(parsed.correct),
                            attempt,
                        });
                        resolved = Some(parsed);
                        break;
                    }
                    Err(_) => {
                        transcript.push(TranscriptEntry {
                            person_id: person.person_id.clone(),
                            item_id: item.id.clone(),
                            prompt: prompt.text,
                            raw_response: Some(raw),
                            parsed: None,
                            graded: None,
                            attempt,
                        });
                    }
                },
                Err(err) => {
                    transcript.push(TranscriptEntry {
                        person_id: person.person_id.clone(),
                        item_id: item.id.clone(),
                        prompt: prompt.text,
                        raw_response: None,
                        parsed: Some(err.to_string()),
                        graded: None,
                        attempt,
                    });
                }
            }
        }

        match resolved {
            Some(parsed) => {
                cells.push(Cell::from_correct(parsed.correct));
                if !matches!(job.history_policy, HistoryPolicy::None) {
                    history.push(HistoryEntry {
                        item_text: item.text.clone().unwrap_or_default(),
                        response_text: parsed
                            .chosen_label
                            .unwrap_or_else(|| if parsed.correct { "1" } else { "0" }.to_string()),
                        true_answer: match job.history_policy {
                            HistoryPolicy::PredictedWithTrueAnswers => item.correct_answer.clone(),
                            _ => None,
                        },
                    });
                }
            }
            // Exhausted retries: the cell stays missing rather than being
            // graded incorrect, and the item is left out of later history.
            None => cells.push(Cell::Missing),
        }
    }

    Ok(PersonRun { cells, transcript })
}

/// Run the whole job: persons in parallel, items sequential per person.
/// With the synthetic responder and a fixed seed the outcome is fully
/// reproducible; external endpoints are inherently nondeterministic and the
/// transcript is the record.
pub fn collect_responses(
    job: &CollectionJob,
    responder: &dyn Responder,
    config: &ResponderConfig,
    templates: &PromptTemplates,
) -> Result<CollectionOutcome, CollectError> {
    validate_job(job)?;

    let runs: Vec<Result<PersonRun, CollectError>> = job
        .persons
        .par_iter()
        .map(|person| collect_person(job, templates, responder, config, person))
        .collect();

    let mut cells = Vec::with_capacity(job.persons.len() * job.items.len());
    let mut transcript = Vec::new();
    for run in runs {
        let run = run?;
        cells.extend(run.cells);
        transcript.extend(run.transcript);
    }

    let matrix = ResponseMatrix::new(
        job.persons.iter().map(|p| p.person_id.clone()).collect(),
        job.items.iter().map(|i| i.id.clone()).collect(),
        cells,
    )?;
    Ok(CollectionOutcome { matrix, transcript })
}

/// Profiles for an ensemble run: one pseudo-person per
/// (model, temperature, repetition) triple.
pub fn ensemble_profiles(
    models: &[&str],
    temperatures: &[f64],
    repetitions_per_temperature: usize,
) -> Vec<PersonProfile> {
    let mut profiles = Vec::new();
    for model in models {
        for &temperature in temperatures {
            for repetition in 1..=repetitions_per_temperature {
                profiles.push(
                    PersonProfile::new(format!("{model}@t{temperature}#r{repetition}"))
                        .with_attribute("model", model.to_string())
                        .with_attribute("temperature", temperature.to_string())
                        .with_attribute("repetition", repetition.to_string()),
                );
            }
        }
    }
    profiles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::{Choice, ItemBank};
    use std::collections::HashMap;

    fn bank(n: usize) -> ItemBank {
        ItemBank::new(
            (0..n)
                .map(|j| Item {
                    id: format!("q{j}"),
                    text: Some(format!("question {j}?")),
                    options: ["A", "B", "C", "D"]
                        .iter()
                        .map(|l| Choice {
                            label: l.to_string(),
                            text: format!("choice {l}"),
                        })
                        .collect(),
                    correct_answer: Some("B".into()),
                })
                .collect(),
        )
        .unwrap()
    }

    fn job(n_persons: usize, n_items: usize) -> (CollectionJob, ItemBank) {
        let bank = bank(n_items);
        let persons = (0..n_persons)
            .map(|i| PersonProfile::new(format!("s{i}")).with_attribute("age", "11"))
            .collect();
        (
            CollectionJob {
                persons,
                items: bank.items().to_vec(),
                prompt_kind: PromptKind::Persona,
                attribute_subset: None,
                history_policy: HistoryPolicy::Predicted,
                seed: 42,
            },
            bank,
        )
    }

    #[test]
    fn transcript_has_one_entry_per_cell_without_retries() {
        let (job, bank) = job(6, 5);
        let difficulties: HashMap<String, f64> =
            bank.items().iter().map(|i| (i.id.clone(), 0.0)).collect();
        let responder = SyntheticResponder::new(0.0, &bank, &difficulties, 9);
        let outcome =
            collect_responses(&job, &responder, &ResponderConfig::default(), &PromptTemplates::builtin())
                .unwrap();
        assert_eq!(outcome.transcript.len(), 30);
        assert_eq!(outcome.matrix.observed_count(), 30);
    }

    #[test]
    fn history_grows_item_by_item() {
        let (job, bank) = job(1, 4);
        let difficulties: HashMap<String, f64> =
            bank.items().iter().map(|i| (i.id.clone(), 0.0)).collect();
        let responder = SyntheticResponder::new(0.0, &bank, &difficulties, 9);
        let outcome =
            collect_responses(&job, &responder, &ResponderConfig::default(), &PromptTemplates::builtin())
                .unwrap();
        // Prompt n+1 contains exactly the n prior questions, in order.
        for (n, entry) in outcome.transcript.iter().enumerate() {
            for prior in 0..n {
                assert!(entry.prompt.contains(&format!("question {prior}?")));
            }
            let count = entry.prompt.matches("Student answer:").count();
            assert_eq!(count, n);
        }
    }

    #[test]
    fn collection_is_reproducible_with_the_synthetic_responder() {
        let (job, bank) = job(4, 6);
        let difficulties: HashMap<String, f64> =
            bank.items().iter().map(|i| (i.id.clone(), 0.3)).collect();
        let responder = SyntheticResponder::new(-0.2, &bank, &difficulties, 1);
        let config = ResponderConfig::default();
        let templates = PromptTemplates::builtin();
        let a = collect_responses(&job, &responder, &config, &templates).unwrap();
        let b = collect_responses(&job, &responder, &config, &templates).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.transcript_jsonl(), b.transcript_jsonl());
    }

    #[test]
    fn failing_responder_leaves_missing_cells() {
        struct AlwaysFails;
        impl Responder for AlwaysFails {
            fn respond(&self, _r: &ResponderRequest<'_>) -> Result<String, ResponderError> {
                Err(ResponderError::Status(500))
            }
        }
        let (job, _) = job(2, 3);
        let config = ResponderConfig {
            retry_limit: 1,
            ..ResponderConfig::default()
        };
        let outcome =
            collect_responses(&job, &AlwaysFails, &config, &PromptTemplates::builtin()).unwrap();
        assert_eq!(outcome.matrix.observed_count(), 0);
        // Two attempts per cell.
        assert_eq!(outcome.transcript.len(), 12);
    }

    #[test]
    fn unparseable_reply_is_retried_then_missing() {
        struct Refuses;
        impl Responder for Refuses {
            fn respond(&self, _r: &ResponderRequest<'_>) -> Result<String, ResponderError> {
                Ok("I would rather not say.".into())
            }
        }
        let (job, _) = job(1, 1);
        let config = ResponderConfig {
            retry_limit: 2,
            ..ResponderConfig::default()
        };
        let outcome = collect_responses(&job, &Refuses, &config, &PromptTemplates::builtin()).unwrap();
        assert_eq!(outcome.matrix.observed_count(), 0);
        assert_eq!(outcome.transcript.len(), 3);
        assert!(outcome.transcript.iter().all(|t| t.graded.is_none()));
    }

    #[test]
    fn bad_attribute_subset_aborts_the_job() {
        let (mut job, bank) = job(2, 2);
        job.attribute_subset = Some(vec!["country".into()]);
        let difficulties: HashMap<String, f64> =
            bank.items().iter().map(|i| (i.id.clone(), 0.0)).collect();
        let responder = SyntheticResponder::new(0.0, &bank, &difficulties, 9);
        assert!(matches!(
            collect_responses(&job, &responder, &ResponderConfig::default(), &PromptTemplates::builtin()),
            Err(CollectError::MissingAttribute { .. })
        ));
    }

    #[test]
    fn ensemble_roster_counts_models_by_temperature_and_repetition() {
        let models = [
            "m1", "m2", "m3", "m4", "m5", "m6", "m7", "m8", "m9", "m10",
        ];
        let profiles = ensemble_profiles(&models, &[0.0, 0.7, 1.0], 5);
        assert_eq!(profiles.len(), 150);
        let m1_rows = profiles
            .iter()
            .filter(|p| p.attributes["model"] == "m1")
            .count();
        assert_eq!(m1_rows, 15);
    }
}
