//! Persona prompt construction.
//!
//! Three strategies share one skeleton: a persona block built from the
//! person's attributes, the accumulated per-person history, the question,
//! and answer-format instructions. The chain-of-thought variant adds a
//! reasoning instruction; the structured variant additionally pins the
//! response layout. Skeletons live in plain text files with `{persona}`,
//! `{history}`, `{question}`, and `{format_instructions}` placeholders so
//! they can be edited without rebuilding.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CollectError;
use crate::response::{Item, PersonProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Persona,
    PersonaCot,
    PersonaCotS,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptKind::Persona => write!(f, "persona"),
            PromptKind::PersonaCot => write!(f, "persona_cot"),
            PromptKind::PersonaCotS => write!(f, "persona_cot_s"),
        }
    }
}

/// What shape of answer the prompt asks for, derived from the item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    /// Multiple choice: answer with an option label.
    ChoiceLetter,
    /// Binary self-report: does this student know the word.
    BinaryKnownWord,
    /// Free numeric answer graded against the stored value.
    FreeNumeric,
}

/// Classify an item: options mean multiple choice; a numeric stored answer
/// means free numeric; anything else is the binary known-word form.
pub fn answer_format(item: &Item) -> AnswerFormat {
    if !item.options.is_empty() {
        AnswerFormat::ChoiceLetter
    } else if item
        .correct_answer
        .as_deref()
        .is_some_and(|a| a.trim().parse::<f64>().is_ok())
    {
        AnswerFormat::FreeNumeric
    } else {
        AnswerFormat::BinaryKnownWord
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub text: String,
    pub expected_answer_format: AnswerFormat,
}

const PLACEHOLDERS: [&str; 4] = ["{persona}", "{history}", "{question}", "{format_instructions}"];

/// The three prompt skeletons.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    persona: String,
    persona_cot: String,
    persona_cot_s: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates::builtin()
    }
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        PromptTemplates {
            persona: include_str!("../../templates/persona.txt").to_string(),
            persona_cot: include_str!("../../templates/persona_cot.txt").to_string(),
            persona_cot_s: include_str!("../../templates/persona_cot_s.txt").to_string(),
        }
    }

    /// Load `persona.txt`, `persona_cot.txt`, and `persona_cot_s.txt` from a
    /// directory, validating that each carries all four placeholders.
    pub fn from_dir(dir: &Path) -> Result<Self, CollectError> {
        let read = |name: &str| -> Result<String, CollectError> {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).map_err(|e| CollectError::Template {
                template: name.to_string(),
                message: e.to_string(),
            })?;
            validate_template(name, &text)?;
            Ok(text)
        };
        Ok(PromptTemplates {
            persona: read("persona.txt")?,
            persona_cot: read("persona_cot.txt")?,
            persona_cot_s: read("persona_cot_s.txt")?,
        })
    }

    fn skeleton(&self, kind: PromptKind) -> &str {
        match kind {
            PromptKind::Persona => &self.persona,
            PromptKind::PersonaCot => &self.persona_cot,
            PromptKind::PersonaCotS => &self.persona_cot_s,
        }
    }
}

fn validate_template(name: &str, text: &str) -> Result<(), CollectError> {
    let missing: Vec<&str> = PLACEHOLDERS
        .iter()
        .filter(|p| !text.contains(**p))
        .copied()
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CollectError::Template {
            template: name.to_string(),
            message: format!("missing placeholder(s): {}", missing.join(", ")),
        })
    }
}

/// "a" or "an" for "<value>-year-old": numbers pronounced with a leading
/// vowel sound (8, 11, 18, 80...) take "an".
fn age_article(value: &str) -> &'static str {
    let v = value.trim();
    if v.starts_with('8') || v == "11" || v == "18" || v.starts_with("11,") {
        "an"
    } else {
        "a"
    }
}

fn attribute_sentence(name: &str, value: &str) -> String {
    match name {
        "age" => format!(
            "Pretend that you are {} {}-year-old student.",
            age_article(value),
            value.trim()
        ),
        "gender" => format!("Your gender is {}.", value.trim()),
        "fsm" | "free_school_meals" => {
            if value.trim().eq_ignore_ascii_case("true") || value.trim() == "1" {
                "You are eligible for free school meals due to being financially disadvantaged."
                    .to_string()
            } else {
                "You are not eligible for free school meals.".to_string()
            }
        }
        other => format!("Your {} is {}.", other.replace('_', " "), value.trim()),
    }
}

/// Build the persona block from the selected attributes, in subset order
/// (or the profile's own order when no subset is given). Always opens with
/// a "Pretend that you are..." sentence.
pub fn persona_block(
    persona: &PersonProfile,
    attribute_subset: Option<&[String]>,
) -> Result<String, CollectError> {
    let selected: Vec<(&str, &str)> = match attribute_subset {
        Some(names) => names
            .iter()
            .map(|name| {
                persona
                    .attributes
                    .get(name)
                    .map(|value| (name.as_str(), value.as_str()))
                    .ok_or_else(|| CollectError::MissingAttribute {
                        person: persona.person_id.clone(),
                        attribute: name.clone(),
                    })
            })
            .collect::<Result<_, _>>()?,
        None => persona
            .attributes
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect(),
    };

    let mut sentences: Vec<String> = Vec::new();
    if !selected.iter().any(|&(name, _)| name == "age") {
        sentences.push("Pretend that you are a student.".to_string());
    }
    for (name, value) in selected {
        sentences.push(attribute_sentence(name, value));
    }
    Ok(sentences.join(" "))
}

fn question_block(item: &Item) -> Result<String, CollectError> {
    let text = item
        .text
        .as_deref()
        .filter(|t| !t.trim().is_empty())
        .ok_or_else(|| CollectError::ItemWithoutText(item.id.clone()))?;
    let mut block = format!("Question: {text}");
    if !item.options.is_empty() {
        block.push('\n');
        for option in &item.options {
            block.push_str(&format!("{}. {}\n", option.label, option.text));
        }
        block.pop();
    }
    Ok(block)
}

fn format_instructions(format: AnswerFormat) -> &'static str {
    match format {
        AnswerFormat::ChoiceLetter => {
            "End your response with a line of the form `Final answer: <letter>`, where <letter> \
             is the label of the option you choose."
        }
        AnswerFormat::BinaryKnownWord => {
            "End your response with a line of the form `Final answer: yes` if this student \
             knows this, or `Final answer: no` if not."
        }
        AnswerFormat::FreeNumeric => {
            "End your response with a line of the form `Final answer: <number>`."
        }
    }
}

/// One prior (item, response) pair shown in the history block.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub item_text: String,
    pub response_text: String,
    pub true_answer: Option<String>,
}

fn history_block(history: &[HistoryEntry]) -> String {
    if history.is_empty() {
        return String::new();
    }
    let mut block = String::from("This student previously answered the following questions.\n");
    for entry in history {
        block.push_str(&format!(
            "Question: {} Student answer: {}",
            entry.item_text, entry.response_text
        ));
        if let Some(answer) = &entry.true_answer {
            block.push_str(&format!(" Correct answer: {answer}"));
        }
        block.push('\n');
    }
    block.push('\n');
    block
}

/// Render one prompt. Deterministic: identical inputs give byte-identical
/// text.
pub fn render_prompt(
    templates: &PromptTemplates,
    kind: PromptKind,
    persona: &PersonProfile,
    item: &Item,
    history: &[HistoryEntry],
    attribute_subset: Option<&[String]>,
) -> Result<RenderedPrompt, CollectError> {
    let format = answer_format(item);
    let text = templates
        .skeleton(kind)
        .replace("{persona}", &persona_block(persona, attribute_subset)?)
        .replace("{history}", &history_block(history))
        .replace("{question}", &question_block(item)?)
        .replace("{format_instructions}", format_instructions(format));
    Ok(RenderedPrompt {
        text,
        expected_answer_format: format,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::Choice;

    fn profile() -> PersonProfile {
        PersonProfile::new("s1")
            .with_attribute("age", "11")
            .with_attribute("gender", "female")
            .with_attribute("fsm", "true")
    }

    fn choice_item() -> Item {
        Item {
            id: "q1".into(),
            text: Some("What is 7 x 8?".into()),
            options: vec![
                Choice {
                    label: "A".into(),
                    text: "54".into(),
                },
                Choice {
                    label: "B".into(),
                    text: "56".into(),
                },
            ],
            correct_answer: Some("B".into()),
        }
    }

    #[test]
    fn persona_attributes_appear_verbatim() {
        let templates = PromptTemplates::builtin();
        let prompt = render_prompt(
            &templates,
            PromptKind::Persona,
            &profile(),
            &choice_item(),
            &[],
            None,
        )
        .unwrap();
        assert!(prompt
            .text
            .contains("Pretend that you are an 11-year-old student."));
        assert!(prompt.text.contains("Your gender is female."));
        assert!(prompt.text.contains(
            "You are eligible for free school meals due to being financially disadvantaged."
        ));
        assert_eq!(prompt.expected_answer_format, AnswerFormat::ChoiceLetter);
    }

    #[test]
    fn empty_history_renders_no_history_block() {
        let templates = PromptTemplates::builtin();
        let prompt = render_prompt(
            &templates,
            PromptKind::Persona,
            &profile(),
            &choice_item(),
            &[],
            None,
        )
        .unwrap();
        assert!(!prompt.text.contains("previously answered"));
    }

    #[test]
    fn history_is_chronological_and_can_carry_true_answers() {
        let templates = PromptTemplates::builtin();
        let history = vec![
            HistoryEntry {
                item_text: "first?".into(),
                response_text: "A".into(),
                true_answer: Some("B".into()),
            },
            HistoryEntry {
                item_text: "second?".into(),
                response_text: "C".into(),
                true_answer: None,
            },
        ];
        let prompt = render_prompt(
            &templates,
            PromptKind::Persona,
            &profile(),
            &choice_item(),
            &history,
            None,
        )
        .unwrap();
        let first = prompt.text.find("first?").unwrap();
        let second = prompt.text.find("second?").unwrap();
        assert!(first < second);
        assert!(prompt.text.contains("Correct answer: B"));
    }

    #[test]
    fn cot_differs_from_persona_by_exactly_the_reasoning_block() {
        let templates = PromptTemplates::builtin();
        let base = render_prompt(
            &templates,
            PromptKind::Persona,
            &profile(),
            &choice_item(),
            &[],
            None,
        )
        .unwrap();
        let cot = render_prompt(
            &templates,
            PromptKind::PersonaCot,
            &profile(),
            &choice_item(),
            &[],
            None,
        )
        .unwrap();
        // The cot prompt must be the persona prompt with one inserted block.
        let block = "Before giving your final answer, reason step by step about whether this \
                     student would be able to solve this problem.\n\n";
        let restored = cot.text.replacen(block, "", 1);
        assert_ne!(cot.text, base.text);
        assert_eq!(restored, base.text);
    }

    #[test]
    fn cot_s_adds_the_structured_layout() {
        let templates = PromptTemplates::builtin();
        let cot_s = render_prompt(
            &templates,
            PromptKind::PersonaCotS,
            &profile(),
            &choice_item(),
            &[],
            None,
        )
        .unwrap();
        assert!(cot_s.text.contains("Assessment:"));
        assert!(cot_s.text.contains("Final answer:"));
    }

    #[test]
    fn missing_subset_attribute_is_an_error() {
        let templates = PromptTemplates::builtin();
        let subset = vec!["age".to_string(), "country".to_string()];
        let err = render_prompt(
            &templates,
            PromptKind::Persona,
            &profile(),
            &choice_item(),
            &[],
            Some(&subset),
        )
        .unwrap_err();
        assert!(matches!(err, CollectError::MissingAttribute { .. }));
    }

    #[test]
    fn attribute_subset_limits_the_persona() {
        let templates = PromptTemplates::builtin();
        let subset = vec!["age".to_string()];
        let prompt = render_prompt(
            &templates,
            PromptKind::Persona,
            &profile(),
            &choice_item(),
            &[],
            Some(&subset),
        )
        .unwrap();
        assert!(prompt.text.contains("11-year-old"));
        assert!(!prompt.text.contains("gender"));
    }

    #[test]
    fn binary_item_gets_yes_no_instructions() {
        let templates = PromptTemplates::builtin();
        let item = Item {
            id: "w1".into(),
            text: Some("Does this student know the word \"dog\"?".into()),
            options: vec![],
            correct_answer: None,
        };
        let prompt = render_prompt(
            &templates,
            PromptKind::Persona,
            &profile(),
            &item,
            &[],
            None,
        )
        .unwrap();
        assert_eq!(prompt.expected_answer_format, AnswerFormat::BinaryKnownWord);
        assert!(prompt.text.contains("Final answer: yes"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let templates = PromptTemplates::builtin();
        let a = render_prompt(
            &templates,
            PromptKind::PersonaCotS,
            &profile(),
            &choice_item(),
            &[],
            None,
        )
        .unwrap();
        let b = render_prompt(
            &templates,
            PromptKind::PersonaCotS,
            &profile(),
            &choice_item(),
            &[],
            None,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn item_without_text_is_rejected() {
        let templates = PromptTemplates::builtin();
        let item = Item {
            id: "q".into(),
            text: None,
            options: vec![],
            correct_answer: None,
        };
        assert!(matches!(
            render_prompt(&templates, PromptKind::Persona, &profile(), &item, &[], None),
            Err(CollectError::ItemWithoutText(_))
        ));
    }
}
