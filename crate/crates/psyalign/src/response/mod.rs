//! Binary response data: the person x item matrix, item bank, person
//! profiles, repeated-response event logs, and population transforms.
//!
//! A [`ResponseMatrix`] stores one cell per (person, item) pair; cells are
//! correct, incorrect, or missing. Missingness is first-class: fitting and
//! summary statistics skip missing cells rather than imputing them.

mod io;

pub use io::{
    load_event_log_csv, load_item_bank_jsonl, load_long_csv, load_person_profiles_csv,
    load_wide_csv, long_csv_string, write_item_bank_jsonl, write_long_csv, CsvSchema,
};

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("duplicate person id `{0}`")]
    DuplicatePerson(String),
    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),
    #[error("duplicate response for person `{person}`, item `{item}`")]
    DuplicatePair { person: String, item: String },
    #[error("{cells} cells do not fill {persons} persons x {items} items")]
    CellCountMismatch {
        cells: usize,
        persons: usize,
        items: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: response `{value}` is not 0 or 1")]
    NonBinaryResponse { line: u64, value: String },
    #[error("person `{0}` has no observed responses")]
    EmptyPerson(String),
    #[error("item `{0}` has no observed responses")]
    EmptyItem(String),
    #[error("unknown item id `{0}`")]
    UnknownItem(String),
    #[error("no persons have complete responses on the requested items")]
    NoCompleteResponders,
    #[error("requested {requested} persons but only {available} are available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("p_correct must lie strictly between 0 and 1, got {0}")]
    DegenerateProbability(f64),
    #[error("event log is empty")]
    EmptyEventLog,
    #[error("sequence indices for person `{0}` are not strictly increasing")]
    NonIncreasingSequence(String),
    #[error("answer `{answer}` for item `{item}` is not one of its option labels")]
    AnswerNotAnOption { item: String, answer: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One cell of a response matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Correct,
    Incorrect,
    Missing,
}

impl Cell {
    pub fn from_correct(correct: bool) -> Self {
        if correct {
            Cell::Correct
        } else {
            Cell::Incorrect
        }
    }

    pub fn is_observed(self) -> bool {
        !matches!(self, Cell::Missing)
    }

    /// 1.0 for correct, 0.0 for incorrect, `None` for missing.
    pub fn score(self) -> Option<f64> {
        match self {
            Cell::Correct => Some(1.0),
            Cell::Incorrect => Some(0.0),
            Cell::Missing => None,
        }
    }
}

/// Persons x items binary responses with missing cells.
///
/// Row/column order is meaningful and preserved by every transform; ids are
/// opaque strings. Construction validates id uniqueness and the cell count.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    person_ids: Vec<String>,
    item_ids: Vec<String>,
    cells: Vec<Cell>, // row-major, len == persons * items
    person_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl ResponseMatrix {
    pub fn new(
        person_ids: Vec<String>,
        item_ids: Vec<String>,
        cells: Vec<Cell>,
    ) -> Result<Self, ResponseError> {
        if cells.len() != person_ids.len() * item_ids.len() {
            return Err(ResponseError::CellCountMismatch {
                cells: cells.len(),
                persons: person_ids.len(),
                items: item_ids.len(),
            });
        }
        let person_index = unique_index(&person_ids, |id| ResponseError::DuplicatePerson(id))?;
        let item_index = unique_index(&item_ids, |id| ResponseError::DuplicateItem(id))?;
        Ok(ResponseMatrix {
            person_ids,
            item_ids,
            cells,
            person_index,
            item_index,
        })
    }

    pub fn n_persons(&self) -> usize {
        self.person_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn person_ids(&self) -> &[String] {
        &self.person_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn cell(&self, person: usize, item: usize) -> Cell {
        self.cells[person * self.item_ids.len() + item]
    }

    pub fn row(&self, person: usize) -> &[Cell] {
        let m = self.item_ids.len();
        &self.cells[person * m..(person + 1) * m]
    }

    pub fn person_position(&self, person_id: &str) -> Option<usize> {
        self.person_index.get(person_id).copied()
    }

    pub fn item_position(&self, item_id: &str) -> Option<usize> {
        self.item_index.get(item_id).copied()
    }

    pub fn observed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_observed()).count()
    }

    /// Fraction of observed responses that are correct, over the whole matrix.
    pub fn overall_accuracy(&self) -> Option<f64> {
        let mut correct = 0usize;
        let mut observed = 0usize;
        for c in &self.cells {
            match c {
                Cell::Correct => {
                    correct += 1;
                    observed += 1;
                }
                Cell::Incorrect => observed += 1,
                Cell::Missing => {}
            }
        }
        (observed > 0).then(|| correct as f64 / observed as f64)
    }

    /// Per-person fraction correct among that person's observed cells.
    pub fn person_accuracies(&self) -> Result<Vec<f64>, ResponseError> {
        self.person_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let (correct, observed) = count_row(self.row(i));
                if observed == 0 {
                    Err(ResponseError::EmptyPerson(id.clone()))
                } else {
                    Ok(correct as f64 / observed as f64)
                }
            })
            .collect()
    }

    /// Per-item fraction correct among that item's observed cells.
    pub fn item_accuracies(&self) -> Result<Vec<f64>, ResponseError> {
        let m = self.item_ids.len();
        (0..m)
            .map(|j| {
                let mut correct = 0usize;
                let mut observed = 0usize;
                for i in 0..self.person_ids.len() {
                    match self.cell(i, j) {
                        Cell::Correct => {
                            correct += 1;
                            observed += 1;
                        }
                        Cell::Incorrect => observed += 1,
                        Cell::Missing => {}
                    }
                }
                if observed == 0 {
                    Err(ResponseError::EmptyItem(self.item_ids[j].clone()))
                } else {
                    Ok(correct as f64 / observed as f64)
                }
            })
            .collect()
    }

    /// Reassign each person's observed responses to a uniformly random
    /// permutation of that person's observed positions. Missing cells stay
    /// where they are, so every person's accuracy and the per-column observed
    /// counts are preserved exactly.
    pub fn shuffle_within_person(&self, seed: u64) -> ResponseMatrix {
        let m = self.item_ids.len();
        let mut cells = self.cells.clone();
        for i in 0..self.person_ids.len() {
            let row = &mut cells[i * m..(i + 1) * m];
            let positions: Vec<usize> = (0..m).filter(|&j| row[j].is_observed()).collect();
            let mut values: Vec<Cell> = positions.iter().map(|&j| row[j]).collect();
            let mut rng = rng::stream(seed, "shuffle_within_person", i as u64);
            values.shuffle(&mut rng);
            for (&j, &v) in positions.iter().zip(values.iter()) {
                row[j] = v;
            }
        }
        ResponseMatrix {
            person_ids: self.person_ids.clone(),
            item_ids: self.item_ids.clone(),
            cells,
            person_index: self.person_index.clone(),
            item_index: self.item_index.clone(),
        }
    }

    /// Restrict to `item_subset` (in the subset's order) and to persons with
    /// no missing cell on those items. The result has zero missing cells.
    pub fn filter_complete(&self, item_subset: &[String]) -> Result<ResponseMatrix, ResponseError> {
        let cols = self.resolve_items(item_subset)?;
        let keep: Vec<usize> = (0..self.person_ids.len())
            .filter(|&i| cols.iter().all(|&j| self.cell(i, j).is_observed()))
            .collect();
        if keep.is_empty() {
            return Err(ResponseError::NoCompleteResponders);
        }
        Ok(self.take(&keep, &cols))
    }

    /// Restrict to `item_subset` (in the subset's order), keeping every person
    /// that still has at least one observed cell. Persons left with none are
    /// dropped so the result stays fittable.
    pub fn restrict_items(&self, item_subset: &[String]) -> Result<ResponseMatrix, ResponseError> {
        let cols = self.resolve_items(item_subset)?;
        let keep: Vec<usize> = (0..self.person_ids.len())
            .filter(|&i| cols.iter().any(|&j| self.cell(i, j).is_observed()))
            .collect();
        if keep.is_empty() {
            return Err(ResponseError::NoCompleteResponders);
        }
        Ok(self.take(&keep, &cols))
    }

    /// Uniform sample of `n_persons` rows without replacement, in draw order;
    /// items unchanged. Deterministic under `seed`.
    pub fn sample_subpopulation(
        &self,
        n_persons: usize,
        seed: u64,
    ) -> Result<ResponseMatrix, ResponseError> {
        let available = self.person_ids.len();
        if n_persons > available {
            return Err(ResponseError::SampleTooLarge {
                requested: n_persons,
                available,
            });
        }
        let mut rng = rng::stream(seed, "sample_subpopulation", 0);
        let rows: Vec<usize> = rand::seq::index::sample(&mut rng, available, n_persons).into_vec();
        let cols: Vec<usize> = (0..self.item_ids.len()).collect();
        Ok(self.take(&rows, &cols))
    }

    fn resolve_items(&self, item_subset: &[String]) -> Result<Vec<usize>, ResponseError> {
        let mut seen = HashMap::new();
        let mut cols = Vec::with_capacity(item_subset.len());
        for id in item_subset {
            let j = self
                .item_index
                .get(id)
                .copied()
                .ok_or_else(|| ResponseError::UnknownItem(id.clone()))?;
            if seen.insert(j, ()).is_some() {
                return Err(ResponseError::DuplicateItem(id.clone()));
            }
            cols.push(j);
        }
        Ok(cols)
    }

    fn take(&self, rows: &[usize], cols: &[usize]) -> ResponseMatrix {
        let person_ids: Vec<String> = rows.iter().map(|&i| self.person_ids[i].clone()).collect();
        let item_ids: Vec<String> = cols.iter().map(|&j| self.item_ids[j].clone()).collect();
        let mut cells = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                cells.push(self.cell(i, j));
            }
        }
        ResponseMatrix::new(person_ids, item_ids, cells)
            .expect("row/column selection preserves matrix invariants")
    }
}

fn count_row(row: &[Cell]) -> (usize, usize) {
    let mut correct = 0usize;
    let mut observed = 0usize;
    for c in row {
        match c {
            Cell::Correct => {
                correct += 1;
                observed += 1;
            }
            Cell::Incorrect => observed += 1,
            Cell::Missing => {}
        }
    }
    (correct, observed)
}

fn unique_index(
    ids: &[String],
    err: impl Fn(String) -> ResponseError,
) -> Result<HashMap<String, usize>, ResponseError> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(err(id.clone()));
        }
    }
    Ok(map)
}

/// Fully observed matrix where every cell is independently correct with
/// probability `p_correct` - the floor-alignment baseline of a population
/// that guesses at random.
pub fn random_control(
    n_persons: usize,
    item_ids: &[String],
    p_correct: f64,
    seed: u64,
) -> Result<ResponseMatrix, ResponseError> {
    if !(p_correct > 0.0 && p_correct < 1.0) {
        return Err(ResponseError::DegenerateProbability(p_correct));
    }
    let person_ids: Vec<String> = (1..=n_persons).map(|i| format!("p{i}")).collect();
    let mut cells = Vec::with_capacity(n_persons * item_ids.len());
    for i in 0..n_persons {
        let mut rng = rng::stream(seed, "random_control", i as u64);
        for _ in item_ids {
            cells.push(Cell::from_correct(rng.random::<f64>() < p_correct));
        }
    }
    ResponseMatrix::new(person_ids, item_ids.to_vec(), cells)
}

/// One observation in a repeated-presentation log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseEvent {
    pub person_id: String,
    pub item_id: String,
    pub correct: bool,
    pub sequence: u64,
}

/// Ordered log of repeated responses; sequence indices are strictly
/// increasing per person.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResponseEventLog {
    events: Vec<ResponseEvent>,
}

impl ResponseEventLog {
    pub fn new(events: Vec<ResponseEvent>) -> Result<Self, ResponseError> {
        let mut last: HashMap<&str, u64> = HashMap::new();
        for e in &events {
            if let Some(&prev) = last.get(e.person_id.as_str()) {
                if e.sequence <= prev {
                    return Err(ResponseError::NonIncreasingSequence(e.person_id.clone()));
                }
            }
            last.insert(e.person_id.as_str(), e.sequence);
        }
        Ok(ResponseEventLog { events })
    }

    pub fn events(&self) -> &[ResponseEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Collapse repeated presentations to one binary outcome per (person, item):
/// 1 if the mean outcome is >= 0.5 (round half up), else 0. Pairs with no
/// events stay missing. Person and item order follow first appearance.
pub fn aggregate_repeated_responses(
    log: &ResponseEventLog,
) -> Result<ResponseMatrix, ResponseError> {
    if log.is_empty() {
        return Err(ResponseError::EmptyEventLog);
    }
    let mut person_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut person_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut counts: HashMap<(usize, usize), (u64, u64)> = HashMap::new();

    for e in log.events() {
        let pi = *person_index.entry(e.person_id.clone()).or_insert_with(|| {
            person_ids.push(e.person_id.clone());
            person_ids.len() - 1
        });
        let qi = *item_index.entry(e.item_id.clone()).or_insert_with(|| {
            item_ids.push(e.item_id.clone());
            item_ids.len() - 1
        });
        let entry = counts.entry((pi, qi)).or_insert((0, 0));
        entry.0 += u64::from(e.correct);
        entry.1 += 1;
    }

    let m = item_ids.len();
    let mut cells = vec![Cell::Missing; person_ids.len() * m];
    for ((pi, qi), (correct, total)) in counts {
        // Integer comparison keeps the half-up rounding exact: mean >= 0.5
        // iff 2 * correct >= total.
        cells[pi * m + qi] = Cell::from_correct(2 * correct >= total);
    }
    ResponseMatrix::new(person_ids, item_ids, cells)
}

/// One multiple-choice option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// A test item: id, optional stem text, optional labelled options, optional
/// correct answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<Choice>,
    #[serde(default, rename = "answer", skip_serializing_if = "Option::is_none")]
    pub correct_answer: Option<String>,
}

/// The set of items a test draws from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ItemBank {
    items: Vec<Item>,
}

impl ItemBank {
    pub fn new(items: Vec<Item>) -> Result<Self, ResponseError> {
        let mut seen = HashMap::new();
        for item in &items {
            if seen.insert(item.id.clone(), ()).is_some() {
                return Err(ResponseError::DuplicateItem(item.id.clone()));
            }
            if let Some(answer) = &item.correct_answer {
                if !item.options.is_empty() && !item.options.iter().any(|o| &o.label == answer) {
                    return Err(ResponseError::AnswerNotAnOption {
                        item: item.id.clone(),
                        answer: answer.clone(),
                    });
                }
            }
        }
        Ok(ItemBank { items })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Demographic / background attributes for one person, in a stable order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonProfile {
    pub person_id: String,
    pub attributes: IndexMap<String, String>,
}

impl PersonProfile {
    pub fn new(person_id: impl Into<String>) -> Self {
        PersonProfile {
            person_id: person_id.into(),
            attributes: IndexMap::new(),
        }
    }

    pub fn with_attribute(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(name.into(), value.into());
        self
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Correct => write!(f, "1"),
            Cell::Incorrect => write!(f, "0"),
            Cell::Missing => write!(f, "."),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(persons: &[&str], items: &[&str], cells: &[Cell]) -> ResponseMatrix {
        ResponseMatrix::new(
            persons.iter().map(|s| s.to_string()).collect(),
            items.iter().map(|s| s.to_string()).collect(),
            cells.to_vec(),
        )
        .unwrap()
    }

    use Cell::{Correct as C, Incorrect as I, Missing as X};

    #[test]
    fn person_accuracy_counts_observed_only() {
        let m = matrix(&["p1", "p2"], &["q1", "q2", "q3"], &[C, I, C, C, X, I]);
        let acc = m.person_accuracies().unwrap();
        assert_eq!(acc, vec![2.0 / 3.0, 0.5]);
    }

    #[test]
    fn all_correct_person_scores_one() {
        let cells = vec![C; 50];
        let items: Vec<String> = (0..50).map(|j| format!("q{j}")).collect();
        let m = ResponseMatrix::new(vec!["p".into()], items, cells).unwrap();
        assert_eq!(m.person_accuracies().unwrap(), vec![1.0]);
    }

    #[test]
    fn person_with_no_observations_errors() {
        let m = matrix(&["p1", "p2"], &["q1"], &[C, X]);
        assert!(matches!(
            m.person_accuracies(),
            Err(ResponseError::EmptyPerson(p)) if p == "p2"
        ));
    }

    #[test]
    fn item_accuracy_mirrors_person_accuracy() {
        let m = matrix(&["p1", "p2", "p3"], &["q1", "q2"], &[C, I, C, I, I, C]);
        let acc = m.item_accuracies().unwrap();
        assert_eq!(acc, vec![2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn item_answered_by_nobody_scores_zero() {
        let m = matrix(&["p1", "p2"], &["q1"], &[I, I]);
        assert_eq!(m.item_accuracies().unwrap(), vec![0.0]);
    }

    #[test]
    fn shuffle_fixes_homogeneous_rows() {
        let m = matrix(&["p1"], &["q1", "q2", "q3"], &[C, C, C]);
        let s = m.shuffle_within_person(99);
        assert_eq!(m, s);
    }

    #[test]
    fn shuffle_preserves_multiset_and_accuracy() {
        let m = matrix(&["p1"], &["q1", "q2", "q3"], &[C, I, C]);
        for seed in 0..20 {
            let s = m.shuffle_within_person(seed);
            let mut row: Vec<Cell> = s.row(0).to_vec();
            row.sort_by_key(|c| matches!(c, Cell::Correct));
            assert_eq!(row, vec![I, C, C]);
            assert_eq!(s.person_accuracies().unwrap(), vec![2.0 / 3.0]);
        }
    }

    #[test]
    fn shuffle_is_deterministic_per_seed() {
        let m = matrix(&["p1", "p2"], &["q1", "q2", "q3"], &[C, I, X, I, C, C]);
        assert_eq!(m.shuffle_within_person(5), m.shuffle_within_person(5));
    }

    #[test]
    fn shuffle_leaves_missing_positions_fixed() {
        let m = matrix(&["p1"], &["q1", "q2", "q3"], &[C, X, I]);
        for seed in 0..20 {
            let s = m.shuffle_within_person(seed);
            assert_eq!(s.cell(0, 1), Cell::Missing);
        }
    }

    #[test]
    fn filter_complete_drops_incomplete_persons() {
        let m = matrix(
            &["p1", "p2"],
            &["q1", "q2", "q3"],
            &[C, I, C, C, C, X], // p2 misses q3
        );
        let subset: Vec<String> = vec!["q1".into(), "q2".into(), "q3".into()];
        let f = m.filter_complete(&subset).unwrap();
        assert_eq!(f.person_ids(), &["p1".to_string()]);
        assert_eq!(f.observed_count(), 3);
    }

    #[test]
    fn filter_complete_is_identity_on_fully_observed() {
        let m = matrix(&["p1", "p2"], &["q1", "q2"], &[C, I, I, C]);
        let subset: Vec<String> = vec!["q1".into(), "q2".into()];
        assert_eq!(m.filter_complete(&subset).unwrap(), m);
    }

    #[test]
    fn filter_complete_rejects_unknown_items() {
        let m = matrix(&["p1"], &["q1"], &[C]);
        assert!(matches!(
            m.filter_complete(&["nope".to_string()]),
            Err(ResponseError::UnknownItem(_))
        ));
    }

    #[test]
    fn subsample_full_size_is_a_permutation() {
        let m = matrix(&["p1", "p2", "p3"], &["q1"], &[C, I, C]);
        let s = m.sample_subpopulation(3, 11).unwrap();
        let mut ids = s.person_ids().to_vec();
        ids.sort();
        assert_eq!(ids, vec!["p1", "p2", "p3"]);
    }

    #[test]
    fn subsample_single_row() {
        let m = matrix(&["p1", "p2", "p3"], &["q1"], &[C, I, C]);
        let s = m.sample_subpopulation(1, 0).unwrap();
        assert_eq!(s.n_persons(), 1);
        assert_eq!(s.n_items(), 1);
    }

    #[test]
    fn subsample_too_large_errors() {
        let m = matrix(&["p1"], &["q1"], &[C]);
        assert!(matches!(
            m.sample_subpopulation(2, 0),
            Err(ResponseError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn random_control_rejects_degenerate_probability() {
        let items = vec!["q1".to_string()];
        assert!(random_control(5, &items, 0.0, 0).is_err());
        assert!(random_control(5, &items, 1.0, 0).is_err());
    }

    #[test]
    fn random_control_is_fully_observed_and_seed_stable() {
        let items: Vec<String> = (0..5).map(|j| format!("q{j}")).collect();
        let a = random_control(10, &items, 0.25, 3).unwrap();
        let b = random_control(10, &items, 0.25, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observed_count(), 50);
    }

    #[test]
    fn aggregate_rounds_half_up() {
        // 10 presentations, 5 correct: mean 0.5 rounds to correct.
        let events: Vec<ResponseEvent> = (0..10)
            .map(|s| ResponseEvent {
                person_id: "u1".into(),
                item_id: "hola".into(),
                correct: s < 5,
                sequence: s as u64,
            })
            .collect();
        let m = aggregate_repeated_responses(&ResponseEventLog::new(events).unwrap()).unwrap();
        assert_eq!(m.cell(0, 0), Cell::Correct);
    }

    #[test]
    fn aggregate_all_incorrect_rounds_down() {
        let events: Vec<ResponseEvent> = (0..10)
            .map(|s| ResponseEvent {
                person_id: "u1".into(),
                item_id: "w".into(),
                correct: false,
                sequence: s as u64,
            })
            .collect();
        let m = aggregate_repeated_responses(&ResponseEventLog::new(events).unwrap()).unwrap();
        assert_eq!(m.cell(0, 0), Cell::Incorrect);
    }

    #[test]
    fn aggregate_two_of_three_rounds_up() {
        // Mean 2/3 = 0.6667 >= 0.5.
        let events: Vec<ResponseEvent> = [true, false, true]
            .iter()
            .enumerate()
            .map(|(s, &c)| ResponseEvent {
                person_id: "u1".into(),
                item_id: "w".into(),
                correct: c,
                sequence: s as u64,
            })
            .collect();
        let m = aggregate_repeated_responses(&ResponseEventLog::new(events).unwrap()).unwrap();
        assert_eq!(m.cell(0, 0), Cell::Correct);
    }

    #[test]
    fn aggregate_leaves_unseen_pairs_missing() {
        let events = vec![
            ResponseEvent {
                person_id: "u1".into(),
                item_id: "a".into(),
                correct: true,
                sequence: 0,
            },
            ResponseEvent {
                person_id: "u2".into(),
                item_id: "b".into(),
                correct: false,
                sequence: 0,
            },
        ];
        let m = aggregate_repeated_responses(&ResponseEventLog::new(events).unwrap()).unwrap();
        assert_eq!(m.cell(0, 1), Cell::Missing);
        assert_eq!(m.cell(1, 0), Cell::Missing);
    }

    #[test]
    fn event_log_requires_increasing_sequences() {
        let events = vec![
            ResponseEvent {
                person_id: "u1".into(),
                item_id: "a".into(),
                correct: true,
                sequence: 3,
            },
            ResponseEvent {
                person_id: "u1".into(),
                item_id: "b".into(),
                correct: false,
                sequence: 3,
            },
        ];
        assert!(matches!(
            ResponseEventLog::new(events),
            Err(ResponseError::NonIncreasingSequence(_))
        ));
    }

    #[test]
    fn item_bank_validates_answer_labels() {
        let item = Item {
            id: "q1".into(),
            text: Some("2+2?".into()),
            options: vec![
                Choice {
                    label: "A".into(),
                    text: "3".into(),
                },
                Choice {
                    label: "B".into(),
                    text: "4".into(),
                },
            ],
            correct_answer: Some("C".into()),
        };
        assert!(matches!(
            ItemBank::new(vec![item]),
            Err(ResponseError::AnswerNotAnOption { .. })
        ));
    }
}
