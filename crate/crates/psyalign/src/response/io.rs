//! File formats: long/wide response CSV, event-log CSV, item-bank JSON
//! Lines, and person-profile CSV.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use indexmap::IndexMap;

use super::{
    Cell, Item, ItemBank, PersonProfile, ResponseError, ResponseEvent, ResponseEventLog,
    ResponseMatrix,
};

/// Column-name mapping for response CSVs.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub person: String,
    pub item: String,
    pub response: String,
    pub sequence: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            person: "person_id".into(),
            item: "item_id".into(),
            response: "response".into(),
            sequence: "sequence".into(),
        }
    }
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(err: csv::Error) -> ResponseError {
    let line = match err.position() {
        Some(p) => p.line(),
        None => 0,
    };
    ResponseError::Malformed {
        line,
        message: err.to_string(),
    }
}

struct LongColumns {
    person: usize,
    item: usize,
    response: usize,
    sequence: Option<usize>,
}

fn resolve_columns(
    headers: &csv::StringRecord,
    schema: &CsvSchema,
    need_sequence: bool,
) -> Result<LongColumns, ResponseError> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| ResponseError::Malformed {
        line: 1,
        message: format!("missing required column `{name}`"),
    };
    Ok(LongColumns {
        person: find(&schema.person).ok_or_else(|| missing(&schema.person))?,
        item: find(&schema.item).ok_or_else(|| missing(&schema.item))?,
        response: find(&schema.response).ok_or_else(|| missing(&schema.response))?,
        sequence: match find(&schema.sequence) {
            Some(i) => Some(i),
            None if need_sequence => return Err(missing(&schema.sequence)),
            None => None,
        },
    })
}

fn parse_binary(value: &str, line: u64) -> Result<bool, ResponseError> {
    match value.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(ResponseError::NonBinaryResponse {
            line,
            value: other.to_string(),
        }),
    }
}

/// Read a long-format CSV (`person_id,item_id,response`) into a matrix.
/// Unobserved (person, item) pairs become missing cells; person and item
/// order follow first appearance.
pub fn load_long_csv(
    source: impl Read,
    schema: &CsvSchema,
) -> Result<ResponseMatrix, ResponseError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let cols = resolve_columns(&headers, schema, false)?;

    let mut person_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut person_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut triplets: HashMap<(usize, usize), bool> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| ResponseError::Malformed {
                line,
                message: format!("row has {} fields, column {} missing", record.len(), idx + 1),
            })
        };
        let person = field(cols.person)?.to_string();
        let item = field(cols.item)?.to_string();
        let correct = parse_binary(field(cols.response)?, line)?;

        let pi = *person_index.entry(person.clone()).or_insert_with(|| {
            person_ids.push(person.clone());
            person_ids.len() - 1
        });
        let qi = *item_index.entry(item.clone()).or_insert_with(|| {
            item_ids.push(item.clone());
            item_ids.len() - 1
        });
        if triplets.insert((pi, qi), correct).is_some() {
            return Err(ResponseError::DuplicatePair { person, item });
        }
    }

    let m = item_ids.len();
    let mut cells = vec![Cell::Missing; person_ids.len() * m];
    for ((pi, qi), correct) in triplets {
        cells[pi * m + qi] = Cell::from_correct(correct);
    }
    ResponseMatrix::new(person_ids, item_ids, cells)
}

/// Write a matrix as long-format CSV, row-major, observed cells only.
/// A matrix loaded from this format round-trips byte-exactly.
pub fn write_long_csv(matrix: &ResponseMatrix, sink: impl Write) -> Result<(), ResponseError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer
        .write_record(["person_id", "item_id", "response"])
        .map_err(csv_error)?;
    for (i, person) in matrix.person_ids().iter().enumerate() {
        for (j, item) in matrix.item_ids().iter().enumerate() {
            let value = match matrix.cell(i, j) {
                Cell::Correct => "1",
                Cell::Incorrect => "0",
                Cell::Missing => continue,
            };
            writer
                .write_record([person.as_str(), item.as_str(), value])
                .map_err(csv_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Convenience: long CSV rendered to a string.
pub fn long_csv_string(matrix: &ResponseMatrix) -> String {
    let mut buf = Vec::new();
    write_long_csv(matrix, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Read an event-log CSV (`person_id,item_id,response,sequence`).
pub fn load_event_log_csv(
    source: impl Read,
    schema: &CsvSchema,
) -> Result<ResponseEventLog, ResponseError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let cols = resolve_columns(&headers, schema, true)?;
    let seq_col = cols.sequence.expect("sequence column required above");

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| ResponseError::Malformed {
                line,
                message: format!("row has {} fields, column {} missing", record.len(), idx + 1),
            })
        };
        let sequence: u64 =
            field(seq_col)?
                .trim()
                .parse()
                .map_err(|_| ResponseError::Malformed {
                    line,
                    message: format!("sequence `{}` is not a non-negative integer", field(seq_col).unwrap_or("")),
                })?;
        events.push(ResponseEvent {
            person_id: field(cols.person)?.to_string(),
            item_id: field(cols.item)?.to_string(),
            correct: parse_binary(field(cols.response)?, line)?,
            sequence,
        });
    }
    ResponseEventLog::new(events)
}

/// Read a wide-format CSV: first column is the person id, remaining headers
/// are item ids, cells are `1`, `0`, or empty (missing).
pub fn load_wide_csv(source: impl Read) -> Result<ResponseMatrix, ResponseError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.len() < 2 {
        return Err(ResponseError::Malformed {
            line: 1,
            message: "wide format needs a person column plus at least one item column".into(),
        });
    }
    let item_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let mut person_ids = Vec::new();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        if record.len() != headers.len() {
            return Err(ResponseError::Malformed {
                line,
                message: format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    headers.len()
                ),
            });
        }
        person_ids.push(record[0].to_string());
        for value in record.iter().skip(1) {
            if value.trim().is_empty() {
                cells.push(Cell::Missing);
            } else {
                cells.push(Cell::from_correct(parse_binary(value, line)?));
            }
        }
    }
    ResponseMatrix::new(person_ids, item_ids, cells)
}

/// Read an item bank from JSON Lines, one item object per line.
pub fn load_item_bank_jsonl(source: impl Read) -> Result<ItemBank, ResponseError> {
    let reader = BufReader::new(source);
    let mut items: Vec<Item> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: Item = serde_json::from_str(&line).map_err(|e| ResponseError::Malformed {
            line: idx as u64 + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    ItemBank::new(items)
}

/// Write an item bank as JSON Lines.
pub fn write_item_bank_jsonl(bank: &ItemBank, mut sink: impl Write) -> Result<(), ResponseError> {
    for item in bank.items() {
        let line = serde_json::to_string(item).expect("item serialization cannot fail");
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

/// Read person profiles from a CSV with a `person_id` column; every other
/// column becomes an attribute, in header order.
pub fn load_person_profiles_csv(source: impl Read) -> Result<Vec<PersonProfile>, ResponseError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "person_id")
        .ok_or_else(|| ResponseError::Malformed {
            line: 1,
            message: "missing required column `person_id`".into(),
        })?;

    let mut profiles = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        if record.len() != headers.len() {
            return Err(ResponseError::Malformed {
                line,
                message: format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    headers.len()
                ),
            });
        }
        let person_id = record[id_col].to_string();
        if seen.insert(person_id.clone(), ()).is_some() {
            return Err(ResponseError::DuplicatePerson(person_id));
        }
        let mut attributes = IndexMap::new();
        for (col, header) in headers.iter().enumerate() {
            if col == id_col {
                continue;
            }
            attributes.insert(header.to_string(), record[col].to_string());
        }
        profiles.push(PersonProfile {
            person_id,
            attributes,
        });
    }
    Ok(profiles)
}
