//! JSONL dialogue records and the adapter for foreign corpus formats.
//!
//! The native record is one dialogue per line:
//! `{"id", "source", "intent", "boundary_index", "turns": [{"speaker", "text"}]}`.
//! Unknown fields are carried through a flattened map so round-trips preserve
//! them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{CoreError, Dialogue, Intent, Source, Speaker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub speaker: Speaker,
    pub text: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Wire form of [`Dialogue`]. Turn indices are positional and not serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub id: String,
    pub source: Source,
    pub intent: Option<Intent>,
    pub boundary_index: Option<usize>,
    pub turns: Vec<TurnRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl DialogueRecord {
    pub fn from_dialogue(d: &Dialogue) -> DialogueRecord {
        DialogueRecord {
            id: d.id.clone(),
            source: d.source,
            intent: d.intent,
            boundary_index: d.boundary_index,
            turns: d
                .turns
                .iter()
                .map(|t| TurnRecord {
                    speaker: t.speaker,
                    text: t.text.clone(),
                    extra: Map::new(),
                })
                .collect(),
            extra: Map::new(),
        }
    }

    /// Validate and normalize into the domain type.
    pub fn into_dialogue(self) -> Result<Dialogue, CoreError> {
        Dialogue::new(
            self.id,
            self.source,
            self.turns.into_iter().map(|t| (t.speaker, t.text)).collect(),
            self.intent,
            self.boundary_index,
        )
    }
}

/// Read dialogues from native-format JSONL, failing on the first bad line.
pub fn read_dialogues(path: &Path) -> Result<Vec<Dialogue>, CoreError> {
    let file = File::open(path).map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogueRecord = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            message: e.to_string(),
        })?;
        out.push(record.into_dialogue()?);
    }
    Ok(out)
}

pub fn write_dialogues(path: &Path, dialogues: &[Dialogue]) -> Result<(), CoreError> {
    let file = File::create(path).map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let mut writer = BufWriter::new(file);
    for d in dialogues {
        let record = DialogueRecord::from_dialogue(d);
        serde_json::to_writer(&mut writer, &record)
            .map_err(|e| CoreError::Serialize { message: e.to_string() })?;
        writer
            .write_all(b"\n")
            .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    }
    writer
        .flush()
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })
}

/// Field-name mapping for ingesting corpora that do not use the native
/// record layout. Loaded from a user-supplied JSON file.
///
/// Turn entries may be objects (speaker/text fields) or bare strings; bare
/// strings alternate speakers starting from `first_speaker`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    pub id_field: String,
    pub turns_field: String,
    pub speaker_field: Option<String>,
    pub text_field: Option<String>,
    pub intent_field: Option<String>,
    pub boundary_field: Option<String>,
    pub first_speaker: Speaker,
    pub user_values: Vec<String>,
    pub agent_values: Vec<String>,
    pub source: Source,
}

impl Default for FieldMapping {
    fn default() -> Self {
        FieldMapping {
            id_field: "id".into(),
            turns_field: "dialog".into(),
            speaker_field: None,
            text_field: None,
            intent_field: Some("intent".into()),
            boundary_field: Some("transition_boundary".into()),
            first_speaker: Speaker::User,
            user_values: vec!["USER".into(), "User".into(), "user".into(), "U".into()],
            agent_values: vec![
                "SYSTEM".into(),
                "Agent".into(),
                "agent".into(),
                "ASSISTANT".into(),
                "A".into(),
            ],
            source: Source::SalesBot2,
        }
    }
}

impl FieldMapping {
    pub fn load(path: &Path) -> Result<FieldMapping, CoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
        serde_json::from_str(&text).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }

    fn speaker_of(&self, raw: &str) -> Option<Speaker> {
        if self.user_values.iter().any(|v| v == raw) {
            Some(Speaker::User)
        } else if self.agent_values.iter().any(|v| v == raw) {
            Some(Speaker::Agent)
        } else {
            None
        }
    }
}

/// A line the adapter could not turn into a valid dialogue.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdapterReject {
    pub line: usize,
    pub id: Option<String>,
    pub error: String,
}

/// Ingest a foreign JSONL corpus through a field mapping. Bad lines are
/// quarantined, not fatal.
pub fn read_with_mapping(
    path: &Path,
    mapping: &FieldMapping,
) -> Result<(Vec<Dialogue>, Vec<AdapterReject>), CoreError> {
    let file = File::open(path).map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let reader = BufReader::new(file);
    let mut dialogues = Vec::new();
    let mut rejects = Vec::new();

    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                rejects.push(AdapterReject { line: line_no + 1, id: None, error: e.to_string() });
                continue;
            }
        };
        match adapt_record(&value, mapping, line_no + 1) {
            Ok(d) => dialogues.push(d),
            Err(e) => rejects.push(AdapterReject {
                line: line_no + 1,
                id: value
                    .get(&mapping.id_field)
                    .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())),
                error: e.to_string(),
            }),
        }
    }
    Ok((dialogues, rejects))
}

fn adapt_record(value: &Value, mapping: &FieldMapping, line: usize) -> Result<Dialogue, CoreError> {
    let bad = |message: String| CoreError::Parse { path: String::new(), line, message };

    let id = match value.get(&mapping.id_field) {
        Some(Value::String(s)) => s.clone(),
        Some(v) => v.to_string(),
        None => format!("line-{line}"),
    };

    let turns_value = value
        .get(&mapping.turns_field)
        .ok_or_else(|| bad(format!("missing turns field '{}'", mapping.turns_field)))?;
    let entries = turns_value
        .as_array()
        .ok_or_else(|| bad(format!("turns field '{}' is not an array", mapping.turns_field)))?;

    let mut raw_turns = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        match entry {
            Value::String(text) => {
                let speaker = if i % 2 == 0 {
                    mapping.first_speaker
                } else {
                    match mapping.first_speaker {
                        Speaker::User => Speaker::Agent,
                        Speaker::Agent => Speaker::User,
                    }
                };
                raw_turns.push((speaker, text.clone()));
            }
            Value::Object(obj) => {
                let speaker_field = mapping
                    .speaker_field
                    .as_deref()
                    .unwrap_or("speaker");
                let text_field = mapping.text_field.as_deref().unwrap_or("text");
                let speaker_raw = obj
                    .get(speaker_field)
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad(format!("turn {i} missing speaker field '{speaker_field}'")))?;
                let speaker = mapping
                    .speaker_of(speaker_raw)
                    .ok_or_else(|| bad(format!("turn {i} has unmapped speaker '{speaker_raw}'")))?;
                let text = obj
                    .get(text_field)
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad(format!("turn {i} missing text field '{text_field}'")))?;
                raw_turns.push((speaker, text.to_string()));
            }
            other => return Err(bad(format!("turn {i} is neither string nor object: {other}"))),
        }
    }

    let intent = match mapping.intent_field.as_deref().and_then(|f| value.get(f)) {
        Some(Value::String(s)) => Some(super::canonicalize_intent(s)?),
        Some(Value::Null) | None => None,
        Some(v) => Some(super::canonicalize_intent(
            v.as_str().ok_or_else(|| bad(format!("intent field is not a string: {v}")))?,
        )?),
    };

    let boundary_index = match mapping.boundary_field.as_deref().and_then(|f| value.get(f)) {
        Some(Value::Number(n)) => Some(
            n.as_u64()
                .ok_or_else(|| bad(format!("boundary index is not a non-negative integer: {n}")))?
                as usize,
        ),
        Some(Value::Null) | None => None,
        Some(v) => return Err(bad(format!("boundary field is not an integer: {v}"))),
    };

    Dialogue::new(id, mapping.source, raw_turns, intent, boundary_index)
}
