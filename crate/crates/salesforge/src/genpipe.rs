//! The four-stage synthesis pipeline that turns noisy chit-chat seeds into
//! annotated sales dialogues: revision, potential-intent detection,
//! continuation, and transition-boundary detection.
//!
//! Stage outputs are parsed strictly from labeled plain-text blocks:
//! revision and continuation emit `User:`/`Agent:` lines under a
//! `Rewritten Dialogue:` / `Continued Dialogue:` header, intent detection
//! emits a single `Topic: <name>` line, and boundary detection emits
//! `Turn: <verbatim user utterance>`. Content failures are re-prompted up to
//! the stage retry budget; failing seeds are quarantined, never fatal.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ChatMessage, CompletionRequest};
use crate::core::io::TurnRecord;
use crate::core::{CoreError, Dialogue, Intent, Source, Speaker};
use crate::promptkit::{self, PromptError, TemplateId};
use crate::util::{normalized_similarity, parallel_map};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Revision,
    IntentDetection,
    Continuation,
    Boundary,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Revision => "revision",
            Stage::IntentDetection => "intent_detection",
            Stage::Continuation => "continuation",
            Stage::Boundary => "boundary",
        }
    }
}

/// Parsed result of a successful stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StagePayload {
    Revision { turns: Vec<TurnRecord> },
    Intent { intent: Intent },
    Continuation { appended: Vec<TurnRecord> },
    Boundary { index: usize },
}

/// Audit record for one stage of one dialogue: the last prompt sent, the
/// last raw reply, and the parse result. `parsed` is present iff the stage
/// succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub dialogue_id: String,
    pub stage: Stage,
    pub prompt: String,
    pub raw_output: String,
    pub parsed: Option<StagePayload>,
    pub attempts: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage {stage} failed to parse after {attempts} attempt(s): {detail}")]
    StageParseFailure { stage: &'static str, attempts: u32, detail: String },
    #[error("intent stage produced no whitelisted topic after {attempts} attempt(s): {name}")]
    UnknownIntent { attempts: u32, name: String },
    #[error("boundary invalid after {attempts} attempt(s): {detail}")]
    BoundaryInvalid { attempts: u32, detail: String },
    #[error("no seed dialogues given")]
    EmptyInput,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Max attempts per stage, counting the first.
    pub retries: u32,
    pub concurrency: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            max_tokens: 1024,
            retries: 3,
            concurrency: 4,
        }
    }
}

fn complete(backend: &Backend, cfg: &GenConfig, prompt: &str) -> Result<String, BackendError> {
    backend
        .complete(&CompletionRequest {
            messages: vec![ChatMessage::user(prompt)],
            model_name: cfg.model_name.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            seed: None,
        })
        .map(|r| r.text)
}

fn turn_records(turns: &[(Speaker, String)]) -> Vec<TurnRecord> {
    turns
        .iter()
        .map(|(speaker, text)| TurnRecord {
            speaker: *speaker,
            text: text.clone(),
            extra: serde_json::Map::new(),
        })
        .collect()
}

/// Parse `User:`/`Agent:` lines under the given block header. Lines that
/// start with neither prefix continue the previous utterance, since models
/// wrap long turns.
fn parse_turn_block(raw: &str, header: &str) -> Result<Vec<(Speaker, String)>, String> {
    let mut lines = raw.lines();
    let mut found = false;
    for line in lines.by_ref() {
        if line.trim().eq_ignore_ascii_case(header) {
            found = true;
            break;
        }
    }
    if !found {
        return Err(format!("missing '{header}' header"));
    }
    let mut turns: Vec<(Speaker, String)> = Vec::new();
    for line in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == "..." {
            continue;
        }
        let lower = trimmed.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("user:").map(|_| trimmed["user:".len()..].trim()) {
            turns.push((Speaker::User, rest.to_string()));
        } else if let Some(rest) =
            lower.strip_prefix("agent:").map(|_| trimmed["agent:".len()..].trim())
        {
            turns.push((Speaker::Agent, rest.to_string()));
        } else if let Some((_, text)) = turns.last_mut() {
            text.push('\n');
            text.push_str(trimmed);
        }
        // Preamble junk between header and first turn line is dropped.
    }
    if turns.is_empty() {
        return Err(format!("no turn lines under '{header}'"));
    }
    Ok(turns)
}

/// First line of the form `<label> <value>`, label matched case-insensitively.
fn parse_labeled_line(raw: &str, label: &str) -> Option<String> {
    raw.lines().find_map(|line| {
        let trimmed = line.trim();
        if trimmed.len() >= label.len() && trimmed[..label.len()].eq_ignore_ascii_case(label) {
            Some(trimmed[label.len()..].trim().to_string())
        } else {
            None
        }
    })
}

/// Rewrite the seed chit-chat for coherence. Rewrites shorter than seven
/// turns are re-prompted; the accepted rewrite must parse as alternating
/// turn lines.
pub fn revise_chitchat(
    d: &Dialogue,
    backend: &Backend,
    cfg: &GenConfig,
    audit: &mut Vec<StageRecord>,
) -> Result<Dialogue, PipelineError> {
    let mut slots = BTreeMap::new();
    slots.insert("Dialogue".to_string(), promptkit::render_dialogue_lines(&d.turns));
    let prompt = promptkit::render_pipeline_stage(TemplateId::Revision, &slots)?;

    let mut last_detail = String::new();
    let mut last_raw = String::new();
    for attempt in 1..=cfg.retries {
        let raw = match complete(backend, cfg, &prompt) {
            Ok(raw) => raw,
            Err(e) => {
                audit.push(StageRecord {
                    dialogue_id: d.id.clone(),
                    stage: Stage::Revision,
                    prompt,
                    raw_output: String::new(),
                    parsed: None,
                    attempts: attempt,
                });
                return Err(e.into());
            }
        };
        last_raw = raw.clone();
        match parse_turn_block(&raw, "Rewritten Dialogue:") {
            Ok(turns) if turns.len() > 6 => {
                match Dialogue::new(d.id.clone(), d.source, turns.clone(), None, None) {
                    Ok(revised) => {
                        audit.push(StageRecord {
                            dialogue_id: d.id.clone(),
                            stage: Stage::Revision,
                            prompt,
                            raw_output: raw,
                            parsed: Some(StagePayload::Revision { turns: turn_records(&turns) }),
                            attempts: attempt,
                        });
                        return Ok(revised);
                    }
                    Err(e) => last_detail = e.to_string(),
                }
            }
            Ok(turns) => {
                last_detail = format!("rewrite has {} turns, need more than 6", turns.len())
            }
            Err(e) => last_detail = e,
        }
    }
    audit.push(StageRecord {
        dialogue_id: d.id.clone(),
        stage: Stage::Revision,
        prompt,
        raw_output: last_raw,
        parsed: None,
        attempts: cfg.retries,
    });
    Err(PipelineError::StageParseFailure {
        stage: "revision",
        attempts: cfg.retries,
        detail: last_detail,
    })
}

/// Pick the most plausible target intent for the dialogue. Answers outside
/// the whitelist are re-prompted, never fuzzily mapped.
pub fn detect_intent(
    d: &Dialogue,
    backend: &Backend,
    cfg: &GenConfig,
    audit: &mut Vec<StageRecord>,
) -> Result<Intent, PipelineError> {
    let mut slots = BTreeMap::new();
    slots.insert("Dialogue".to_string(), promptkit::render_dialogue_lines(&d.turns));
    slots.insert("Intent List".to_string(), promptkit::render_intent_list(&Intent::ALL));
    let prompt = promptkit::render_pipeline_stage(TemplateId::IntentDetection, &slots)?;

    let mut last_raw = String::new();
    let mut last_unknown: Option<String> = None;
    let mut last_detail = String::new();
    for attempt in 1..=cfg.retries {
        let raw = match complete(backend, cfg, &prompt) {
            Ok(raw) => raw,
            Err(e) => {
                audit.push(StageRecord {
                    dialogue_id: d.id.clone(),
                    stage: Stage::IntentDetection,
                    prompt,
                    raw_output: String::new(),
                    parsed: None,
                    attempts: attempt,
                });
                return Err(e.into());
            }
        };
        last_raw = raw.clone();
        match parse_labeled_line(&raw, "Topic:") {
            Some(name) => match crate::core::canonicalize_intent(&name) {
                Ok(intent) => {
                    audit.push(StageRecord {
                        dialogue_id: d.id.clone(),
                        stage: Stage::IntentDetection,
                        prompt,
                        raw_output: raw,
                        parsed: Some(StagePayload::Intent { intent }),
                        attempts: attempt,
                    });
                    return Ok(intent);
                }
                Err(_) => {
                    last_unknown = Some(name);
                }
            },
            None => {
                last_detail = "missing 'Topic:' line".to_string();
                last_unknown = None;
            }
        }
    }
    audit.push(StageRecord {
        dialogue_id: d.id.clone(),
        stage: Stage::IntentDetection,
        prompt,
        raw_output: last_raw,
        parsed: None,
        attempts: cfg.retries,
    });
    match last_unknown {
        Some(name) => Err(PipelineError::UnknownIntent { attempts: cfg.retries, name }),
        None => Err(PipelineError::StageParseFailure {
            stage: "intent_detection",
            attempts: cfg.retries,
            detail: last_detail,
        }),
    }
}

/// Append the transition-plus-TOD tail. The parsed continuation must have at
/// least five turns; a leading turn that repeats the seed's last speaker is
/// merged by the core repair rule.
pub fn continue_dialogue(
    d: &Dialogue,
    intent: Intent,
    backend: &Backend,
    cfg: &GenConfig,
    audit: &mut Vec<StageRecord>,
) -> Result<Dialogue, PipelineError> {
    let mut slots = BTreeMap::new();
    slots.insert("Intent".to_string(), promptkit::intent_line(intent));
    slots.insert("Dialogue".to_string(), promptkit::render_dialogue_lines(&d.turns));
    let prompt = promptkit::render_pipeline_stage(TemplateId::Continuation, &slots)?;

    let mut last_raw = String::new();
    let mut last_detail = String::new();
    for attempt in 1..=cfg.retries {
        let raw = match complete(backend, cfg, &prompt) {
            Ok(raw) => raw,
            Err(e) => {
                audit.push(StageRecord {
                    dialogue_id: d.id.clone(),
                    stage: Stage::Continuation,
                    prompt,
                    raw_output: String::new(),
                    parsed: None,
                    attempts: attempt,
                });
                return Err(e.into());
            }
        };
        last_raw = raw.clone();
        match parse_turn_block(&raw, "Continued Dialogue:") {
            Ok(appended) if appended.len() >= 5 => {
                let mut all: Vec<(Speaker, String)> =
                    d.turns.iter().map(|t| (t.speaker, t.text.clone())).collect();
                all.extend(appended.iter().cloned());
                match Dialogue::new(d.id.clone(), d.source, all, None, None) {
                    Ok(extended) => {
                        audit.push(StageRecord {
                            dialogue_id: d.id.clone(),
                            stage: Stage::Continuation,
                            prompt,
                            raw_output: raw,
                            parsed: Some(StagePayload::Continuation {
                                appended: turn_records(&appended),
                            }),
                            attempts: attempt,
                        });
                        return Ok(extended);
                    }
                    Err(e) => last_detail = e.to_string(),
                }
            }
            Ok(appended) => {
                last_detail =
                    format!("continuation has {} turns, need at least 5", appended.len())
            }
            Err(e) => last_detail = e,
        }
    }
    audit.push(StageRecord {
        dialogue_id: d.id.clone(),
        stage: Stage::Continuation,
        prompt,
        raw_output: last_raw,
        parsed: None,
        attempts: cfg.retries,
    });
    Err(PipelineError::StageParseFailure {
        stage: "continuation",
        attempts: cfg.retries,
        detail: last_detail,
    })
}

enum Resolution {
    Found(usize),
    AgentTurn(usize),
    NoMatch(String),
}

/// Resolve the quoted turn (or bare index) to a turn index: exact text match
/// first, then the highest similarity at or above 0.9.
fn resolve_boundary(d: &Dialogue, quoted: &str) -> Resolution {
    let quoted = quoted.trim().trim_matches('"');
    if let Ok(index) = quoted.parse::<usize>() {
        return match d.turns.get(index) {
            Some(turn) if turn.speaker == Speaker::User => Resolution::Found(index),
            Some(_) => Resolution::AgentTurn(index),
            None => Resolution::NoMatch(format!("index {index} out of range")),
        };
    }
    if let Some(turn) = d.turns.iter().find(|t| t.text.trim() == quoted) {
        return if turn.speaker == Speaker::User {
            Resolution::Found(turn.index)
        } else {
            Resolution::AgentTurn(turn.index)
        };
    }
    let best = d
        .turns
        .iter()
        .map(|t| (t, normalized_similarity(&t.text, quoted)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    match best {
        Some((turn, score)) if score >= 0.9 => {
            if turn.speaker == Speaker::User {
                Resolution::Found(turn.index)
            } else {
                Resolution::AgentTurn(turn.index)
            }
        }
        _ => Resolution::NoMatch("no turn matches the quoted utterance".to_string()),
    }
}

/// Find the first user turn that explicitly mentions the intent.
pub fn detect_boundary(
    d: &Dialogue,
    intent: Intent,
    backend: &Backend,
    cfg: &GenConfig,
    audit: &mut Vec<StageRecord>,
) -> Result<usize, PipelineError> {
    let mut slots = BTreeMap::new();
    slots.insert("Intent".to_string(), intent.canonical_name().to_string());
    slots.insert("Dialogue".to_string(), promptkit::render_dialogue_lines(&d.turns));
    let prompt = promptkit::render_pipeline_stage(TemplateId::Boundary, &slots)?;

    let mut last_raw = String::new();
    let mut last_invalid = false;
    let mut last_detail = String::new();
    for attempt in 1..=cfg.retries {
        let raw = match complete(backend, cfg, &prompt) {
            Ok(raw) => raw,
            Err(e) => {
                audit.push(StageRecord {
                    dialogue_id: d.id.clone(),
                    stage: Stage::Boundary,
                    prompt,
                    raw_output: String::new(),
                    parsed: None,
                    attempts: attempt,
                });
                return Err(e.into());
            }
        };
        last_raw = raw.clone();
        match parse_labeled_line(&raw, "Turn:") {
            Some(quoted) => match resolve_boundary(d, &quoted) {
                Resolution::Found(index) => {
                    audit.push(StageRecord {
                        dialogue_id: d.id.clone(),
                        stage: Stage::Boundary,
                        prompt,
                        raw_output: raw,
                        parsed: Some(StagePayload::Boundary { index }),
                        attempts: attempt,
                    });
                    return Ok(index);
                }
                Resolution::AgentTurn(index) => {
                    last_invalid = true;
                    last_detail = format!("turn {index} is an agent turn");
                }
                Resolution::NoMatch(detail) => {
                    last_invalid = false;
                    last_detail = detail;
                }
            },
            None => {
                last_invalid = false;
                last_detail = "missing 'Turn:' line".to_string();
            }
        }
    }
    audit.push(StageRecord {
        dialogue_id: d.id.clone(),
        stage: Stage::Boundary,
        prompt,
        raw_output: last_raw,
        parsed: None,
        attempts: cfg.retries,
    });
    if last_invalid {
        Err(PipelineError::BoundaryInvalid { attempts: cfg.retries, detail: last_detail })
    } else {
        Err(PipelineError::StageParseFailure {
            stage: "boundary",
            attempts: cfg.retries,
            detail: last_detail,
        })
    }
}

/// A seed that failed some stage, with the failing audit record attached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectRecord {
    pub seed_id: String,
    pub stage: Stage,
    pub error: String,
    pub record: Option<StageRecord>,
}

#[derive(Debug)]
pub struct PipelineRun {
    pub dialogues: Vec<Dialogue>,
    pub rejects: Vec<RejectRecord>,
    pub records: Vec<StageRecord>,
}

fn process_seed(
    seed: &Dialogue,
    backend: &Backend,
    cfg: &GenConfig,
) -> (Vec<StageRecord>, Result<Dialogue, RejectRecord>) {
    let mut audit = Vec::new();
    let reject = |stage: Stage, error: &PipelineError, audit: &[StageRecord]| RejectRecord {
        seed_id: seed.id.clone(),
        stage,
        error: error.to_string(),
        record: audit.last().cloned(),
    };

    let revised = match revise_chitchat(seed, backend, cfg, &mut audit) {
        Ok(d) => d,
        Err(e) => {
            let r = reject(Stage::Revision, &e, &audit);
            return (audit, Err(r));
        }
    };
    let intent = match detect_intent(&revised, backend, cfg, &mut audit) {
        Ok(i) => i,
        Err(e) => {
            let r = reject(Stage::IntentDetection, &e, &audit);
            return (audit, Err(r));
        }
    };
    let continued = match continue_dialogue(&revised, intent, backend, cfg, &mut audit) {
        Ok(d) => d,
        Err(e) => {
            let r = reject(Stage::Continuation, &e, &audit);
            return (audit, Err(r));
        }
    };
    let boundary = match detect_boundary(&continued, intent, backend, cfg, &mut audit) {
        Ok(b) => b,
        Err(e) => {
            let r = reject(Stage::Boundary, &e, &audit);
            return (audit, Err(r));
        }
    };

    let annotated = Dialogue::new(
        continued.id.clone(),
        Source::Generated,
        continued.turns.iter().map(|t| (t.speaker, t.text.clone())).collect(),
        Some(intent),
        Some(boundary),
    );
    match annotated {
        Ok(d) => (audit, Ok(d)),
        Err(e) => {
            let r = RejectRecord {
                seed_id: seed.id.clone(),
                stage: Stage::Boundary,
                error: e.to_string(),
                record: audit.last().cloned(),
            };
            (audit, Err(r))
        }
    }
}

/// Flow every seed through revision, intent, continuation, and boundary.
/// Failing seeds are quarantined with their failing stage record; quarantined
/// plus emitted always equals the input count.
///
/// Seeds run with bounded parallelism against HTTP backends; under a mock
/// backend they run serially so queue-mode scripts stay deterministic.
pub fn run_pipeline(
    seeds: &[Dialogue],
    backend: &Backend,
    cfg: &GenConfig,
) -> Result<PipelineRun, PipelineError> {
    if seeds.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    let workers = if backend.is_mock() { 1 } else { cfg.concurrency.max(1) };
    let results = parallel_map(seeds, workers, |seed| process_seed(seed, backend, cfg));

    let mut run = PipelineRun { dialogues: Vec::new(), rejects: Vec::new(), records: Vec::new() };
    for (records, outcome) in results {
        run.records.extend(records);
        match outcome {
            Ok(d) => run.dialogues.push(d),
            Err(r) => run.rejects.push(r),
        }
    }
    Ok(run)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CoreError> {
    use std::io::Write;
    let file = std::fs::File::create(path)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let mut writer = std::io::BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut writer, item)
            .map_err(|e| CoreError::Serialize { message: e.to_string() })?;
        writer
            .write_all(b"\n")
            .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    }
    writer
        .flush()
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })
}

/// Write corpus, rejects, and stage-audit JSONL files.
pub fn write_outputs(
    run: &PipelineRun,
    corpus_path: &Path,
    rejects_path: &Path,
    audit_path: &Path,
) -> Result<(), CoreError> {
    crate::core::io::write_dialogues(corpus_path, &run.dialogues)?;
    write_jsonl(rejects_path, &run.rejects)?;
    write_jsonl(audit_path, &run.records)
}
