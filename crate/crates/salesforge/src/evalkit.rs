//! Evaluation: gold-label derivation, turn-level accuracy with policy
//! confusion, corpus turn statistics, proceed-TOD rate, judge scoring, and
//! the aggregate report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::{is_handover_text, Transcript};
use crate::backend::{Backend, BackendError, ChatMessage, CompletionRequest};
use crate::core::{
    segment_dialogue, CoreError, CorpusStats, CriterionScore, Dialogue, Intent, JudgeScores,
    Policy, PolicyKind, Speaker, TurnLevelReport,
};
use crate::promptkit::{self, PromptError};
use crate::util::round2;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dialogue '{id}' has no boundary annotation")]
    MissingBoundary { id: String },
    #[error("no dialogues to evaluate")]
    EmptyInput,
    #[error("no segmentable dialogues in corpus")]
    EmptyCorpus,
    #[error("no gold turns given")]
    EmptyGold,
    #[error("duplicate prediction for dialogue '{dialogue_id}' turn {turn_index}")]
    KeyCollision { dialogue_id: String, turn_index: usize },
    #[error("judge reply unparseable after {attempts} attempt(s): {detail}; raw reply: {raw:?}")]
    JudgeParseFailure { attempts: u32, detail: String, raw: String },
    #[error("judge score '{key}' = {score} outside [0, 100]")]
    ScoreOutOfRange { key: String, score: f64 },
    #[error("dialogue '{id}' is missing naturalness/consistency scores")]
    MissingScores { id: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Gold annotation for one agent turn.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldTurn {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub gold_policy: Policy,
}

/// Wire form: `{"dialogue_id", "turn_index", "policy", "intent"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldTurnRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub policy: String,
    pub intent: Option<String>,
}

impl GoldTurn {
    pub fn to_record(&self) -> GoldTurnRecord {
        GoldTurnRecord {
            dialogue_id: self.dialogue_id.clone(),
            turn_index: self.turn_index,
            policy: self.gold_policy.kind().name().to_string(),
            intent: self.gold_policy.intent().map(|i| i.canonical_name().to_string()),
        }
    }

    pub fn from_record(record: &GoldTurnRecord) -> Option<GoldTurn> {
        let kind = PolicyKind::ALL.into_iter().find(|k| k.name() == record.policy)?;
        let intent = match &record.intent {
            Some(name) => Some(crate::core::canonicalize_intent(name).ok()?),
            None => None,
        };
        Some(GoldTurn {
            dialogue_id: record.dialogue_id.clone(),
            turn_index: record.turn_index,
            gold_policy: Policy::from_parts(kind, intent)?,
        })
    }
}

/// Derive per-agent-turn gold policies from a boundary-annotated dialogue:
/// chit-chat before the boundary, a single pivot at the first agent turn at
/// or after it, continue-topic afterwards, and explicit-intent on the final
/// agent turn when the dialogue ends in handover.
pub fn derive_gold_labels(d: &Dialogue) -> Result<Vec<GoldTurn>, EvalError> {
    let boundary = d
        .boundary_index
        .ok_or_else(|| EvalError::MissingBoundary { id: d.id.clone() })?;
    let intent = d
        .intent
        .ok_or_else(|| EvalError::MissingBoundary { id: d.id.clone() })?;

    let agent_turns: Vec<usize> = d
        .turns
        .iter()
        .filter(|t| t.speaker == Speaker::Agent)
        .map(|t| t.index)
        .collect();
    let pivot_turn = agent_turns.iter().copied().find(|i| *i >= boundary);
    let ends_in_handover = d
        .turns
        .last()
        .map(|t| t.speaker == Speaker::Agent && is_handover_text(&t.text))
        .unwrap_or(false);

    let mut labels = Vec::with_capacity(agent_turns.len());
    for index in &agent_turns {
        let policy = if Some(*index) == pivot_turn {
            Policy::PivotToIntent(intent)
        } else if *index < boundary {
            Policy::ContinueChitChat
        } else {
            Policy::ContinueTopic(intent)
        };
        labels.push(GoldTurn {
            dialogue_id: d.id.clone(),
            turn_index: *index,
            gold_policy: policy,
        });
    }
    if ends_in_handover {
        if let Some(last) = labels.last_mut() {
            last.gold_policy = Policy::ExplicitIntent(intent);
        }
    }
    Ok(labels)
}

/// One model prediction keyed by (dialogue, turn). A `None` policy marks a
/// step whose thought could not be classified; it scores as a mismatch.
#[derive(Debug, Clone)]
pub struct PredictedTurn {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub policy: Option<Policy>,
}

/// Pull predictions out of annotated transcripts, one per agent turn.
pub fn collect_predictions(transcripts: &[Transcript]) -> Result<Vec<PredictedTurn>, EvalError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for t in transcripts {
        let agent_turns = t.agent_turn_indices();
        for (step, index) in t.steps.iter().zip(agent_turns) {
            if !seen.insert((t.dialogue.id.clone(), index)) {
                return Err(EvalError::KeyCollision {
                    dialogue_id: t.dialogue.id.clone(),
                    turn_index: index,
                });
            }
            out.push(PredictedTurn {
                dialogue_id: t.dialogue.id.clone(),
                turn_index: index,
                policy: step.policy(),
            });
        }
    }
    Ok(out)
}

fn empty_confusion() -> BTreeMap<PolicyKind, BTreeMap<PolicyKind, usize>> {
    PolicyKind::ALL
        .into_iter()
        .map(|gold| (gold, PolicyKind::ALL.into_iter().map(|p| (p, 0usize)).collect()))
        .collect()
}

/// Score predictions against gold labels. Intent match is canonical intent
/// equality (chit-chat matches only no-intent); policy match is same kind;
/// both is their conjunction. Gold turns without a usable prediction count
/// as mismatches on all three and are reported.
pub fn turn_level_eval(
    predictions: &[PredictedTurn],
    gold: &[GoldTurn],
) -> Result<TurnLevelReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let mut by_key: BTreeMap<(&str, usize), Option<Policy>> = BTreeMap::new();
    for p in predictions {
        if by_key.insert((p.dialogue_id.as_str(), p.turn_index), p.policy).is_some() {
            return Err(EvalError::KeyCollision {
                dialogue_id: p.dialogue_id.clone(),
                turn_index: p.turn_index,
            });
        }
    }

    let total = gold.len();
    let mut intent_matches = 0usize;
    let mut policy_matches = 0usize;
    let mut both_matches = 0usize;
    let mut missing = 0usize;
    let mut confusion = empty_confusion();

    for g in gold {
        match by_key.get(&(g.dialogue_id.as_str(), g.turn_index)) {
            Some(Some(pred)) => {
                let intent_match = pred.intent() == g.gold_policy.intent();
                let policy_match = pred.kind() == g.gold_policy.kind();
                intent_matches += intent_match as usize;
                policy_matches += policy_match as usize;
                both_matches += (intent_match && policy_match) as usize;
                *confusion
                    .get_mut(&g.gold_policy.kind())
                    .unwrap()
                    .get_mut(&pred.kind())
                    .unwrap() += 1;
            }
            _ => missing += 1,
        }
    }

    Ok(TurnLevelReport {
        intent_accuracy: intent_matches as f64 / total as f64,
        policy_accuracy: policy_matches as f64 / total as f64,
        both_accuracy: both_matches as f64 / total as f64,
        total_turns: total,
        missing_predictions: missing,
        confusion,
    })
}

/// Average segment lengths over every segmentable dialogue in the corpus,
/// plus the intent histogram. Dialogues without a valid boundary are
/// quarantined and their ids returned.
pub fn corpus_stats(corpus: &[Dialogue]) -> Result<(CorpusStats, Vec<String>), EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut chitchat_sum = 0usize;
    let mut transition_sum = 0usize;
    let mut histogram: BTreeMap<Intent, usize> = BTreeMap::new();
    let mut counted = 0usize;
    let mut skipped = Vec::new();

    for d in corpus {
        match segment_dialogue(d) {
            Ok((chitchat, transition)) => {
                chitchat_sum += chitchat.len();
                transition_sum += transition.len();
                counted += 1;
                if let Some(intent) = d.intent {
                    *histogram.entry(intent).or_insert(0) += 1;
                }
            }
            Err(_) => skipped.push(d.id.clone()),
        }
    }
    if counted == 0 {
        return Err(EvalError::EmptyCorpus);
    }
    let avg_chitchat = chitchat_sum as f64 / counted as f64;
    let avg_transition = transition_sum as f64 / counted as f64;
    Ok((
        CorpusStats {
            avg_chitchat_turns: avg_chitchat,
            avg_transition_turns: avg_transition,
            // Exact by construction: the segments partition each dialogue.
            avg_total_turns: avg_chitchat + avg_transition,
            dialogue_count: counted,
            intent_histogram: histogram,
        },
        skipped,
    ))
}

/// Fraction of dialogues whose final agent step hands the conversation over.
/// Falls back to the stored flag for transcripts without step annotations.
pub fn proceed_tod_rate(transcripts: &[Transcript]) -> Result<f64, EvalError> {
    if transcripts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let handed_over = transcripts
        .iter()
        .filter(|t| match t.steps.last() {
            Some(step) => {
                step.policy.as_deref() == Some(PolicyKind::ExplicitIntent.name())
                    || is_handover_text(&step.response)
            }
            None => t.handover,
        })
        .count();
    Ok(handed_over as f64 / transcripts.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retries: u32,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig { model_name: "gpt-4".into(), temperature: 0.0, max_tokens: 1024, retries: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct JudgeOutcome {
    pub scores: JudgeScores,
    /// Every raw reply received, last one accepted.
    pub raw_replies: Vec<String>,
    pub attempts: u32,
}

/// Normalize a judge JSON key: lowercase, separators collapsed to single
/// spaces. Accepts both the schema's spelling of "consistancy" and the
/// corrected one.
fn canonical_key(key: &str) -> Option<&'static str> {
    let folded = key
        .to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    match folded.as_str() {
        "naturalness" => Some("naturalness"),
        "coherence" => Some("coherence"),
        "smoothness" => Some("smoothness"),
        "agent aggressiveness" => Some("agent_aggressiveness"),
        "agent consistancy" | "agent consistency" => Some("agent_consistency"),
        _ => None,
    }
}

fn parse_criterion(value: &Value) -> Result<CriterionScore, String> {
    let obj = value.as_object().ok_or("criterion entry is not an object")?;
    let reason = obj
        .get("reason")
        .and_then(Value::as_str)
        .ok_or("missing 'reason' string")?
        .to_string();
    let score = obj.get("score").and_then(Value::as_f64).ok_or("missing numeric 'score'")?;
    Ok(CriterionScore { reason, score })
}

/// Parse a judge reply against the five-key schema. Exactly the five keys
/// must be present; any superset or subset fails.
pub fn parse_judge_reply(raw: &str) -> Result<JudgeScores, EvalError> {
    let start = raw.find('{').ok_or_else(|| EvalError::JudgeParseFailure {
        attempts: 1,
        detail: "no JSON object in reply".into(),
        raw: raw.to_string(),
    })?;
    let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        _ => {
            return Err(EvalError::JudgeParseFailure {
                attempts: 1,
                detail: "invalid JSON".into(),
                raw: raw.to_string(),
            })
        }
    };
    let obj = value.as_object().ok_or_else(|| EvalError::JudgeParseFailure {
        attempts: 1,
        detail: "reply is not a JSON object".into(),
        raw: raw.to_string(),
    })?;

    let mut entries: BTreeMap<&'static str, CriterionScore> = BTreeMap::new();
    for (key, entry) in obj {
        let canonical = canonical_key(key).ok_or_else(|| EvalError::JudgeParseFailure {
            attempts: 1,
            detail: format!("unexpected key '{key}'"),
            raw: raw.to_string(),
        })?;
        let criterion = parse_criterion(entry).map_err(|detail| EvalError::JudgeParseFailure {
            attempts: 1,
            detail: format!("key '{key}': {detail}"),
            raw: raw.to_string(),
        })?;
        if entries.insert(canonical, criterion).is_some() {
            return Err(EvalError::JudgeParseFailure {
                attempts: 1,
                detail: format!("duplicate key '{key}'"),
                raw: raw.to_string(),
            });
        }
    }
    let mut take = |name: &str| {
        entries.remove(name).ok_or_else(|| EvalError::JudgeParseFailure {
            attempts: 1,
            detail: format!("missing key '{name}'"),
            raw: raw.to_string(),
        })
    };
    let scores = JudgeScores {
        naturalness: take("naturalness")?,
        coherence: take("coherence")?,
        smoothness: take("smoothness")?,
        agent_aggressiveness: take("agent_aggressiveness")?,
        agent_consistency: take("agent_consistency")?,
    };
    for (key, criterion) in scores.entries() {
        if !(0.0..=100.0).contains(&criterion.score) || !criterion.score.is_finite() {
            return Err(EvalError::ScoreOutOfRange { key: key.to_string(), score: criterion.score });
        }
    }
    Ok(scores)
}

/// Score one dialogue with the judge rubric, retrying malformed replies.
/// Out-of-range scores are rejected without retry.
pub fn judge_dialogue(
    d: &Dialogue,
    backend: &Backend,
    cfg: &JudgeConfig,
) -> Result<JudgeOutcome, EvalError> {
    let prompt = promptkit::render_judge_prompt(d)?;
    let mut raw_replies = Vec::new();
    let mut last_error = None;
    for attempt in 1..=cfg.retries {
        let response = backend.complete(&CompletionRequest {
            messages: vec![ChatMessage::user(prompt.clone())],
            model_name: cfg.model_name.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            seed: None,
        })?;
        raw_replies.push(response.text.clone());
        match parse_judge_reply(&response.text) {
            Ok(scores) => {
                return Ok(JudgeOutcome { scores, raw_replies, attempts: attempt });
            }
            Err(EvalError::ScoreOutOfRange { key, score }) => {
                return Err(EvalError::ScoreOutOfRange { key, score });
            }
            Err(EvalError::JudgeParseFailure { detail, raw, .. }) => {
                last_error = Some((detail, raw));
            }
            Err(other) => return Err(other),
        }
    }
    let (detail, raw) = last_error.unwrap_or_default();
    Err(EvalError::JudgeParseFailure { attempts: cfg.retries, detail, raw })
}

/// A dialogue carrying the two quality scores used for test-set selection.
#[derive(Debug, Clone)]
pub struct ScoredDialogue {
    pub dialogue: Dialogue,
    pub naturalness: Option<f64>,
    pub consistency: Option<f64>,
}

/// Keep dialogues whose naturalness and consistency both exceed the
/// threshold, ordered best-first by mean score (ties by id), truncated to
/// `cap` when given.
pub fn quality_filter(
    scored: Vec<ScoredDialogue>,
    threshold: f64,
    cap: Option<usize>,
) -> Result<Vec<ScoredDialogue>, EvalError> {
    let mut kept = Vec::new();
    for s in scored {
        let naturalness = s
            .naturalness
            .ok_or_else(|| EvalError::MissingScores { id: s.dialogue.id.clone() })?;
        let consistency = s
            .consistency
            .ok_or_else(|| EvalError::MissingScores { id: s.dialogue.id.clone() })?;
        if naturalness > threshold && consistency > threshold {
            kept.push((naturalness, consistency, s));
        }
    }
    kept.sort_by(|a, b| {
        let mean_a = (a.0 + a.1) / 2.0;
        let mean_b = (b.0 + b.1) / 2.0;
        mean_b
            .partial_cmp(&mean_a)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.2.dialogue.id.cmp(&b.2.dialogue.id))
    });
    if let Some(cap) = cap {
        kept.truncate(cap);
    }
    Ok(kept.into_iter().map(|(_, _, s)| s).collect())
}

/// Means of the five judge criteria across a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeMeans {
    pub naturalness: f64,
    pub coherence: f64,
    pub smoothness: f64,
    pub agent_aggressiveness: f64,
    pub agent_consistency: f64,
}

pub fn mean_judge_scores(all: &[JudgeScores]) -> Option<JudgeMeans> {
    if all.is_empty() {
        return None;
    }
    let n = all.len() as f64;
    Some(JudgeMeans {
        naturalness: all.iter().map(|s| s.naturalness.score).sum::<f64>() / n,
        coherence: all.iter().map(|s| s.coherence.score).sum::<f64>() / n,
        smoothness: all.iter().map(|s| s.smoothness.score).sum::<f64>() / n,
        agent_aggressiveness: all.iter().map(|s| s.agent_aggressiveness.score).sum::<f64>() / n,
        agent_consistency: all.iter().map(|s| s.agent_consistency.score).sum::<f64>() / n,
    })
}

/// Dialogue-level metrics feeding the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueMetrics {
    pub avg_turns: f64,
    pub proceed_tod_rate: f64,
}

pub fn dialogue_metrics(transcripts: &[Transcript]) -> Result<DialogueMetrics, EvalError> {
    if transcripts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let avg_turns = transcripts.iter().map(|t| t.dialogue.turns.len()).sum::<usize>() as f64
        / transcripts.len() as f64;
    Ok(DialogueMetrics { avg_turns, proceed_tod_rate: proceed_tod_rate(transcripts)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub value: Option<f64>,
}

/// Per-policy agreement rates; both directions are reported since "match
/// rate" is ambiguous between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMatchRate {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Per-gold-policy distribution over predicted policies, rows normalized
    /// to 1.0.
    pub policy_distributions: BTreeMap<PolicyKind, BTreeMap<PolicyKind, f64>>,
    pub policy_match: BTreeMap<PolicyKind, PolicyMatchRate>,
}

/// Assemble the evaluation table: turn-level accuracies, dialogue-level
/// counts, and judge means, with every number rounded to the two-decimal
/// presentation used throughout. Pure: same inputs, same report.
pub fn aggregate_report(
    turn: Option<&TurnLevelReport>,
    dialogue: Option<&DialogueMetrics>,
    judge: Option<&JudgeMeans>,
) -> Report {
    let pct = |v: f64| round2(v * 100.0);
    let rows = vec![
        ReportRow { label: "Intent Detection".into(), value: turn.map(|t| pct(t.intent_accuracy)) },
        ReportRow { label: "Policy Selection".into(), value: turn.map(|t| pct(t.policy_accuracy)) },
        ReportRow { label: "Both Match".into(), value: turn.map(|t| pct(t.both_accuracy)) },
        ReportRow { label: "# Turns".into(), value: dialogue.map(|d| round2(d.avg_turns)) },
        ReportRow {
            label: "Proceed TOD Rate".into(),
            value: dialogue.map(|d| pct(d.proceed_tod_rate)),
        },
        ReportRow { label: "Naturalness".into(), value: judge.map(|j| round2(j.naturalness)) },
        ReportRow { label: "Coherence".into(), value: judge.map(|j| round2(j.coherence)) },
        ReportRow {
            label: "Agent Consistency".into(),
            value: judge.map(|j| round2(j.agent_consistency)),
        },
        ReportRow {
            label: "Agent Aggressiveness".into(),
            value: judge.map(|j| round2(j.agent_aggressiveness)),
        },
        ReportRow { label: "Smoothness".into(), value: judge.map(|j| round2(j.smoothness)) },
    ];

    let mut policy_distributions = BTreeMap::new();
    let mut policy_match = BTreeMap::new();
    if let Some(t) = turn {
        let mut predicted_totals: BTreeMap<PolicyKind, usize> = BTreeMap::new();
        for row in t.confusion.values() {
            for (pred, count) in row {
                *predicted_totals.entry(*pred).or_insert(0) += count;
            }
        }
        for (gold, row) in &t.confusion {
            let total: usize = row.values().sum();
            let normalized: BTreeMap<PolicyKind, f64> = row
                .iter()
                .map(|(pred, count)| {
                    let frac =
                        if total == 0 { 0.0 } else { round2(*count as f64 / total as f64) };
                    (*pred, frac)
                })
                .collect();
            policy_distributions.insert(*gold, normalized);

            let diagonal = row.get(gold).copied().unwrap_or(0);
            let recall = (total > 0).then(|| round2(diagonal as f64 / total as f64));
            let predicted = predicted_totals.get(gold).copied().unwrap_or(0);
            let precision = (predicted > 0).then(|| round2(diagonal as f64 / predicted as f64));
            policy_match.insert(*gold, PolicyMatchRate { recall, precision });
        }
    }

    Report { rows, policy_distributions, policy_match }
}

impl Report {
    /// Aligned plain-text rendering of the table and the per-policy
    /// distributions.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
        let mut out = String::new();
        out.push_str(&format!("{:<width$}  {:>8}\n", "Metric", "Value"));
        for row in &self.rows {
            match row.value {
                Some(v) => out.push_str(&format!("{:<width$}  {:>8.2}\n", row.label, v)),
                None => out.push_str(&format!("{:<width$}  {:>8}\n", row.label, "-")),
            }
        }
        if !self.policy_distributions.is_empty() {
            out.push_str("\nPrediction distribution per gold policy (row-normalized):\n");
            let label_width = PolicyKind::ALL.iter().map(|k| k.name().len()).max().unwrap();
            out.push_str(&format!("{:<label_width$}", "gold \\ pred"));
            for pred in PolicyKind::ALL {
                out.push_str(&format!("  {:>16}", pred.name()));
            }
            out.push('\n');
            for (gold, row) in &self.policy_distributions {
                out.push_str(&format!("{:<label_width$}", gold.name()));
                for pred in PolicyKind::ALL {
                    out.push_str(&format!("  {:>16.2}", row.get(&pred).copied().unwrap_or(0.0)));
                }
                out.push('\n');
            }
            out.push_str("\nPer-policy match rates:\n");
            for (kind, rate) in &self.policy_match {
                let fmt = |v: Option<f64>| {
                    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".to_string())
                };
                out.push_str(&format!(
                    "{:<label_width$}  recall {}  precision {}\n",
                    kind.name(),
                    fmt(rate.recall),
                    fmt(rate.precision)
                ));
            }
        }
        out
    }

    pub fn write(&self, json_path: &Path, text_path: &Path) -> Result<(), CoreError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CoreError::Serialize { message: e.to_string() })?;
        std::fs::write(json_path, json + "\n")
            .map_err(|e| CoreError::Io { path: json_path.display().to_string(), source: e })?;
        std::fs::write(text_path, self.to_text())
            .map_err(|e| CoreError::Io { path: text_path.display().to_string(), source: e })
    }
}

/// Write the raw judge replies next to the scores for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeRawRecord {
    pub dialogue_id: String,
    pub attempt: u32,
    pub raw: String,
}

pub fn write_judge_raws(path: &Path, records: &[JudgeRawRecord]) -> Result<(), CoreError> {
    use std::io::Write;
    let file = std::fs::File::create(path)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record)
            .map_err(|e| CoreError::Serialize { message: e.to_string() })?;
        writer
            .write_all(b"\n")
            .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    }
    writer
        .flush()
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })
}

pub fn read_gold_turns(path: &Path) -> Result<Vec<GoldTurn>, EvalError> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line
            .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GoldTurnRecord = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            message: e.to_string(),
        })?;
        let turn = GoldTurn::from_record(&record).ok_or_else(|| CoreError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            message: "invalid policy/intent combination".to_string(),
        })?;
        out.push(turn);
    }
    Ok(out)
}

pub fn write_gold_turns(path: &Path, gold: &[GoldTurn]) -> Result<(), CoreError> {
    use std::io::Write;
    let file = std::fs::File::create(path)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let mut writer = std::io::BufWriter::new(file);
    for g in gold {
        serde_json::to_writer(&mut writer, &g.to_record())
            .map_err(|e| CoreError::Serialize { message: e.to_string() })?;
        writer
            .write_all(b"\n")
            .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    }
    writer
        .flush()
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Backend, MockBackend};
    use crate::core::Source;

    fn mock(replies: &[&str]) -> Backend {
        Backend::from_mock(MockBackend::queued(replies.iter().copied()))
    }

    /// The example dialogue: five chit-chat turns, a detected FindMovie
    /// intent on the last user turn before the transition, then transition
    /// turns led by the agent.
    fn movie_dialogue() -> Dialogue {
        let raw = vec![
            (Speaker::User, "What would you like to know about me? I like to read a lot.".to_string()),
            (Speaker::Agent, "That's great! I'm a stay-at-home mom of two boys.".to_string()),
            (Speaker::User, "That sounds like a lot of work. I work at a grocery store as a cashier. Do you have any hobbies that you enjoy?".to_string()),
            (Speaker::Agent, "Yes, I love to sew and I also enjoy hiking. How about you? Besides reading, what are some of your favorite hobbies?".to_string()),
            (Speaker::User, "I also like to go to the movies and try out new recipes in the kitchen.".to_string()),
            (Speaker::Agent, "Going to the movies, huh? What's the last movie you watched?".to_string()),
            (Speaker::User, "I recently watched a romantic comedy. It was funny and heartwarming.".to_string()),
            (Speaker::Agent, "Sounds like a good choice. Have you heard of any upcoming movies that you're excited to see?".to_string()),
            (Speaker::User, "Wow, that sounds really interesting. Maybe I'll have to give it a try.".to_string()),
            (Speaker::Agent, "Speaking of psychological thrillers, have you ever considered watching any movies in that genre?".to_string()),
            (Speaker::User, "Actually, I have. I always find them really fascinating.".to_string()),
        ];
        Dialogue::new("table2", Source::SalesBot2, raw, Some(Intent::FindMovie), Some(4)).unwrap()
    }

    #[test]
    fn gold_labels_for_the_movie_dialogue() {
        let labels = derive_gold_labels(&movie_dialogue()).unwrap();
        let by_index: BTreeMap<usize, Policy> =
            labels.iter().map(|g| (g.turn_index, g.gold_policy)).collect();
        assert_eq!(by_index[&1], Policy::ContinueChitChat);
        assert_eq!(by_index[&3], Policy::ContinueChitChat);
        assert_eq!(by_index[&5], Policy::PivotToIntent(Intent::FindMovie));
        assert_eq!(by_index[&7], Policy::ContinueTopic(Intent::FindMovie));
        assert_eq!(by_index[&9], Policy::ContinueTopic(Intent::FindMovie));
        assert_eq!(labels.len(), 5);
    }

    #[test]
    fn gold_labels_with_boundary_zero_have_no_chitchat() {
        let raw = vec![
            (Speaker::User, "find me a hotel".to_string()),
            (Speaker::Agent, "Sure, what city?".to_string()),
            (Speaker::User, "Paris".to_string()),
            (Speaker::Agent, "Proceed to task oriented dialog agent".to_string()),
        ];
        let d = Dialogue::new("b0", Source::Generated, raw, Some(Intent::SearchHotel), Some(0))
            .unwrap();
        let labels = derive_gold_labels(&d).unwrap();
        assert_eq!(labels[0].gold_policy, Policy::PivotToIntent(Intent::SearchHotel));
        assert_eq!(labels[1].gold_policy, Policy::ExplicitIntent(Intent::SearchHotel));
        assert!(labels.iter().all(|g| g.gold_policy != Policy::ContinueChitChat));
    }

    #[test]
    fn gold_labels_need_a_boundary() {
        let raw = vec![(Speaker::User, "hi".to_string()), (Speaker::Agent, "hello".to_string())];
        let d = Dialogue::new("nb", Source::SalesBot1, raw, None, None).unwrap();
        assert!(matches!(derive_gold_labels(&d), Err(EvalError::MissingBoundary { .. })));
    }

    fn pred(dialogue_id: &str, turn_index: usize, policy: Option<Policy>) -> PredictedTurn {
        PredictedTurn { dialogue_id: dialogue_id.into(), turn_index, policy }
    }

    fn gold(dialogue_id: &str, turn_index: usize, policy: Policy) -> GoldTurn {
        GoldTurn { dialogue_id: dialogue_id.into(), turn_index, gold_policy: policy }
    }

    #[test]
    fn turn_eval_matches_the_hand_built_fixture() {
        // 4 gold turns; 2 intent hits, 1 policy hit, 1 joint hit.
        let golds = vec![
            gold("d", 1, Policy::PivotToIntent(Intent::FindMovie)),
            gold("d", 3, Policy::ContinueTopic(Intent::SearchHotel)),
            gold("d", 5, Policy::ContinueChitChat),
            gold("d", 7, Policy::ExplicitIntent(Intent::FindMovie)),
        ];
        let preds = vec![
            pred("d", 1, Some(Policy::ContinueTopic(Intent::FindMovie))), // intent hit only
            pred("d", 3, Some(Policy::ContinueTopic(Intent::SearchHotel))), // joint hit
            pred("d", 5, Some(Policy::PivotToIntent(Intent::FindEvents))), // miss
            pred("d", 7, Some(Policy::ContinueChitChat)),                 // miss
        ];
        let report = turn_level_eval(&preds, &golds).unwrap();
        assert_eq!(report.intent_accuracy, 0.50);
        assert_eq!(report.policy_accuracy, 0.25);
        assert_eq!(report.both_accuracy, 0.25);
        assert_eq!(report.missing_predictions, 0);
        // Confusion row sums equal gold counts.
        let counts = report.gold_counts();
        assert_eq!(counts[&PolicyKind::PivotToIntent], 1);
        assert_eq!(counts[&PolicyKind::ContinueTopic], 1);
        assert_eq!(counts[&PolicyKind::ContinueChitChat], 1);
        assert_eq!(counts[&PolicyKind::ExplicitIntent], 1);
    }

    #[test]
    fn all_correct_predictions_score_one() {
        let golds = vec![
            gold("d", 1, Policy::ContinueChitChat),
            gold("d", 3, Policy::PivotToIntent(Intent::FindMovie)),
        ];
        let preds = vec![
            pred("d", 1, Some(Policy::ContinueChitChat)),
            pred("d", 3, Some(Policy::PivotToIntent(Intent::FindMovie))),
        ];
        let report = turn_level_eval(&preds, &golds).unwrap();
        assert_eq!(
            (report.intent_accuracy, report.policy_accuracy, report.both_accuracy),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn missing_and_unclassifiable_predictions_are_mismatches() {
        let golds = vec![
            gold("d", 1, Policy::ContinueChitChat),
            gold("d", 3, Policy::ContinueChitChat),
        ];
        let preds = vec![pred("d", 1, None)];
        let report = turn_level_eval(&preds, &golds).unwrap();
        assert_eq!(report.intent_accuracy, 0.0);
        assert_eq!(report.missing_predictions, 2);
    }

    #[test]
    fn duplicate_prediction_keys_collide() {
        let golds = vec![gold("d", 1, Policy::ContinueChitChat)];
        let preds = vec![
            pred("d", 1, Some(Policy::ContinueChitChat)),
            pred("d", 1, Some(Policy::ContinueChitChat)),
        ];
        assert!(matches!(
            turn_level_eval(&preds, &golds),
            Err(EvalError::KeyCollision { turn_index: 1, .. })
        ));
    }

    #[test]
    fn empty_gold_is_an_error() {
        assert!(matches!(turn_level_eval(&[], &[]), Err(EvalError::EmptyGold)));
    }

    fn segmented(id: &str, chitchat: usize, transition: usize) -> Dialogue {
        // User-first alternation puts user turns at even indices, so an even
        // chit-chat count lands the boundary on a user turn.
        let total = chitchat + transition;
        let raw: Vec<(Speaker, String)> = (0..total)
            .map(|i| {
                let speaker = if i % 2 == 0 { Speaker::User } else { Speaker::Agent };
                (speaker, format!("t{i}"))
            })
            .collect();
        assert_eq!(chitchat % 2, 0, "fixture boundary must land on a user turn");
        Dialogue::new(id, Source::SalesBot2, raw, Some(Intent::FindMovie), Some(chitchat))
            .unwrap_or_else(|e| panic!("fixture {id}: {e}"))
    }

    #[test]
    fn corpus_stats_on_hand_counted_fixture() {
        let corpus = vec![segmented("a", 4, 2), segmented("b", 6, 4)];
        let (stats, skipped) = corpus_stats(&corpus).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(stats.avg_chitchat_turns, 5.00);
        assert_eq!(stats.avg_transition_turns, 3.00);
        assert_eq!(stats.avg_total_turns, 8.00);
        assert_eq!(stats.dialogue_count, 2);
        assert_eq!(stats.intent_histogram[&Intent::FindMovie], 2);
    }

    #[test]
    fn corpus_stats_single_dialogue() {
        let corpus = vec![segmented("a", 4, 5)];
        let (stats, _) = corpus_stats(&corpus).unwrap();
        assert_eq!(
            (stats.avg_chitchat_turns, stats.avg_transition_turns, stats.avg_total_turns),
            (4.00, 5.00, 9.00)
        );
    }

    #[test]
    fn corpus_stats_quarantines_unsegmentable() {
        let raw = vec![(Speaker::User, "x".to_string())];
        let no_boundary = Dialogue::new("nb", Source::SalesBot1, raw, None, None).unwrap();
        let corpus = vec![segmented("ok", 2, 2), no_boundary];
        let (stats, skipped) = corpus_stats(&corpus).unwrap();
        assert_eq!(stats.dialogue_count, 1);
        assert_eq!(skipped, vec!["nb".to_string()]);
        assert!(matches!(corpus_stats(&[]), Err(EvalError::EmptyCorpus)));
    }

    fn transcript_with_handover(id: &str, handover: bool) -> Transcript {
        let raw = vec![
            (Speaker::User, "hi".to_string()),
            (
                Speaker::Agent,
                if handover { "Proceed to task oriented dialog agent".to_string() } else { "hello".to_string() },
            ),
        ];
        let dialogue = Dialogue::new(id, Source::Simulated, raw, None, None).unwrap();
        Transcript {
            dialogue,
            steps: vec![crate::agent::StepRecord {
                thought: String::new(),
                policy: Some(
                    if handover { PolicyKind::ExplicitIntent.name() } else { PolicyKind::ContinueChitChat.name() }
                        .to_string(),
                ),
                intent: handover.then(|| Intent::FindMovie.canonical_name().to_string()),
                response: if handover {
                    "Proceed to task oriented dialog agent".to_string()
                } else {
                    "hello".to_string()
                },
            }],
            handover,
            truncated: false,
            persona_id: None,
            preference_kind: None,
            repeat_index: None,
            error: None,
        }
    }

    #[test]
    fn tod_rate_fixtures() {
        let all: Vec<_> = (0..4).map(|i| transcript_with_handover(&format!("a{i}"), true)).collect();
        assert_eq!(proceed_tod_rate(&all).unwrap(), 1.0);

        let none: Vec<_> = (0..4).map(|i| transcript_with_handover(&format!("n{i}"), false)).collect();
        assert_eq!(proceed_tod_rate(&none).unwrap(), 0.0);

        let mixed: Vec<_> = (0..5)
            .map(|i| transcript_with_handover(&format!("m{i}"), i < 3))
            .collect();
        assert_eq!(proceed_tod_rate(&mixed).unwrap(), 0.6);

        assert!(matches!(proceed_tod_rate(&[]), Err(EvalError::EmptyInput)));
    }

    fn judge_json(n: f64, c: f64, s: f64, aggressive: f64, consistent: f64) -> String {
        format!(
            r#"{{"naturalness": {{"reason": "ok", "score": {n}}},
                 "coherence": {{"reason": "ok", "score": {c}}},
                 "smoothness": {{"reason": "ok", "score": {s}}},
                 "agent aggressiveness": {{"reason": "ok", "score": {aggressive}}},
                 "agent consistancy": {{"reason": "ok", "score": {consistent}}}}}"#
        )
    }

    #[test]
    fn judge_accepts_well_formed_five_key_reply() {
        let reply = judge_json(78.24, 79.02, 68.58, 40.38, 78.12);
        let backend = mock(&[reply.as_str()]);
        let outcome =
            judge_dialogue(&movie_dialogue(), &backend, &JudgeConfig::default()).unwrap();
        assert_eq!(outcome.scores.naturalness.score, 78.24);
        assert_eq!(outcome.scores.coherence.score, 79.02);
        assert_eq!(outcome.scores.smoothness.score, 68.58);
        assert_eq!(outcome.scores.agent_aggressiveness.score, 40.38);
        assert_eq!(outcome.scores.agent_consistency.score, 78.12);
        assert_eq!(outcome.attempts, 1);
    }

    #[test]
    fn judge_accepts_reply_with_prose_around_json() {
        let reply = format!("Here are my scores:\n{}\nHope that helps!", judge_json(70.0, 71.0, 72.0, 30.0, 74.0));
        let backend = mock(&[reply.as_str()]);
        let outcome =
            judge_dialogue(&movie_dialogue(), &backend, &JudgeConfig::default()).unwrap();
        assert_eq!(outcome.scores.smoothness.score, 72.0);
    }

    #[test]
    fn judge_rejects_out_of_range_scores() {
        let reply = judge_json(70.0, 71.0, 120.0, 30.0, 74.0);
        let backend = mock(&[reply.as_str()]);
        let err =
            judge_dialogue(&movie_dialogue(), &backend, &JudgeConfig::default()).unwrap_err();
        assert!(matches!(err, EvalError::ScoreOutOfRange { key, .. } if key == "smoothness"));
    }

    #[test]
    fn judge_rejects_missing_and_extra_keys() {
        let missing = r#"{"naturalness": {"reason": "r", "score": 70},
            "coherence": {"reason": "r", "score": 70},
            "agent aggressiveness": {"reason": "r", "score": 70},
            "agent consistancy": {"reason": "r", "score": 70}}"#;
        assert!(matches!(
            parse_judge_reply(missing),
            Err(EvalError::JudgeParseFailure { detail, .. }) if detail.contains("smoothness")
        ));

        let extra = format!(
            r#"{{"naturalness": {{"reason": "r", "score": 70}},
                 "coherence": {{"reason": "r", "score": 70}},
                 "smoothness": {{"reason": "r", "score": 70}},
                 "agent aggressiveness": {{"reason": "r", "score": 70}},
                 "agent consistancy": {{"reason": "r", "score": 70}},
                 "humor": {{"reason": "r", "score": 70}}}}"#
        );
        assert!(matches!(
            parse_judge_reply(&extra),
            Err(EvalError::JudgeParseFailure { detail, .. }) if detail.contains("humor")
        ));
    }

    #[test]
    fn judge_surfaces_raw_reply_after_exhausted_retries() {
        let backend = mock(&["not json", "still not json", "garbage {broken"]);
        let err =
            judge_dialogue(&movie_dialogue(), &backend, &JudgeConfig::default()).unwrap_err();
        match err {
            EvalError::JudgeParseFailure { attempts, raw, .. } => {
                assert_eq!(attempts, 3);
                assert!(raw.contains("broken") || raw.contains("garbage"));
            }
            other => panic!("expected JudgeParseFailure, got {other:?}"),
        }
    }

    #[test]
    fn judge_accepts_corrected_consistency_spelling() {
        let reply = r#"{"naturalness": {"reason": "r", "score": 70},
            "coherence": {"reason": "r", "score": 70},
            "smoothness": {"reason": "r", "score": 70},
            "agent_aggressiveness": {"reason": "r", "score": 70},
            "agent consistency": {"reason": "r", "score": 70}}"#;
        let scores = parse_judge_reply(reply).unwrap();
        assert_eq!(scores.agent_consistency.score, 70.0);
    }

    fn scored(id: &str, naturalness: f64, consistency: f64) -> ScoredDialogue {
        let raw = vec![(Speaker::User, "hi".to_string()), (Speaker::Agent, "hello".to_string())];
        ScoredDialogue {
            dialogue: Dialogue::new(id, Source::Generated, raw, None, None).unwrap(),
            naturalness: Some(naturalness),
            consistency: Some(consistency),
        }
    }

    #[test]
    fn quality_filter_thresholds_and_caps() {
        let kept = quality_filter(vec![scored("a", 95.0, 92.0)], 90.0, None).unwrap();
        assert_eq!(kept.len(), 1);

        let dropped = quality_filter(vec![scored("a", 95.0, 88.0)], 90.0, None).unwrap();
        assert!(dropped.is_empty());

        // Cap keeps the best by mean score, ties broken by id.
        let many = vec![
            scored("c", 91.0, 91.0),
            scored("a", 95.0, 93.0),
            scored("b", 95.0, 93.0),
        ];
        let top2 = quality_filter(many, 90.0, Some(2)).unwrap();
        let ids: Vec<_> = top2.iter().map(|s| s.dialogue.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn quality_filter_requires_scores() {
        let mut s = scored("x", 95.0, 95.0);
        s.consistency = None;
        assert!(matches!(
            quality_filter(vec![s], 90.0, None),
            Err(EvalError::MissingScores { id }) if id == "x"
        ));
    }

    fn table4_inputs() -> (TurnLevelReport, DialogueMetrics, JudgeMeans) {
        let turn = TurnLevelReport {
            intent_accuracy: 0.3961,
            policy_accuracy: 0.3905,
            both_accuracy: 0.3206,
            total_turns: 100,
            missing_predictions: 0,
            confusion: empty_confusion(),
        };
        let dialogue = DialogueMetrics { avg_turns: 12.64, proceed_tod_rate: 0.5960 };
        let judge = JudgeMeans {
            naturalness: 78.24,
            coherence: 79.02,
            smoothness: 68.58,
            agent_aggressiveness: 40.38,
            agent_consistency: 78.12,
        };
        (turn, dialogue, judge)
    }

    #[test]
    fn report_rows_follow_the_fixed_order_and_round_trip() {
        let (turn, dialogue, judge) = table4_inputs();
        let report = aggregate_report(Some(&turn), Some(&dialogue), Some(&judge));
        let values: Vec<f64> = report.rows.iter().map(|r| r.value.unwrap()).collect();
        assert_eq!(
            values,
            vec![39.61, 39.05, 32.06, 12.64, 59.60, 78.24, 79.02, 78.12, 40.38, 68.58]
        );
        let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            vec![
                "Intent Detection",
                "Policy Selection",
                "Both Match",
                "# Turns",
                "Proceed TOD Rate",
                "Naturalness",
                "Coherence",
                "Agent Consistency",
                "Agent Aggressiveness",
                "Smoothness"
            ]
        );

        let json = serde_json::to_string(&report).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        // Pure function: identical inputs give identical output.
        let again = aggregate_report(Some(&turn), Some(&dialogue), Some(&judge));
        assert_eq!(again, report);
    }

    #[test]
    fn report_distributions_normalize_per_gold_kind() {
        let golds = vec![
            gold("d", 1, Policy::ContinueChitChat),
            gold("d", 3, Policy::ContinueChitChat),
            gold("d", 5, Policy::PivotToIntent(Intent::FindMovie)),
        ];
        let preds = vec![
            pred("d", 1, Some(Policy::ContinueChitChat)),
            pred("d", 3, Some(Policy::PivotToIntent(Intent::FindMovie))),
            pred("d", 5, Some(Policy::PivotToIntent(Intent::FindMovie))),
        ];
        let turn = turn_level_eval(&preds, &golds).unwrap();
        let report = aggregate_report(Some(&turn), None, None);
        for (gold_kind, row) in &report.policy_distributions {
            let sum: f64 = row.values().sum();
            let gold_total = turn.gold_counts()[gold_kind];
            if gold_total > 0 {
                assert!((sum - 1.0).abs() < 1e-9, "row {gold_kind:?} sums to {sum}");
            } else {
                assert_eq!(sum, 0.0);
            }
        }
        let ccc = &report.policy_match[&PolicyKind::ContinueChitChat];
        assert_eq!(ccc.recall, Some(0.5));
        assert_eq!(ccc.precision, Some(1.0));
        let pivot = &report.policy_match[&PolicyKind::PivotToIntent];
        assert_eq!(pivot.recall, Some(1.0));
        assert_eq!(pivot.precision, Some(0.5));
    }

    #[test]
    fn text_report_renders_rows_and_placeholder() {
        let (_, dialogue, judge) = table4_inputs();
        let report = aggregate_report(None, Some(&dialogue), Some(&judge));
        let text = report.to_text();
        assert!(text.contains("Intent Detection"));
        assert!(text.contains("-"));
        assert!(text.contains("12.64"));
        assert!(text.contains("59.60"));
    }
}
