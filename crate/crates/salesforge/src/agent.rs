//! The sales-agent runtime: renders the chain-of-thought prompt, parses
//! `Thought:`/`Response:` output, classifies the thought into one of the
//! four policies, tracks conversation state, and detects handover.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ChatMessage, CompletionRequest};
use crate::core::io::DialogueRecord;
use crate::core::{
    canonicalize_intent, CoreError, Dialogue, Intent, Policy, PreferenceKind, Speaker, Turn,
};
use crate::promptkit::{self, PromptError};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("could not parse Thought/Response labels from model output: {raw:?}")]
    ParseFailure { raw: String },
    #[error("thought matches none of the four policy templates: {thought:?}")]
    Unclassifiable { thought: String },
    #[error("thought names an unknown intent '{name}': {thought:?}")]
    UnknownIntent { name: String, thought: String },
    #[error("agent already handed the conversation over")]
    StepAfterHandover,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Split raw model output at the first `Thought:` label and the first
/// `Response:` label after it. Both pieces come back trimmed; the thought
/// may span lines.
pub fn parse_agent_output(raw: &str) -> Result<(String, String), AgentError> {
    let lower = raw.to_lowercase();
    let thought_pos = lower.find("thought:");
    let response_pos = lower.find("response:");
    match (thought_pos, response_pos) {
        (Some(t), Some(r)) if t < r => {
            let thought = raw[t + "thought:".len()..r].trim().to_string();
            let response = raw[r + "response:".len()..].trim().to_string();
            Ok((thought, response))
        }
        _ => Err(AgentError::ParseFailure { raw: raw.to_string() }),
    }
}

/// Render the canonical thought sentence for a policy, the exact inverse of
/// [`classify_thought`] on well-formed input.
pub fn render_thought(policy: &Policy) -> String {
    match policy {
        Policy::ContinueChitChat => {
            "The user did not implicitly mention any potential intent, I should continue the chit-chat.".to_string()
        }
        Policy::PivotToIntent(intent) => format!(
            "The user implicitly mentioned the intent of {intent}. I should smoothly pivot the conversation to the topic of {intent}."
        ),
        Policy::ContinueTopic(intent) => {
            format!("The user did not change the topic of {intent}. I should continue the topic.")
        }
        Policy::ExplicitIntent(intent) => {
            format!("The user has explicitly shown his/her intent of {intent}.")
        }
    }
}

fn intent_slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:intent|topic)\s+of\s+([A-Za-z][A-Za-z0-9_ -]*?)[\s]*(?:[.!?,;:]|$)")
            .expect("intent slot regex compiles")
    })
}

fn extract_intent(thought: &str) -> Result<Intent, AgentError> {
    let captures = intent_slot_regex()
        .captures(thought)
        .ok_or_else(|| AgentError::Unclassifiable { thought: thought.to_string() })?;
    let name = captures[1].trim().to_string();
    // The capture may run past the intent ("FindMovie right away"); retry on
    // progressively shorter word prefixes before giving up.
    let words: Vec<&str> = name.split_whitespace().collect();
    for end in (1..=words.len()).rev() {
        if let Ok(intent) = canonicalize_intent(&words[..end].join(" ")) {
            return Ok(intent);
        }
    }
    Err(AgentError::UnknownIntent { name, thought: thought.to_string() })
}

/// Classify a thought against the four templates using anchored substring
/// patterns: fine-tuned models paraphrase lightly, so matching is
/// case-insensitive and whitespace-normalized rather than exact.
pub fn classify_thought(thought: &str) -> Result<Policy, AgentError> {
    let normalized = crate::util::normalize_ws(thought);
    if normalized.contains("explicitly shown") {
        Ok(Policy::ExplicitIntent(extract_intent(thought)?))
    } else if normalized.contains("smoothly pivot the conversation") {
        Ok(Policy::PivotToIntent(extract_intent(thought)?))
    } else if normalized.contains("continue the chit-chat")
        || normalized.contains("continue the chit chat")
    {
        Ok(Policy::ContinueChitChat)
    } else if normalized.contains("continue the topic") {
        Ok(Policy::ContinueTopic(extract_intent(thought)?))
    } else {
        Err(AgentError::Unclassifiable { thought: thought.to_string() })
    }
}

fn handover_marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)proceed to task[ -]oriented dialog(?:ue)?").expect("marker regex compiles")
    })
}

/// True when the text contains the literal proceed-to-TOD marker, tolerant
/// of "dialog"/"dialogue", hyphenation, case, and trailing punctuation.
pub fn is_handover_text(text: &str) -> bool {
    handover_marker_regex().is_match(text)
}

/// One agent turn: the parsed thought, the selected policy, and the reply.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub thought_text: String,
    pub policy: Policy,
    pub response_text: String,
    pub raw_output: String,
    /// True when the policy was synthesized in baseline mode rather than
    /// parsed from a thought.
    pub baseline_surrogate: bool,
}

/// True when the step ends the sales phase: an explicit-intent policy or the
/// literal proceed-to-TOD marker in the response.
pub fn is_handover(step: &AgentStep) -> bool {
    step.policy.kind() == crate::core::PolicyKind::ExplicitIntent
        || handover_marker_regex().is_match(&step.response_text)
}

/// Conversation-side state. Handover is absorbing: once set, no further
/// step can be taken.
#[derive(Debug, Clone, Default)]
pub struct AgentState {
    pub history: Vec<Turn>,
    pub current_topic: Option<Intent>,
    pub handover: bool,
    pub policy_trace: Vec<Policy>,
    /// Strategy-ordering violations (e.g. continue-topic before any pivot),
    /// recorded as warnings so evaluation can still score real behavior.
    pub violations: Vec<String>,
}

impl AgentState {
    pub fn new() -> AgentState {
        AgentState::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentMode {
    Cot,
    Baseline,
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub mode: AgentMode,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub intents: Vec<Intent>,
    /// On a parse failure, re-ask once with a format reminder appended.
    pub reask_on_parse_failure: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            mode: AgentMode::Cot,
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            max_tokens: 512,
            intents: Intent::TRAINABLE.to_vec(),
            reask_on_parse_failure: false,
        }
    }
}

const FORMAT_REMINDER: &str =
    "Remember to answer in exactly this format:\nThought: <thought>\nResponse: <response>";

/// Take one agent turn: append the user utterance, query the backend, parse
/// and classify, and return the step with the successor state.
pub fn agent_step(
    state: &AgentState,
    user_utterance: &str,
    backend: &Backend,
    cfg: &AgentConfig,
) -> Result<(AgentStep, AgentState), AgentError> {
    if state.handover {
        return Err(AgentError::StepAfterHandover);
    }
    let mut next = state.clone();
    next.history.push(Turn {
        index: next.history.len(),
        speaker: Speaker::User,
        text: user_utterance.trim().to_string(),
    });

    let step = match cfg.mode {
        AgentMode::Cot => cot_step(&next, backend, cfg)?,
        AgentMode::Baseline => baseline_step(&next, backend, cfg)?,
    };

    if step.policy.kind() == crate::core::PolicyKind::ContinueTopic
        && next.current_topic.is_none()
    {
        next.violations.push(format!(
            "turn {}: continue-topic before any pivot",
            next.history.len()
        ));
    }
    if let Some(intent) = step.policy.intent() {
        next.current_topic = Some(intent);
    }
    next.history.push(Turn {
        index: next.history.len(),
        speaker: Speaker::Agent,
        text: step.response_text.clone(),
    });
    next.policy_trace.push(step.policy);
    next.handover = is_handover(&step);
    Ok((step, next))
}

fn cot_step(state: &AgentState, backend: &Backend, cfg: &AgentConfig) -> Result<AgentStep, AgentError> {
    let prompt = promptkit::render_agent_prompt(&state.history, &cfg.intents)?;
    let mut messages = vec![ChatMessage::user(prompt)];
    let mut attempts = 0;
    loop {
        attempts += 1;
        let response = backend.complete(&CompletionRequest {
            messages: messages.clone(),
            model_name: cfg.model_name.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            seed: None,
        })?;
        let raw = response.text;
        match parse_agent_output(&raw).and_then(|(thought, reply)| {
            let policy = classify_thought(&thought)?;
            Ok(AgentStep {
                thought_text: thought,
                policy,
                response_text: reply,
                raw_output: raw.clone(),
                baseline_surrogate: false,
            })
        }) {
            Ok(step) => return Ok(step),
            Err(e) if cfg.reask_on_parse_failure && attempts == 1 => {
                let _ = e;
                messages.push(ChatMessage::assistant(raw));
                messages.push(ChatMessage::user(FORMAT_REMINDER));
            }
            Err(e) => return Err(e),
        }
    }
}

fn baseline_step(
    state: &AgentState,
    backend: &Backend,
    cfg: &AgentConfig,
) -> Result<AgentStep, AgentError> {
    let mut messages = vec![ChatMessage::system(promptkit::render_baseline_prompt(&cfg.intents)?)];
    for turn in &state.history {
        messages.push(match turn.speaker {
            Speaker::User => ChatMessage::user(turn.text.clone()),
            Speaker::Agent => ChatMessage::assistant(turn.text.clone()),
        });
    }
    let response = backend.complete(&CompletionRequest {
        messages,
        model_name: cfg.model_name.clone(),
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        seed: None,
    })?;
    let raw = response.text;
    // No thought to classify; the handover sentence maps to a synthetic
    // explicit-intent policy when a topic is known.
    let policy = if handover_marker_regex().is_match(&raw) {
        match state.current_topic {
            Some(topic) => Policy::ExplicitIntent(topic),
            None => Policy::ContinueChitChat,
        }
    } else {
        Policy::ContinueChitChat
    };
    Ok(AgentStep {
        thought_text: String::new(),
        policy,
        response_text: raw.trim().to_string(),
        raw_output: raw,
        baseline_surrogate: true,
    })
}

/// Wire form of one step inside a transcript record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub thought: String,
    /// Policy kind name, or null when the step was unclassifiable.
    pub policy: Option<String>,
    pub intent: Option<String>,
    pub response: String,
}

impl StepRecord {
    pub fn from_step(step: &AgentStep) -> StepRecord {
        StepRecord {
            thought: step.thought_text.clone(),
            policy: Some(step.policy.kind().name().to_string()),
            intent: step.policy.intent().map(|i| i.canonical_name().to_string()),
            response: step.response_text.clone(),
        }
    }

    pub fn policy(&self) -> Option<Policy> {
        let kind = match self.policy.as_deref()? {
            "ContinueChitChat" => crate::core::PolicyKind::ContinueChitChat,
            "PivotToIntent" => crate::core::PolicyKind::PivotToIntent,
            "ContinueTopic" => crate::core::PolicyKind::ContinueTopic,
            "ExplicitIntent" => crate::core::PolicyKind::ExplicitIntent,
            _ => return None,
        };
        let intent = match &self.intent {
            Some(name) => Some(canonicalize_intent(name).ok()?),
            None => None,
        };
        Policy::from_parts(kind, intent)
    }
}

/// A finished conversation with per-turn agent annotations, plus the arena
/// tags when it came from a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub dialogue: Dialogue,
    pub steps: Vec<StepRecord>,
    pub handover: bool,
    pub truncated: bool,
    pub persona_id: Option<String>,
    pub preference_kind: Option<PreferenceKind>,
    pub repeat_index: Option<u32>,
    pub error: Option<String>,
}

/// Wire form: the core dialogue record extended with `steps` and flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    #[serde(flatten)]
    pub dialogue: DialogueRecord,
    #[serde(default)]
    pub steps: Vec<StepRecord>,
    #[serde(default)]
    pub handover: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference_kind: Option<PreferenceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Transcript {
    pub fn to_record(&self) -> TranscriptRecord {
        TranscriptRecord {
            dialogue: DialogueRecord::from_dialogue(&self.dialogue),
            steps: self.steps.clone(),
            handover: self.handover,
            truncated: self.truncated,
            persona_id: self.persona_id.clone(),
            preference_kind: self.preference_kind,
            repeat_index: self.repeat_index,
            error: self.error.clone(),
        }
    }

    pub fn from_record(record: TranscriptRecord) -> Result<Transcript, CoreError> {
        Ok(Transcript {
            dialogue: record.dialogue.into_dialogue()?,
            steps: record.steps,
            handover: record.handover,
            truncated: record.truncated,
            persona_id: record.persona_id,
            preference_kind: record.preference_kind,
            repeat_index: record.repeat_index,
            error: record.error,
        })
    }

    /// Indices of agent turns, in order; the k-th step annotates the k-th
    /// agent turn.
    pub fn agent_turn_indices(&self) -> Vec<usize> {
        self.dialogue
            .turns
            .iter()
            .filter(|t| t.speaker == Speaker::Agent)
            .map(|t| t.index)
            .collect()
    }
}

pub fn write_transcripts(path: &std::path::Path, transcripts: &[Transcript]) -> Result<(), CoreError> {
    use std::io::Write;
    let file = std::fs::File::create(path)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let mut writer = std::io::BufWriter::new(file);
    for t in transcripts {
        serde_json::to_writer(&mut writer, &t.to_record())
            .map_err(|e| CoreError::Serialize { message: e.to_string() })?;
        writer
            .write_all(b"\n")
            .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    }
    writer
        .flush()
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })
}

pub fn read_transcripts(path: &std::path::Path) -> Result<Vec<Transcript>, CoreError> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord =
            serde_json::from_str(&line).map_err(|e| CoreError::Parse {
                path: path.display().to_string(),
                line: line_no + 1,
                message: e.to_string(),
            })?;
        out.push(Transcript::from_record(record)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::core::PolicyKind;

    #[test]
    fn parses_thought_then_response() {
        let (t, r) = parse_agent_output("Thought: T\nResponse: R").unwrap();
        assert_eq!((t.as_str(), r.as_str()), ("T", "R"));
    }

    #[test]
    fn rejects_out_of_order_labels() {
        assert!(matches!(
            parse_agent_output("Response: R\nThought: T"),
            Err(AgentError::ParseFailure { .. })
        ));
        assert!(parse_agent_output("no labels at all").is_err());
        assert!(parse_agent_output("Thought: only a thought").is_err());
    }

    #[test]
    fn thought_may_span_lines() {
        let (t, r) = parse_agent_output("Thought: multi\nline\nResponse: R").unwrap();
        assert_eq!(t, "multi\nline");
        assert_eq!(r, "R");
    }

    #[test]
    fn parse_tolerates_surrounding_whitespace() {
        let (t, r) = parse_agent_output("\n  Thought:   T  \nResponse:  R \n\n").unwrap();
        assert_eq!((t.as_str(), r.as_str()), ("T", "R"));
    }

    #[test]
    fn classifies_the_four_canonical_thoughts() {
        let chitchat =
            "The user did not implicitly mention any potential intent, I should continue the chit-chat.";
        assert_eq!(classify_thought(chitchat).unwrap(), Policy::ContinueChitChat);

        let pivot = "The user implicitly mentioned the intent of FindMovie. I should smoothly pivot the conversation to the topic of FindMovie.";
        assert_eq!(classify_thought(pivot).unwrap(), Policy::PivotToIntent(Intent::FindMovie));

        let topic = "The user did not change the topic of SearchHotel. I should continue the topic.";
        assert_eq!(classify_thought(topic).unwrap(), Policy::ContinueTopic(Intent::SearchHotel));

        let explicit = "The user has explicitly shown his/her intent of FindEvents.";
        assert_eq!(classify_thought(explicit).unwrap(), Policy::ExplicitIntent(Intent::FindEvents));
    }

    #[test]
    fn classify_round_trips_every_rendered_thought() {
        let mut cases = vec![Policy::ContinueChitChat];
        for intent in Intent::TRAINABLE {
            cases.push(Policy::PivotToIntent(intent));
            cases.push(Policy::ContinueTopic(intent));
            cases.push(Policy::ExplicitIntent(intent));
        }
        for policy in cases {
            assert_eq!(classify_thought(&render_thought(&policy)).unwrap(), policy);
        }
    }

    #[test]
    fn unrelated_text_is_unclassifiable() {
        assert!(matches!(
            classify_thought("I like pancakes."),
            Err(AgentError::Unclassifiable { .. })
        ));
    }

    #[test]
    fn unknown_intent_slot_is_reported() {
        let thought = "The user has explicitly shown his/her intent of BakingBread.";
        assert!(matches!(
            classify_thought(thought),
            Err(AgentError::UnknownIntent { name, .. }) if name == "BakingBread"
        ));
    }

    #[test]
    fn classify_tolerates_light_paraphrase_around_the_slot() {
        let spaced = "The user implicitly mentioned the intent of Find Movie. I should smoothly pivot the conversation to the topic of Find Movie.";
        assert_eq!(classify_thought(spaced).unwrap(), Policy::PivotToIntent(Intent::FindMovie));

        let trailing = "I should smoothly pivot the conversation to the topic of FindMovie right away";
        assert_eq!(classify_thought(trailing).unwrap(), Policy::PivotToIntent(Intent::FindMovie));
    }

    #[test]
    fn handover_detection_covers_policy_and_marker() {
        let explicit = AgentStep {
            thought_text: String::new(),
            policy: Policy::ExplicitIntent(Intent::SearchHotel),
            response_text: "Let me hand you over.".into(),
            raw_output: String::new(),
            baseline_surrogate: false,
        };
        assert!(is_handover(&explicit));

        let marker = AgentStep {
            policy: Policy::ContinueChitChat,
            response_text: "Proceed to task oriented dialog agent".into(),
            ..explicit.clone()
        };
        assert!(is_handover(&marker));
        let marker2 = AgentStep {
            response_text: "proceed to task-oriented dialogue.".into(),
            ..marker.clone()
        };
        assert!(is_handover(&marker2));

        let plain = AgentStep {
            policy: Policy::ContinueChitChat,
            response_text: "Nice weather today!".into(),
            ..explicit
        };
        assert!(!is_handover(&plain));
    }

    fn scripted(replies: &[&str]) -> Backend {
        Backend::from_mock(MockBackend::queued(replies.iter().copied()))
    }

    #[test]
    fn step_records_policy_and_sets_handover() {
        let backend = scripted(&[
            "Thought: The user has explicitly shown his/her intent of SearchHotel.\nResponse: Proceed to task oriented dialog agent",
        ]);
        let cfg = AgentConfig::default();
        let state = AgentState::new();
        let (step, next) = agent_step(&state, "Book me a room please", &backend, &cfg).unwrap();
        assert_eq!(step.policy, Policy::ExplicitIntent(Intent::SearchHotel));
        assert!(next.handover);
        assert_eq!(next.current_topic, Some(Intent::SearchHotel));
        assert_eq!(next.policy_trace.len(), 1);
        assert_eq!(next.history.len(), 2);

        let err = agent_step(&next, "hello?", &backend, &cfg).unwrap_err();
        assert!(matches!(err, AgentError::StepAfterHandover));
    }

    #[test]
    fn continue_topic_without_pivot_is_flagged() {
        let backend = scripted(&[
            "Thought: The user did not change the topic of FindMovie. I should continue the topic.\nResponse: Seen any good films?",
        ]);
        let cfg = AgentConfig::default();
        let (step, next) = agent_step(&AgentState::new(), "hi", &backend, &cfg).unwrap();
        assert_eq!(step.policy.kind(), PolicyKind::ContinueTopic);
        assert_eq!(next.violations.len(), 1);
        assert!(!next.handover);
    }

    #[test]
    fn parse_failure_carries_raw_output() {
        let backend = scripted(&["no labels here"]);
        let cfg = AgentConfig::default();
        let err = agent_step(&AgentState::new(), "hi", &backend, &cfg).unwrap_err();
        assert!(matches!(err, AgentError::ParseFailure { raw } if raw == "no labels here"));
    }

    #[test]
    fn reask_recovers_from_one_bad_reply() {
        let backend = scripted(&[
            "oops",
            "Thought: The user did not implicitly mention any potential intent, I should continue the chit-chat.\nResponse: How is your day?",
        ]);
        let cfg = AgentConfig { reask_on_parse_failure: true, ..AgentConfig::default() };
        let (step, _) = agent_step(&AgentState::new(), "hi", &backend, &cfg).unwrap();
        assert_eq!(step.policy, Policy::ContinueChitChat);
    }

    #[test]
    fn baseline_marker_maps_to_surrogate_policy() {
        let backend = scripted(&["Sure thing. Proceed to task oriented dialog agent."]);
        let cfg = AgentConfig { mode: AgentMode::Baseline, ..AgentConfig::default() };
        let mut state = AgentState::new();
        state.current_topic = Some(Intent::FindRestaurants);
        let (step, next) = agent_step(&state, "I want a table for two", &backend, &cfg).unwrap();
        assert!(step.baseline_surrogate);
        assert_eq!(step.policy, Policy::ExplicitIntent(Intent::FindRestaurants));
        assert!(next.handover);
    }

    #[test]
    fn baseline_marker_without_topic_still_hands_over() {
        let backend = scripted(&["Proceed to task oriented dialog agent."]);
        let cfg = AgentConfig { mode: AgentMode::Baseline, ..AgentConfig::default() };
        let (step, next) = agent_step(&AgentState::new(), "hello", &backend, &cfg).unwrap();
        assert_eq!(step.policy, Policy::ContinueChitChat);
        assert!(is_handover(&step));
        assert!(next.handover);
    }

    #[test]
    fn step_record_round_trips_policy() {
        let step = AgentStep {
            thought_text: "t".into(),
            policy: Policy::PivotToIntent(Intent::LookupMusic),
            response_text: "r".into(),
            raw_output: "raw".into(),
            baseline_surrogate: false,
        };
        let record = StepRecord::from_step(&step);
        assert_eq!(record.policy(), Some(Policy::PivotToIntent(Intent::LookupMusic)));
        let chitchat = StepRecord {
            thought: String::new(),
            policy: Some("ContinueChitChat".into()),
            intent: None,
            response: "r".into(),
        };
        assert_eq!(chitchat.policy(), Some(Policy::ContinueChitChat));
        let broken = StepRecord { policy: None, ..chitchat };
        assert_eq!(broken.policy(), None);
    }
}
