//! Registry of the prompt templates with slot substitution.
//!
//! Templates are data, not code: bodies live under `prompts/*.txt` and are
//! embedded at compile time. Golden-file tests guard against silent drift.
//! Substitution is a single left-to-right pass, so slot-like text inside a
//! substituted value is never re-expanded and literal braces in template
//! bodies (the judge schema is full of them) pass through untouched.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::core::{Dialogue, Intent, PersonaProfile, Turn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateId {
    Revision,
    IntentDetection,
    Continuation,
    Boundary,
    AgentCot,
    Persona,
    BaselineAgent,
    JudgeSchema,
    JudgeInstructions,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::Revision,
        TemplateId::IntentDetection,
        TemplateId::Continuation,
        TemplateId::Boundary,
        TemplateId::AgentCot,
        TemplateId::Persona,
        TemplateId::BaselineAgent,
        TemplateId::JudgeSchema,
        TemplateId::JudgeInstructions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Revision => "revision",
            TemplateId::IntentDetection => "intent_detection",
            TemplateId::Continuation => "continuation",
            TemplateId::Boundary => "boundary",
            TemplateId::AgentCot => "agent_cot",
            TemplateId::Persona => "persona",
            TemplateId::BaselineAgent => "baseline_agent",
            TemplateId::JudgeSchema => "judge_schema",
            TemplateId::JudgeInstructions => "judge_instructions",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SlotSpec {
    pub name: &'static str,
    /// Slots like the agent's dialogue history may legitimately be empty.
    pub allow_empty: bool,
}

const fn slot(name: &'static str) -> SlotSpec {
    SlotSpec { name, allow_empty: false }
}

const fn slot_may_be_empty(name: &'static str) -> SlotSpec {
    SlotSpec { name, allow_empty: true }
}

#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub id: TemplateId,
    pub body: &'static str,
    pub slots: &'static [SlotSpec],
}

static REVISION: Template = Template {
    id: TemplateId::Revision,
    body: include_str!("../prompts/revision.txt"),
    slots: &[slot("Dialogue")],
};
static INTENT_DETECTION: Template = Template {
    id: TemplateId::IntentDetection,
    body: include_str!("../prompts/intent_detection.txt"),
    slots: &[slot("Dialogue"), slot("Intent List")],
};
static CONTINUATION: Template = Template {
    id: TemplateId::Continuation,
    body: include_str!("../prompts/continuation.txt"),
    slots: &[slot("Intent"), slot("Dialogue")],
};
static BOUNDARY: Template = Template {
    id: TemplateId::Boundary,
    body: include_str!("../prompts/boundary.txt"),
    slots: &[slot("Intent"), slot("Dialogue")],
};
static AGENT_COT: Template = Template {
    id: TemplateId::AgentCot,
    body: include_str!("../prompts/agent_cot.txt"),
    slots: &[slot_may_be_empty("dialogue_history"), slot("intents")],
};
static PERSONA: Template = Template {
    id: TemplateId::Persona,
    body: include_str!("../prompts/persona.txt"),
    slots: &[slot_may_be_empty("persona"), slot_may_be_empty("intents")],
};
static BASELINE_AGENT: Template = Template {
    id: TemplateId::BaselineAgent,
    body: include_str!("../prompts/baseline_agent.txt"),
    slots: &[slot("intents")],
};
static JUDGE_SCHEMA: Template = Template {
    id: TemplateId::JudgeSchema,
    body: include_str!("../prompts/judge_schema.txt"),
    slots: &[],
};
static JUDGE_INSTRUCTIONS: Template = Template {
    id: TemplateId::JudgeInstructions,
    body: include_str!("../prompts/judge_instructions.txt"),
    slots: &[slot("dialog"), slot("eval_schema")],
};

pub fn template(id: TemplateId) -> &'static Template {
    match id {
        TemplateId::Revision => &REVISION,
        TemplateId::IntentDetection => &INTENT_DETECTION,
        TemplateId::Continuation => &CONTINUATION,
        TemplateId::Boundary => &BOUNDARY,
        TemplateId::AgentCot => &AGENT_COT,
        TemplateId::Persona => &PERSONA,
        TemplateId::BaselineAgent => &BASELINE_AGENT,
        TemplateId::JudgeSchema => &JUDGE_SCHEMA,
        TemplateId::JudgeInstructions => &JUDGE_INSTRUCTIONS,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template '{template}' is missing required slot '{slot}'")]
    MissingSlot { template: &'static str, slot: String },
    #[error("cannot render a judge prompt for an empty dialogue")]
    EmptyDialogue,
    #[error("template '{template}' is not a pipeline stage")]
    NotAPipelineStage { template: &'static str },
}

/// Single left-to-right substitution pass; inserted values are emitted
/// verbatim and never rescanned.
fn substitute(body: &str, values: &[(&str, &str)]) -> String {
    let patterns: Vec<(String, &str)> =
        values.iter().map(|(n, v)| (format!("{{{n}}}"), *v)).collect();
    let mut out = String::with_capacity(body.len() + 128);
    let mut rest = body;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        match patterns.iter().find(|(p, _)| rest.starts_with(p.as_str())) {
            Some((p, value)) => {
                out.push_str(value);
                rest = &rest[p.len()..];
            }
            None => {
                out.push('{');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Render any template from a slot map, enforcing the template's slot
/// contract.
pub fn render(id: TemplateId, slots: &BTreeMap<String, String>) -> Result<String, PromptError> {
    let template = template(id);
    let mut values: Vec<(&str, &str)> = Vec::with_capacity(template.slots.len());
    for spec in template.slots {
        let value = slots
            .get(spec.name)
            .ok_or_else(|| PromptError::MissingSlot {
                template: id.name(),
                slot: spec.name.to_string(),
            })?;
        if !spec.allow_empty && value.trim().is_empty() {
            return Err(PromptError::MissingSlot {
                template: id.name(),
                slot: spec.name.to_string(),
            });
        }
        values.push((spec.name, value.as_str()));
    }
    Ok(substitute(template.body, &values))
}

/// Render one of the four synthesis-pipeline stages.
pub fn render_pipeline_stage(
    stage: TemplateId,
    slots: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    match stage {
        TemplateId::Revision
        | TemplateId::IntentDetection
        | TemplateId::Continuation
        | TemplateId::Boundary => render(stage, slots),
        other => Err(PromptError::NotAPipelineStage { template: other.name() }),
    }
}

/// One fixed convention for dialogue text in every prompt:
/// `User: ...` / `Agent: ...`, one turn per line.
pub fn render_dialogue_lines(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn descriptions() -> &'static BTreeMap<Intent, &'static str> {
    static TABLE: OnceLock<BTreeMap<Intent, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let raw = include_str!("../prompts/intent_descriptions.txt");
        let mut map = BTreeMap::new();
        for line in raw.lines() {
            if let Some((name, desc)) = line.split_once(": ") {
                let intent = crate::core::canonicalize_intent(name)
                    .expect("intent_descriptions.txt names are canonical");
                map.insert(intent, desc);
            }
        }
        assert_eq!(map.len(), Intent::ALL.len(), "every intent needs a description");
        map
    })
}

pub fn intent_description(intent: Intent) -> &'static str {
    descriptions()[&intent]
}

/// `Name: one-line description`, the line format used for intent lists.
pub fn intent_line(intent: Intent) -> String {
    format!("{}: {}", intent.canonical_name(), intent_description(intent))
}

pub fn render_intent_list(intents: &[Intent]) -> String {
    intents.iter().map(|i| intent_line(*i)).collect::<Vec<_>>().join("\n")
}

/// The chain-of-thought prompt the sales agent answers each turn.
pub fn render_agent_prompt(history: &[Turn], intents: &[Intent]) -> Result<String, PromptError> {
    let mut slots = BTreeMap::new();
    slots.insert("dialogue_history".to_string(), render_dialogue_lines(history));
    slots.insert(
        "intents".to_string(),
        if intents.is_empty() { String::new() } else { render_intent_list(intents) },
    );
    render(TemplateId::AgentCot, &slots)
}

/// The system prompt that turns a chat model into a preference-bearing
/// simulated customer.
pub fn render_persona_prompt(profile: &PersonaProfile) -> String {
    let intents = profile
        .not_interested
        .iter()
        .map(|i| i.canonical_name())
        .collect::<Vec<_>>()
        .join(", ");
    let mut slots = BTreeMap::new();
    slots.insert("persona".to_string(), profile.persona_text.clone());
    slots.insert("intents".to_string(), intents);
    render(TemplateId::Persona, &slots).expect("persona slots are always provided")
}

/// The untuned-baseline system prompt.
pub fn render_baseline_prompt(intents: &[Intent]) -> Result<String, PromptError> {
    let mut slots = BTreeMap::new();
    slots.insert(
        "intents".to_string(),
        if intents.is_empty() { String::new() } else { render_intent_list(intents) },
    );
    render(TemplateId::BaselineAgent, &slots)
}

/// Scoring instructions with the five-criterion schema inlined.
pub fn render_judge_prompt(d: &Dialogue) -> Result<String, PromptError> {
    if d.turns.is_empty() {
        return Err(PromptError::EmptyDialogue);
    }
    let mut slots = BTreeMap::new();
    slots.insert("dialog".to_string(), render_dialogue_lines(&d.turns));
    slots.insert(
        "eval_schema".to_string(),
        template(TemplateId::JudgeSchema).body.trim_end().to_string(),
    );
    render(TemplateId::JudgeInstructions, &slots)
}
