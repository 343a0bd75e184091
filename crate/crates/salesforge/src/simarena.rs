//! Persona generation, preference assignment, the user simulator, and the
//! agent-vs-simulator arena.
//!
//! Every random draw funnels through one seeded generator: each persona's
//! preference set is derived from the arena seed and persona index, so the
//! same profile drives all of that persona's repeats, and reruns with the
//! same seed reproduce the same allocation.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{agent_step, AgentConfig, AgentError, AgentState, StepRecord, Transcript};
use crate::backend::{Backend, BackendError, ChatMessage, CompletionRequest};
use crate::core::{
    CoreError, Dialogue, Intent, PersonaProfile, PreferenceKind, Source, Speaker, Turn,
};
use crate::promptkit::{self, PromptError};
use crate::util::{normalized_similarity, parallel_map, strip_stage_directions};

#[derive(Debug, thiserror::Error)]
pub enum ArenaError {
    #[error("persona bank is empty")]
    EmptyBank,
    #[error("persona bank holds {have} personas, need {need}")]
    InsufficientBank { have: usize, need: usize },
    #[error("max_turns must be at least 2, got {max_turns}")]
    BadMaxTurns { max_turns: u32 },
    #[error("could not generate a distinct persona after {attempts} attempt(s)")]
    DistinctnessFailure { attempts: u32 },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Arena sizing: `personas x repeats` dialogues, each capped at `max_turns`
/// turns counting both speakers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArenaConfig {
    pub personas: u32,
    pub repeats: u32,
    pub max_turns: u32,
    pub seed: u64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig { personas: 50, repeats: 5, max_turns: 30, seed: 0 }
    }
}

/// User-simulator knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retries: u32,
    /// Strip `*stage directions*` from simulator output. Off by default:
    /// transcripts keep them unless asked otherwise.
    pub filter_stage_directions: bool,
    pub concurrency: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            model_name: "llama-2-7b-chat".into(),
            temperature: 0.7,
            max_tokens: 512,
            retries: 3,
            filter_stage_directions: false,
            concurrency: 4,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Per-dialogue seed derived from the arena seed, persona index, and repeat
/// index.
pub fn derive_seed(master: u64, persona_index: u64, repeat: u64) -> u64 {
    splitmix64(master ^ splitmix64(persona_index.wrapping_add(1)) ^ splitmix64(repeat.wrapping_mul(0x9e37)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaRecord {
    pub id: String,
    pub persona_text: String,
}

fn persona_generation_prompt(index: usize, total: usize) -> String {
    format!(
        "You are creating customer personas for dialogue simulation.\n\
         Write persona {index} of {total}: one paragraph describing a fictional person in the second person (\"You are ...\"), \
         covering their occupation, personality, hobbies, and manner of speaking. \
         Make this persona clearly different from any persona you have written before.\n\
         Respond with only the paragraph."
    )
}

/// Ask the backend for `n` distinct one-paragraph personas. Distinctness is
/// pairwise normalized similarity below 0.9; near-duplicates are re-prompted
/// up to the retry budget.
pub fn build_persona_bank(
    n: usize,
    backend: &Backend,
    seed: u64,
    cfg: &SimConfig,
) -> Result<Vec<PersonaRecord>, ArenaError> {
    let mut bank: Vec<PersonaRecord> = Vec::with_capacity(n);
    for index in 0..n {
        let mut accepted = None;
        for attempt in 1..=cfg.retries {
            let response = backend.complete(&CompletionRequest {
                messages: vec![ChatMessage::user(persona_generation_prompt(index + 1, n))],
                model_name: cfg.model_name.clone(),
                temperature: cfg.temperature,
                max_tokens: cfg.max_tokens,
                seed: Some(derive_seed(seed, index as u64, attempt as u64)),
            })?;
            let text = response.text.trim().to_string();
            let distinct = bank
                .iter()
                .all(|p| normalized_similarity(&p.persona_text, &text) < 0.9);
            if distinct {
                accepted = Some(text);
                break;
            }
        }
        match accepted {
            Some(text) => bank.push(PersonaRecord {
                id: format!("persona-{index:03}"),
                persona_text: text,
            }),
            None => return Err(ArenaError::DistinctnessFailure { attempts: cfg.retries }),
        }
    }
    Ok(bank)
}

pub fn save_persona_bank(path: &Path, bank: &[PersonaRecord]) -> Result<(), CoreError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let mut writer = std::io::BufWriter::new(file);
    for record in bank {
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

pub fn load_persona_bank(path: &Path) -> Result<Vec<PersonaRecord>, CoreError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
    let reader = std::io::BufReader::new(file);
    let mut bank = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        bank.push(serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            message: e.to_string(),
        })?);
    }
    Ok(bank)
}

/// Sample the not-interested set for a preference kind without replacement
/// from the six trainable intents. Deterministic given the rng state.
pub fn assign_preferences(
    persona_text: &str,
    kind: PreferenceKind,
    rng: &mut impl Rng,
) -> PersonaProfile {
    let mut pool: Vec<Intent> = Intent::TRAINABLE.to_vec();
    let count = kind.refusal_count();
    for k in 0..count {
        let j = rng.gen_range(k..pool.len());
        pool.swap(k, j);
    }
    let set: BTreeSet<Intent> = pool.into_iter().take(count).collect();
    PersonaProfile::new(persona_text, kind, set).expect("sample sizes match the kind")
}

/// One simulator utterance given the conversation so far. From the
/// simulator's side the agent's turns are the interlocutor.
pub fn user_step(
    profile: &PersonaProfile,
    history: &[Turn],
    backend: &Backend,
    cfg: &SimConfig,
) -> Result<String, ArenaError> {
    let mut messages = vec![ChatMessage::system(promptkit::render_persona_prompt(profile))];
    for turn in history {
        messages.push(match turn.speaker {
            Speaker::Agent => ChatMessage::user(turn.text.clone()),
            Speaker::User => ChatMessage::assistant(turn.text.clone()),
        });
    }
    let response = backend.complete(&CompletionRequest {
        messages,
        model_name: cfg.model_name.clone(),
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        seed: None,
    })?;
    let text = if cfg.filter_stage_directions {
        strip_stage_directions(&response.text)
    } else {
        response.text.trim().to_string()
    };
    Ok(text)
}

/// Run one agent-vs-simulator conversation. The user opens; the loop ends on
/// handover or at the turn ceiling. Step failures do not lose the dialogue:
/// it is emitted truncated with the error recorded.
pub fn run_dialogue(
    dialogue_id: impl Into<String>,
    profile: &PersonaProfile,
    agent_backend: &Backend,
    user_backend: &Backend,
    agent_cfg: &AgentConfig,
    sim_cfg: &SimConfig,
    max_turns: u32,
) -> Result<Transcript, ArenaError> {
    if max_turns < 2 {
        return Err(ArenaError::BadMaxTurns { max_turns });
    }
    let dialogue_id = dialogue_id.into();
    let mut state = AgentState::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut truncated = false;
    let mut error = None;

    loop {
        if state.handover {
            break;
        }
        // A user/agent pair needs two slots; stop cleanly when it cannot fit.
        if state.history.len() + 2 > max_turns as usize {
            truncated = true;
            break;
        }
        let utterance = match user_step(profile, &state.history, user_backend, sim_cfg) {
            Ok(u) => u,
            Err(e) => {
                truncated = true;
                error = Some(format!("user step: {e}"));
                break;
            }
        };
        match agent_step(&state, &utterance, agent_backend, agent_cfg) {
            Ok((step, next)) => {
                steps.push(StepRecord::from_step(&step));
                state = next;
            }
            Err(e) => {
                truncated = true;
                error = Some(format!("agent step: {e}"));
                break;
            }
        }
    }

    let dialogue = Dialogue::new(
        dialogue_id,
        Source::Simulated,
        state.history.iter().map(|t| (t.speaker, t.text.clone())).collect(),
        state.current_topic,
        None,
    )?;
    Ok(Transcript {
        dialogue,
        steps,
        handover: state.handover,
        truncated,
        persona_id: None,
        preference_kind: Some(profile.preference_kind),
        repeat_index: None,
        error,
    })
}

/// A dialogue slot that failed outright (before any turn could be emitted).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArenaReject {
    pub persona_id: String,
    pub repeat_index: u32,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArenaManifest {
    pub config: ArenaConfig,
    pub derived_seeds: Vec<u64>,
    pub expected: usize,
    pub completed: usize,
    pub quarantined: usize,
    pub truncated: usize,
    pub preference_kinds: Vec<(String, PreferenceKind)>,
}

#[derive(Debug)]
pub struct ArenaOutcome {
    pub transcripts: Vec<Transcript>,
    pub rejects: Vec<ArenaReject>,
    pub manifest: ArenaManifest,
}

/// The full protocol: for each of the first `cfg.personas` bank entries,
/// draw a preference kind and set (fixed across that persona's repeats), then
/// run `cfg.repeats` dialogues each.
pub fn run_arena(
    cfg: &ArenaConfig,
    bank: &[PersonaRecord],
    agent_backend: &Backend,
    user_backend: &Backend,
    agent_cfg: &AgentConfig,
    sim_cfg: &SimConfig,
) -> Result<ArenaOutcome, ArenaError> {
    if bank.is_empty() || cfg.personas == 0 {
        return Err(ArenaError::EmptyBank);
    }
    if bank.len() < cfg.personas as usize {
        return Err(ArenaError::InsufficientBank { have: bank.len(), need: cfg.personas as usize });
    }

    let mut profiles: Vec<(String, PersonaProfile)> = Vec::new();
    for (i, record) in bank.iter().take(cfg.personas as usize).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64, 0));
        let kind = PreferenceKind::ALL[rng.gen_range(0..PreferenceKind::ALL.len())];
        let profile = assign_preferences(&record.persona_text, kind, &mut rng);
        profiles.push((record.id.clone(), profile));
    }

    let mut slots: Vec<(usize, u32)> = Vec::new();
    for i in 0..cfg.personas as usize {
        for r in 0..cfg.repeats {
            slots.push((i, r));
        }
    }
    let workers = if agent_backend.is_mock() || user_backend.is_mock() {
        1
    } else {
        sim_cfg.concurrency.max(1)
    };

    let results = parallel_map(&slots, workers, |(i, r)| {
        let (persona_id, profile) = &profiles[*i];
        let id = format!("{persona_id}-r{r}");
        run_dialogue(id, profile, agent_backend, user_backend, agent_cfg, sim_cfg, cfg.max_turns)
            .map(|mut t| {
                t.persona_id = Some(persona_id.clone());
                t.repeat_index = Some(*r);
                t
            })
            .map_err(|e| ArenaReject {
                persona_id: persona_id.clone(),
                repeat_index: *r,
                error: e.to_string(),
            })
    });

    let mut transcripts = Vec::new();
    let mut rejects = Vec::new();
    for result in results {
        match result {
            Ok(t) => transcripts.push(t),
            Err(r) => rejects.push(r),
        }
    }
    let manifest = ArenaManifest {
        config: cfg.clone(),
        derived_seeds: slots
            .iter()
            .map(|(i, r)| derive_seed(cfg.seed, *i as u64, *r as u64 + 1))
            .collect(),
        expected: slots.len(),
        completed: transcripts.len(),
        quarantined: rejects.len(),
        truncated: transcripts.iter().filter(|t| t.truncated).count(),
        preference_kinds: profiles
            .iter()
            .map(|(id, p)| (id.clone(), p.preference_kind))
            .collect(),
    };
    Ok(ArenaOutcome { transcripts, rejects, manifest })
}
