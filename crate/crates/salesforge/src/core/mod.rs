//! Domain data model shared by every other module: dialogues, turns,
//! intents, policies, personas, and report types.
//!
//! Everything here is an immutable value object; instances are safe to share
//! and send between concurrent workers without synchronization.

mod dialogue;
mod intent;
pub mod io;
mod persona;
mod policy;
mod report;

pub use dialogue::{segment_dialogue, Dialogue, Source, Speaker, Turn};
pub use intent::{canonicalize_intent, Intent};
pub use persona::{PersonaProfile, PreferenceKind};
pub use policy::{Policy, PolicyKind};
pub use report::{CorpusStats, CriterionScore, JudgeScores, TurnLevelReport};

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("unknown intent '{0}' (not one of the 11 target intents)")]
    UnknownIntent(String),
    #[error("dialogue '{id}' has no transition boundary")]
    MissingBoundary { id: String },
    #[error("boundary index {index} out of range for {turns} turns")]
    BoundaryOutOfRange { index: usize, turns: usize },
    #[error("boundary index {index} does not address a user turn")]
    BoundaryNotUserTurn { index: usize },
    #[error("dialogue '{id}' has a boundary but no intent")]
    BoundaryWithoutIntent { id: String },
    #[error("turn {index} has empty text")]
    EmptyTurnText { index: usize },
    #[error("preference set size {actual} does not match kind (expected {expected})")]
    PreferenceSizeMismatch { expected: usize, actual: usize },
    #[error("preference set contains untrainable intent {intent}")]
    UntrainablePreference { intent: &'static str },
    #[error("score '{key}' = {score} outside [0, 100]")]
    ScoreOutOfRange { key: &'static str, score: f64 },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("serialization failed: {message}")]
    Serialize { message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
