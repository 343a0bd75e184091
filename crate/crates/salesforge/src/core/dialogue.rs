//! Dialogues, turns, and transition-boundary segmentation.

use serde::{Deserialize, Serialize};

use super::{CoreError, Intent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Agent,
}

impl Speaker {
    pub fn name(self) -> &'static str {
        match self {
            Speaker::User => "User",
            Speaker::Agent => "Agent",
        }
    }
}

impl std::fmt::Display for Speaker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A single utterance. `index` always equals the turn's position in its
/// containing dialogue; `text` is stored with surrounding whitespace trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
}

/// Where a dialogue came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    SalesBot1,
    SalesBot2,
    Generated,
    Simulated,
}

/// An ordered conversation, optionally annotated with a detected intent and
/// the index of the first user turn that explicitly mentions it.
///
/// Turns alternate speakers (either speaker may open). The transition segment
/// starts at `boundary_index` inclusive: the trigger turn begins the sales
/// transition, and chit-chat is everything strictly before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
    pub intent: Option<Intent>,
    pub boundary_index: Option<usize>,
    pub source: Source,
}

impl Dialogue {
    /// Build a dialogue from raw (speaker, text) pairs, normalizing as we go:
    /// texts are trimmed, consecutive same-speaker turns are merged with a
    /// newline (source data is noisy), indices are assigned positionally, and
    /// the boundary annotation is validated against the merged turn list.
    ///
    /// `boundary_index`, when given, refers to a position in the *input* turn
    /// list and is remapped through any merges.
    pub fn new(
        id: impl Into<String>,
        source: Source,
        raw_turns: Vec<(Speaker, String)>,
        intent: Option<Intent>,
        boundary_index: Option<usize>,
    ) -> Result<Dialogue, CoreError> {
        let id = id.into();
        let mut turns: Vec<Turn> = Vec::with_capacity(raw_turns.len());
        // Remaps input positions to merged positions for the boundary check.
        let mut index_map: Vec<usize> = Vec::with_capacity(raw_turns.len());

        for (raw_index, (speaker, text)) in raw_turns.into_iter().enumerate() {
            let text = text.trim().to_string();
            if text.is_empty() {
                return Err(CoreError::EmptyTurnText { index: raw_index });
            }
            match turns.last_mut() {
                Some(last) if last.speaker == speaker => {
                    last.text.push('\n');
                    last.text.push_str(&text);
                    index_map.push(turns.len() - 1);
                }
                _ => {
                    turns.push(Turn {
                        index: turns.len(),
                        speaker,
                        text,
                    });
                    index_map.push(turns.len() - 1);
                }
            }
        }

        let boundary_index = match boundary_index {
            Some(raw) => {
                let mapped = *index_map
                    .get(raw)
                    .ok_or(CoreError::BoundaryOutOfRange { index: raw, turns: index_map.len() })?;
                Some(mapped)
            }
            None => None,
        };

        let dialogue = Dialogue {
            id,
            turns,
            intent,
            boundary_index,
            source,
        };
        dialogue.validate()?;
        Ok(dialogue)
    }

    /// Check the annotation invariants: a boundary needs an intent, must be in
    /// range, and must sit on a user turn.
    pub fn validate(&self) -> Result<(), CoreError> {
        if let Some(b) = self.boundary_index {
            if self.intent.is_none() {
                return Err(CoreError::BoundaryWithoutIntent { id: self.id.clone() });
            }
            let turn = self
                .turns
                .get(b)
                .ok_or(CoreError::BoundaryOutOfRange { index: b, turns: self.turns.len() })?;
            if turn.speaker != Speaker::User {
                return Err(CoreError::BoundaryNotUserTurn { index: b });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn last_speaker(&self) -> Option<Speaker> {
        self.turns.last().map(|t| t.speaker)
    }
}

/// Split a dialogue at its transition boundary.
///
/// Chit-chat is everything strictly before the boundary turn; the transition
/// segment starts at the boundary turn itself. Concatenating the two slices
/// reproduces the original turn list.
pub fn segment_dialogue(d: &Dialogue) -> Result<(&[Turn], &[Turn]), CoreError> {
    let boundary = d.boundary_index.ok_or(CoreError::MissingBoundary { id: d.id.clone() })?;
    if boundary > d.turns.len() {
        return Err(CoreError::BoundaryOutOfRange { index: boundary, turns: d.turns.len() });
    }
    Ok(d.turns.split_at(boundary))
}
