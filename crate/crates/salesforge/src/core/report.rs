//! Report value types: corpus turn statistics, turn-level accuracy, and
//! judge score sheets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CoreError, Intent, PolicyKind};

/// Average segment lengths and intent coverage over a corpus.
///
/// Segments partition each dialogue, so `avg_total_turns` is exactly the sum
/// of the chit-chat and transition averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub avg_chitchat_turns: f64,
    pub avg_transition_turns: f64,
    pub avg_total_turns: f64,
    pub dialogue_count: usize,
    pub intent_histogram: BTreeMap<Intent, usize>,
}

/// Turn-level accuracy triple plus the gold-vs-predicted policy confusion
/// matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLevelReport {
    pub intent_accuracy: f64,
    pub policy_accuracy: f64,
    pub both_accuracy: f64,
    pub total_turns: usize,
    /// Gold turns that had no usable prediction; counted as mismatches.
    pub missing_predictions: usize,
    pub confusion: BTreeMap<PolicyKind, BTreeMap<PolicyKind, usize>>,
}

impl TurnLevelReport {
    /// Row totals of the confusion matrix, i.e. gold counts per policy kind
    /// among turns that had a prediction.
    pub fn gold_counts(&self) -> BTreeMap<PolicyKind, usize> {
        self.confusion
            .iter()
            .map(|(gold, row)| (*gold, row.values().sum()))
            .collect()
    }
}

/// One judged criterion: the judge's free-text reason and a score on the
/// 0-100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionScore {
    pub reason: String,
    pub score: f64,
}

/// The five-criterion judge score sheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub naturalness: CriterionScore,
    pub coherence: CriterionScore,
    pub smoothness: CriterionScore,
    pub agent_aggressiveness: CriterionScore,
    pub agent_consistency: CriterionScore,
}

impl JudgeScores {
    pub fn validate(&self) -> Result<(), CoreError> {
        for (key, c) in self.entries() {
            if !(0.0..=100.0).contains(&c.score) || !c.score.is_finite() {
                return Err(CoreError::ScoreOutOfRange { key, score: c.score });
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> [(&'static str, &CriterionScore); 5] {
        [
            ("naturalness", &self.naturalness),
            ("coherence", &self.coherence),
            ("smoothness", &self.smoothness),
            ("agent_aggressiveness", &self.agent_aggressiveness),
            ("agent_consistency", &self.agent_consistency),
        ]
    }
}
