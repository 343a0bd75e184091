//! Persona profiles that drive the user simulator.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CoreError, Intent};

/// How many of the six trainable intents the simulated user refuses to
/// discuss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PreferenceKind {
    #[serde(rename = "no_preference")]
    NoPreference,
    #[serde(rename = "not_interested_2")]
    NotInterested2,
    #[serde(rename = "not_interested_4")]
    NotInterested4,
    #[serde(rename = "not_interested_all")]
    NotInterestedAll,
}

impl PreferenceKind {
    pub const ALL: [PreferenceKind; 4] = [
        PreferenceKind::NoPreference,
        PreferenceKind::NotInterested2,
        PreferenceKind::NotInterested4,
        PreferenceKind::NotInterestedAll,
    ];

    /// Size of the not-interested set the kind mandates.
    pub fn refusal_count(self) -> usize {
        match self {
            PreferenceKind::NoPreference => 0,
            PreferenceKind::NotInterested2 => 2,
            PreferenceKind::NotInterested4 => 4,
            PreferenceKind::NotInterestedAll => 6,
        }
    }
}

/// A persona paragraph plus the topics its bearer refuses to engage with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub persona_text: String,
    pub preference_kind: PreferenceKind,
    pub not_interested: BTreeSet<Intent>,
}

impl PersonaProfile {
    pub fn new(
        persona_text: impl Into<String>,
        preference_kind: PreferenceKind,
        not_interested: BTreeSet<Intent>,
    ) -> Result<PersonaProfile, CoreError> {
        if not_interested.len() != preference_kind.refusal_count() {
            return Err(CoreError::PreferenceSizeMismatch {
                expected: preference_kind.refusal_count(),
                actual: not_interested.len(),
            });
        }
        if let Some(bad) = not_interested.iter().find(|i| !i.trainable()) {
            return Err(CoreError::UntrainablePreference { intent: bad.canonical_name() });
        }
        Ok(PersonaProfile {
            persona_text: persona_text.into(),
            preference_kind,
            not_interested,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refusal_counts_match_kind() {
        let none = PersonaProfile::new("p", PreferenceKind::NoPreference, BTreeSet::new());
        assert!(none.is_ok());

        let two: BTreeSet<_> = [Intent::FindMovie, Intent::SearchHotel].into_iter().collect();
        assert!(PersonaProfile::new("p", PreferenceKind::NotInterested2, two.clone()).is_ok());
        assert!(matches!(
            PersonaProfile::new("p", PreferenceKind::NotInterested4, two),
            Err(CoreError::PreferenceSizeMismatch { expected: 4, actual: 2 })
        ));

        let all: BTreeSet<_> = Intent::TRAINABLE.into_iter().collect();
        assert!(PersonaProfile::new("p", PreferenceKind::NotInterestedAll, all).is_ok());
    }

    #[test]
    fn untrainable_members_rejected() {
        let set: BTreeSet<_> = [Intent::FindMovie, Intent::FindBus].into_iter().collect();
        assert!(matches!(
            PersonaProfile::new("p", PreferenceKind::NotInterested2, set),
            Err(CoreError::UntrainablePreference { intent: "FindBus" })
        ));
    }

    #[test]
    fn kind_serializes_snake_case() {
        let json = serde_json::to_string(&PreferenceKind::NotInterested2).unwrap();
        assert_eq!(json, "\"not_interested_2\"");
        let json = serde_json::to_string(&PreferenceKind::NoPreference).unwrap();
        assert_eq!(json, "\"no_preference\"");
        let back: PreferenceKind = serde_json::from_str("\"not_interested_all\"").unwrap();
        assert_eq!(back, PreferenceKind::NotInterestedAll);
    }
}
