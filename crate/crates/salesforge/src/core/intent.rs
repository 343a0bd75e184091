//! The closed set of target intents and their canonicalization rules.

use serde::{Deserialize, Serialize};

use super::CoreError;

/// One of the eleven SGD-derived target intents an agent may steer toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Intent {
    FindAttraction,
    FindRestaurants,
    FindMovie,
    LookupMusic,
    SearchHotel,
    FindEvents,
    GetCarsAvailable,
    SearchRoundtripFlights,
    GetRide,
    SearchOnewayFlight,
    FindBus,
}

impl Intent {
    /// All eleven intents, in the order of the released intent distribution.
    pub const ALL: [Intent; 11] = [
        Intent::FindAttraction,
        Intent::FindRestaurants,
        Intent::FindMovie,
        Intent::LookupMusic,
        Intent::SearchHotel,
        Intent::FindEvents,
        Intent::GetCarsAvailable,
        Intent::SearchRoundtripFlights,
        Intent::GetRide,
        Intent::SearchOnewayFlight,
        Intent::FindBus,
    ];

    /// The six intents with enough data to train on; the rest are excluded
    /// from agent prompts and preference sampling.
    pub const TRAINABLE: [Intent; 6] = [
        Intent::FindAttraction,
        Intent::FindRestaurants,
        Intent::FindMovie,
        Intent::LookupMusic,
        Intent::SearchHotel,
        Intent::FindEvents,
    ];

    /// Exact PascalCase name used on the wire and in prompts.
    pub fn canonical_name(self) -> &'static str {
        match self {
            Intent::FindAttraction => "FindAttraction",
            Intent::FindRestaurants => "FindRestaurants",
            Intent::FindMovie => "FindMovie",
            Intent::LookupMusic => "LookupMusic",
            Intent::SearchHotel => "SearchHotel",
            Intent::FindEvents => "FindEvents",
            Intent::GetCarsAvailable => "GetCarsAvailable",
            Intent::SearchRoundtripFlights => "SearchRoundtripFlights",
            Intent::GetRide => "GetRide",
            Intent::SearchOnewayFlight => "SearchOnewayFlight",
            Intent::FindBus => "FindBus",
        }
    }

    pub fn trainable(self) -> bool {
        Intent::TRAINABLE.contains(&self)
    }
}

impl std::fmt::Display for Intent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl std::str::FromStr for Intent {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        canonicalize_intent(s)
    }
}

/// Resolve a loosely formatted name against the intent whitelist.
///
/// Matching trims, case-folds, and strips spaces and underscores, since LLM
/// stage outputs vary in casing and separators. Anything outside the eleven
/// canonical names is rejected.
pub fn canonicalize_intent(s: &str) -> Result<Intent, CoreError> {
    let folded = fold_name(s);
    Intent::ALL
        .iter()
        .copied()
        .find(|i| fold_name(i.canonical_name()) == folded)
        .ok_or_else(|| CoreError::UnknownIntent(s.trim().to_string()))
}

fn fold_name(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .flat_map(|c| c.to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_names_round_trip() {
        for intent in Intent::ALL {
            assert_eq!(canonicalize_intent(intent.canonical_name()).unwrap(), intent);
        }
    }

    #[test]
    fn folding_accepts_separators_and_case() {
        assert_eq!(canonicalize_intent("FindMovie").unwrap(), Intent::FindMovie);
        assert_eq!(canonicalize_intent(" find_movie ").unwrap(), Intent::FindMovie);
        assert_eq!(canonicalize_intent("findrestaurants").unwrap(), Intent::FindRestaurants);
        assert_eq!(canonicalize_intent("Search Hotel").unwrap(), Intent::SearchHotel);
    }

    #[test]
    fn rejects_names_outside_whitelist() {
        assert!(matches!(
            canonicalize_intent("TransferMoney"),
            Err(CoreError::UnknownIntent(ref s)) if s == "TransferMoney"
        ));
        assert!(canonicalize_intent("watching films").is_err());
        assert!(canonicalize_intent("").is_err());
    }

    #[test]
    fn exactly_six_trainable() {
        assert_eq!(Intent::ALL.iter().filter(|i| i.trainable()).count(), 6);
        for intent in Intent::TRAINABLE {
            assert!(intent.trainable());
        }
        assert!(!Intent::GetRide.trainable());
        assert!(!Intent::FindBus.trainable());
    }

    #[test]
    fn serializes_as_canonical_string() {
        let json = serde_json::to_string(&Intent::SearchRoundtripFlights).unwrap();
        assert_eq!(json, "\"SearchRoundtripFlights\"");
        let back: Intent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Intent::SearchRoundtripFlights);
    }
}
