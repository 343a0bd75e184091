//! The four per-turn dialogue strategies the agent can take.

use serde::{Deserialize, Serialize};

use super::Intent;

/// One of the four thought types: keep chit-chatting, pivot toward a detected
/// intent, stay on the pivoted topic, or recognize an explicitly stated intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    ContinueChitChat,
    PivotToIntent(Intent),
    ContinueTopic(Intent),
    ExplicitIntent(Intent),
}

/// Policy discriminant without the intent payload, used for matching and
/// confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    ContinueChitChat,
    PivotToIntent,
    ContinueTopic,
    ExplicitIntent,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::ContinueChitChat,
        PolicyKind::PivotToIntent,
        PolicyKind::ContinueTopic,
        PolicyKind::ExplicitIntent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::ContinueChitChat => "ContinueChitChat",
            PolicyKind::PivotToIntent => "PivotToIntent",
            PolicyKind::ContinueTopic => "ContinueTopic",
            PolicyKind::ExplicitIntent => "ExplicitIntent",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::ContinueChitChat => PolicyKind::ContinueChitChat,
            Policy::PivotToIntent(_) => PolicyKind::PivotToIntent,
            Policy::ContinueTopic(_) => PolicyKind::ContinueTopic,
            Policy::ExplicitIntent(_) => PolicyKind::ExplicitIntent,
        }
    }

    /// The intent carried by the policy; `None` only for chit-chat.
    pub fn intent(&self) -> Option<Intent> {
        match self {
            Policy::ContinueChitChat => None,
            Policy::PivotToIntent(i) | Policy::ContinueTopic(i) | Policy::ExplicitIntent(i) => {
                Some(*i)
            }
        }
    }

    pub fn from_parts(kind: PolicyKind, intent: Option<Intent>) -> Option<Policy> {
        match (kind, intent) {
            (PolicyKind::ContinueChitChat, None) => Some(Policy::ContinueChitChat),
            (PolicyKind::PivotToIntent, Some(i)) => Some(Policy::PivotToIntent(i)),
            (PolicyKind::ContinueTopic, Some(i)) => Some(Policy::ContinueTopic(i)),
            (PolicyKind::ExplicitIntent, Some(i)) => Some(Policy::ExplicitIntent(i)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chitchat_carries_no_intent() {
        assert_eq!(Policy::ContinueChitChat.intent(), None);
        assert_eq!(Policy::PivotToIntent(Intent::FindMovie).intent(), Some(Intent::FindMovie));
    }

    #[test]
    fn parts_round_trip() {
        let all = [
            Policy::ContinueChitChat,
            Policy::PivotToIntent(Intent::SearchHotel),
            Policy::ContinueTopic(Intent::FindEvents),
            Policy::ExplicitIntent(Intent::LookupMusic),
        ];
        for p in all {
            assert_eq!(Policy::from_parts(p.kind(), p.intent()), Some(p));
        }
        assert_eq!(Policy::from_parts(PolicyKind::PivotToIntent, None), None);
        assert_eq!(
            Policy::from_parts(PolicyKind::ContinueChitChat, Some(Intent::FindBus)),
            None
        );
    }
}
