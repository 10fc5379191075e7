//! Workflow-level actions and their binary mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "OBSERVE")]
    Observe,
    #[serde(rename = "TREAT_S")]
    TreatS,
    #[serde(rename = "INVESTIGATE_O")]
    InvestigateO,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Observe, Action::TreatS, Action::InvestigateO];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Observe => "OBSERVE",
            Action::TreatS => "TREAT_S",
            Action::InvestigateO => "INVESTIGATE_O",
        }
    }

    /// `INVESTIGATE_O` is the positive (deterioration) prediction.
    pub fn prediction(self) -> Prediction {
        match self {
            Action::InvestigateO => Prediction::Positive,
            Action::Observe | Action::TreatS => Prediction::Negative,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| format!("`{s}` is not one of OBSERVE, TREAT_S, INVESTIGATE_O"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Prediction {
    Positive,
    Negative,
    Invalid,
}

impl Prediction {
    pub fn is_valid(self) -> bool {
        self != Prediction::Invalid
    }
}

impl From<Option<Action>> for Prediction {
    fn from(action: Option<Action>) -> Self {
        action.map(Action::prediction).unwrap_or(Prediction::Invalid)
    }
}
