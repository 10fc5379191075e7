//! Five-level severity rubric: schema, programmatic state assignment and the
//! bounded merge of remote transition candidates.

mod merge;
mod rules;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::ClinicalDomain;

pub use merge::{constrained_merge, MergeOutcome, MERGE_MARKER};
pub use rules::{assign_initial_state, assign_state, recompute_state, RuleThresholds};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub severity: u8,
    pub description: String,
    #[serde(default)]
    pub evidence_requirements: Vec<ClinicalDomain>,
}

#[derive(Debug, thiserror::Error)]
pub enum RubricError {
    #[error("cannot read rubric {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("rubric is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rubric severities must be exactly 1..=5, found {0:?}")]
    Severities(Vec<u8>),
    #[error("rubric category name `{0}` is duplicated")]
    DuplicateName(String),
    #[error("rubric category name `{0}` must be a non-empty upper-case identifier")]
    BadName(String),
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    rubric_schema: Vec<Category>,
}

/// A validated rubric, stored from highest to lowest severity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RubricSchema {
    categories: Vec<Category>,
}

const DEFAULT_SCHEMA: &str = include_str!("default_schema.json");

impl Default for RubricSchema {
    fn default() -> Self {
        Self::from_json_str(DEFAULT_SCHEMA).expect("embedded rubric is valid")
    }
}

impl RubricSchema {
    pub fn new(mut categories: Vec<Category>) -> Result<Self, RubricError> {
        let mut severities: Vec<u8> = categories.iter().map(|c| c.severity).collect();
        severities.sort_unstable();
        if severities != [1, 2, 3, 4, 5] {
            return Err(RubricError::Severities(severities));
        }
        let mut seen = BTreeSet::new();
        for c in &categories {
            let ok = !c.name.is_empty()
                && c.name
                    .chars()
                    .all(|ch| ch.is_ascii_uppercase() || ch == '_' || ch.is_ascii_digit());
            if !ok {
                return Err(RubricError::BadName(c.name.clone()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(RubricError::DuplicateName(c.name.clone()));
            }
        }
        categories.sort_by_key(|c| std::cmp::Reverse(c.severity));
        Ok(RubricSchema { categories })
    }

    pub fn from_json_str(text: &str) -> Result<Self, RubricError> {
        let doc: SchemaDoc = serde_json::from_str(text)?;
        Self::new(doc.rubric_schema)
    }

    pub fn load(path: &Path) -> Result<Self, RubricError> {
        let text = std::fs::read_to_string(path).map_err(|e| RubricError::Io(path.display().to_string(), e))?;
        Self::from_json_str(&text)
    }

    /// Canonical pretty JSON, `{"rubric_schema": [...]}`.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SchemaDoc {
            rubric_schema: self.categories.clone(),
        })
        .expect("schema serializes")
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.name.as_str())
    }

    pub fn by_name(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn by_severity(&self, severity: u8) -> &Category {
        self.categories
            .iter()
            .find(|c| c.severity == severity)
            .unwrap_or_else(|| panic!("validated schema lacks severity {severity}"))
    }

    /// State at `severity` carrying the given reason.
    pub fn state(&self, severity: u8, matched: bool, reason: impl Into<String>) -> RubricState {
        RubricState {
            matched,
            category: self.by_severity(severity).name.clone(),
            severity,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricState {
    pub matched: bool,
    pub category: String,
    pub severity: u8,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteAdvisory {
    pub transition_candidates: Vec<String>,
    pub transition_guidance: String,
    pub transition_reasoning: String,
}

impl RemoteAdvisory {
    pub fn is_empty(&self) -> bool {
        self.transition_candidates.is_empty()
    }
}
