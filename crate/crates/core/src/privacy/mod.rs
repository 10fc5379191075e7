//! Sensitivity tagging and the remote-bound payload.
//!
//! Patient values can be tagged, but only as [`Sensitivity::SensitivePatient`].
//! Metadata tags are minted from types that cannot hold patient values
//! (feature names, schema-validated category names, the schema itself), so a
//! [`RemotePayload`] can only ever hold task metadata. The outbound scan and
//! audit log sit behind that type gate as a second line of defense.

mod audit;
mod channel;
mod scan;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureName, FeatureValue};
use crate::rubric::{RubricSchema, RubricState};

pub use audit::{AuditEntry, AuditLog, Direction};
pub use channel::{PayloadRenderer, PromptRenderer, RemoteCallError, RemoteChannel};
pub use scan::{scan_outbound, tokenize, ScanResult, SensitiveCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sensitivity {
    SensitivePatient,
    TaskMetadata,
}

#[derive(Debug, Clone, PartialEq)]
enum Content {
    Patient(FeatureName, FeatureValue),
    FeatureKey(FeatureName),
    Category(String),
    Schema(String),
}

/// A value together with its sensitivity.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedValue {
    content: Content,
}

impl TaggedValue {
    /// Any value taken from a sample.
    pub fn patient(name: FeatureName, value: FeatureValue) -> Self {
        TaggedValue {
            content: Content::Patient(name, value),
        }
    }

    pub fn feature_key(name: FeatureName) -> Self {
        TaggedValue {
            content: Content::FeatureKey(name),
        }
    }

    /// A category name; only names defined by `schema` can be tagged.
    pub fn category(name: &str, schema: &RubricSchema) -> Result<Self, PrivacyError> {
        schema
            .by_name(name)
            .map(|c| TaggedValue {
                content: Content::Category(c.name.clone()),
            })
            .ok_or_else(|| PrivacyError::UnknownCategory(name.to_string()))
    }

    pub fn schema(schema: &RubricSchema) -> Self {
        TaggedValue {
            content: Content::Schema(schema.to_json_string()),
        }
    }

    pub fn sensitivity(&self) -> Sensitivity {
        match self.content {
            Content::Patient(..) => Sensitivity::SensitivePatient,
            _ => Sensitivity::TaskMetadata,
        }
    }
}

/// Every feature of a sample, tagged as patient data.
pub fn tag_sample(features: &crate::features::FeatureMap) -> Vec<TaggedValue> {
    features
        .iter()
        .map(|(name, value)| TaggedValue::patient(name, value.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrivacyError {
    #[error("refused: {0}")]
    SensitiveInput(String),
    #[error("slot `{slot}` cannot hold this kind of value")]
    WrongSlot { slot: &'static str },
    #[error("`{0}` is not a rubric category")]
    UnknownCategory(String),
    #[error("a remote channel needs a backend with the remote role")]
    LocalRole,
}

fn refuse(item: &TaggedValue, slot: &'static str) -> PrivacyError {
    match &item.content {
        // the detail names the feature, never its value
        Content::Patient(name, _) => {
            PrivacyError::SensitiveInput(format!("patient value of `{name}` offered for remote slot `{slot}`"))
        }
        _ => PrivacyError::WrongSlot { slot },
    }
}

/// Fixed description of the task given to the remote model.
pub const TASK_DESCRIPTION: &str = "Advise on plausible transitions between ordered risk categories \
for a hospitalized patient whose bedside presentation appears calm. Name the categories the case \
could move to, and say what kind of corroborating evidence should be required before escalating.";

/// Everything the remote model may see. Fields are private; the only
/// constructors check sensitivity tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemotePayload {
    current_category: String,
    available_feature_keys: Vec<FeatureName>,
    rubric_schema: String,
    task_description: String,
}

impl RemotePayload {
    pub fn from_tagged(
        category: TaggedValue,
        keys: Vec<TaggedValue>,
        schema: TaggedValue,
    ) -> Result<Self, PrivacyError> {
        let current_category = match category.content {
            Content::Category(name) => name,
            _ => return Err(refuse(&category, "current_category")),
        };
        let mut available_feature_keys = Vec::with_capacity(keys.len());
        for key in keys {
            match key.content {
                Content::FeatureKey(name) => available_feature_keys.push(name),
                _ => return Err(refuse(&key, "available_feature_keys")),
            }
        }
        let rubric_schema = match schema.content {
            Content::Schema(text) => text,
            _ => return Err(refuse(&schema, "rubric_schema")),
        };
        Ok(RemotePayload {
            current_category,
            available_feature_keys,
            rubric_schema,
            task_description: TASK_DESCRIPTION.to_string(),
        })
    }

    pub fn current_category(&self) -> &str {
        &self.current_category
    }

    pub fn available_feature_keys(&self) -> &[FeatureName] {
        &self.available_feature_keys
    }

    pub fn rubric_schema(&self) -> &str {
        &self.rubric_schema
    }

    pub fn task_description(&self) -> &str {
        &self.task_description
    }

    /// The remote user prompt.
    pub fn to_prompt(&self) -> String {
        let mut out = String::new();
        out.push_str("### PRIVACY NOTICE\n");
        out.push_str(
            "This request comes from a remote advisory step. It carries no patient measurements, \
identifiers or times. You see only the current risk category, the kinds of evidence already \
gathered locally, and the shared category definitions.\n\n",
        );
        out.push_str("### Task\n");
        out.push_str(&self.task_description);
        out.push_str("\n\n### Current Patient State\n");
        out.push_str(&format!("- Current Category: {}\n\n", self.current_category));
        out.push_str("### Available Evidence Types\n");
        if self.available_feature_keys.is_empty() {
            out.push_str("- (none retrieved)\n");
        }
        for key in &self.available_feature_keys {
            out.push_str(&format!("- {key}\n"));
        }
        out.push_str("\n### Category Definitions\n");
        out.push_str(&self.rubric_schema);
        out.push_str(
            "\n\n### Output\nReply with one JSON object: {\"transition_candidates\": [category names], \
\"transition_guidance\": \"...\", \"transition_reasoning\": \"...\"}\n",
        );
        out
    }
}

/// Payload for the Stage 3 advisory: category, retrieved key names, schema.
pub fn build_remote_payload(
    state: &RubricState,
    keys: &[FeatureName],
    schema: &RubricSchema,
) -> Result<RemotePayload, PrivacyError> {
    RemotePayload::from_tagged(
        TaggedValue::category(&state.category, schema)?,
        keys.iter().copied().map(TaggedValue::feature_key).collect(),
        TaggedValue::schema(schema),
    )
}
