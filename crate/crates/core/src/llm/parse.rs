//! Strict parsing of JSON stage outputs embedded in free-form model text.

use serde_json::{Map, Value};

use crate::action::Action;
use crate::baselines::TurnOutput;
use crate::engine::{AcquisitionRequest, DecisionOutput, SufficiencyResult};
use crate::features::FeatureName;
use crate::rubric::RemoteAdvisory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSchema {
    Acquisition,
    Sufficiency,
    Advisory,
    Decision,
    BaselineTurn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageOutput {
    Acquisition(AcquisitionRequest),
    Sufficiency(SufficiencyResult),
    Advisory(RemoteAdvisory),
    Decision(DecisionOutput),
    BaselineTurn(TurnOutput),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    NoJsonObject,
    MissingField,
    WrongType,
    Enum,
    Range,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?}: {detail}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub detail: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, detail: impl Into<String>) -> Self {
        ParseError {
            kind,
            detail: detail.into(),
        }
    }
}

/// First well-formed JSON object in `text`, skipping prose and code fences.
pub fn extract_first_object(text: &str) -> Option<Map<String, Value>> {
    for (idx, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[idx..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            return Some(obj);
        }
    }
    None
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, ParseError> {
    obj.get(name)
        .filter(|v| !v.is_null())
        .ok_or_else(|| ParseError::new(ParseErrorKind::MissingField, format!("missing `{name}`")))
}

fn bool_field(obj: &Map<String, Value>, name: &str) -> Result<bool, ParseError> {
    field(obj, name)?
        .as_bool()
        .ok_or_else(|| ParseError::new(ParseErrorKind::WrongType, format!("`{name}` must be a boolean")))
}

fn text_field(obj: &Map<String, Value>, name: &str) -> Result<String, ParseError> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ParseError::new(
            ParseErrorKind::WrongType,
            format!("`{name}` must be a string"),
        )),
    }
}

fn string_list(obj: &Map<String, Value>, name: &str, required: bool) -> Result<Vec<String>, ParseError> {
    let value = match obj.get(name) {
        None | Some(Value::Null) if !required => return Ok(Vec::new()),
        _ => field(obj, name)?,
    };
    let arr = value
        .as_array()
        .ok_or_else(|| ParseError::new(ParseErrorKind::WrongType, format!("`{name}` must be an array")))?;
    arr.iter()
        .map(|v| {
            v.as_str()
                .map(|s| s.trim().to_string())
                .ok_or_else(|| ParseError::new(ParseErrorKind::WrongType, format!("`{name}` entries must be strings")))
        })
        .collect()
}

fn feature_list(obj: &Map<String, Value>, name: &str) -> Result<Vec<FeatureName>, ParseError> {
    string_list(obj, name, true)?
        .iter()
        .map(|s| {
            s.parse::<FeatureName>()
                .map_err(|e| ParseError::new(ParseErrorKind::Enum, e.to_string()))
        })
        .collect()
}

fn action_field(obj: &Map<String, Value>, names: &[&str]) -> Result<Action, ParseError> {
    let (name, value) = names
        .iter()
        .find_map(|n| obj.get(*n).filter(|v| !v.is_null()).map(|v| (*n, v)))
        .ok_or_else(|| ParseError::new(ParseErrorKind::MissingField, format!("missing `{}`", names[0])))?;
    let s = value
        .as_str()
        .ok_or_else(|| ParseError::new(ParseErrorKind::WrongType, format!("`{name}` must be a string")))?;
    s.parse::<Action>()
        .map_err(|e| ParseError::new(ParseErrorKind::Enum, e))
}

pub fn parse_acquisition(text: &str) -> Result<AcquisitionRequest, ParseError> {
    let obj = object(text)?;
    let need_data = bool_field(&obj, "need_data")?;
    let mut facts_keys = string_list(&obj, "facts_keys", need_data)?;
    if need_data && facts_keys.is_empty() {
        return Err(ParseError::new(
            ParseErrorKind::Range,
            "`need_data` is true but `facts_keys` is empty",
        ));
    }
    if !need_data {
        facts_keys.clear();
    }
    Ok(AcquisitionRequest {
        need_data,
        facts_keys,
        reasoning: text_field(&obj, "reasoning")?,
    })
}

pub fn parse_sufficiency(text: &str) -> Result<SufficiencyResult, ParseError> {
    let obj = object(text)?;
    let result = SufficiencyResult {
        is_sufficient: bool_field(&obj, "is_sufficient")?,
        remaining_requested_keys: feature_list(&obj, "remaining_requested_keys")?,
        updated_available_keys: feature_list(&obj, "updated_available_keys")?,
    };
    if result.is_sufficient != result.remaining_requested_keys.is_empty() {
        return Err(ParseError::new(
            ParseErrorKind::Range,
            "`is_sufficient` disagrees with `remaining_requested_keys`",
        ));
    }
    Ok(result)
}

pub fn parse_advisory(text: &str) -> Result<RemoteAdvisory, ParseError> {
    let obj = object(text)?;
    Ok(RemoteAdvisory {
        transition_candidates: string_list(&obj, "transition_candidates", true)?,
        transition_guidance: text_field(&obj, "transition_guidance")?,
        transition_reasoning: text_field(&obj, "transition_reasoning")?,
    })
}

pub fn parse_decision(text: &str) -> Result<DecisionOutput, ParseError> {
    let obj = object(text)?;
    Ok(DecisionOutput {
        differential_diagnosis: text_field(&obj, "differential_diagnosis")?,
        final_action: action_field(&obj, &["final_action"])?,
    })
}

pub fn parse_turn(text: &str) -> Result<TurnOutput, ParseError> {
    let obj = object(text)?;
    let action = action_field(&obj, &["action", "final_action"])?;
    let confidence = match obj.get("confidence") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let c = v
                .as_f64()
                .ok_or_else(|| ParseError::new(ParseErrorKind::WrongType, "`confidence` must be a number"))?;
            if !(0.0..=100.0).contains(&c) || c.fract() != 0.0 {
                return Err(ParseError::new(
                    ParseErrorKind::Range,
                    format!("`confidence` {c} is not an integer in 0..=100"),
                ));
            }
            Some(c as u8)
        }
    };
    Ok(TurnOutput {
        reasoning: text_field(&obj, "reasoning")?,
        action,
        confidence,
    })
}

fn object(text: &str) -> Result<Map<String, Value>, ParseError> {
    extract_first_object(text).ok_or_else(|| ParseError::new(ParseErrorKind::NoJsonObject, "no JSON object found"))
}

pub fn parse_stage_output(text: &str, schema: StageSchema) -> Result<StageOutput, ParseError> {
    Ok(match schema {
        StageSchema::Acquisition => StageOutput::Acquisition(parse_acquisition(text)?),
        StageSchema::Sufficiency => StageOutput::Sufficiency(parse_sufficiency(text)?),
        StageSchema::Advisory => StageOutput::Advisory(parse_advisory(text)?),
        StageSchema::Decision => StageOutput::Decision(parse_decision(text)?),
        StageSchema::BaselineTurn => StageOutput::BaselineTurn(parse_turn(text)?),
    })
}

/// Appended to the conversation when a stage output fails to parse.
pub fn format_reminder(schema: StageSchema, error: &ParseError) -> String {
    let shape = match schema {
        StageSchema::Acquisition => r#"{"need_data": <bool>, "facts_keys": [<feature key>...], "reasoning": "<text>"}"#,
        StageSchema::Sufficiency => {
            r#"{"is_sufficient": <bool>, "remaining_requested_keys": [...], "updated_available_keys": [...]}"#
        }
        StageSchema::Advisory => {
            r#"{"transition_candidates": [<category>...], "transition_guidance": "<text>", "transition_reasoning": "<text>"}"#
        }
        StageSchema::Decision => {
            r#"{"differential_diagnosis": "<text>", "final_action": "OBSERVE" | "TREAT_S" | "INVESTIGATE_O"}"#
        }
        StageSchema::BaselineTurn => {
            r#"{"reasoning": "<text>", "action": "OBSERVE" | "TREAT_S" | "INVESTIGATE_O", "confidence": <0-100 when requested>}"#
        }
    };
    format!(
        "Your previous reply could not be used ({}). Reply again with exactly one JSON object of the form:\n{shape}",
        error.detail
    )
}
