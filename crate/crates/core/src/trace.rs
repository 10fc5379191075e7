//! Per-sample run records and the call helper shared by all workflows.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::Prediction;
use crate::cohort::Sample;
use crate::llm::parse::{format_reminder, ParseError, StageSchema};
use crate::llm::{AgentId, Backend, BackendError, CallKey, ChatMessage, Role, Stage, Usage};

/// One model call as seen by the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: Role,
    pub stage: Stage,
    pub round: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agent: Option<AgentId>,
    pub attempt: u32,
    pub usage: Usage,
    /// `None` when the reply parsed, otherwise why it did not (or why the call failed).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// The backend itself failed (after its retries), as opposed to a bad reply.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub backend_failure: bool,
}

/// Append-only record of one workflow run on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub sample_id: String,
    pub stay_id: String,
    pub t_eval: i64,
    pub workflow: String,
    pub config_digest: String,
    pub backends: Vec<String>,
    pub stages: Value,
    pub calls: Vec<CallRecord>,
    pub usage: Usage,
    pub prediction: Prediction,
    pub valid: bool,
}

impl Trace {
    pub fn new(sample: &Sample, workflow: &str, config_digest: &str, backends: Vec<String>) -> Self {
        Trace {
            sample_id: sample.id(),
            stay_id: sample.stay_id.clone(),
            t_eval: sample.t_eval,
            workflow: workflow.to_string(),
            config_digest: config_digest.to_string(),
            backends,
            stages: Value::Null,
            calls: Vec::new(),
            usage: Usage::default(),
            prediction: Prediction::Invalid,
            valid: false,
        }
    }

    pub fn finish(&mut self, stages: Value, prediction: Prediction) {
        self.stages = stages;
        self.usage = self.calls.iter().map(|c| c.usage).sum();
        self.prediction = prediction;
        self.valid = prediction.is_valid();
    }

    pub fn backend_failures(&self) -> usize {
        self.calls.iter().filter(|c| c.backend_failure).count()
    }

    pub fn remote_calls(&self) -> usize {
        self.calls.iter().filter(|c| c.role == Role::Remote).count()
    }
}

/// Result of a call that may be re-prompted once the reply fails to parse.
pub enum Attempted<T> {
    Parsed(T),
    Unparseable(ParseError),
}

/// Calls a local backend, re-prompting with a format reminder up to
/// `max_repairs` times. Backend failures are returned as errors.
pub fn call_with_repair<T>(
    backend: &dyn Backend,
    key: CallKey,
    mut messages: Vec<ChatMessage>,
    schema: StageSchema,
    parse: impl Fn(&str) -> Result<T, ParseError>,
    max_repairs: u32,
    calls: &mut Vec<CallRecord>,
) -> Result<Attempted<T>, BackendError> {
    let mut attempt = 0;
    loop {
        let key = key.clone().with_attempt(attempt);
        let record = |usage, error| CallRecord {
            role: Role::Local,
            stage: key.stage,
            round: key.round,
            agent: key.agent,
            attempt,
            usage,
            error,
            backend_failure: false,
        };
        let completion = match backend.complete(&key, &messages) {
            Ok(c) => c,
            Err(e) => {
                calls.push(CallRecord {
                    backend_failure: true,
                    ..record(Usage::default(), Some(e.to_string()))
                });
                return Err(e);
            }
        };
        match parse(&completion.text) {
            Ok(value) => {
                calls.push(record(completion.usage, None));
                return Ok(Attempted::Parsed(value));
            }
            Err(err) => {
                calls.push(record(completion.usage, Some(err.to_string())));
                if attempt >= max_repairs {
                    return Ok(Attempted::Unparseable(err));
                }
                messages.push(ChatMessage::assistant(completion.text));
                messages.push(ChatMessage::user(format_reminder(schema, &err)));
                attempt += 1;
            }
        }
    }
}

pub fn write_traces(path: &Path, traces: &[Trace]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in traces {
        writeln!(w, "{}", serde_json::to_string(t).expect("trace serializes"))?;
    }
    w.flush()
}

pub fn read_traces(path: &Path) -> Result<Vec<Trace>, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?);
    }
    Ok(out)
}
