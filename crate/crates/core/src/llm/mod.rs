//! Model backends: the call interface, token accounting and backend specs.
//!
//! Two implementations exist: [`mock::MockBackend`] replays scripted or seeded
//! responses for deterministic runs, [`http::HttpBackend`] speaks a minimal
//! chat-completion wire format. Remote-role backends are only reachable
//! through [`crate::privacy::RemoteChannel`].

pub mod http;
pub mod mock;
pub mod parse;
pub mod wire_log;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use parse::{parse_stage_output, ParseError, StageOutput, StageSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Acquisition,
    Advisory,
    Decision,
    Turn,
    Rubric,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Acquisition => "acquisition",
            Stage::Advisory => "advisory",
            Stage::Decision => "decision",
            Stage::Turn => "turn",
            Stage::Rubric => "rubric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentId {
    A,
    B,
    C,
}

impl AgentId {
    pub const ALL: [AgentId; 3] = [AgentId::A, AgentId::B, AgentId::C];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentId::A => "A",
            AgentId::B => "B",
            AgentId::C => "C",
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies a call for script lookup and tracing. Never sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallKey {
    /// `None` for remote calls, which carry no sample identity.
    pub sample: Option<String>,
    pub stage: Stage,
    pub round: u32,
    pub agent: Option<AgentId>,
    /// 0 for the first attempt, 1 for the repair re-prompt.
    pub attempt: u32,
}

impl CallKey {
    pub fn local(sample: &str, stage: Stage, round: u32) -> Self {
        CallKey {
            sample: Some(sample.to_string()),
            stage,
            round,
            agent: None,
            attempt: 0,
        }
    }

    pub fn with_agent(mut self, agent: AgentId) -> Self {
        self.agent = Some(agent);
        self
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Token usage of one call, or a sum of calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Set when any summed call fell back to whitespace counting.
    #[serde(default)]
    pub estimated: bool,
}

impl Usage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Usage {
            prompt_tokens,
            completion_tokens,
            estimated: false,
        }
    }

    pub fn estimate(messages: &[ChatMessage], completion: &str) -> Self {
        Usage {
            prompt_tokens: messages.iter().map(|m| count_tokens(&m.content)).sum(),
            completion_tokens: count_tokens(completion),
            estimated: true,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::Add for Usage {
    type Output = Usage;

    fn add(self, rhs: Usage) -> Usage {
        Usage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
            estimated: self.estimated || rhs.estimated,
        }
    }
}

impl std::iter::Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), |a, b| a + b)
    }
}

/// Whitespace token counter used by the mock and as the HTTP fallback.
pub fn count_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend {backend} failed after {attempts} attempt(s): {detail}")]
    Failed {
        backend: String,
        attempts: u32,
        detail: String,
    },
    #[error("mock script has no response for {0}")]
    ScriptMiss(String),
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<Completion, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<Completion, BackendError> {
        (**self).complete(key, messages)
    }
}

/// `mock:<script.json>` or `http:<url>#<model>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    Mock { script: String },
    Http { endpoint: String, model: String },
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(path) = s.strip_prefix("mock:") {
            if path.is_empty() {
                return Err("mock backend needs a script path".into());
            }
            return Ok(BackendKind::Mock { script: path.into() });
        }
        if let Some(rest) = s.strip_prefix("http:") {
            let (endpoint, model) = rest
                .rsplit_once('#')
                .ok_or_else(|| format!("http backend `{s}` needs `#<model>`"))?;
            if endpoint.is_empty() || model.is_empty() {
                return Err(format!("http backend `{s}` has an empty url or model"));
            }
            return Ok(BackendKind::Http {
                endpoint: endpoint.into(),
                model: model.into(),
            });
        }
        Err(format!("backend spec `{s}` must start with `mock:` or `http:`"))
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Mock { script } => write!(f, "mock:{script}"),
            BackendKind::Http { endpoint, model } => write!(f, "http:{endpoint}#{model}"),
        }
    }
}
