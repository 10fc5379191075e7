//! The only path from the pipeline to a remote-role backend.

use std::sync::Arc;

use super::{scan_outbound, AuditLog, Direction, PrivacyError, RemotePayload, ScanResult, SensitiveCorpus};
use crate::digest::sha256_hex;
use crate::llm::{Backend, BackendError, CallKey, ChatMessage, Completion, Role, Stage};

const REMOTE_SYSTEM: &str = "You advise on transitions between risk categories. Answer with JSON only.";

/// Turns a payload into the messages sent to the remote model.
pub trait PayloadRenderer: Send + Sync {
    fn render(&self, payload: &RemotePayload) -> Vec<ChatMessage>;
}

/// Default renderer: fixed system line plus [`RemotePayload::to_prompt`].
pub struct PromptRenderer;

impl PayloadRenderer for PromptRenderer {
    fn render(&self, payload: &RemotePayload) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(REMOTE_SYSTEM),
            ChatMessage::user(payload.to_prompt()),
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RemoteCallError {
    #[error("outbound scan blocked the call: {0}")]
    Violation(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("audit log write failed: {0}")]
    Audit(String),
}

pub struct RemoteChannel {
    backend: Arc<dyn Backend>,
    renderer: Box<dyn PayloadRenderer>,
    audit: AuditLog,
}

impl RemoteChannel {
    pub fn new(backend: Arc<dyn Backend>, role: Role, audit: AuditLog) -> Result<Self, PrivacyError> {
        if role != Role::Remote {
            return Err(PrivacyError::LocalRole);
        }
        Ok(RemoteChannel {
            backend,
            renderer: Box::new(PromptRenderer),
            audit,
        })
    }

    pub fn with_renderer(mut self, renderer: Box<dyn PayloadRenderer>) -> Self {
        self.renderer = renderer;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    /// Renders, scans and audits the payload, then sends it only if clean.
    /// Exactly one audit entry is written per call.
    pub fn send(
        &self,
        payload: &RemotePayload,
        corpus: &SensitiveCorpus,
        sample_id: &str,
    ) -> Result<(Vec<ChatMessage>, Completion), RemoteCallError> {
        let messages = self.renderer.render(payload);
        let bytes = serde_json::to_string(&messages).expect("messages serialize");
        let scan = scan_outbound(&bytes, corpus);
        let clean = scan.is_clean();
        self.audit
            .record(
                Direction::ToRemote,
                sha256_hex(bytes.as_bytes()),
                scan.clone(),
                clean,
                sample_id,
            )
            .map_err(|e| RemoteCallError::Audit(e.to_string()))?;
        if let ScanResult::Violation(detail) = scan {
            return Err(RemoteCallError::Violation(detail));
        }
        let key = CallKey {
            sample: None,
            stage: Stage::Advisory,
            round: 0,
            agent: None,
            attempt: 0,
        };
        let completion = self.backend.complete(&key, &messages)?;
        Ok((messages, completion))
    }
}
