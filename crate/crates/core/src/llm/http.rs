//! Minimal chat-completion HTTP client.
//!
//! Request body: `{"model", "messages": [{"role", "content"}], "temperature"}`.
//! The reply text is read from `choices[0].message.content`; usage from
//! `usage.prompt_tokens` / `usage.completion_tokens`, falling back to a
//! whitespace estimate when the endpoint omits it.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::wire_log::WireLog;
use super::{Backend, BackendError, CallKey, ChatMessage, Completion, Role, Usage};

/// Environment variable holding the bearer token, if any.
pub const API_KEY_ENV: &str = "CARE_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    /// Additional attempts after the first failure.
    pub retries: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
    pub api_key: Option<String>,
    /// Forwarded as the request `seed` for endpoints that support it.
    pub seed: Option<u64>,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            retries: 2,
            backoff: Duration::from_millis(500),
            max_in_flight: 8,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            seed: None,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            available: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Gate);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    id: String,
    role: Role,
    config: HttpConfig,
    agent: ureq::Agent,
    gate: Gate,
    wire_log: Option<WireLog>,
}

impl HttpBackend {
    pub fn new(role: Role, config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            id: format!("http:{}#{}", config.endpoint, config.model),
            role,
            gate: Gate::new(config.max_in_flight),
            config,
            agent,
            wire_log: None,
        }
    }

    pub fn with_wire_log(mut self, log: WireLog) -> Self {
        self.wire_log = Some(log);
        self
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> String {
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        body.to_string()
    }

    fn attempt(&self, body: &str) -> Result<String, String> {
        let _permit = self.gate.acquire();
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("status {}: {}", status.as_u16(), truncate(&text, 200)));
        }
        Ok(text)
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Extracts reply text and usage from a chat-completion response body.
pub fn parse_response(body: &str, messages: &[ChatMessage]) -> Result<Completion, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or("response has no choices[0].message.content")?
        .to_string();
    let reported = v.get("usage").and_then(|u| {
        Some(Usage::new(
            u.get("prompt_tokens")?.as_u64()?,
            u.get("completion_tokens")?.as_u64()?,
        ))
    });
    let usage = reported.unwrap_or_else(|| Usage::estimate(messages, &text));
    Ok(Completion { text, usage })
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<Completion, BackendError> {
        let body = self.request_body(messages);
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(self.config.backoff * 2u32.saturating_pow(i - 1));
            }
            match self.attempt(&body).and_then(|raw| {
                let parsed = parse_response(&raw, messages);
                if let Some(log) = &self.wire_log {
                    log.record(self.role, key, &body, &raw);
                }
                parsed
            }) {
                Ok(c) => return Ok(c),
                Err(e) => {
                    tracing::warn!(backend = %self.id, attempt = i + 1, error = %e, "http call failed");
                    last = e;
                }
            }
        }
        Err(BackendError::Failed {
            backend: self.id.clone(),
            attempts,
            detail: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_usage_passes_through() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"ok"}}],"usage":{"prompt_tokens":120,"completion_tokens":30}}"#;
        let c = parse_response(body, &[]).unwrap();
        assert_eq!(c.text, "ok");
        assert_eq!(c.usage, Usage::new(120, 30));
    }

    #[test]
    fn missing_usage_is_estimated() {
        let body = r#"{"choices":[{"message":{"content":"one two three"}}]}"#;
        let c = parse_response(body, &[ChatMessage::user("a b")]).unwrap();
        assert_eq!((c.usage.prompt_tokens, c.usage.completion_tokens), (2, 3));
        assert!(c.usage.estimated);
    }

    #[test]
    fn malformed_response_is_an_error() {
        assert!(parse_response("{}", &[]).is_err());
        assert!(parse_response("not json", &[]).is_err());
    }
}
