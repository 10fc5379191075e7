//! Scripted and seeded mock backend.
//!
//! A script maps call keys to canned replies. Keys have the form
//! `<sample>/<stage>/<round>[/<agent>][#<attempt>]`, where `<sample>` and
//! `<round>` may be `*`. Lookup goes from most to least specific; when no
//! key matches, the optional policy synthesizes a reply from a seeded hash
//! of the call. The script is immutable after load.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{count_tokens, Backend, BackendError, CallKey, ChatMessage, Completion, Stage, Usage};
use crate::action::Action;
use crate::digest::{sha256_hex, stable_hash64};
use crate::features::{Exposure, FeatureName};
use crate::rubric::RubricSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockPolicy {
    /// Every decision-like reply is `action`; no data requests, empty advisories.
    Constant { action: Action },
    /// Replies drawn from a hash of (seed, call).
    Seeded {
        seed: u64,
        #[serde(default = "half")]
        p_investigate: f64,
        #[serde(default)]
        invalid_rate: f64,
    },
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
    #[serde(default)]
    pub policy: Option<MockPolicy>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn with_policy(policy: MockPolicy) -> Self {
        MockScript {
            responses: BTreeMap::new(),
            policy: Some(policy),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, reply: impl Into<String>) -> &mut Self {
        self.responses.insert(key.into(), reply.into());
        self
    }

    fn lookup(&self, key: &CallKey) -> Option<&String> {
        let sample = key.sample.as_deref().unwrap_or("*");
        let round = key.round.to_string();
        let samples: &[&str] = if sample == "*" { &["*"] } else { &[sample, "*"] };
        for s in samples {
            for r in [round.as_str(), "*"] {
                let base = format!("{s}/{}/{r}", key.stage.as_str());
                let mut bases = Vec::with_capacity(2);
                if let Some(agent) = key.agent {
                    bases.push(format!("{base}/{agent}"));
                }
                bases.push(base);
                for b in bases {
                    let with_attempt = format!("{b}#{}", key.attempt);
                    if let Some(hit) = self.responses.get(&with_attempt).or_else(|| self.responses.get(&b)) {
                        return Some(hit);
                    }
                }
            }
        }
        None
    }
}

pub struct MockBackend {
    id: String,
    script: MockScript,
}

impl MockBackend {
    pub fn new(id: impl Into<String>, script: MockScript) -> Self {
        MockBackend { id: id.into(), script }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<Completion, BackendError> {
        let text = match self.script.lookup(key) {
            Some(reply) => reply.clone(),
            None => match &self.script.policy {
                Some(policy) => synthesize(policy, key, messages),
                None => return Err(BackendError::ScriptMiss(describe(key))),
            },
        };
        let usage = Usage {
            prompt_tokens: messages.iter().map(|m| count_tokens(&m.content)).sum(),
            completion_tokens: count_tokens(&text),
            estimated: false,
        };
        Ok(Completion { text, usage })
    }
}

fn describe(key: &CallKey) -> String {
    let mut s = format!(
        "{}/{}/{}",
        key.sample.as_deref().unwrap_or("*"),
        key.stage.as_str(),
        key.round
    );
    if let Some(a) = key.agent {
        s.push('/');
        s.push_str(a.as_str());
    }
    s.push_str(&format!("#{}", key.attempt));
    s
}

/// Uniform draw in [0, 1) from a hash.
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn synthesize(policy: &MockPolicy, key: &CallKey, messages: &[ChatMessage]) -> String {
    match policy {
        MockPolicy::Constant { action } => match key.stage {
            Stage::Acquisition => {
                json!({"need_data": false, "facts_keys": [], "reasoning": "No further data."}).to_string()
            }
            Stage::Advisory => {
                json!({"transition_candidates": [], "transition_guidance": "", "transition_reasoning": ""}).to_string()
            }
            Stage::Rubric => RubricSchema::default().to_json_string(),
            Stage::Decision | Stage::Turn => json!({
                "differential_diagnosis": "Constant policy.",
                "reasoning": "Constant policy.",
                "final_action": action.as_str(),
                "action": action.as_str(),
                "confidence": 50,
            })
            .to_string(),
        },
        MockPolicy::Seeded {
            seed,
            p_investigate,
            invalid_rate,
        } => {
            // remote calls carry no sample id; their replies key on the prompt itself
            let identity = match &key.sample {
                Some(s) => s.clone(),
                None => {
                    let body: String = messages.iter().map(|m| m.content.as_str()).collect();
                    sha256_hex(body.as_bytes())
                }
            };
            let seed_s = seed.to_string();
            let round = key.round.to_string();
            let attempt = key.attempt.to_string();
            let agent = key.agent.map(|a| a.as_str()).unwrap_or("-");
            let h =
                |salt: &str| stable_hash64(&[&seed_s, &identity, key.stage.as_str(), &round, agent, &attempt, salt]);
            if unit(h("invalid")) < *invalid_rate {
                return "I am unable to provide a structured answer.".to_string();
            }
            let action = if unit(h("action")) < *p_investigate {
                Action::InvestigateO
            } else if h("soft") % 2 == 0 {
                Action::Observe
            } else {
                Action::TreatS
            };
            match key.stage {
                Stage::Acquisition if key.round == 0 => {
                    let pool: Vec<FeatureName> = FeatureName::with_exposure(Exposure::ObjectiveRetrievable).collect();
                    let count = 1 + (h("count") % 4) as usize;
                    let start = (h("start") % pool.len() as u64) as usize;
                    let keys: Vec<&str> = (0..count)
                        .map(|i| pool[(start + i * 3) % pool.len()].as_str())
                        .collect();
                    json!({"need_data": true, "facts_keys": keys, "reasoning": "Seeded request for corroborating evidence."})
                        .to_string()
                }
                Stage::Acquisition => {
                    json!({"need_data": false, "facts_keys": [], "reasoning": "Evidence considered adequate."})
                        .to_string()
                }
                Stage::Advisory => {
                    let names: Vec<String> = RubricSchema::default().names().map(String::from).collect();
                    let mask = (h("mask") % 32) as usize;
                    let picked: Vec<&String> = names
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask == 0 || mask & (1 << i) != 0)
                        .map(|(_, n)| n)
                        .collect();
                    json!({
                        "transition_candidates": picked,
                        "transition_guidance": "Escalate only with corroborating cross-domain evidence.",
                        "transition_reasoning": "Seeded advisory."
                    })
                    .to_string()
                }
                Stage::Rubric => RubricSchema::default().to_json_string(),
                Stage::Decision => json!({
                    "differential_diagnosis": "Seeded decision.",
                    "final_action": action.as_str(),
                })
                .to_string(),
                Stage::Turn => json!({
                    "reasoning": format!("Seeded turn {agent}{round}."),
                    "action": action.as_str(),
                    "confidence": h("confidence") % 101,
                })
                .to_string(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::AgentId;

    #[test]
    fn exact_script_reply() {
        let mut script = MockScript::default();
        script.insert("s1/decision/0", r#"{"final_action":"TREAT_S"}"#);
        let backend = MockBackend::new("m", script);
        let msgs = [ChatMessage::user("four words in here")];
        let out = backend
            .complete(&CallKey::local("s1", Stage::Decision, 0), &msgs)
            .unwrap();
        assert_eq!(out.text, r#"{"final_action":"TREAT_S"}"#);
        assert_eq!(out.usage, Usage::new(4, 1));
    }

    #[test]
    fn lookup_specificity_order() {
        let mut script = MockScript::default();
        script
            .insert("*/turn/*", "generic")
            .insert("*/turn/1", "round1")
            .insert("s1/turn/1/B", "s1-B")
            .insert("s1/turn/1/B#1", "s1-B-repair");
        let b = MockBackend::new("m", script);
        let call = |s: &str, r, a, att| {
            b.complete(&CallKey::local(s, Stage::Turn, r).with_agent(a).with_attempt(att), &[])
                .unwrap()
                .text
        };
        assert_eq!(call("s1", 1, AgentId::B, 0), "s1-B");
        assert_eq!(call("s1", 1, AgentId::B, 1), "s1-B-repair");
        assert_eq!(call("s1", 1, AgentId::A, 0), "round1");
        assert_eq!(call("s2", 2, AgentId::A, 0), "generic");
    }

    #[test]
    fn miss_without_policy_is_an_error() {
        let b = MockBackend::new("m", MockScript::default());
        let err = b.complete(&CallKey::local("s", Stage::Decision, 0), &[]).unwrap_err();
        assert!(matches!(err, BackendError::ScriptMiss(_)));
    }

    #[test]
    fn seeded_policy_is_deterministic_and_parseable() {
        let b = MockBackend::new(
            "m",
            MockScript::with_policy(MockPolicy::Seeded {
                seed: 3,
                p_investigate: 0.5,
                invalid_rate: 0.0,
            }),
        );
        for stage in [Stage::Acquisition, Stage::Advisory, Stage::Decision, Stage::Turn] {
            let key = CallKey::local("s9", stage, 0).with_agent(AgentId::C);
            let a = b.complete(&key, &[]).unwrap();
            let again = b.complete(&key, &[]).unwrap();
            assert_eq!(a, again);
            let parsed = match stage {
                Stage::Acquisition => crate::llm::parse::parse_acquisition(&a.text).map(|_| ()),
                Stage::Advisory => crate::llm::parse::parse_advisory(&a.text).map(|_| ()),
                Stage::Decision => crate::llm::parse::parse_decision(&a.text).map(|_| ()),
                _ => crate::llm::parse::parse_turn(&a.text).map(|_| ()),
            };
            assert!(parsed.is_ok(), "{stage:?}: {}", a.text);
        }
    }

    #[test]
    fn script_file_shape() {
        let script: MockScript = serde_json::from_str(
            r#"{"responses": {"*/decision/*": "x"}, "policy": {"kind": "constant", "action": "OBSERVE"}}"#,
        )
        .unwrap();
        assert_eq!(
            script.policy,
            Some(MockPolicy::Constant {
                action: Action::Observe
            })
        );
    }
}
