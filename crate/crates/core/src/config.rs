//! Run configuration, its validation and its provenance digest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::sha256_hex;
use crate::engine::CareConfig;
use crate::llm::http::{HttpBackend, HttpConfig};
use crate::llm::mock::{MockBackend, MockScript};
use crate::llm::wire_log::WireLog;
use crate::llm::{Backend, BackendKind, Role};
use crate::rubric::RubricSchema;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workflow {
    #[default]
    Care,
    Single,
    Vote,
    Rsmad,
    Confmad,
}

impl Workflow {
    pub fn as_str(self) -> &'static str {
        match self {
            Workflow::Care => "care",
            Workflow::Single => "single",
            Workflow::Vote => "vote",
            Workflow::Rsmad => "rsmad",
            Workflow::Confmad => "confmad",
        }
    }

    pub fn is_multi_agent(self) -> bool {
        matches!(self, Workflow::Vote | Workflow::Rsmad | Workflow::Confmad)
    }
}

impl fmt::Display for Workflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Workflow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Workflow::Care,
            Workflow::Single,
            Workflow::Vote,
            Workflow::Rsmad,
            Workflow::Confmad,
        ]
        .into_iter()
        .find(|w| w.as_str() == s)
        .ok_or_else(|| format!("unknown workflow `{s}` (care, single, vote, rsmad, confmad)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    /// `mock:<script.json>` or `http:<url>#<model>`.
    pub spec: String,
    pub role: Role,
}

impl BackendSpec {
    pub fn new(spec: impl Into<String>, role: Role) -> Self {
        BackendSpec {
            spec: spec.into(),
            role,
        }
    }

    pub fn kind(&self) -> Result<BackendKind, ConfigError> {
        self.spec.parse().map_err(ConfigError::Invalid)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub local: Option<BackendSpec>,
    pub remote: Option<BackendSpec>,
    pub agent_a: Option<BackendSpec>,
    pub agent_b: Option<BackendSpec>,
    pub agent_c: Option<BackendSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    pub temperature: f64,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            temperature: 0.0,
            timeout_secs: 120,
            retries: 2,
            backoff_ms: 500,
            max_in_flight: 8,
        }
    }
}

/// Output locations and parallelism; never part of the digest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub traces: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub wire_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workflow: Workflow,
    pub backends: Backends,
    pub rubric: Option<PathBuf>,
    pub care: CareConfig,
    /// Re-prompts per malformed baseline turn.
    pub baseline_repair_attempts: u32,
    /// Sampling seed forwarded to HTTP backends.
    pub seed: u64,
    pub http: HttpSettings,
    pub jobs: usize,
    pub outputs: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            workflow: Workflow::Care,
            backends: Backends::default(),
            rubric: None,
            care: CareConfig::default(),
            baseline_repair_attempts: 1,
            seed: 0,
            http: HttpSettings::default(),
            jobs: 1,
            outputs: Outputs::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("cannot parse {0}: {1}")]
    Parse(String, String),
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    /// JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| ConfigError::Parse(path.display().to_string(), e))
    }

    /// Backend for agent `slot` of a multi-agent run, falling back to `local`.
    pub fn agent_spec(&self, slot: usize) -> Option<&BackendSpec> {
        let b = &self.backends;
        [&b.agent_a, &b.agent_b, &b.agent_c][slot].as_ref().or(b.local.as_ref())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let local_slot = |name: &str, spec: Option<&BackendSpec>| -> Result<(), ConfigError> {
            let spec = spec
                .ok_or_else(|| ConfigError::Invalid(format!("workflow {} needs a `{name}` backend", self.workflow)))?;
            spec.kind()?;
            if spec.role != Role::Local {
                return Err(ConfigError::Invalid(format!(
                    "backend `{name}` sees patient values and must have role local"
                )));
            }
            Ok(())
        };
        match self.workflow {
            Workflow::Care => {
                local_slot("local", self.backends.local.as_ref())?;
                if !self.care.ablation.no_stage3 {
                    let remote = self.backends.remote.as_ref().ok_or_else(|| {
                        ConfigError::Invalid("workflow care needs a `remote` backend for the advisory stage".into())
                    })?;
                    remote.kind()?;
                    if remote.role != Role::Remote {
                        return Err(ConfigError::Invalid(
                            "the advisory backend must have role remote; a local-role backend cannot serve the remote stage"
                                .into(),
                        ));
                    }
                }
            }
            Workflow::Single => local_slot("local", self.backends.local.as_ref())?,
            Workflow::Vote | Workflow::Rsmad | Workflow::Confmad => {
                for (i, name) in ["agent_a", "agent_b", "agent_c"].iter().enumerate() {
                    local_slot(name, self.agent_spec(i))?;
                }
            }
        }
        if self.care.max_acquisition_rounds == 0 {
            return Err(ConfigError::Invalid(
                "care.max_acquisition_rounds must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn load_rubric(&self) -> Result<RubricSchema, ConfigError> {
        match &self.rubric {
            Some(p) => RubricSchema::load(p).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(RubricSchema::default()),
        }
    }

    /// sha256 over the canonical config without outputs and parallelism.
    /// Mock script paths are replaced by a digest of the script contents and
    /// the rubric path by the schema itself, so relocating files keeps the digest.
    pub fn digest(&self, schema: &RubricSchema) -> Result<String, ConfigError> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("object");
        obj.remove("outputs");
        obj.remove("jobs");
        obj.insert("rubric".into(), Value::String(schema.to_json_string()));
        if let Some(Value::Object(backends)) = obj.get_mut("backends") {
            for spec in backends.values_mut() {
                if let Some(Value::String(s)) = spec.get_mut("spec") {
                    if let Some(path) = s.strip_prefix("mock:") {
                        let bytes = std::fs::read(path).map_err(|e| ConfigError::Io(path.to_string(), e))?;
                        *s = format!("mock:sha256={}", sha256_hex(&bytes));
                    }
                }
            }
        }
        Ok(sha256_hex(v.to_string().as_bytes()))
    }

    pub fn build_backend(
        &self,
        spec: &BackendSpec,
        wire_log: Option<&WireLog>,
    ) -> Result<Arc<dyn Backend>, ConfigError> {
        Ok(match spec.kind()? {
            BackendKind::Mock { script } => {
                let path = Path::new(&script);
                let loaded = MockScript::load(path).map_err(ConfigError::Invalid)?;
                let name = path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or(script.clone());
                Arc::new(MockBackend::new(format!("mock:{name}"), loaded))
            }
            BackendKind::Http { endpoint, model } => {
                let mut cfg = HttpConfig::new(endpoint, model);
                cfg.temperature = self.http.temperature;
                cfg.timeout = Duration::from_secs(self.http.timeout_secs);
                cfg.retries = self.http.retries;
                cfg.backoff = Duration::from_millis(self.http.backoff_ms);
                cfg.max_in_flight = self.http.max_in_flight;
                cfg.seed = Some(self.seed);
                let mut backend = HttpBackend::new(spec.role, cfg);
                if let Some(log) = wire_log {
                    backend = backend.with_wire_log(log.clone());
                }
                Arc::new(backend)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn care_config(remote_role: Role) -> RunConfig {
        RunConfig {
            backends: Backends {
                local: Some(BackendSpec::new("http:http://127.0.0.1:9/v1#m", Role::Local)),
                remote: Some(BackendSpec::new("http:http://127.0.0.1:9/v1#r", remote_role)),
                ..Backends::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn remote_slot_with_local_role_is_rejected() {
        assert!(care_config(Role::Remote).validate().is_ok());
        let err = care_config(Role::Local).validate().unwrap_err();
        assert!(err.to_string().contains("role remote"));
    }

    #[test]
    fn digest_ignores_outputs_and_jobs() {
        let schema = RubricSchema::default();
        let a = care_config(Role::Remote);
        let mut b = a.clone();
        b.jobs = 16;
        b.outputs.traces = Some("x.jsonl".into());
        assert_eq!(a.digest(&schema).unwrap(), b.digest(&schema).unwrap());
        b.care.gate.min_support = 3;
        assert_ne!(a.digest(&schema).unwrap(), b.digest(&schema).unwrap());
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let json_path = dir.path().join("c.json");
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &json_path,
            r#"{"workflow": "rsmad", "backends": {"local": {"spec": "mock:s.json", "role": "local"}}, "care": {"gate": {"min_support": 3}}}"#,
        )
        .unwrap();
        std::fs::write(
            &toml_path,
            "workflow = \"rsmad\"\n[backends.local]\nspec = \"mock:s.json\"\nrole = \"local\"\n[care.gate]\nmin_support = 3\n",
        )
        .unwrap();
        let a = RunConfig::load(&json_path).unwrap();
        assert_eq!(a, RunConfig::load(&toml_path).unwrap());
        assert_eq!(a.care.gate.min_support, 3);
        assert!(a.validate().is_ok());
        std::fs::write(&json_path, r#"{"workflw": "care"}"#).unwrap();
        assert!(RunConfig::load(&json_path).is_err());
    }
}
