//! Cohort construction: event ingestion, windowed features, inclusion,
//! labeling and the balanced benchmark file.

pub mod events;
pub mod select;
pub mod window;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::digest::sha256_hex;
use crate::features::FeatureMap;

pub use events::{read_events, EventKind, EventRecord, EventValue, Ingested, StayEvents};
pub use select::{
    balanced_sample, build_pool, check_inclusion, compute_label, follow_up, label_at, ExclusionReason, Inclusion,
    PoolConfig, PoolStats,
};
pub use window::window_aggregate;

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("stay {stay_id} is not sorted by time (line {line})")]
    Unsorted { stay_id: String, line: usize },
    #[error("insufficient {label} samples: {available} available, {requested} requested")]
    InsufficientClass {
        label: Label,
        available: usize,
        requested: usize,
    },
    #[error("sample {0} failed re-validation: {1:?}")]
    Revalidation(String, ExclusionReason),
    #[error("benchmark file mixes config digests ({0} and {1})")]
    MixedDigest(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Positive,
    Negative,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Positive => "POSITIVE",
            Label::Negative => "NEGATIVE",
        })
    }
}

/// One (stay, evaluation hour) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stay_id: String,
    pub t_eval: i64,
    pub features: FeatureMap,
    pub label: Label,
}

impl Sample {
    pub fn id(&self) -> String {
        format!("{}@{}", self.stay_id, self.t_eval)
    }

    pub fn key(&self) -> (&str, i64) {
        (&self.stay_id, self.t_eval)
    }

    pub fn to_json(&self, config_digest: &str) -> Value {
        json!({
            "stay_id": self.stay_id,
            "t_eval": self.t_eval,
            "features": self.features.to_json(),
            "label": self.label,
            "config_digest": config_digest,
        })
    }

    pub fn from_json(v: &Value) -> Result<(Sample, Option<String>), String> {
        let stay_id = v
            .get("stay_id")
            .and_then(|s| match s {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .ok_or("missing stay_id")?;
        let t_eval = v.get("t_eval").and_then(Value::as_i64).ok_or("missing t_eval")?;
        let features = FeatureMap::from_json(v.get("features").ok_or("missing features")?)?;
        let label: Label =
            serde_json::from_value(v.get("label").cloned().unwrap_or(Value::Null)).map_err(|e| e.to_string())?;
        let digest = v.get("config_digest").and_then(Value::as_str).map(String::from);
        Ok((
            Sample {
                stay_id,
                t_eval,
                features,
                label,
            },
            digest,
        ))
    }
}

/// Parameters that determine a benchmark file.
#[derive(Debug, Clone, Serialize)]
pub struct BuildParams {
    pub events_digest: String,
    pub n_per_class: usize,
    pub seed: u64,
    pub pool: PoolConfig,
}

impl BuildParams {
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("params serialize").as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub samples: Vec<Sample>,
    pub config_digest: String,
    pub pool_stats: PoolStats,
}

/// Pool → balanced draw → re-validation.
pub fn build_benchmark(ingested: &Ingested, params: &BuildParams) -> Result<Benchmark, CohortError> {
    let (pool, pool_stats) = build_pool(&ingested.stays, params.pool);
    let samples = balanced_sample(&pool, params.n_per_class, params.seed)?;
    for s in &samples {
        if let Inclusion::Exclude(reason) = check_inclusion(&s.features) {
            return Err(CohortError::Revalidation(s.id(), reason));
        }
    }
    Ok(Benchmark {
        samples,
        config_digest: params.digest(),
        pool_stats,
    })
}

pub fn write_bench(path: &Path, samples: &[Sample], config_digest: &str) -> Result<(), CohortError> {
    let io_err = |e| CohortError::Io(path.display().to_string(), e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for s in samples {
        let line = serde_json::to_string(&s.to_json(config_digest)).expect("sample serializes");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_bench(path: &Path) -> Result<(Vec<Sample>, Option<String>), CohortError> {
    let io_err = |e| CohortError::Io(path.display().to_string(), e);
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut samples = Vec::new();
    let mut digest: Option<String> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |detail: String| CohortError::Malformed { line: i + 1, detail };
        let v: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let (sample, d) = Sample::from_json(&v).map_err(malformed)?;
        match (&digest, d) {
            (None, Some(d)) if samples.is_empty() => digest = Some(d),
            (Some(prev), Some(d)) if *prev != d => return Err(CohortError::MixedDigest(prev.clone(), d)),
            _ => {}
        }
        samples.push(sample);
    }
    Ok((samples, digest))
}
