//! Token scan of outbound text against the current sample's values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cohort::Sample;
use crate::features::{render_real, FeatureValue};

/// Severity integers are schema constants and never count as a leak.
const EXEMPT: [&str; 5] = ["1", "2", "3", "4", "5"];

/// Canonical renderings of every value in one sample, mapped to their source.
#[derive(Debug, Clone, Default)]
pub struct SensitiveCorpus {
    tokens: BTreeMap<String, String>,
}

impl SensitiveCorpus {
    pub fn from_sample(sample: &Sample) -> Self {
        let mut corpus = SensitiveCorpus::default();
        for (name, value) in sample.features.iter() {
            let source = name.as_str();
            match value {
                FeatureValue::Missing | FeatureValue::Flag(_) => {}
                FeatureValue::Integer(v) => corpus.add_number(*v as f64, source),
                FeatureValue::Real(v) => corpus.add_number(*v, source),
                FeatureValue::Token(t) => corpus.add(t, source),
                FeatureValue::Rass(w) => {
                    for v in [w.max, w.min, w.n as i32] {
                        corpus.add_number(f64::from(v), source);
                    }
                }
            }
        }
        corpus.add(&sample.stay_id, "stay_id");
        corpus.add(&sample.t_eval.to_string(), "t_eval");
        corpus
    }

    fn add(&mut self, token: &str, source: &str) {
        let token = token.trim();
        if !token.is_empty() && !EXEMPT.contains(&token) {
            self.tokens
                .entry(token.to_string())
                .or_insert_with(|| source.to_string());
        }
    }

    /// Integral values are registered both bare and with a `.0` suffix.
    fn add_number(&mut self, v: f64, source: &str) {
        self.add(&render_real(v), source);
        self.add(&v.to_string(), source);
        if v.fract() == 0.0 && v.abs() < 1e15 {
            self.add(&format!("{}", v as i64), source);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains_key(token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScanResult {
    Clean,
    /// Names the sources of leaked tokens, never the values.
    Violation(String),
}

impl ScanResult {
    pub fn is_clean(&self) -> bool {
        matches!(self, ScanResult::Clean)
    }
}

/// Maximal runs of `[A-Za-z0-9_.-]`.
pub fn tokenize(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')))
        .filter(|t| !t.is_empty())
}

pub fn scan_outbound(payload: &str, corpus: &SensitiveCorpus) -> ScanResult {
    let mut sources: Vec<&str> = Vec::new();
    for token in tokenize(payload) {
        // sentence punctuation may cling to a number: "64.0."
        let trimmed = token.trim_end_matches('.');
        for candidate in [token, trimmed] {
            if let Some(source) = corpus.tokens.get(candidate) {
                if !sources.contains(&source.as_str()) {
                    sources.push(source);
                }
            }
        }
    }
    if sources.is_empty() {
        ScanResult::Clean
    } else {
        ScanResult::Violation(format!("values of {} found in outbound text", sources.join(", ")))
    }
}
