//! Confusion counts, class-balanced metrics and run reports.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::Prediction;
use crate::cohort::{Label, Sample};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub invalid: u64,
    pub n_total: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64, invalid: u64) -> Self {
        ConfusionCounts {
            tp,
            fp,
            tn,
            fn_,
            invalid,
            n_total: tp + fp + tn + fn_ + invalid,
        }
    }

    pub fn add(&mut self, label: Label, prediction: Prediction) {
        self.n_total += 1;
        match (label, prediction) {
            (_, Prediction::Invalid) => self.invalid += 1,
            (Label::Positive, Prediction::Positive) => self.tp += 1,
            (Label::Positive, Prediction::Negative) => self.fn_ += 1,
            (Label::Negative, Prediction::Negative) => self.tn += 1,
            (Label::Negative, Prediction::Positive) => self.fp += 1,
        }
    }

    pub fn valid(&self) -> u64 {
        self.n_total - self.invalid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub tnr: f64,
    pub ba: f64,
    pub g_mean: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("metrics undefined: no valid {0} samples")]
    Undefined(Label),
    #[error("no traces to evaluate")]
    Empty,
    #[error("traces without a benchmark sample: {0:?}")]
    Orphans(Vec<String>),
    #[error("benchmark samples without a trace for workflow {workflow}: {missing:?}")]
    Missing { workflow: String, missing: Vec<String> },
    #[error("sample {0} has more than one trace for workflow {1}")]
    Duplicate(String, String),
    #[error("workflow {workflow} mixes config digests {digests:?}; pass --allow-mixed to override")]
    MixedDigest { workflow: String, digests: Vec<String> },
}

/// TPR, TNR, BA, G-mean and MCC over valid samples. MCC is 0 when any
/// factor of its denominator is 0.
pub fn compute_metrics(c: &ConfusionCounts) -> Result<Metrics, EvalError> {
    if c.tp + c.fn_ == 0 {
        return Err(EvalError::Undefined(Label::Positive));
    }
    if c.tn + c.fp == 0 {
        return Err(EvalError::Undefined(Label::Negative));
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let tpr = tp / (tp + fn_);
    let tnr = tn / (tn + fp);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    let mcc = if factors.contains(&0.0) {
        0.0
    } else {
        (tp * tn - fp * fn_) / factors.iter().product::<f64>().sqrt()
    };
    Ok(Metrics {
        tpr,
        tnr,
        ba: (tpr + tnr) / 2.0,
        g_mean: (tpr * tnr).sqrt(),
        mcc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub workflow: String,
    pub backends: Vec<String>,
    pub config_digest: String,
    pub counts: ConfusionCounts,
    pub valid_rate: f64,
    /// `None` when a class has no valid samples.
    pub metrics: Option<Metrics>,
    pub tokens_per_sample: f64,
    pub tokens_estimated: bool,
    pub notes: Vec<String>,
}

pub const TOKENS_NOTE: &str = "tokens_per_sample averages over all samples, invalid ones included";
pub const ESTIMATED_NOTE: &str = "ESTIMATED: some calls reported no usage; whitespace token counts were used";

/// Aggregates the traces of one workflow against the benchmark.
pub fn aggregate_run(traces: &[&Trace], bench: &[Sample], allow_mixed: bool) -> Result<RunReport, EvalError> {
    let first = traces.first().ok_or(EvalError::Empty)?;
    let workflow = first.workflow.clone();
    let labels: BTreeMap<String, Label> = bench.iter().map(|s| (s.id(), s.label)).collect();
    let orphans: Vec<String> = traces
        .iter()
        .filter(|t| !labels.contains_key(&t.sample_id))
        .map(|t| t.sample_id.clone())
        .collect();
    if !orphans.is_empty() {
        return Err(EvalError::Orphans(orphans));
    }
    let mut seen = BTreeSet::new();
    for t in traces {
        if !seen.insert(t.sample_id.as_str()) {
            return Err(EvalError::Duplicate(t.sample_id.clone(), workflow));
        }
    }
    let missing: Vec<String> = labels.keys().filter(|k| !seen.contains(k.as_str())).cloned().collect();
    if !missing.is_empty() {
        return Err(EvalError::Missing { workflow, missing });
    }
    let digests: BTreeSet<&str> = traces.iter().map(|t| t.config_digest.as_str()).collect();
    if digests.len() > 1 && !allow_mixed {
        return Err(EvalError::MixedDigest {
            workflow,
            digests: digests.into_iter().map(String::from).collect(),
        });
    }
    let mut counts = ConfusionCounts::default();
    let mut tokens = 0u64;
    let mut estimated = false;
    let mut backends = BTreeSet::new();
    for t in traces {
        counts.add(labels[&t.sample_id], t.prediction);
        tokens += t.usage.total();
        estimated |= t.usage.estimated;
        backends.extend(t.backends.iter().cloned());
    }
    let mut notes = vec![TOKENS_NOTE.to_string()];
    if estimated {
        notes.push(ESTIMATED_NOTE.to_string());
    }
    let metrics = match compute_metrics(&counts) {
        Ok(m) => Some(m),
        Err(e) => {
            notes.push(format!("UNDEFINED: {e}"));
            None
        }
    };
    Ok(RunReport {
        workflow,
        backends: backends.into_iter().collect(),
        config_digest: digests.into_iter().collect::<Vec<_>>().join("+"),
        valid_rate: counts.valid() as f64 / counts.n_total as f64,
        counts,
        metrics,
        tokens_per_sample: tokens as f64 / traces.len() as f64,
        tokens_estimated: estimated,
        notes,
    })
}

/// One report per workflow, in order of first appearance.
pub fn aggregate_all(traces: &[Trace], bench: &[Sample], allow_mixed: bool) -> Result<Vec<RunReport>, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut order: Vec<&str> = Vec::new();
    for t in traces {
        if !order.contains(&t.workflow.as_str()) {
            order.push(&t.workflow);
        }
    }
    order
        .into_iter()
        .map(|w| {
            let group: Vec<&Trace> = traces.iter().filter(|t| t.workflow == w).collect();
            aggregate_run(&group, bench, allow_mixed)
        })
        .collect()
}

pub fn reports_json(reports: &[RunReport]) -> String {
    let mut s = serde_json::to_string_pretty(&serde_json::json!({ "reports": reports })).expect("report serializes");
    s.push('\n');
    s
}

/// Aligned text table with one row per workflow.
pub fn reports_table(reports: &[RunReport]) -> String {
    let header = [
        "Workflow",
        "Backends",
        "Valid rate",
        "TPR",
        "TNR",
        "BA",
        "G-mean",
        "MCC",
        "Tokens/Sample",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in reports {
        let m = |f: fn(&Metrics) -> f64| {
            r.metrics
                .as_ref()
                .map(|x| format!("{:.4}", f(x)))
                .unwrap_or("UNDEFINED".into())
        };
        let mut tokens = format!("{:.2}", r.tokens_per_sample);
        if r.tokens_estimated {
            tokens.push_str(" (est.)");
        }
        rows.push(vec![
            r.workflow.clone(),
            r.backends.join(", "),
            format!("{:.4}", r.valid_rate),
            m(|x| x.tpr),
            m(|x| x.tnr),
            m(|x| x.ba),
            m(|x| x.g_mean),
            m(|x| x.mcc),
            tokens,
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                if i < 2 {
                    format!("{cell:<w$}", w = widths[i])
                } else {
                    format!("{cell:>w$}", w = widths[i])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if n == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}
