//! The four-stage staged workflow, run one sample at a time.
//!
//! 1. Programmatic rubric state from bedside inputs and the direct snapshot.
//! 2. Local acquisition loop over retrievable facts.
//! 3. One remote advisory over metadata, local recomputation, bounded merge.
//! 4. Local decision followed by the balance gate.

mod gate;
mod prompts;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::action::{Action, Prediction};
use crate::cohort::Sample;
use crate::features::{FeatureName, FeatureView};
use crate::llm::parse::{parse_acquisition, parse_advisory, parse_decision, StageSchema};
use crate::llm::{Backend, CallKey, Role, Stage, Usage};
use crate::privacy::{build_remote_payload, RemoteCallError, RemoteChannel, SensitiveCorpus};
use crate::rubric::{
    assign_initial_state, constrained_merge, recompute_state, RemoteAdvisory, RubricSchema, RubricState, RuleThresholds,
};
use crate::trace::{call_with_repair, Attempted, CallRecord, Trace};

pub use gate::{apply_gate, balance_gate, GateConfig, GateDecision, GateOutcome, SupportFlags};
pub use prompts::{acquisition_messages, decision_messages, facts_report, stage1_view};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionRequest {
    pub need_data: bool,
    pub facts_keys: Vec<String>,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficiencyResult {
    pub is_sufficient: bool,
    pub remaining_requested_keys: Vec<FeatureName>,
    pub updated_available_keys: Vec<FeatureName>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionOutput {
    pub differential_diagnosis: String,
    pub final_action: Action,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Start every sample at the neutral severity-3 state.
    pub no_stage1: bool,
    /// Skip the remote advisory and the merge.
    pub no_stage3: bool,
}

impl Ablation {
    pub fn label(&self) -> &'static str {
        match (self.no_stage1, self.no_stage3) {
            (false, false) => "care",
            (true, false) => "care-no-stage1",
            (false, true) => "care-no-stage3",
            (true, true) => "care-backbone",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CareConfig {
    pub max_acquisition_rounds: u32,
    pub max_repair_attempts: u32,
    pub rules: RuleThresholds,
    pub gate: GateConfig,
    pub ablation: Ablation,
}

impl Default for CareConfig {
    fn default() -> Self {
        CareConfig {
            max_acquisition_rounds: 3,
            max_repair_attempts: 1,
            rules: RuleThresholds::default(),
            gate: GateConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

pub struct CareContext<'a> {
    pub schema: &'a RubricSchema,
    pub local: &'a dyn Backend,
    /// Required unless Stage 3 is ablated.
    pub remote: Option<&'a RemoteChannel>,
    pub config: &'a CareConfig,
    pub config_digest: &'a str,
}

/// Sufficiency over the requested keys: a key remains outstanding when the
/// store has no value for it.
pub fn check_sufficiency(
    requested: &[FeatureName],
    store: &FeatureView,
    available: &[FeatureName],
) -> SufficiencyResult {
    let remaining: Vec<FeatureName> = requested
        .iter()
        .copied()
        .filter(|k| store.get(*k).is_missing())
        .collect();
    SufficiencyResult {
        is_sufficient: remaining.is_empty(),
        remaining_requested_keys: remaining,
        updated_available_keys: available.to_vec(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct RoundRecord {
    round: u32,
    request: Option<AcquisitionRequest>,
    dropped_keys: Vec<String>,
    retrieved: Vec<(FeatureName, String)>,
    sufficiency: Option<SufficiencyResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum AdvisoryStatus {
    Ok,
    Skipped,
    ParseError,
    RemoteFailure,
    PrivacyViolation,
}

struct Stage2 {
    rounds: Vec<RoundRecord>,
    retrieved: Vec<(FeatureName, String)>,
    store: FeatureView,
    available: Vec<FeatureName>,
}

fn acquisition_loop(
    sample: &Sample,
    snapshot: &FeatureView,
    state: &RubricState,
    ctx: &CareContext,
    calls: &mut Vec<CallRecord>,
) -> Result<Stage2, String> {
    let sid = sample.id();
    let mut s2 = Stage2 {
        rounds: Vec::new(),
        retrieved: Vec::new(),
        store: FeatureView::new(),
        available: Vec::new(),
    };
    for round in 0..ctx.config.max_acquisition_rounds {
        let messages = acquisition_messages(snapshot, state, ctx.schema, &s2.retrieved, round);
        let outcome = call_with_repair(
            ctx.local,
            CallKey::local(&sid, Stage::Acquisition, round),
            messages,
            StageSchema::Acquisition,
            parse_acquisition,
            ctx.config.max_repair_attempts,
            calls,
        )
        .map_err(|e| e.to_string())?;
        let mut record = RoundRecord {
            round,
            request: None,
            dropped_keys: Vec::new(),
            retrieved: Vec::new(),
            sufficiency: None,
            error: None,
        };
        let request = match outcome {
            Attempted::Parsed(r) => r,
            Attempted::Unparseable(e) => {
                record.error = Some(e.to_string());
                s2.rounds.push(record);
                continue;
            }
        };
        record.request = Some(request.clone());
        if !request.need_data {
            s2.rounds.push(record);
            break;
        }
        let mut requested = Vec::new();
        for raw in &request.facts_keys {
            match raw.parse::<FeatureName>() {
                Ok(k) if k.is_requestable() => {
                    if !requested.contains(&k) {
                        requested.push(k);
                    }
                }
                _ => record.dropped_keys.push(raw.clone()),
            }
        }
        for &key in &requested {
            let value = sample.features.get(key).clone();
            let rendered = value.render();
            if !value.is_missing() && !s2.available.contains(&key) {
                s2.available.push(key);
            }
            s2.store.insert(key, value);
            record.retrieved.push((key, rendered.clone()));
            match s2.retrieved.iter_mut().find(|(k, _)| *k == key) {
                Some(slot) => slot.1 = rendered,
                None => s2.retrieved.push((key, rendered)),
            }
        }
        let sufficiency = check_sufficiency(&requested, &s2.store, &s2.available);
        let done = sufficiency.is_sufficient;
        record.sufficiency = Some(sufficiency);
        s2.rounds.push(record);
        if done {
            break;
        }
    }
    Ok(s2)
}

/// Runs all four stages on one sample. Never panics on backend behavior;
/// every failure mode ends in a trace.
pub fn run_care(sample: &Sample, ctx: &CareContext) -> Trace {
    let cfg = ctx.config;
    let mut backends = vec![ctx.local.id().to_string()];
    if let Some(remote) = ctx.remote.filter(|_| !cfg.ablation.no_stage3) {
        backends.push(remote.backend_id().to_string());
    }
    let mut trace = Trace::new(sample, cfg.ablation.label(), ctx.config_digest, backends);
    let mut calls = Vec::new();
    let snapshot = stage1_view(&sample.features);

    // Stage 1
    let initial = if cfg.ablation.no_stage1 {
        ctx.schema
            .state(3, false, "Neutral starting state; programmatic assignment disabled.")
    } else {
        assign_initial_state(&snapshot, ctx.schema, &cfg.rules)
    };
    let mut stages = serde_json::Map::new();
    stages.insert(
        "stage1".into(),
        json!({ "skipped": cfg.ablation.no_stage1, "state": initial }),
    );

    let fail =
        |trace: &mut Trace, calls: Vec<CallRecord>, mut stages: serde_json::Map<String, Value>, at: &str, e: String| {
            stages.insert("failure".into(), json!({ "stage": at, "detail": e }));
            trace.calls = calls;
            trace.finish(Value::Object(stages), Prediction::Invalid);
        };

    // Stage 2
    let s2 = match acquisition_loop(sample, &snapshot, &initial, ctx, &mut calls) {
        Ok(s2) => s2,
        Err(e) => {
            fail(&mut trace, calls, stages, "stage2", e);
            return trace;
        }
    };
    stages.insert(
        "stage2".into(),
        json!({
            "rounds": s2.rounds,
            "facts_report": facts_report(&s2.retrieved),
            "available_keys": s2.available,
        }),
    );

    // Stage 3
    let mut enlarged = snapshot.clone();
    for (k, v) in s2.store.iter() {
        enlarged.insert(k, v.clone());
    }
    let recomputed = recompute_state(&enlarged, ctx.schema, &cfg.rules);
    let (updated, stage3) = if cfg.ablation.no_stage3 {
        (
            recomputed.clone(),
            json!({ "skipped": true, "advisory_status": AdvisoryStatus::Skipped, "recomputed": recomputed, "updated": recomputed }),
        )
    } else {
        let (advisory, status, detail) = remote_advisory(sample, &initial, &s2.available, ctx, &mut calls);
        let merge = constrained_merge(&recomputed, &advisory, ctx.schema);
        let stage3 = json!({
            "skipped": false,
            "payload_keys": s2.available,
            "advisory_status": status,
            "advisory_detail": detail,
            "advisory": advisory,
            "recomputed": recomputed,
            "merge_applied": merge.applied,
            "dropped_candidates": merge.dropped_candidates,
            "updated": merge.state,
        });
        (merge.state, stage3)
    };
    stages.insert("stage3".into(), stage3);

    // Stage 4
    let messages = decision_messages(&snapshot, &s2.retrieved, &initial, &updated);
    let outcome = call_with_repair(
        ctx.local,
        CallKey::local(&sample.id(), Stage::Decision, 0),
        messages,
        StageSchema::Decision,
        parse_decision,
        cfg.max_repair_attempts,
        &mut calls,
    );
    let decision = match outcome {
        Ok(Attempted::Parsed(d)) => d,
        Ok(Attempted::Unparseable(e)) => {
            fail(&mut trace, calls, stages, "stage4", e.to_string());
            return trace;
        }
        Err(e) => {
            fail(&mut trace, calls, stages, "stage4", e.to_string());
            return trace;
        }
    };
    let gate = balance_gate(decision.final_action, &enlarged, &cfg.gate);
    stages.insert(
        "stage4".into(),
        json!({
            "decision": decision,
            "balance_gate": gate.balance_gate,
            "support_count": gate.support_count,
            "support_flags": gate.support_flags,
            "final_action": gate.action,
        }),
    );
    trace.calls = calls;
    trace.finish(Value::Object(stages), gate.action.prediction());
    trace
}

fn remote_advisory(
    sample: &Sample,
    state: &RubricState,
    keys: &[FeatureName],
    ctx: &CareContext,
    calls: &mut Vec<CallRecord>,
) -> (RemoteAdvisory, AdvisoryStatus, Option<String>) {
    let Some(channel) = ctx.remote else {
        return (
            RemoteAdvisory::default(),
            AdvisoryStatus::RemoteFailure,
            Some("no remote channel configured".into()),
        );
    };
    let payload = match build_remote_payload(state, keys, ctx.schema) {
        Ok(p) => p,
        Err(e) => {
            return (
                RemoteAdvisory::default(),
                AdvisoryStatus::PrivacyViolation,
                Some(e.to_string()),
            )
        }
    };
    let corpus = SensitiveCorpus::from_sample(sample);
    let record = |usage, error| CallRecord {
        role: Role::Remote,
        stage: Stage::Advisory,
        round: 0,
        agent: None,
        attempt: 0,
        usage,
        error,
        backend_failure: false,
    };
    match channel.send(&payload, &corpus, &sample.id()) {
        Ok((_, completion)) => match parse_advisory(&completion.text) {
            Ok(adv) => {
                calls.push(record(completion.usage, None));
                (adv, AdvisoryStatus::Ok, None)
            }
            Err(e) => {
                calls.push(record(completion.usage, Some(e.to_string())));
                (
                    RemoteAdvisory::default(),
                    AdvisoryStatus::ParseError,
                    Some(e.to_string()),
                )
            }
        },
        Err(RemoteCallError::Violation(detail)) => (
            RemoteAdvisory::default(),
            AdvisoryStatus::PrivacyViolation,
            Some(detail),
        ),
        Err(e) => {
            calls.push(CallRecord {
                backend_failure: true,
                ..record(Usage::default(), Some(e.to_string()))
            });
            (
                RemoteAdvisory::default(),
                AdvisoryStatus::RemoteFailure,
                Some(e.to_string()),
            )
        }
    }
}
