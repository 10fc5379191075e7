//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the console.
//! The process fails when any criterion fails, except for the entries in
//! `KNOWN_FAILURES`, which are reported as FAIL but do not break the build.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use care_core::action::Action;
use care_core::baselines::{run_confmad, run_rsmad, tie_rank, AgentTurn, Agents};
use care_core::cohort::events::{EventKind, EventRecord, StayEvents};
use care_core::cohort::{build_pool, compute_label, label_at, read_events, Label, PoolConfig, Sample};
use care_core::engine::{run_care, CareConfig, CareContext};
use care_core::eval::{compute_metrics, ConfusionCounts};
use care_core::features::{FeatureMap, FeatureName as F, FeatureValue as V, RassWindow};
use care_core::llm::mock::{MockBackend, MockPolicy, MockScript};
use care_core::llm::{AgentId, Backend, BackendError, CallKey, ChatMessage, Completion, Role};
use care_core::privacy::{
    build_remote_payload, AuditLog, PayloadRenderer, RemoteCallError, RemoteChannel, RemotePayload, ScanResult,
    SensitiveCorpus,
};
use care_core::rubric::{constrained_merge, RemoteAdvisory, RubricSchema, MERGE_MARKER};
use care_core::synth::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Reference metrics are rounded to four places.
const METRIC_TOL: f64 = 0.0005;
/// Rates must reproduce to the printed precision.
const RATE_TOL: f64 = 0.00005;
const METRIC_BUDGET: Duration = Duration::from_secs(1);
const RUN_BUDGET: Duration = Duration::from_secs(60);
const LABEL_INSTANCES: usize = 10_000;
const PRIVACY_SAMPLES: usize = 1_000;
const PLANTED_LEAKS: usize = 100;
const TIE_RERUNS: usize = 100;

/// Criteria that cannot pass on the reference numbers, with the reason.
const KNOWN_FAILURES: [(u32, &str); 1] = [(
    1,
    "the majority-vote row prints BA 0.4910 and G-mean 0.4697, but its own TPR 0.4289 and TNR 0.5596 \
     give 0.4943 and 0.4899; no split of its 6 invalid outputs reaches the printed MCC either",
)];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

struct Row {
    name: &'static str,
    valid: f64,
    tpr: f64,
    tnr: f64,
    ba: f64,
    g: f64,
    mcc: f64,
}

const fn row(name: &'static str, valid: f64, tpr: f64, tnr: f64, ba: f64, g: f64, mcc: f64) -> Row {
    Row {
        name,
        valid,
        tpr,
        tnr,
        ba,
        g,
        mcc,
    }
}

const REFERENCE: [Row; 13] = [
    row("single gpt-oss", 1.0000, 0.1980, 0.8340, 0.5160, 0.4064, 0.0415),
    row("single qwen", 0.9980, 0.3800, 0.6004, 0.4902, 0.4777, -0.0201),
    row("single llada", 0.9810, 0.9388, 0.0692, 0.5040, 0.2550, 0.0162),
    row("majority vote", 0.9940, 0.4289, 0.5596, 0.4910, 0.4697, -0.0197),
    row("rsmad", 0.9970, 0.2751, 0.7435, 0.5093, 0.4523, 0.0210),
    row("confmad", 1.0000, 0.3360, 0.6620, 0.4990, 0.4716, -0.0021),
    row("care gpt-oss", 1.0000, 0.5220, 0.5700, 0.5460, 0.5455, 0.0921),
    row("care qwen", 1.0000, 0.6520, 0.3560, 0.5040, 0.4818, 0.0084),
    row("care llada", 0.9990, 0.6232, 0.3660, 0.4946, 0.4776, -0.0111),
    row("ablation full", 1.0000, 0.5220, 0.5700, 0.5460, 0.5455, 0.0921),
    row("ablation backbone", 1.0000, 0.3900, 0.6920, 0.5410, 0.5195, 0.0860),
    row("ablation no stage 1", 1.0000, 0.4980, 0.5660, 0.5320, 0.5309, 0.0641),
    row("ablation no stage 3", 1.0000, 0.4160, 0.6660, 0.5410, 0.5264, 0.0847),
];

/// Smallest confusion table consistent with a row: invalid outputs are split
/// between the classes so both printed rates are reproduced.
fn reconstruct(r: &Row) -> Option<ConfusionCounts> {
    let invalid = ((1.0 - r.valid) * 1000.0).round() as u64;
    (0..=invalid).find_map(|ip| {
        let pos = 500 - ip;
        let neg = 500 - (invalid - ip);
        let tp = (r.tpr * pos as f64).round() as u64;
        let tn = (r.tnr * neg as f64).round() as u64;
        let fits =
            (tp as f64 / pos as f64 - r.tpr).abs() <= RATE_TOL && (tn as f64 / neg as f64 - r.tnr).abs() <= RATE_TOL;
        fits.then(|| ConfusionCounts::new(tp, neg - tn, tn, pos - tp, invalid))
    })
}

fn metric_regression() -> Outcome {
    let start = Instant::now();
    let mut misses = Vec::new();
    for r in &REFERENCE {
        let Some(counts) = reconstruct(r) else {
            misses.push(format!("{}: no table reproduces the printed rates", r.name));
            continue;
        };
        let m = compute_metrics(&counts).map_err(|e| e.to_string())?;
        for (what, got, want) in [("BA", m.ba, r.ba), ("G-mean", m.g_mean, r.g), ("MCC", m.mcc, r.mcc)] {
            if (got - want).abs() > METRIC_TOL {
                misses.push(format!("{}: {what} {got:.4} vs reference {want:.4}", r.name));
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < METRIC_BUDGET, || format!("took {elapsed:?}"))?;
    if misses.is_empty() {
        Ok(format!("{} rows within ±{METRIC_TOL} in {elapsed:?}", REFERENCE.len()))
    } else {
        Err(misses.join("; "))
    }
}

// ---------------------------------------------------------------- 2

fn worked_example() -> Outcome {
    let mut m = BTreeMap::new();
    for (k, v) in [
        (F::PainMaxLast1h, V::Integer(0)),
        (F::RassWindowLast1h, V::Rass(RassWindow { max: 0, min: -1, n: 2 })),
        (F::MapMedianLast1h, V::Real(66.0)),
        (F::HrMedianLast1h, V::Real(88.0)),
        (F::MapLowMinutesLast1hThr65, V::Integer(12)),
        (F::MapLowMinutesLast1hThr60, V::Integer(3)),
        (F::HasMapCoverageLast1h, V::Flag(true)),
        (F::SofaTotal, V::Integer(4)),
        (F::SofaCardiovascular, V::Integer(1)),
        (F::LactateLatest6h, V::Real(1.1)),
        (F::UrineOutputMlkghr6h, V::Real(0.8)),
        (F::NorepiEqDoseMax1h, V::Real(0.0)),
    ] {
        m.insert(k, v);
    }
    let sample = Sample {
        stay_id: "30000042".into(),
        t_eval: 17,
        features: FeatureMap::from_partial(m),
        label: Label::Negative,
    };
    let keys = [
        "map_median_last1h",
        "lactate_latest_6h",
        "urine_output_mlkghr_6h",
        "norepi_eq_dose_max_1h",
    ];
    let mut local = MockScript::default();
    local.insert(
        "*/acquisition/0",
        json!({"need_data": true, "facts_keys": keys, "reasoning": "Low-MAP minutes need corroboration."}).to_string(),
    );
    local.insert(
        "*/decision/0",
        r#"{"differential_diagnosis": "One domain only.", "final_action": "INVESTIGATE_O"}"#,
    );
    let mut remote = MockScript::default();
    remote.insert(
        "*/advisory/0",
        json!({
            "transition_candidates": ["VERY_LIKELY_WORSENING", "LIKELY_WORSENING", "POTENTIAL_OCCULT_SHOCK", "LIKELY_STABLE"],
            "transition_guidance": "Require agreement across domains before moving up.",
            "transition_reasoning": "Look for shock physiology across several domains."
        })
        .to_string(),
    );
    let local = MockBackend::new("local", local);
    let channel = RemoteChannel::new(
        Arc::new(MockBackend::new("remote", remote)),
        Role::Remote,
        AuditLog::in_memory("a"),
    )
    .map_err(|e| e.to_string())?;
    let schema = RubricSchema::default();
    let config = CareConfig::default();
    let ctx = CareContext {
        schema: &schema,
        local: &local,
        remote: Some(&channel),
        config: &config,
        config_digest: "a",
    };
    let t = run_care(&sample, &ctx);
    let st = &t.stages;
    let fallback = "Fallback to VERY_LIKELY_STABLE (No specific threshold met).";
    let initial = json!({"matched": true, "category": "VERY_LIKELY_STABLE", "severity": 1, "reason": fallback});
    let checks: [(&str, Value, Value); 9] = [
        ("initial state", st["stage1"]["state"].clone(), initial.clone()),
        (
            "requested keys",
            st["stage2"]["rounds"][0]["request"]["facts_keys"].clone(),
            json!(keys),
        ),
        (
            "sufficiency",
            st["stage2"]["rounds"][0]["sufficiency"].clone(),
            json!({"is_sufficient": true, "remaining_requested_keys": [], "updated_available_keys": keys}),
        ),
        ("recomputed state", st["stage3"]["recomputed"].clone(), initial),
        (
            "updated category",
            st["stage3"]["updated"]["category"].clone(),
            json!("LIKELY_STABLE"),
        ),
        (
            "updated severity",
            st["stage3"]["updated"]["severity"].clone(),
            json!(2),
        ),
        (
            "gate",
            st["stage4"]["balance_gate"].clone(),
            json!("downgrade_to_treat_s"),
        ),
        ("support count", st["stage4"]["support_count"].clone(), json!(1)),
        ("final action", st["stage4"]["final_action"].clone(), json!("TREAT_S")),
    ];
    for (what, got, want) in checks {
        ensure(got == want, || format!("{what}: got {got}, expected {want}"))?;
    }
    let reason = st["stage3"]["updated"]["reason"].as_str().unwrap_or_default();
    ensure(reason.starts_with(fallback) && reason.contains(MERGE_MARKER), || {
        format!("merge reason {reason:?}")
    })?;
    ensure(
        st["stage4"]["support_flags"]
            == json!({"hemodynamic": true, "perfusion": false, "renal": false, "pressor": false, "organ": false}),
        || format!("support flags {}", st["stage4"]["support_flags"]),
    )?;
    Ok("VERY_LIKELY_STABLE → 4 keys → LIKELY_STABLE → INVESTIGATE_O gated to TREAT_S (support 1)".into())
}

// ---------------------------------------------------------------- 3

/// Backend wrapper that keeps every call.
struct Recording<B> {
    inner: B,
    calls: Mutex<Vec<(CallKey, Vec<ChatMessage>)>>,
}

impl<B> Recording<B> {
    fn new(inner: B) -> Self {
        Recording {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    fn take(&self) -> Vec<(CallKey, Vec<ChatMessage>)> {
        std::mem::take(&mut *self.calls.lock().unwrap())
    }
}

impl<B: Backend> Backend for Recording<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<Completion, BackendError> {
        self.calls.lock().unwrap().push((key.clone(), messages.to_vec()));
        self.inner.complete(key, messages)
    }
}

fn seeded(id: &str, seed: u64, invalid_rate: f64) -> MockBackend {
    MockBackend::new(
        id,
        MockScript::with_policy(MockPolicy::Seeded {
            seed,
            p_investigate: 0.5,
            invalid_rate,
        }),
    )
}

fn synthetic_pool(stays: usize, seed: u64) -> Result<Vec<Sample>, String> {
    let records = generate(&SynthConfig {
        stays,
        seed,
        min_hours: 16,
        max_hours: 36,
        p_deteriorate: 0.9,
    });
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("events.jsonl");
    let file = std::fs::File::create(&path).map_err(|e| e.to_string())?;
    care_core::cohort::events::write_jsonl(std::io::BufWriter::new(file), &records).map_err(|e| e.to_string())?;
    let ingested = read_events(&path).map_err(|e| e.to_string())?;
    Ok(build_pool(&ingested.stays, PoolConfig::default()).0)
}

/// Test double that appends one sensitive string to an otherwise clean prompt.
struct Leaky(String);

impl PayloadRenderer for Leaky {
    fn render(&self, payload: &RemotePayload) -> Vec<ChatMessage> {
        vec![ChatMessage::user(format!(
            "{}\nContext: {}",
            payload.to_prompt(),
            self.0
        ))]
    }
}

/// Renderings of the sample's values, minus the severity integers 1 to 5
/// that the schema itself prints.
fn leak_candidates(s: &Sample) -> Vec<String> {
    let mut out = vec![s.stay_id.clone()];
    for (_, v) in s.features.iter() {
        match v {
            V::Integer(i) => out.push(i.to_string()),
            V::Real(r) => {
                out.push(v.render());
                out.push(r.to_string());
            }
            V::Token(t) => out.push(t.clone()),
            _ => {}
        }
    }
    out.retain(|t| !["1", "2", "3", "4", "5"].contains(&t.as_str()));
    out
}

fn privacy_suite() -> Outcome {
    let pool = synthetic_pool(500, 11)?;
    ensure(pool.len() >= PRIVACY_SAMPLES, || {
        format!("pool has only {} samples", pool.len())
    })?;
    let samples = &pool[..PRIVACY_SAMPLES];
    let schema = RubricSchema::default();
    let config = CareConfig::default();
    let local = seeded("local", 3, 0.05);
    let audit = AuditLog::in_memory("p");
    let remote = Arc::new(Recording::new(seeded("remote", 4, 0.0)));
    let channel = RemoteChannel::new(remote.clone(), Role::Remote, audit.clone()).map_err(|e| e.to_string())?;
    let ctx = CareContext {
        schema: &schema,
        local: &local,
        remote: Some(&channel),
        config: &config,
        config_digest: "p",
    };
    for s in samples {
        run_care(s, &ctx);
    }
    let entries = audit.entries();
    ensure(entries.len() == PRIVACY_SAMPLES, || {
        format!("{} audit entries", entries.len())
    })?;
    let unclean = entries
        .iter()
        .filter(|e| e.scan_result != ScanResult::Clean || !e.sent)
        .count();
    ensure(unclean == 0, || format!("{unclean} payloads were not clean"))?;
    ensure(remote.take().len() == PRIVACY_SAMPLES, || {
        "remote call count differs".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut caught = 0;
    let mut missed = Vec::new();
    for i in 0..PLANTED_LEAKS {
        let s = &samples[rng.gen_range(0..samples.len())];
        let candidates = leak_candidates(s);
        let leak = candidates[rng.gen_range(0..candidates.len())].clone();
        let backend = Arc::new(Recording::new(seeded("remote", 4, 0.0)));
        let audit = AuditLog::in_memory("p");
        let channel = RemoteChannel::new(backend.clone(), Role::Remote, audit.clone())
            .map_err(|e| e.to_string())?
            .with_renderer(Box::new(Leaky(leak.clone())));
        let payload = build_remote_payload(&schema.state(1 + (i % 5) as u8, true, "r"), &[F::SofaRenal], &schema)
            .map_err(|e| e.to_string())?;
        let blocked = matches!(
            channel.send(&payload, &SensitiveCorpus::from_sample(s), &s.id()),
            Err(RemoteCallError::Violation(_))
        );
        let entry = audit.entries();
        if blocked
            && backend.take().is_empty()
            && entry.len() == 1
            && !entry[0].sent
            && !entry[0].scan_result.is_clean()
        {
            caught += 1;
        } else {
            missed.push(leak);
        }
    }
    ensure(caught == PLANTED_LEAKS, || {
        format!("caught {caught}/{PLANTED_LEAKS} planted leaks; missed {missed:?}")
    })?;
    Ok(format!(
        "{PRIVACY_SAMPLES} payloads CLEAN; {caught}/{PLANTED_LEAKS} planted leaks blocked"
    ))
}

// ---------------------------------------------------------------- 4

fn merge_oracle() -> Outcome {
    let schema = RubricSchema::default();
    let mut cases = 0;
    for local in 1..=5u8 {
        for mask in 1u8..32 {
            let sevs: Vec<u8> = (1..=5).filter(|s| mask & (1 << (s - 1)) != 0).collect();
            let expected = if sevs.contains(&local) {
                local
            } else {
                let dist = |c: u8| (c as i32 - local as i32).abs();
                let best = sevs.iter().map(|&c| dist(c)).min().unwrap();
                let target = sevs.iter().copied().filter(|&c| dist(c) == best).max().unwrap();
                if target > local {
                    local + 1
                } else {
                    local - 1
                }
            };
            let advisory = RemoteAdvisory {
                transition_candidates: sevs.iter().map(|&s| schema.by_severity(s).name.clone()).collect(),
                transition_guidance: String::new(),
                transition_reasoning: String::new(),
            };
            let out = constrained_merge(&schema.state(local, true, "r"), &advisory, &schema);
            ensure(out.state.severity == expected, || {
                format!(
                    "local {local}, candidates {sevs:?}: got {}, expected {expected}",
                    out.state.severity
                )
            })?;
            cases += 1;
        }
    }
    Ok(format!("{cases} cases match"))
}

// ---------------------------------------------------------------- 5

fn labeling_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let hour_value = |events: &[(i64, i64)], h: i64| {
        events
            .iter()
            .filter(|(t, _)| *t > 60 * (h - 1) && *t <= 60 * h)
            .max_by_key(|(t, v)| (*t, *v))
            .map(|(_, v)| *v)
    };
    let mut checked = 0;
    while checked < LABEL_INSTANCES {
        let hours = rng.gen_range(2..40);
        let mut events = Vec::new();
        let mut level: i64 = rng.gen_range(0..10);
        for h in 1..=hours {
            if rng.gen_bool(0.15) {
                continue;
            }
            level = (level + rng.gen_range(-2..=3)).clamp(0, 24);
            events.push((60 * (h - 1) + rng.gen_range(1..=60), level));
        }
        let t = rng.gen_range(1..=hours);
        let expected = hour_value(&events, t).map(|now| {
            let worse = (t + 1..=t + 12)
                .filter_map(|h| hour_value(&events, h))
                .any(|v| v - now >= 2);
            if worse {
                Label::Positive
            } else {
                Label::Negative
            }
        });
        let records: Vec<EventRecord> = events
            .iter()
            .map(|(m, v)| EventRecord::number("s", *m, EventKind::SofaTotal, *v as f64))
            .collect();
        let got = label_at(&StayEvents::from_records(&records), t, 12);
        ensure(got == expected, || {
            format!("hour {t} of {events:?}: got {got:?}, expected {expected:?}")
        })?;
        checked += usize::from(expected.is_some());
    }
    ensure(compute_label(5, &[7]) == Label::Positive, || {
        "delta 2 is not positive".into()
    })?;
    ensure(compute_label(5, &[6]) == Label::Negative, || {
        "delta 1 is not negative".into()
    })?;
    Ok(format!("{checked} instances agree; delta 2 is POSITIVE"))
}

// ---------------------------------------------------------------- 6

fn headers(text: &str) -> Vec<(String, u32)> {
    text.lines()
        .filter_map(|l| l.strip_prefix("#### Agent "))
        .filter_map(|rest| {
            let (a, r) = rest.split_once(", round ")?;
            Some((a.to_string(), r.trim().parse().ok()?))
        })
        .collect()
}

fn section<'t>(text: &'t str, title: &str) -> &'t str {
    text.find(title)
        .map(|i| {
            let rest = &text[i + title.len()..];
            &rest[..rest.find("\n### ").unwrap_or(rest.len())]
        })
        .unwrap_or("")
}

fn user_text(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .filter(|m| m.role == "user")
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

fn protocol_visibility() -> Outcome {
    let pool = synthetic_pool(60, 2)?;
    let samples: Vec<&Sample> = pool.iter().take(20).collect();
    let (a, b, c) = (
        Recording::new(seeded("a", 1, 0.1)),
        Recording::new(seeded("b", 2, 0.1)),
        Recording::new(seeded("c", 3, 0.1)),
    );
    let agents = Agents { a: &a, b: &b, c: &c };
    let collect = || {
        let mut all: Vec<_> = [&a, &b, &c].iter().flat_map(|r| r.take()).collect();
        all.sort_by_key(|(k, _)| (k.round, k.agent, k.attempt));
        all
    };
    let name = |x: AgentId| x.as_str().to_string();
    let mut turns_checked = 0;
    for s in &samples {
        run_rsmad(s, &agents, 1, "v");
        for (key, messages) in collect() {
            let text = user_text(&messages);
            let me = key.agent.ok_or("turn without agent")?;
            let expected_own: Vec<(String, u32)> = if key.round == 0 {
                vec![]
            } else {
                vec![(name(me), key.round - 1)]
            };
            let expected_others: Vec<(String, u32)> = if key.round == 0 {
                vec![]
            } else {
                AgentId::ALL
                    .iter()
                    .filter(|&&x| x != me)
                    .map(|&x| (name(x), key.round - 1))
                    .collect()
            };
            let ok = headers(section(&text, "### Your Previous Answer")) == expected_own
                && headers(section(&text, "### Debate History")) == expected_others
                && headers(&text).len() == expected_own.len() + expected_others.len();
            ensure(ok, || {
                format!(
                    "RSMAD {} agent {me} round {} sees {:?}",
                    s.id(),
                    key.round,
                    headers(&text)
                )
            })?;
            turns_checked += 1;
        }

        let trace = run_confmad(s, &agents, 1, "v");
        let order: Vec<(String, u32)> = serde_json::from_value::<Vec<AgentTurn>>(trace.stages["turns"].clone())
            .map_err(|e| e.to_string())?
            .iter()
            .map(|t| (name(t.agent), t.round))
            .collect();
        for (key, messages) in collect() {
            let me = (name(key.agent.ok_or("turn without agent")?), key.round);
            let pos = order.iter().position(|t| *t == me).ok_or("turn missing from trace")?;
            let expected = if key.round == 0 { vec![] } else { order[..pos].to_vec() };
            let seen = headers(&user_text(&messages));
            ensure(seen == expected, || {
                format!("ConfMAD {} turn {me:?} sees {seen:?}", s.id())
            })?;
            turns_checked += 1;
        }
    }

    let fixed = |action: Action| {
        let mut script = MockScript::default();
        script.insert(
            "*/turn/*",
            format!(
                r#"{{"reasoning": "r", "action": "{}", "confidence": 90}}"#,
                action.as_str()
            ),
        );
        MockBackend::new("fixed", script)
    };
    let (ta, tb, tc) = (
        fixed(Action::Observe),
        fixed(Action::TreatS),
        fixed(Action::InvestigateO),
    );
    let tied = Agents { a: &ta, b: &tb, c: &tc };
    for s in &samples {
        let expected = *AgentId::ALL.iter().min_by_key(|&&x| tie_rank(&s.id(), x)).unwrap();
        for _ in 0..TIE_RERUNS {
            let t = run_confmad(s, &tied, 1, "v");
            ensure(t.stages["winner"] == json!(expected), || {
                format!("{}: winner {} instead of {expected}", s.id(), t.stages["winner"])
            })?;
        }
    }
    Ok(format!(
        "{turns_checked} turns satisfy their visibility rule; tie winner stable over {TIE_RERUNS} reruns × {} samples",
        samples.len()
    ))
}

// ---------------------------------------------------------------- 7 and 8

fn care(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_care"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "care {} exited {:?}: {}",
            args.first().unwrap_or(&""),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("")
        ))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// synth → build-cohort → run → report, inside `dir`. Returns the report
/// bytes and the run's wall time.
fn pipeline(dir: &Path) -> Result<(Vec<u8>, Duration), String> {
    let events = dir.join("events.jsonl");
    let bench = dir.join("bench.jsonl");
    let local = dir.join("local.json");
    let remote = dir.join("remote.json");
    let traces = dir.join("traces.jsonl");
    let report = dir.join("report.json");
    let script =
        |seed: u64| json!({"policy": {"kind": "seeded", "seed": seed, "p_investigate": 0.4, "invalid_rate": 0.03}});
    std::fs::write(&local, script(1).to_string()).map_err(|e| e.to_string())?;
    std::fs::write(&remote, script(2).to_string()).map_err(|e| e.to_string())?;
    care(&[
        "synth-events",
        "--out",
        p(&events),
        "--stays",
        "1000",
        "--seed",
        "7",
        "--min-hours",
        "16",
        "--max-hours",
        "36",
        "--p-deteriorate",
        "0.9",
    ])?;
    care(&[
        "build-cohort",
        "--events",
        p(&events),
        "--out",
        p(&bench),
        "--n-per-class",
        "500",
        "--seed",
        "7",
    ])?;
    let start = Instant::now();
    care(&[
        "run",
        "--bench",
        p(&bench),
        "--workflow",
        "care",
        "--local",
        &format!("mock:{}", p(&local)),
        "--remote",
        &format!("mock:{}", p(&remote)),
        "--traces",
        p(&traces),
    ])?;
    let elapsed = start.elapsed();
    care(&[
        "report",
        "--traces",
        p(&traces),
        "--bench",
        p(&bench),
        "--format",
        "json",
        "--out",
        p(&report),
    ])?;
    Ok((std::fs::read(&report).map_err(|e| e.to_string())?, elapsed))
}

fn determinism() -> Outcome {
    let (d1, d2) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    let (first, t1) = pipeline(d1.path())?;
    let (second, t2) = pipeline(d2.path())?;
    ensure(first == second, || "reports differ between identical runs".into())?;
    let parsed: Value = serde_json::from_slice(&first).map_err(|e| e.to_string())?;
    let counts = &parsed["reports"][0]["counts"];
    let total: u64 = ["tp", "fp", "tn", "fn", "invalid"]
        .iter()
        .filter_map(|k| counts[*k].as_u64())
        .sum();
    ensure(total == 1000, || format!("report covers {total} samples: {counts}"))?;
    let slowest = t1.max(t2);
    ensure(slowest < RUN_BUDGET, || format!("1,000-sample run took {slowest:?}"))?;
    Ok(format!(
        "{} identical report bytes; 1,000-sample run in {slowest:.2?}",
        first.len()
    ))
}

fn degenerate_collapse() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let events = dir.path().join("events.jsonl");
    let bench = dir.path().join("bench.jsonl");
    care(&[
        "synth-events",
        "--out",
        p(&events),
        "--stays",
        "150",
        "--seed",
        "5",
        "--min-hours",
        "16",
        "--max-hours",
        "36",
    ])?;
    care(&[
        "build-cohort",
        "--events",
        p(&events),
        "--out",
        p(&bench),
        "--n-per-class",
        "40",
        "--seed",
        "5",
    ])?;
    let mut rows = Vec::new();
    for action in ["OBSERVE", "TREAT_S", "INVESTIGATE_O"] {
        let script = dir.path().join(format!("{action}.json"));
        let traces = dir.path().join(format!("{action}.traces.jsonl"));
        let report = dir.path().join(format!("{action}.report.json"));
        std::fs::write(
            &script,
            json!({"policy": {"kind": "constant", "action": action}}).to_string(),
        )
        .map_err(|e| e.to_string())?;
        care(&[
            "run",
            "--bench",
            p(&bench),
            "--workflow",
            "single",
            "--local",
            &format!("mock:{}", p(&script)),
            "--traces",
            p(&traces),
            "--report",
            p(&report),
        ])?;
        let v: Value =
            serde_json::from_slice(&std::fs::read(&report).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let m = &v["reports"][0]["metrics"];
        let (mcc, g) = (m["mcc"].as_f64(), m["g_mean"].as_f64());
        ensure(mcc == Some(0.0) && g == Some(0.0), || {
            format!("constant {action}: MCC {mcc:?}, G-mean {g:?}")
        })?;
        rows.push(action);
    }
    Ok(format!("constant {} each give MCC 0 and G-mean 0", rows.join("/")))
}

fn main() {
    type Criterion = (u32, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        (1, "metric regression", metric_regression),
        (2, "worked-example replay", worked_example),
        (3, "privacy suite", privacy_suite),
        (4, "merge oracle", merge_oracle),
        (5, "labeling oracle", labeling_oracle),
        (6, "protocol visibility", protocol_visibility),
        (7, "determinism", determinism),
        (8, "degenerate collapse", degenerate_collapse),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        match run() {
            Ok(detail) => {
                println!("PASS [{id}] {name}: {detail}");
                if known.is_some() {
                    unexpected.push(format!("criterion {id} passed but is listed as a known failure"));
                }
            }
            Err(detail) => {
                println!("FAIL [{id}] {name}: {detail}");
                match known {
                    Some(why) => println!("     known failure: {why}"),
                    None => unexpected.push(format!("criterion {id}: {detail}")),
                }
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("{}", unexpected.join("\n"));
        std::process::exit(1);
    }
}
