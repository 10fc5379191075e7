//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Mutex;

use care_core::cohort::{Label, Sample};
use care_core::features::{FeatureMap, FeatureName, FeatureValue, RassWindow};
use care_core::llm::{Backend, BackendError, CallKey, ChatMessage, Completion};
use rand::Rng;

/// A sample with plausible, randomized values; roughly 15% of the
/// non-bedside features are missing.
pub fn random_sample<R: Rng>(rng: &mut R) -> Sample {
    use FeatureName as F;
    let mut m = BTreeMap::new();
    let real = |rng: &mut R, lo: f64, hi: f64, places: i32| {
        let p = 10f64.powi(places);
        (rng.gen_range(lo..hi) * p).round() / p
    };
    let rass_min = rng.gen_range(-2..=0);
    m.insert(F::PainMaxLast1h, FeatureValue::Integer(0));
    m.insert(
        F::RassWindowLast1h,
        FeatureValue::Rass(RassWindow {
            max: rng.gen_range(rass_min..=0),
            min: rass_min,
            n: rng.gen_range(1..=4),
        }),
    );
    let low65 = rng.gen_range(6..=60);
    let low60 = rng.gen_range(0..=low65);
    let covered = rng.gen_range(low65.max(30)..=60);
    let values: Vec<(FeatureName, FeatureValue)> = vec![
        (F::MapMedianLast1h, FeatureValue::Real(real(rng, 48.0, 80.0, 1))),
        (F::HrMedianLast1h, FeatureValue::Real(real(rng, 45.0, 150.0, 1))),
        (F::HasMapCoverageLast1h, FeatureValue::Flag(true)),
        (F::MapCoveredMinutesLast1h, FeatureValue::Integer(covered)),
        (F::MapLowMinutesLast1hThr65, FeatureValue::Integer(low65)),
        (F::MapLowMinutesLast1hThr60, FeatureValue::Integer(low60)),
        (F::SofaTotal, FeatureValue::Integer(rng.gen_range(0..=20))),
        (F::SofaResp, FeatureValue::Integer(rng.gen_range(0..=4))),
        (F::SofaCoag, FeatureValue::Integer(rng.gen_range(0..=4))),
        (F::SofaLiver, FeatureValue::Integer(rng.gen_range(0..=4))),
        (F::SofaCardiovascular, FeatureValue::Integer(rng.gen_range(0..=4))),
        (F::SofaCns, FeatureValue::Integer(rng.gen_range(0..=4))),
        (F::SofaRenal, FeatureValue::Integer(rng.gen_range(0..=4))),
        (F::LactateLatest6h, FeatureValue::Real(real(rng, 0.4, 9.0, 1))),
        (F::UrineOutputMlkghr6h, FeatureValue::Real(real(rng, 0.0, 2.5, 3))),
        (F::NorepiEqDoseMax1h, FeatureValue::Real(real(rng, 0.0, 0.6, 3))),
        (F::Spo2Latest1h, FeatureValue::Real(real(rng, 82.0, 100.0, 0))),
        (F::TemperatureLatest4h, FeatureValue::Real(real(rng, 35.0, 40.5, 1))),
        (F::WbcLatest24h, FeatureValue::Real(real(rng, 1.0, 30.0, 1))),
        (
            F::RhythmRecent6h,
            FeatureValue::Token(["SINUS_RHYTHM", "AFIB", "SINUS_TACHYCARDIA"][rng.gen_range(0..3)].into()),
        ),
    ];
    for (name, value) in values {
        let keep = name == F::HasMapCoverageLast1h || rng.gen_bool(0.85);
        m.insert(name, if keep { value } else { FeatureValue::Missing });
    }
    Sample {
        stay_id: rng.gen_range(30_000_000u64..40_000_000).to_string(),
        t_eval: rng.gen_range(1..400),
        features: FeatureMap::from_partial(m),
        label: if rng.gen_bool(0.5) {
            Label::Positive
        } else {
            Label::Negative
        },
    }
}

/// Wraps a backend and keeps every call it receives, in order.
pub struct Recording<B> {
    pub inner: B,
    pub calls: Mutex<Vec<(CallKey, Vec<ChatMessage>)>>,
}

impl<B> Recording<B> {
    pub fn new(inner: B) -> Self {
        Recording {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn take(&self) -> Vec<(CallKey, Vec<ChatMessage>)> {
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

/// Concatenated user-message text of one call.
pub fn user_text(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .filter(|m| m.role == "user")
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}
