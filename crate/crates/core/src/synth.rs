//! Seeded synthetic ICU event streams for demos and tests.
//!
//! Stays are calm at the bedside with borderline MAP so that many hours pass
//! the inclusion criteria; a fraction of stays deteriorate part-way through,
//! which produces positive labels in the hours before the SOFA rise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::events::{EventKind, EventRecord};
use crate::cohort::window::HOUR;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub stays: usize,
    pub seed: u64,
    pub min_hours: i64,
    pub max_hours: i64,
    /// Probability that a stay deteriorates at some point.
    pub p_deteriorate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            stays: 200,
            seed: 0,
            min_hours: 24,
            max_hours: 72,
            p_deteriorate: 0.6,
        }
    }
}

const FIRST_STAY_ID: u64 = 30_000_000;
const RHYTHMS: [&str; 4] = ["SINUS_RHYTHM", "SINUS_TACHYCARDIA", "AFIB", "SINUS_BRADYCARDIA"];

/// Stay-major, time-sorted records.
pub fn generate(config: &SynthConfig) -> Vec<EventRecord> {
    (0..config.stays)
        .flat_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            generate_stay(&format!("{}", FIRST_STAY_ID + i as u64), config, &mut rng)
        })
        .collect()
}

/// SOFA components in the order resp, coag, liver, cardio, cns, renal.
const COMPONENTS: [EventKind; 6] = [
    EventKind::SofaResp,
    EventKind::SofaCoag,
    EventKind::SofaLiver,
    EventKind::SofaCardio,
    EventKind::SofaCns,
    EventKind::SofaRenal,
];

fn generate_stay(stay: &str, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<EventRecord> {
    let hours = rng.gen_range(config.min_hours..=config.max_hours.max(config.min_hours));
    let onset = if rng.gen_bool(config.p_deteriorate.clamp(0.0, 1.0)) {
        Some(rng.gen_range(4..hours.max(5)))
    } else {
        None
    };
    let mut base = [0i64; 6];
    for c in base.iter_mut() {
        *c = rng.gen_range(0..=2);
    }
    let map_mean: f64 = rng.gen_range(60.0..72.0);
    let hr_mean: f64 = rng.gen_range(70.0..115.0);
    let on_pressor = rng.gen_bool(0.3);
    let pain_prone = rng.gen_bool(0.2);
    let mut rhythm = RHYTHMS[rng.gen_range(0..RHYTHMS.len())];

    let mut out = Vec::new();
    let num = |out: &mut Vec<EventRecord>, t: i64, k: EventKind, v: f64| out.push(EventRecord::number(stay, t, k, v));

    for h in 0..hours {
        let start = h * HOUR;
        // Degree of deterioration in this hour, 0 before onset, up to 3 points.
        let worse = onset.map(|o| (h - o + 1).clamp(0, 3)).unwrap_or(0);
        let pre = onset.is_some_and(|o| h + 6 >= o && h < o);

        let pain = if pain_prone && rng.gen_bool(0.5) {
            rng.gen_range(1..=5)
        } else {
            0
        };
        num(&mut out, start + rng.gen_range(1..60), EventKind::Pain, pain as f64);
        for _ in 0..rng.gen_range(1..=2) {
            let r = match rng.gen_range(0..20) {
                0 => 1,
                1 => -3,
                2..=8 => -1,
                9..=10 => -2,
                _ => 0,
            };
            num(&mut out, start + rng.gen_range(1..60), EventKind::Rass, r as f64);
        }

        let drift = if pre || worse > 0 { -4.0 } else { 0.0 };
        let mut t = start + rng.gen_range(1..6);
        while t < start + HOUR {
            let v: f64 = map_mean + drift + rng.gen_range(-7.0..7.0);
            num(&mut out, t, EventKind::Map, v.round());
            t += rng.gen_range(3..13);
        }
        for q in 0..4 {
            let tq = start + q * 15 + rng.gen_range(1..15);
            num(
                &mut out,
                tq,
                EventKind::Hr,
                (hr_mean + rng.gen_range(-8.0..8.0) + 4.0 * worse as f64).round(),
            );
            num(
                &mut out,
                tq,
                EventKind::Spo2,
                (96.0 - worse as f64 + rng.gen_range(-3.0f64..3.0)).min(100.0).round(),
            );
        }
        if h % 4 == 0 {
            let temp: f64 = 36.8 + rng.gen_range(-0.6..0.9) + 0.3 * worse as f64;
            num(&mut out, start + 30, EventKind::Temp, (temp * 10.0).round() / 10.0);
            if rng.gen_bool(0.15) {
                rhythm = RHYTHMS[rng.gen_range(0..RHYTHMS.len())];
            }
            out.push(EventRecord::token(stay, start + 31, EventKind::Rhythm, rhythm));
        }
        if h % 24 == 2 {
            let wbc: f64 = rng.gen_range(5.0..14.0) + 2.0 * worse as f64;
            num(&mut out, start + 40, EventKind::Wbc, (wbc * 10.0).round() / 10.0);
        }
        if h % 6 == 3 || (pre && rng.gen_bool(0.3)) {
            let lac: f64 = rng.gen_range(0.7..2.2) + if pre { 0.6 } else { 0.0 } + 0.8 * worse as f64;
            num(&mut out, start + 45, EventKind::Lactate, (lac * 10.0).round() / 10.0);
        }
        let urine: f64 = (rng.gen_range(0.3..1.4) - 0.15 * worse as f64).max(0.0);
        num(
            &mut out,
            start + 55,
            EventKind::UrineRate,
            (urine * 100.0).round() / 100.0,
        );
        if on_pressor || worse >= 2 {
            let ne: f64 = rng.gen_range(0.02..0.12) + 0.05 * worse as f64;
            num(
                &mut out,
                start + 50,
                EventKind::NorepiEq,
                (ne * 1000.0).round() / 1000.0,
            );
        }

        // Hourly SOFA at the top of the next hour, so it belongs to hour h + 1.
        let mut comps = base;
        comps[3] += worse.min(2);
        comps[5] += (worse - 2).max(0) + i64::from(worse >= 2);
        for c in comps.iter_mut() {
            *c = (*c).min(4);
        }
        let at = (h + 1) * HOUR;
        for (kind, v) in COMPONENTS.iter().zip(comps) {
            num(&mut out, at, *kind, v as f64);
        }
        num(&mut out, at, EventKind::SofaTotal, comps.iter().sum::<i64>() as f64);
    }
    out.sort_by_key(|r| r.time_min);
    out
}
