//! Inclusion criteria, SOFA-delta labels, overlap exclusion and balanced sampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::events::{EventKind, StayEvents};
use super::window::{sofa_at_hour, window_aggregate, HOUR};
use super::{CohortError, Label, Sample};
use crate::features::{FeatureMap, FeatureName, FeatureValue};

/// First failing inclusion criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingSubjective,
    Pain,
    RassCount,
    RassMax,
    RassMin,
    MapBurden,
    MapCoverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inclusion {
    Include,
    Exclude(ExclusionReason),
}

/// Calm bedside presentation with objective hypotension burden.
pub fn check_inclusion(features: &FeatureMap) -> Inclusion {
    use ExclusionReason::*;

    let pain = features.get(FeatureName::PainMaxLast1h);
    let FeatureValue::Rass(rass) = features.get(FeatureName::RassWindowLast1h) else {
        return Inclusion::Exclude(MissingSubjective);
    };
    let Some(pain) = pain.as_f64() else {
        return Inclusion::Exclude(MissingSubjective);
    };

    let low65 = features.get(FeatureName::MapLowMinutesLast1hThr65).as_f64();
    let covered = features.get(FeatureName::HasMapCoverageLast1h).as_flag();

    let failing = if pain != 0.0 {
        Some(Pain)
    } else if rass.n < 1 {
        Some(RassCount)
    } else if rass.max > 0 {
        Some(RassMax)
    } else if rass.min <= -3 {
        Some(RassMin)
    } else if !low65.is_some_and(|m| m > 5.0) {
        Some(MapBurden)
    } else if covered != Some(true) {
        Some(MapCoverage)
    } else {
        None
    };
    failing.map(Inclusion::Exclude).unwrap_or(Inclusion::Include)
}

/// Positive iff the worst follow-up SOFA exceeds the current value by at least 2.
/// An empty follow-up labels negative.
pub fn compute_label(sofa_at_t: i64, sofa_next_12h: &[i64]) -> Label {
    match sofa_next_12h.iter().max() {
        Some(max) if max - sofa_at_t >= 2 => Label::Positive,
        _ => Label::Negative,
    }
}

/// Hourly SOFA totals in `(hour, hour + horizon]`; hours without a value are skipped.
pub fn follow_up(stay: &StayEvents, hour: i64, horizon_hours: i64) -> Vec<i64> {
    (hour + 1..=hour + horizon_hours)
        .filter_map(|h| sofa_at_hour(stay, EventKind::SofaTotal, h))
        .collect()
}

/// Label at `hour`, or `None` when the stay has no SOFA total in that hour.
pub fn label_at(stay: &StayEvents, hour: i64, horizon_hours: i64) -> Option<Label> {
    let now = sofa_at_hour(stay, EventKind::SofaTotal, hour)?;
    Some(compute_label(now, &follow_up(stay, hour, horizon_hours)))
}

/// Pool construction settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    /// Minimum distance in hours between two kept samples of the same stay.
    pub min_gap_hours: i64,
    /// Follow-up horizon for labeling.
    pub horizon_hours: i64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            min_gap_hours: 12,
            horizon_hours: 12,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PoolStats {
    pub candidate_hours: usize,
    pub excluded: BTreeMap<String, usize>,
    pub unlabeled: usize,
    pub overlap_dropped: usize,
    pub positives: usize,
    pub negatives: usize,
}

/// Scans every hour of every stay and keeps included, labeled, non-overlapping samples.
pub fn build_pool(stays: &BTreeMap<String, StayEvents>, config: PoolConfig) -> (Vec<Sample>, PoolStats) {
    let mut pool = Vec::new();
    let mut stats = PoolStats::default();
    for (stay_id, stay) in stays {
        let Some(last) = stay.last_time() else { continue };
        let last_hour = last / HOUR;
        let mut last_kept: Option<i64> = None;
        for hour in 1..=last_hour {
            stats.candidate_hours += 1;
            let features = window_aggregate(stay, hour);
            if let Inclusion::Exclude(reason) = check_inclusion(&features) {
                let key = serde_json::to_value(reason)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default();
                *stats.excluded.entry(key).or_default() += 1;
                continue;
            }
            let Some(sofa_now) = features.get(FeatureName::SofaTotal).as_f64() else {
                stats.unlabeled += 1;
                continue;
            };
            if last_kept.is_some_and(|k| hour - k < config.min_gap_hours) {
                stats.overlap_dropped += 1;
                continue;
            }
            let label = compute_label(sofa_now as i64, &follow_up(stay, hour, config.horizon_hours));
            match label {
                Label::Positive => stats.positives += 1,
                Label::Negative => stats.negatives += 1,
            }
            last_kept = Some(hour);
            pool.push(Sample {
                stay_id: stay_id.clone(),
                t_eval: hour,
                features,
                label,
            });
        }
    }
    (pool, stats)
}

/// Draws `n_per_class` samples of each label, deterministically in `seed`.
///
/// The pool is ordered by `(stay_id, t_eval)` before the seeded draw, so the
/// result does not depend on pool order. Output is in that same order.
pub fn balanced_sample(pool: &[Sample], n_per_class: usize, seed: u64) -> Result<Vec<Sample>, CohortError> {
    let mut out = Vec::with_capacity(2 * n_per_class);
    for (i, label) in [Label::Positive, Label::Negative].into_iter().enumerate() {
        let mut class: Vec<&Sample> = pool.iter().filter(|s| s.label == label).collect();
        if class.len() < n_per_class {
            return Err(CohortError::InsufficientClass {
                label,
                available: class.len(),
                requested: n_per_class,
            });
        }
        class.sort_by(|a, b| a.key().cmp(&b.key()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        class.shuffle(&mut rng);
        out.extend(class.into_iter().take(n_per_class).cloned());
    }
    out.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(out)
}
