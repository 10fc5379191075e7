//! Time-windowed feature summaries anchored at an evaluation hour.
//!
//! Windows are half-open on the left: an event at minute `t` belongs to a
//! window of length `L` ending at `T` iff `T - L < t <= T`. Numeric readings
//! charted in the same minute are averaged before median/latest summaries.

use std::collections::BTreeMap;

use super::events::{EventKind, StayEvents};
use crate::features::{FeatureMap, FeatureName, FeatureValue, RassWindow};

pub const HOUR: i64 = 60;

/// Lookbacks in minutes.
const LOOKBACK_1H: i64 = 60;
const LOOKBACK_4H: i64 = 4 * 60;
const LOOKBACK_6H: i64 = 6 * 60;
const LOOKBACK_24H: i64 = 24 * 60;

fn window<T>(series: &[(i64, T)], end: i64, lookback: i64) -> &[(i64, T)] {
    let lo = series.partition_point(|(t, _)| *t <= end - lookback);
    let hi = series.partition_point(|(t, _)| *t <= end);
    &series[lo..hi]
}

/// Averages readings that share a minute. Input must be time-sorted.
fn dedupe_minutes(readings: &[(i64, f64)]) -> Vec<(i64, f64)> {
    let mut out: Vec<(i64, f64)> = Vec::with_capacity(readings.len());
    let mut i = 0;
    while i < readings.len() {
        let t = readings[i].0;
        let mut j = i;
        let mut sum = 0.0;
        while j < readings.len() && readings[j].0 == t {
            sum += readings[j].1;
            j += 1;
        }
        out.push((t, sum / (j - i) as f64));
        i = j;
    }
    out
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

/// Carry-forward MAP accounting over the hour ending at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapCoverage {
    pub covered: i64,
    pub below_65: i64,
    pub below_60: i64,
}

/// Each reading covers the one-minute slots from its own minute up to the
/// next reading or the end of the window. Slots are minutes `end-59 ..= end`.
pub fn map_coverage(readings: &[(i64, f64)], end: i64) -> MapCoverage {
    let mut cov = MapCoverage {
        covered: 0,
        below_65: 0,
        below_60: 0,
    };
    for (i, (t, v)) in readings.iter().enumerate() {
        let until = readings.get(i + 1).map(|(next, _)| *next).unwrap_or(end + 1);
        let minutes = until - t;
        cov.covered += minutes;
        if *v < 65.0 {
            cov.below_65 += minutes;
        }
        if *v < 60.0 {
            cov.below_60 += minutes;
        }
    }
    cov
}

fn real_or_missing(v: Option<f64>) -> FeatureValue {
    v.map(FeatureValue::Real).unwrap_or(FeatureValue::Missing)
}

/// Value of an hourly SOFA series at hour `hour`: the latest reading within
/// that hour. Duplicates in one minute resolve to the larger value.
pub fn sofa_at_hour(stay: &StayEvents, kind: EventKind, hour: i64) -> Option<i64> {
    window(stay.series(kind), hour * HOUR, HOUR)
        .last()
        .map(|(_, v)| v.round() as i64)
}

/// Computes the 22-feature vector of `stay` at evaluation hour `t_eval`.
pub fn window_aggregate(stay: &StayEvents, t_eval: i64) -> FeatureMap {
    let end = t_eval * HOUR;
    let mut out = BTreeMap::new();

    let pain = window(stay.series(EventKind::Pain), end, LOOKBACK_1H);
    out.insert(
        FeatureName::PainMaxLast1h,
        pain.iter()
            .map(|(_, v)| v.round() as i64)
            .max()
            .map(FeatureValue::Integer)
            .unwrap_or(FeatureValue::Missing),
    );

    let rass = window(stay.series(EventKind::Rass), end, LOOKBACK_1H);
    let rass_value = if rass.is_empty() {
        FeatureValue::Missing
    } else {
        let vals = rass.iter().map(|(_, v)| v.round() as i32);
        FeatureValue::Rass(RassWindow {
            max: vals.clone().max().unwrap_or_default(),
            min: vals.min().unwrap_or_default(),
            n: rass.len() as u32,
        })
    };
    out.insert(FeatureName::RassWindowLast1h, rass_value);

    let map = dedupe_minutes(window(stay.series(EventKind::Map), end, LOOKBACK_1H));
    let cov = map_coverage(&map, end);
    let mut map_vals: Vec<f64> = map.iter().map(|(_, v)| *v).collect();
    out.insert(FeatureName::MapMedianLast1h, real_or_missing(median(&mut map_vals)));
    out.insert(FeatureName::MapCoveredMinutesLast1h, FeatureValue::Integer(cov.covered));
    out.insert(FeatureName::HasMapCoverageLast1h, FeatureValue::Flag(cov.covered > 0));
    let burden = |minutes| {
        if map.is_empty() {
            FeatureValue::Missing
        } else {
            FeatureValue::Integer(minutes)
        }
    };
    out.insert(FeatureName::MapLowMinutesLast1hThr65, burden(cov.below_65));
    out.insert(FeatureName::MapLowMinutesLast1hThr60, burden(cov.below_60));

    let mut hr: Vec<f64> = dedupe_minutes(window(stay.series(EventKind::Hr), end, LOOKBACK_1H))
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    out.insert(FeatureName::HrMedianLast1h, real_or_missing(median(&mut hr)));

    let sofa = [
        (FeatureName::SofaTotal, EventKind::SofaTotal),
        (FeatureName::SofaResp, EventKind::SofaResp),
        (FeatureName::SofaCoag, EventKind::SofaCoag),
        (FeatureName::SofaLiver, EventKind::SofaLiver),
        (FeatureName::SofaCardiovascular, EventKind::SofaCardio),
        (FeatureName::SofaCns, EventKind::SofaCns),
        (FeatureName::SofaRenal, EventKind::SofaRenal),
    ];
    for (name, kind) in sofa {
        out.insert(
            name,
            sofa_at_hour(stay, kind, t_eval)
                .map(FeatureValue::Integer)
                .unwrap_or(FeatureValue::Missing),
        );
    }

    let latest = |kind, lookback| {
        dedupe_minutes(window(stay.series(kind), end, lookback))
            .last()
            .map(|(_, v)| *v)
    };
    out.insert(
        FeatureName::LactateLatest6h,
        real_or_missing(latest(EventKind::Lactate, LOOKBACK_6H)),
    );
    out.insert(
        FeatureName::Spo2Latest1h,
        real_or_missing(latest(EventKind::Spo2, LOOKBACK_1H)),
    );
    out.insert(
        FeatureName::TemperatureLatest4h,
        real_or_missing(latest(EventKind::Temp, LOOKBACK_4H)),
    );
    out.insert(
        FeatureName::WbcLatest24h,
        real_or_missing(latest(EventKind::Wbc, LOOKBACK_24H)),
    );

    let urine = dedupe_minutes(window(stay.series(EventKind::UrineRate), end, LOOKBACK_6H));
    let urine_mean = (!urine.is_empty()).then(|| urine.iter().map(|(_, v)| v).sum::<f64>() / urine.len() as f64);
    out.insert(FeatureName::UrineOutputMlkghr6h, real_or_missing(urine_mean));

    let norepi = window(stay.series(EventKind::NorepiEq), end, LOOKBACK_1H)
        .iter()
        .map(|(_, v)| *v)
        .max_by(f64::total_cmp);
    out.insert(FeatureName::NorepiEqDoseMax1h, real_or_missing(norepi));

    let rhythm = window(stay.rhythm(), end, LOOKBACK_6H)
        .last()
        .map(|(_, t)| FeatureValue::Token(t.clone()))
        .unwrap_or(FeatureValue::Missing);
    out.insert(FeatureName::RhythmRecent6h, rhythm);

    FeatureMap::from_partial(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::events::EventRecord;

    fn stay(records: &[EventRecord]) -> StayEvents {
        StayEvents::from_records(records)
    }

    /// Minute-by-minute carry-forward, written independently of `map_coverage`.
    fn brute_force_coverage(readings: &[(i64, f64)], end: i64) -> (i64, i64, i64) {
        let (mut covered, mut b65, mut b60) = (0, 0, 0);
        for minute in (end - 59)..=end {
            let current = readings.iter().rfind(|(t, _)| *t <= minute);
            if let Some((_, v)) = current {
                covered += 1;
                if *v < 65.0 {
                    b65 += 1;
                }
                if *v < 60.0 {
                    b60 += 1;
                }
            }
        }
        (covered, b65, b60)
    }

    #[test]
    fn map_example_median_and_burden() {
        // hour 1 ends at minute 60; readings at window minutes 5, 20, 30, 50
        let records: Vec<_> = [(5, 70.0), (20, 62.0), (30, 61.0), (50, 66.0)]
            .iter()
            .map(|(t, v)| EventRecord::number("s", *t, EventKind::Map, *v))
            .collect();
        let f = window_aggregate(&stay(&records), 1);
        assert_eq!(f.get(FeatureName::MapMedianLast1h), &FeatureValue::Real(64.0));

        let (covered, b65, b60) = brute_force_coverage(&[(5, 70.0), (20, 62.0), (30, 61.0), (50, 66.0)], 60);
        // frozen from the brute-force oracle
        assert_eq!((covered, b65, b60), (56, 30, 0));
        assert_eq!(
            f.get(FeatureName::MapLowMinutesLast1hThr65),
            &FeatureValue::Integer(b65)
        );
        assert_eq!(
            f.get(FeatureName::MapLowMinutesLast1hThr60),
            &FeatureValue::Integer(b60)
        );
        assert_eq!(
            f.get(FeatureName::MapCoveredMinutesLast1h),
            &FeatureValue::Integer(covered)
        );
        assert_eq!(f.get(FeatureName::HasMapCoverageLast1h), &FeatureValue::Flag(true));
    }

    #[test]
    fn coverage_agrees_with_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let end = 60 * rng.gen_range(1..10);
            let mut times: Vec<i64> = (0..rng.gen_range(1..12)).map(|_| end - rng.gen_range(0..60)).collect();
            times.sort();
            times.dedup();
            let readings: Vec<_> = times.iter().map(|t| (*t, rng.gen_range(50.0..80.0))).collect();
            let c = map_coverage(&readings, end);
            assert_eq!(
                (c.covered, c.below_65, c.below_60),
                brute_force_coverage(&readings, end)
            );
        }
    }

    #[test]
    fn empty_pain_window_is_missing() {
        let records = [EventRecord::number("s", 10, EventKind::Pain, 3.0)];
        // window for hour 2 is (60, 120]
        let f = window_aggregate(&stay(&records), 2);
        assert_eq!(f.get(FeatureName::PainMaxLast1h), &FeatureValue::Missing);
        assert_eq!(f.get(FeatureName::MapMedianLast1h), &FeatureValue::Missing);
        assert_eq!(f.get(FeatureName::MapLowMinutesLast1hThr65), &FeatureValue::Missing);
        assert_eq!(f.get(FeatureName::HasMapCoverageLast1h), &FeatureValue::Flag(false));
    }

    #[test]
    fn single_rass_event() {
        let records = [EventRecord::number("s", 30, EventKind::Rass, -1.0)];
        let f = window_aggregate(&stay(&records), 1);
        assert_eq!(
            f.get(FeatureName::RassWindowLast1h),
            &FeatureValue::Rass(RassWindow { max: -1, min: -1, n: 1 })
        );
    }

    #[test]
    fn window_boundaries_are_left_open() {
        let records = [
            EventRecord::number("s", 60, EventKind::Pain, 4.0),
            EventRecord::number("s", 61, EventKind::Pain, 0.0),
            EventRecord::number("s", 120, EventKind::Pain, 0.0),
        ];
        let f = window_aggregate(&stay(&records), 2);
        assert_eq!(f.get(FeatureName::PainMaxLast1h), &FeatureValue::Integer(0));
    }

    #[test]
    fn same_minute_readings_are_averaged() {
        let records = [
            EventRecord::number("s", 40, EventKind::Lactate, 2.0),
            EventRecord::number("s", 40, EventKind::Lactate, 3.0),
        ];
        let f = window_aggregate(&stay(&records), 1);
        assert_eq!(f.get(FeatureName::LactateLatest6h), &FeatureValue::Real(2.5));
    }

    #[test]
    fn lookbacks_per_feature() {
        // t_eval = 24 → end = 1440
        let records = [
            EventRecord::number("s", 1440 - 300, EventKind::Temp, 37.0),
            EventRecord::number("s", 1440 - 200, EventKind::Temp, 38.5),
            EventRecord::number("s", 1440 - 1000, EventKind::Wbc, 14.0),
            EventRecord::number("s", 1440 - 400, EventKind::Lactate, 4.0),
            EventRecord::number("s", 1440 - 10, EventKind::SofaTotal, 7.0),
            EventRecord::token("s", 1440 - 100, EventKind::Rhythm, "AF"),
        ];
        let f = window_aggregate(&stay(&records), 24);
        assert_eq!(f.get(FeatureName::TemperatureLatest4h), &FeatureValue::Real(38.5));
        assert_eq!(f.get(FeatureName::WbcLatest24h), &FeatureValue::Real(14.0));
        assert_eq!(f.get(FeatureName::LactateLatest6h), &FeatureValue::Missing);
        assert_eq!(f.get(FeatureName::SofaTotal), &FeatureValue::Integer(7));
        assert_eq!(f.get(FeatureName::SofaRenal), &FeatureValue::Missing);
        assert_eq!(f.get(FeatureName::RhythmRecent6h), &FeatureValue::Token("AF".into()));
    }
}
