//! Deterministic rule cascade mapping available features to a rubric state.
//!
//! Levels are tried from severity 5 down; the first level with a firing
//! rule wins. Missing values never fire a rule.

use serde::{Deserialize, Serialize};

use super::{RubricSchema, RubricState};
use crate::features::{FeatureName as F, FeatureView};

/// Cascade thresholds. Every field is configurable through the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleThresholds {
    pub critical_cardio_sofa: f64,
    pub critical_map60_minutes: f64,
    pub worsening_sofa_total: f64,
    pub worsening_map60_minutes: f64,
    pub occult_map65_minutes: f64,
    pub occult_lactate: f64,
    pub moderate_hr: f64,
    pub moderate_map_median_below: f64,
    pub moderate_map60_minutes: f64,
    pub moderate_sofa_total: f64,
    pub moderate_cardio_sofa: f64,
    pub moderate_urine_below: f64,
    pub moderate_spo2_below: f64,
    pub moderate_component_sofa: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        RuleThresholds {
            critical_cardio_sofa: 4.0,
            critical_map60_minutes: 30.0,
            worsening_sofa_total: 10.0,
            worsening_map60_minutes: 15.0,
            occult_map65_minutes: 30.0,
            occult_lactate: 2.0,
            moderate_hr: 110.0,
            moderate_map_median_below: 60.0,
            moderate_map60_minutes: 5.0,
            moderate_sofa_total: 6.0,
            moderate_cardio_sofa: 2.0,
            moderate_urine_below: 0.5,
            moderate_spo2_below: 92.0,
            moderate_component_sofa: 3.0,
        }
    }
}

/// Features any rule reads.
const RULE_INPUTS: [F; 15] = [
    F::SofaCardiovascular,
    F::MapLowMinutesLast1hThr60,
    F::SofaTotal,
    F::MapLowMinutesLast1hThr65,
    F::LactateLatest6h,
    F::HrMedianLast1h,
    F::MapMedianLast1h,
    F::UrineOutputMlkghr6h,
    F::NorepiEqDoseMax1h,
    F::Spo2Latest1h,
    F::SofaResp,
    F::SofaCoag,
    F::SofaLiver,
    F::SofaCns,
    F::SofaRenal,
];

const COMPONENTS: [F; 5] = [F::SofaResp, F::SofaCoag, F::SofaLiver, F::SofaCns, F::SofaRenal];

fn fallback_reason(schema: &RubricSchema) -> String {
    format!(
        "Fallback to {} (No specific threshold met).",
        schema.by_severity(1).name
    )
}

/// Names of the rules that fire at each severity, highest first.
fn fired(view: &FeatureView, t: &RuleThresholds) -> Vec<(u8, Vec<&'static str>)> {
    let at_least = |f: F, thr: f64| view.number(f).is_some_and(|v| v >= thr);
    let below = |f: F, thr: f64| view.number(f).is_some_and(|v| v < thr);
    let above = |f: F, thr: f64| view.number(f).is_some_and(|v| v > thr);

    let mut levels = Vec::new();
    let mut push = |sev: u8, rules: &[(bool, &'static str)]| {
        let names: Vec<&'static str> = rules.iter().filter(|r| r.0).map(|r| r.1).collect();
        if !names.is_empty() {
            levels.push((sev, names));
        }
    };
    push(
        5,
        &[(
            at_least(F::SofaCardiovascular, t.critical_cardio_sofa)
                && at_least(F::MapLowMinutesLast1hThr60, t.critical_map60_minutes),
            "maximal cardiovascular SOFA with sustained MAP<60 burden",
        )],
    );
    push(
        4,
        &[
            (at_least(F::SofaTotal, t.worsening_sofa_total), "high total SOFA"),
            (
                at_least(F::MapLowMinutesLast1hThr60, t.worsening_map60_minutes),
                "prolonged MAP<60 burden",
            ),
        ],
    );
    push(
        3,
        &[
            (
                at_least(F::MapLowMinutesLast1hThr65, t.occult_map65_minutes),
                "prolonged MAP<65 burden",
            ),
            (at_least(F::LactateLatest6h, t.occult_lactate), "elevated lactate"),
        ],
    );
    push(
        2,
        &[
            (at_least(F::HrMedianLast1h, t.moderate_hr), "tachycardia"),
            (below(F::MapMedianLast1h, t.moderate_map_median_below), "low median MAP"),
            (
                at_least(F::MapLowMinutesLast1hThr60, t.moderate_map60_minutes),
                "some MAP<60 burden",
            ),
            (at_least(F::SofaTotal, t.moderate_sofa_total), "moderate total SOFA"),
            (
                at_least(F::SofaCardiovascular, t.moderate_cardio_sofa),
                "cardiovascular SOFA",
            ),
            (
                below(F::UrineOutputMlkghr6h, t.moderate_urine_below),
                "low urine output",
            ),
            (above(F::NorepiEqDoseMax1h, 0.0), "vasopressor support"),
            (below(F::Spo2Latest1h, t.moderate_spo2_below), "low SpO2"),
            (
                COMPONENTS.iter().any(|&c| at_least(c, t.moderate_component_sofa)),
                "high organ SOFA component",
            ),
        ],
    );
    levels
}

/// Rule cascade over whatever features are visible.
pub fn assign_state(view: &FeatureView, schema: &RubricSchema, t: &RuleThresholds) -> RubricState {
    let subjective_missing = view.get(F::PainMaxLast1h).is_missing() && view.get(F::RassWindowLast1h).is_missing();
    let objective_missing = RULE_INPUTS.iter().all(|&f| view.number(f).is_none());
    if subjective_missing || objective_missing {
        let which = if subjective_missing { "bedside" } else { "objective" };
        return schema.state(
            1,
            false,
            format!(
                "Fallback to {} (no {which} rubric inputs available).",
                schema.by_severity(1).name
            ),
        );
    }
    match fired(view, t).into_iter().next() {
        Some((sev, rules)) => {
            let name = &schema.by_severity(sev).name;
            schema.state(sev, true, format!("Matched {name}: {}.", rules.join(", ")))
        }
        None => schema.state(1, true, fallback_reason(schema)),
    }
}

/// Stage 1 assignment over the bedside inputs and the direct snapshot.
pub fn assign_initial_state(view: &FeatureView, schema: &RubricSchema, t: &RuleThresholds) -> RubricState {
    assign_state(view, schema, t)
}

/// Stage 3 recomputation over the snapshot enlarged with retrieved facts.
pub fn recompute_state(view: &FeatureView, schema: &RubricSchema, t: &RuleThresholds) -> RubricState {
    assign_state(view, schema, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureValue as V, RassWindow};

    fn calm() -> FeatureView {
        let mut v = FeatureView::new();
        v.insert(F::PainMaxLast1h, V::Integer(0));
        v.insert(F::RassWindowLast1h, V::Rass(RassWindow { max: 0, min: -1, n: 2 }));
        v.insert(F::HrMedianLast1h, V::Real(88.0));
        v.insert(F::MapMedianLast1h, V::Real(66.0));
        v.insert(F::MapLowMinutesLast1hThr65, V::Integer(12));
        v.insert(F::MapLowMinutesLast1hThr60, V::Integer(3));
        v.insert(F::HasMapCoverageLast1h, V::Flag(true));
        v.insert(F::SofaTotal, V::Integer(4));
        v.insert(F::SofaCardiovascular, V::Integer(1));
        v
    }

    fn assign(v: &FeatureView) -> RubricState {
        assign_state(v, &RubricSchema::default(), &RuleThresholds::default())
    }

    #[test]
    fn modest_burden_falls_back() {
        let st = assign(&calm());
        assert_eq!(
            st,
            RubricState {
                matched: true,
                category: "VERY_LIKELY_STABLE".into(),
                severity: 1,
                reason: "Fallback to VERY_LIKELY_STABLE (No specific threshold met).".into(),
            }
        );
    }

    #[test]
    fn critical_needs_both_conditions() {
        let mut v = calm();
        v.insert(F::SofaCardiovascular, V::Integer(4));
        v.insert(F::MapLowMinutesLast1hThr60, V::Integer(30));
        assert_eq!(assign(&v).category, "VERY_LIKELY_WORSENING");
        v.insert(F::MapLowMinutesLast1hThr60, V::Integer(29));
        assert_eq!(assign(&v).severity, 4);
    }

    #[test]
    fn retrieved_facts_move_the_state() {
        let mut v = calm();
        v.insert(F::LactateLatest6h, V::Real(1.1));
        v.insert(F::UrineOutputMlkghr6h, V::Real(0.8));
        v.insert(F::NorepiEqDoseMax1h, V::Real(0.0));
        assert_eq!(assign(&v), assign(&calm()));
        v.insert(F::LactateLatest6h, V::Real(4.0));
        v.insert(F::MapLowMinutesLast1hThr65, V::Integer(35));
        assert!(assign(&v).severity >= 3);
    }

    #[test]
    fn missing_inputs_are_reported() {
        let mut v = FeatureView::new();
        v.insert(F::PainMaxLast1h, V::Integer(0));
        v.insert(F::HasMapCoverageLast1h, V::Flag(false));
        for f in RULE_INPUTS {
            v.insert(f, V::Missing);
        }
        let st = assign(&v);
        assert_eq!((st.matched, st.severity), (false, 1));
        assert!(st.reason.contains("no objective rubric inputs"));
    }

    #[test]
    fn missing_values_never_fire() {
        let mut v = calm();
        v.insert(F::MapMedianLast1h, V::Missing);
        v.insert(F::LactateLatest6h, V::Missing);
        assert_eq!(assign(&v).severity, 1);
    }
}
