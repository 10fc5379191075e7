//! Final balance gate: escalation needs support from several objective domains.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::features::{FeatureName as F, FeatureView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Hemodynamic support: MAP<65 minutes at or above this...
    pub map65_minutes: f64,
    /// ...or median MAP below this.
    pub map_median_below: f64,
    pub lactate_thr: f64,
    pub urine_thr: f64,
    pub sofa_thr: f64,
    pub min_support: u8,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            map65_minutes: 10.0,
            map_median_below: 65.0,
            lactate_thr: 2.0,
            urine_thr: 0.5,
            sofa_thr: 8.0,
            min_support: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    None,
    DowngradeToTreatS,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportFlags {
    pub hemodynamic: bool,
    pub perfusion: bool,
    pub renal: bool,
    pub pressor: bool,
    pub organ: bool,
}

impl SupportFlags {
    pub fn count(&self) -> u8 {
        [self.hemodynamic, self.perfusion, self.renal, self.pressor, self.organ]
            .into_iter()
            .filter(|&b| b)
            .count() as u8
    }

    /// Flags computed from the visible facts; missing values contribute false.
    pub fn from_facts(facts: &FeatureView, cfg: &GateConfig) -> Self {
        let n = |f| facts.number(f);
        SupportFlags {
            hemodynamic: n(F::MapLowMinutesLast1hThr65).is_some_and(|v| v >= cfg.map65_minutes)
                || n(F::MapMedianLast1h).is_some_and(|v| v < cfg.map_median_below),
            perfusion: n(F::LactateLatest6h).is_some_and(|v| v >= cfg.lactate_thr),
            renal: n(F::UrineOutputMlkghr6h).is_some_and(|v| v < cfg.urine_thr),
            pressor: n(F::NorepiEqDoseMax1h).is_some_and(|v| v > 0.0),
            organ: n(F::SofaTotal).is_some_and(|v| v >= cfg.sofa_thr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub balance_gate: GateDecision,
    pub support_count: u8,
    pub support_flags: SupportFlags,
    pub action: Action,
}

/// Downgrades an unsupported `INVESTIGATE_O` to `TREAT_S`; other actions pass.
pub fn apply_gate(candidate: Action, flags: SupportFlags, cfg: &GateConfig) -> GateOutcome {
    let support_count = flags.count();
    let downgrade = candidate == Action::InvestigateO && support_count < cfg.min_support;
    GateOutcome {
        balance_gate: if downgrade {
            GateDecision::DowngradeToTreatS
        } else {
            GateDecision::None
        },
        support_count,
        support_flags: flags,
        action: if downgrade { Action::TreatS } else { candidate },
    }
}

pub fn balance_gate(candidate: Action, facts: &FeatureView, cfg: &GateConfig) -> GateOutcome {
    apply_gate(candidate, SupportFlags::from_facts(facts, cfg), cfg)
}
