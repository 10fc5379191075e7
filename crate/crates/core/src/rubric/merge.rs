//! Bounded merge of remote transition candidates into the local state.

use super::{RemoteAdvisory, RubricSchema, RubricState};

pub const MERGE_MARKER: &str = "[REMOTE_CANDIDATE_MERGE]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeOutcome {
    pub state: RubricState,
    /// Candidates that named no schema category.
    pub dropped_candidates: Vec<String>,
    pub applied: bool,
}

/// Moves the local severity at most one step toward the nearest valid
/// candidate. Equidistant candidates on both sides resolve upward.
pub fn constrained_merge(local: &RubricState, advisory: &RemoteAdvisory, schema: &RubricSchema) -> MergeOutcome {
    let (valid, dropped): (Vec<&String>, Vec<&String>) = advisory
        .transition_candidates
        .iter()
        .partition(|c| schema.by_name(c).is_some());
    for name in &dropped {
        tracing::warn!(candidate = %name, "dropping unknown transition candidate");
    }
    let dropped = dropped.into_iter().cloned().collect();
    let unchanged = |dropped| MergeOutcome {
        state: local.clone(),
        dropped_candidates: dropped,
        applied: false,
    };
    if valid.is_empty() || valid.iter().any(|c| **c == local.category) {
        return unchanged(dropped);
    }
    let here = i32::from(local.severity);
    let target = valid
        .iter()
        .map(|c| schema.by_name(c).expect("validated above"))
        .min_by_key(|c| ((i32::from(c.severity) - here).abs(), -i32::from(c.severity)))
        .expect("non-empty");
    let step = (i32::from(target.severity) - here).signum();
    let severity = (here + step) as u8;
    let direction = if step > 0 { "up" } else { "down" };
    let reason = format!(
        "{} {MERGE_MARKER} Shifted one level {direction} toward the remote candidate {}; the cap of one step keeps the locally computed state in control.",
        local.reason, target.name
    );
    MergeOutcome {
        state: RubricState {
            matched: local.matched,
            category: schema.by_severity(severity).name.clone(),
            severity,
            reason,
        },
        dropped_candidates: dropped,
        applied: true,
    }
}
