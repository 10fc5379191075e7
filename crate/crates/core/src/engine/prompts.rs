//! Local prompts for the acquisition and decision stages.

use crate::features::{Exposure, FeatureMap, FeatureName, FeatureView};
use crate::llm::ChatMessage;
use crate::rubric::{RubricSchema, RubricState};

const ACQUISITION_SYSTEM: &str = "You are a bedside triage assistant working in an intensive care unit. \
Every patient value shown to you stays on this machine.";

const DECISION_SYSTEM: &str = "You are a bedside triage assistant deciding the next action for an \
intensive care patient. Every patient value shown to you stays on this machine.";

fn snapshot_lines(view: &FeatureView, exposure: Exposure) -> String {
    let mut out = String::new();
    for (name, value) in view.iter().filter(|(n, _)| n.exposure() == exposure) {
        out.push_str(&format!("- {name}: {}\n", value.render()));
    }
    out
}

/// `key = value` lines in retrieval order, with `N/A` for missing values.
pub fn facts_report(retrieved: &[(FeatureName, String)]) -> String {
    if retrieved.is_empty() {
        return "(no additional facts were retrieved)".to_string();
    }
    retrieved
        .iter()
        .map(|(k, v)| format!("{k} = {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn acquisition_messages(
    snapshot: &FeatureView,
    state: &RubricState,
    schema: &RubricSchema,
    retrieved: &[(FeatureName, String)],
    round: u32,
) -> Vec<ChatMessage> {
    let requirements = schema
        .by_name(&state.category)
        .map(|c| {
            c.evidence_requirements
                .iter()
                .map(|d| {
                    serde_json::to_value(d)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default()
                })
                .collect::<Vec<_>>()
                .join(", ")
        })
        .unwrap_or_default();
    let retrievable: Vec<&str> = FeatureName::ALL
        .iter()
        .filter(|f| f.is_requestable())
        .map(|f| f.as_str())
        .collect();
    let mut user = String::new();
    user.push_str("### Bedside Presentation\n");
    user.push_str(&snapshot_lines(snapshot, Exposure::SubjectiveDirect));
    user.push_str("\n### Locally Available Objective Snapshot\n");
    user.push_str(&snapshot_lines(snapshot, Exposure::ObjectiveDirect));
    user.push_str("\n### Current Programmatic State\n");
    user.push_str(&format!("- Current Category: {}\n", state.category));
    user.push_str(&format!("- Rationale: {}\n", state.reason));
    user.push_str(&format!("- Evidence domains this category relies on: {requirements}\n"));
    if round > 0 {
        user.push_str("\n### Facts Retrieved So Far\n");
        user.push_str(&facts_report(retrieved));
        user.push('\n');
    }
    user.push_str("\n### Task: Data Acquisition Planning\n");
    user.push_str(
        "Decide whether the evidence above is enough to act on, or which further objective facts \
should be pulled from the local record first.\n",
    );
    user.push_str(&format!("Keys you may request: {}\n", retrievable.join(", ")));
    user.push_str(
        "Reply with one JSON object: {\"need_data\": true|false, \"facts_keys\": [keys], \"reasoning\": \"...\"}\n",
    );
    vec![ChatMessage::system(ACQUISITION_SYSTEM), ChatMessage::user(user)]
}

pub fn decision_messages(
    snapshot: &FeatureView,
    retrieved: &[(FeatureName, String)],
    initial: &RubricState,
    updated: &RubricState,
) -> Vec<ChatMessage> {
    let mut user = String::new();
    user.push_str("### Bedside Presentation\n");
    user.push_str(&snapshot_lines(snapshot, Exposure::SubjectiveDirect));
    user.push_str("\n### Locally Available Objective Snapshot\n");
    user.push_str(&snapshot_lines(snapshot, Exposure::ObjectiveDirect));
    user.push_str("\n### Retrieved Facts\n");
    user.push_str(&facts_report(retrieved));
    user.push_str("\n\n### Heuristic Pre-Assessment (for reference only)\n");
    user.push_str(&format!("- Initial category: {}\n", initial.category));
    user.push_str(&format!("- Updated category: {}\n", updated.category));
    user.push_str(&format!("- Reason for the update: {}\n", updated.reason));
    user.push_str("\n### Final Triage Decision\n");
    user.push_str(
        "Choose OBSERVE (routine monitoring), TREAT_S (treat what is visible) or INVESTIGATE_O \
(work up suspected hidden deterioration).\n",
    );
    user.push_str(
        "Reply with one JSON object: {\"differential_diagnosis\": \"...\", \"final_action\": \"OBSERVE\"|\"TREAT_S\"|\"INVESTIGATE_O\"}\n",
    );
    vec![ChatMessage::system(DECISION_SYSTEM), ChatMessage::user(user)]
}

/// Subjective inputs plus the direct objective snapshot.
pub fn stage1_view(features: &FeatureMap) -> FeatureView {
    FeatureView::from_map(
        features,
        FeatureName::ALL
            .into_iter()
            .filter(|f| f.exposure() != Exposure::ObjectiveRetrievable),
    )
}
