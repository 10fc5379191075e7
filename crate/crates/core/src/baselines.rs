//! Comparison workflows over the flat 22-feature bundle: single pass,
//! three-agent majority vote, round-synchronous debate and confidence-aware
//! sequential debate.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::action::{Action, Prediction};
use crate::cohort::Sample;
use crate::digest::stable_hash64;
use crate::features::FeatureMap;
use crate::llm::parse::{parse_turn, StageSchema};
use crate::llm::{AgentId, Backend, CallKey, ChatMessage, Stage};
use crate::trace::{call_with_repair, Attempted, CallRecord, Trace};

pub const DEBATE_ROUNDS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnOutput {
    pub reasoning: String,
    pub action: Action,
    pub confidence: Option<u8>,
}

/// One agent's contribution to a debate round. `action` is `None` when the
/// turn was invalid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub agent: AgentId,
    pub round: u32,
    pub reasoning: String,
    pub action: Option<Action>,
    pub confidence: Option<u8>,
}

impl AgentTurn {
    pub fn prediction(&self) -> Prediction {
        Prediction::from(self.action)
    }

    /// Marker line opening a rendered turn; used for visibility checks.
    pub fn header(agent: AgentId, round: u32) -> String {
        format!("#### Agent {agent}, round {round}")
    }

    fn render(&self, with_confidence: bool) -> String {
        let mut out = Self::header(self.agent, self.round);
        out.push('\n');
        match self.action {
            Some(a) => out.push_str(&format!("action: {a}\n")),
            None => out.push_str("action: (no valid answer)\n"),
        }
        if with_confidence {
            if let Some(c) = self.confidence {
                out.push_str(&format!("confidence: {c}\n"));
            }
        }
        if !self.reasoning.is_empty() {
            out.push_str(&format!("reasoning: {}\n", self.reasoning));
        }
        out
    }
}

const SYSTEM: &str = "You are a bedside triage assistant deciding the next action for an intensive care patient.";

/// The feature block shared byte-for-byte by every baseline.
pub fn render_feature_block(features: &FeatureMap) -> String {
    let mut out = String::from("### Patient Parameters\n");
    for (name, value) in features.iter() {
        out.push_str(&format!("- {name}: {}\n", value.render()));
    }
    out
}

fn task_text(with_confidence: bool) -> String {
    let mut out = String::from(
        "### Task\nChoose OBSERVE (routine monitoring), TREAT_S (treat what is visible) or INVESTIGATE_O \
(work up suspected hidden deterioration over the coming hours).\n",
    );
    if with_confidence {
        out.push_str(
            "Reply with one JSON object: {\"reasoning\": \"...\", \"action\": \"OBSERVE\"|\"TREAT_S\"|\"INVESTIGATE_O\", \"confidence\": <integer 0-100>}\n",
        );
    } else {
        out.push_str(
            "Reply with one JSON object: {\"reasoning\": \"...\", \"action\": \"OBSERVE\"|\"TREAT_S\"|\"INVESTIGATE_O\"}\n",
        );
    }
    out
}

fn base_prompt(sample: &Sample, with_confidence: bool) -> String {
    format!(
        "{}\n{}",
        render_feature_block(&sample.features),
        task_text(with_confidence)
    )
}

/// Turn call with one repair; backend failures and unparseable replies become
/// invalid turns.
fn turn(
    backend: &dyn Backend,
    key: CallKey,
    user: String,
    max_repairs: u32,
    require_confidence: bool,
    calls: &mut Vec<CallRecord>,
) -> AgentTurn {
    let agent = key.agent.unwrap_or(AgentId::A);
    let round = key.round;
    let messages = vec![ChatMessage::system(SYSTEM), ChatMessage::user(user)];
    let parse = |text: &str| {
        let out = parse_turn(text)?;
        if require_confidence && out.confidence.is_none() {
            return Err(crate::llm::ParseError {
                kind: crate::llm::parse::ParseErrorKind::MissingField,
                detail: "missing `confidence`".into(),
            });
        }
        Ok(out)
    };
    let invalid = AgentTurn {
        agent,
        round,
        reasoning: String::new(),
        action: None,
        confidence: None,
    };
    match call_with_repair(
        backend,
        key,
        messages,
        StageSchema::BaselineTurn,
        parse,
        max_repairs,
        calls,
    ) {
        Ok(Attempted::Parsed(t)) => AgentTurn {
            agent,
            round,
            reasoning: t.reasoning,
            action: Some(t.action),
            confidence: if require_confidence { t.confidence } else { None },
        },
        _ => invalid,
    }
}

/// Majority over binary predictions: two agreeing valid votes, else invalid.
pub fn majority_vote(votes: &[Prediction]) -> Prediction {
    let pos = votes.iter().filter(|v| **v == Prediction::Positive).count();
    let neg = votes.iter().filter(|v| **v == Prediction::Negative).count();
    if pos >= 2 && pos > neg {
        Prediction::Positive
    } else if neg >= 2 && neg > pos {
        Prediction::Negative
    } else {
        Prediction::Invalid
    }
}

pub struct Agents<'a> {
    pub a: &'a dyn Backend,
    pub b: &'a dyn Backend,
    pub c: &'a dyn Backend,
}

impl<'a> Agents<'a> {
    pub fn get(&self, id: AgentId) -> &'a dyn Backend {
        match id {
            AgentId::A => self.a,
            AgentId::B => self.b,
            AgentId::C => self.c,
        }
    }

    fn ids(&self) -> Vec<String> {
        AgentId::ALL.iter().map(|&i| self.get(i).id().to_string()).collect()
    }
}

pub fn run_single_pass(sample: &Sample, backend: &dyn Backend, max_repairs: u32, digest: &str) -> Trace {
    let mut trace = Trace::new(sample, "single", digest, vec![backend.id().to_string()]);
    let mut calls = Vec::new();
    let key = CallKey::local(&sample.id(), Stage::Turn, 0).with_agent(AgentId::A);
    let t = turn(backend, key, base_prompt(sample, false), max_repairs, false, &mut calls);
    let prediction = t.prediction();
    trace.calls = calls;
    trace.finish(json!({ "turns": [t] }), prediction);
    trace
}

pub fn run_majority_vote(sample: &Sample, agents: &Agents, max_repairs: u32, digest: &str) -> Trace {
    let mut trace = Trace::new(sample, "vote", digest, agents.ids());
    let mut calls = Vec::new();
    let turns: Vec<AgentTurn> = AgentId::ALL
        .iter()
        .map(|&id| {
            let key = CallKey::local(&sample.id(), Stage::Turn, 0).with_agent(id);
            turn(
                agents.get(id),
                key,
                base_prompt(sample, false),
                max_repairs,
                false,
                &mut calls,
            )
        })
        .collect();
    let votes: Vec<Prediction> = turns.iter().map(AgentTurn::prediction).collect();
    let prediction = majority_vote(&votes);
    trace.calls = calls;
    trace.finish(json!({ "turns": turns }), prediction);
    trace
}

fn debate_prompt(sample: &Sample, own: Option<&AgentTurn>, others: &[&AgentTurn], with_confidence: bool) -> String {
    let mut out = base_prompt(sample, with_confidence);
    if let Some(own) = own {
        out.push_str("\n### Your Previous Answer\n");
        out.push_str(&own.render(with_confidence));
    }
    if !others.is_empty() {
        out.push_str("\n### Debate History\n");
        for t in others {
            out.push_str(&t.render(with_confidence));
        }
        out.push_str("\nWeigh the answers above, then give your own updated answer.\n");
    }
    out
}

/// Round 0 independent; in later rounds every agent sees the previous round
/// of the other two agents plus its own previous turn.
pub fn run_rsmad(sample: &Sample, agents: &Agents, max_repairs: u32, digest: &str) -> Trace {
    let mut trace = Trace::new(sample, "rsmad", digest, agents.ids());
    let mut calls = Vec::new();
    let mut history: Vec<AgentTurn> = Vec::new();
    let mut previous: Vec<AgentTurn> = Vec::new();
    for round in 0..DEBATE_ROUNDS {
        let mut current = Vec::with_capacity(3);
        for &id in &AgentId::ALL {
            let own = previous.iter().find(|t| t.agent == id);
            let others: Vec<&AgentTurn> = previous.iter().filter(|t| t.agent != id).collect();
            let prompt = debate_prompt(sample, own, &others, false);
            let key = CallKey::local(&sample.id(), Stage::Turn, round).with_agent(id);
            current.push(turn(agents.get(id), key, prompt, max_repairs, false, &mut calls));
        }
        history.extend(current.iter().cloned());
        previous = current;
    }
    let votes: Vec<Prediction> = previous.iter().map(AgentTurn::prediction).collect();
    let prediction = majority_vote(&votes);
    trace.calls = calls;
    trace.finish(json!({ "turns": history }), prediction);
    trace
}

/// Tie-break rank of an agent for a sample; the lowest wins.
pub fn tie_rank(sample_id: &str, agent: AgentId) -> u64 {
    stable_hash64(&[sample_id, agent.as_str()])
}

/// Highest-confidence valid final-round turn, ties by [`tie_rank`].
pub fn confmad_winner<'t>(sample_id: &str, final_round: &'t [AgentTurn]) -> Option<&'t AgentTurn> {
    final_round
        .iter()
        .filter(|t| t.action.is_some() && t.confidence.is_some())
        .min_by_key(|t| (std::cmp::Reverse(t.confidence), tie_rank(sample_id, t.agent)))
}

/// Round 0 independent; later rounds are sequential A, B, C over the whole
/// history so far, including earlier speakers of the same round.
pub fn run_confmad(sample: &Sample, agents: &Agents, max_repairs: u32, digest: &str) -> Trace {
    let mut trace = Trace::new(sample, "confmad", digest, agents.ids());
    let mut calls = Vec::new();
    let mut history: Vec<AgentTurn> = Vec::new();
    let sid = sample.id();
    for &id in &AgentId::ALL {
        let key = CallKey::local(&sid, Stage::Turn, 0).with_agent(id);
        history.push(turn(
            agents.get(id),
            key,
            base_prompt(sample, true),
            max_repairs,
            true,
            &mut calls,
        ));
    }
    for round in 1..DEBATE_ROUNDS {
        for &id in &AgentId::ALL {
            let visible: Vec<&AgentTurn> = history.iter().collect();
            let prompt = debate_prompt(sample, None, &visible, true);
            let key = CallKey::local(&sid, Stage::Turn, round).with_agent(id);
            let t = turn(agents.get(id), key, prompt, max_repairs, true, &mut calls);
            history.push(t);
        }
    }
    let final_round: Vec<AgentTurn> = history
        .iter()
        .filter(|t| t.round == DEBATE_ROUNDS - 1)
        .cloned()
        .collect();
    let winner = confmad_winner(&sid, &final_round);
    let prediction = winner.map(AgentTurn::prediction).unwrap_or(Prediction::Invalid);
    let winner_id = winner.map(|w| w.agent);
    trace.calls = calls;
    trace.finish(json!({ "turns": history, "winner": winner_id }), prediction);
    trace
}
