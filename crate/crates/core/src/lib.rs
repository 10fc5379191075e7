//! Privacy-partitioned staged decision pipeline for sign–symptom discordant
//! ICU samples, with baseline workflows, a cohort builder and evaluation.

pub mod action;
pub mod baselines;
pub mod cohort;
pub mod config;
pub mod digest;
pub mod engine;
pub mod eval;
pub mod features;
pub mod llm;
pub mod privacy;
pub mod rubric;
pub mod synth;
pub mod trace;
