//! Case-adaptive multi-agent deliberation engine.
//!
//! An attending agent assesses each case and assembles a specialist
//! panel tailored to it; specialists cast three-valued votes
//! (KEEP/REFUSE/NEUTRAL) on every candidate diagnosis; a hybrid router
//! applies strong consensus directly, falls back to the attending's
//! initial judgment under weak consensus, and escalates genuine
//! conflicts to evidence-based arbitration. The crate also ships the
//! comparison strategies, the dataset construction pipeline, the
//! evaluation harness, and a scripted mock provider so everything runs
//! deterministically offline; any OpenAI-compatible endpoint works for
//! live runs.

pub mod agents;
pub mod baselines;
pub mod config;
pub mod dataprep;
pub mod eval;
pub mod pipeline;
pub mod provider;
pub mod router;
pub mod types;

pub use types::{
    CandidateDiagnosis, Decision, PanelSpec, ResolutionPath, ResolutionRecord,
    SpecialistEvaluation, Tally, TaskInstance, Vote, VoteMatrix,
};
