//! Wire shapes for structured agent replies, one per role. Fields are
//! lenient (defaults, extra fields ignored) because model output is
//! noisy; strict validation happens in the role functions.

use std::collections::BTreeMap;

use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct SelectionReply {
    #[serde(default)]
    pub selected: Vec<SelectedIndex>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SelectedIndex {
    pub index: i64,
    #[serde(default)]
    pub confidence: Option<String>,
    #[serde(default)]
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct InitialReviewReply {
    #[serde(default)]
    pub selected: Vec<SelectedIndex>,
    #[serde(default)]
    pub key_dimensions: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct OrchestratorReply {
    #[serde(default)]
    pub case_summary: String,
    #[serde(default)]
    pub specialists: Vec<SpecialistSlot>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SpecialistSlot {
    pub role: String,
    #[serde(default)]
    pub focus: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SpecialistReviewReply {
    #[serde(default)]
    pub evaluations: Vec<EvaluationEntry>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EvaluationEntry {
    pub index: i64,
    pub vote: String,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub quote: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub in_scope: Option<bool>,
    #[serde(default)]
    pub evidence_level: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ArbitrationReply {
    pub decision: String,
    #[serde(default)]
    pub reasoning: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct VoteListReply {
    #[serde(default)]
    pub decisions: Vec<VoteEntry>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct VoteEntry {
    pub index: i64,
    pub vote: String,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct JudgeReply {
    pub rankings: BTreeMap<String, BTreeMap<String, i64>>,
    #[serde(default)]
    pub overall: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PhraseMaskReply {
    #[serde(default)]
    pub spans: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SemanticFilterReply {
    pub recoverable: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DistractorFilterReply {
    #[serde(default)]
    pub remove: Vec<String>,
}
