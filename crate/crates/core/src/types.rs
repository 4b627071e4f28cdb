//! Domain types shared by every stage of the deliberation pipeline: votes,
//! decisions, candidate diagnoses, task instances, specialist evaluations,
//! vote matrices, and resolution records.
//!
//! All types here are immutable values, safe to share and send across
//! threads. Canonical JSON field names are lowercase snake case; `Vote`
//! serializes as `"keep"` / `"refuse"` / `"neutral"`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A specialist's three-valued judgment on one candidate diagnosis.
///
/// `Keep` endorses the diagnosis, `Refuse` rejects it, and `Neutral`
/// abstains (insufficient evidence or outside the specialist's expertise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    Keep,
    Refuse,
    Neutral,
}

impl Vote {
    /// Parse a vote token from model output.
    ///
    /// Case-insensitive; surrounding whitespace and punctuation are
    /// stripped. Both `REFUSE` and `REMOVE` map to [`Vote::Refuse`] — the
    /// two surface forms share one internal name. Anything else is an
    /// error so the caller can decide the repair strategy; there is no
    /// silent default.
    pub fn parse(token: &str) -> Result<Self, UnrecognizedVoteToken> {
        let trimmed = token.trim_matches(|c: char| !c.is_alphanumeric());
        if trimmed.eq_ignore_ascii_case("keep") {
            Ok(Vote::Keep)
        } else if trimmed.eq_ignore_ascii_case("refuse") || trimmed.eq_ignore_ascii_case("remove") {
            Ok(Vote::Refuse)
        } else if trimmed.eq_ignore_ascii_case("neutral") {
            Ok(Vote::Neutral)
        } else {
            Err(UnrecognizedVoteToken(token.to_string()))
        }
    }
}

impl fmt::Display for Vote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vote::Keep => write!(f, "KEEP"),
            Vote::Refuse => write!(f, "REFUSE"),
            Vote::Neutral => write!(f, "NEUTRAL"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unrecognized vote token: {0:?}")]
pub struct UnrecognizedVoteToken(pub String);

/// Final binary decision for one candidate diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Accept => write!(f, "ACCEPT"),
            Decision::Reject => write!(f, "REJECT"),
        }
    }
}

/// One entry of a task's candidate list. Indices are 1-based everywhere
/// user-visible; text is trimmed and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateDiagnosis {
    pub index: usize,
    pub text: String,
}

impl CandidateDiagnosis {
    pub fn new(index: usize, text: impl Into<String>) -> Result<Self, InvalidCandidate> {
        let text = text.into().trim().to_string();
        if index == 0 {
            return Err(InvalidCandidate::ZeroIndex);
        }
        if text.is_empty() {
            return Err(InvalidCandidate::EmptyText);
        }
        Ok(Self { index, text })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidCandidate {
    #[error("candidate indices are 1-based; got 0")]
    ZeroIndex,
    #[error("candidate text is empty after trimming")]
    EmptyText,
}

/// One evaluation case: masked note, shuffled candidates, gold label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub case_id: String,
    pub masked_note: String,
    pub candidates: Vec<CandidateDiagnosis>,
    pub gold: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_label: Option<String>,
    #[serde(default)]
    pub shuffle_seed: u64,
}

impl TaskInstance {
    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }

    /// Structural invariants: contiguous 1-based indices, gold within
    /// range and non-empty. The masking invariant is checked separately
    /// by [`Self::masking_violations`] because raw (unprepared) instances may
    /// legitimately not satisfy it yet.
    pub fn validate(&self) -> Result<(), InstanceError> {
        for (position, candidate) in self.candidates.iter().enumerate() {
            if candidate.index != position + 1 {
                return Err(InstanceError::NonContiguousIndices {
                    expected: position + 1,
                    found: candidate.index,
                });
            }
            if candidate.text.trim().is_empty() {
                return Err(InstanceError::EmptyCandidateText(candidate.index));
            }
        }
        if self.gold.is_empty() {
            return Err(InstanceError::EmptyGold);
        }
        let n = self.candidates.len();
        if let Some(&out) = self.gold.iter().find(|&&g| g == 0 || g > n) {
            return Err(InstanceError::GoldOutOfRange { index: out, n });
        }
        Ok(())
    }

    /// Candidate texts of length > 4 that survive case-insensitively as
    /// substrings of the masked note. Empty for any prepared instance.
    pub fn masking_violations(&self) -> Vec<&str> {
        self.candidates
            .iter()
            .filter(|c| c.text.len() > 4)
            .filter(|c| contains_ci(&self.masked_note, &c.text))
            .map(|c| c.text.as_str())
            .collect()
    }
}

/// ASCII case-insensitive substring test.
pub(crate) fn contains_ci(haystack: &str, needle: &str) -> bool {
    find_ci(haystack, needle).is_some()
}

/// ASCII case-insensitive substring search returning the byte offset.
pub(crate) fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return Some(0);
    }
    let hay = haystack.as_bytes();
    let need = needle.as_bytes();
    if need.len() > hay.len() {
        return None;
    }
    'outer: for start in 0..=(hay.len() - need.len()) {
        for (offset, &b) in need.iter().enumerate() {
            if !hay[start + offset].eq_ignore_ascii_case(&b) {
                continue 'outer;
            }
        }
        return Some(start);
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("candidate indices must be contiguous from 1: expected {expected}, found {found}")]
    NonContiguousIndices { expected: usize, found: usize },
    #[error("candidate {0} has empty text")]
    EmptyCandidateText(usize),
    #[error("gold label set is empty")]
    EmptyGold,
    #[error("gold index {index} out of range 1..={n}")]
    GoldOutOfRange { index: usize, n: usize },
}

/// Clamp a raw confidence score into [0, 1]. Non-finite input maps to 0
/// with a logged warning; model outputs are noisy and a hard failure per
/// field would dominate runs.
pub fn clamp_confidence(raw: f64) -> f64 {
    if !raw.is_finite() {
        tracing::warn!(raw = ?raw, "non-finite confidence; using 0.0");
        return 0.0;
    }
    raw.clamp(0.0, 1.0)
}

/// One specialist's structured judgment on one diagnosis: vote, evidence
/// quote (verbatim span claimed from the note, may be empty for NEUTRAL),
/// confidence in [0, 1], rationale, scope flag, and evidence-level tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialistEvaluation {
    pub vote: Vote,
    pub quote: String,
    pub confidence: f64,
    pub rationale: String,
    pub in_scope: bool,
    pub evidence_level: String,
}

impl SpecialistEvaluation {
    pub fn new(
        vote: Vote,
        quote: impl Into<String>,
        confidence: f64,
        rationale: impl Into<String>,
        in_scope: bool,
        evidence_level: impl Into<String>,
    ) -> Self {
        Self {
            vote,
            quote: quote.into(),
            confidence: clamp_confidence(confidence),
            rationale: rationale.into(),
            in_scope,
            evidence_level: evidence_level.into(),
        }
    }

    /// Abstention fill used for missing or unparseable entries.
    pub fn neutral_fill() -> Self {
        Self {
            vote: Vote::Neutral,
            quote: String::new(),
            confidence: 0.0,
            rationale: String::new(),
            in_scope: false,
            evidence_level: "none".to_string(),
        }
    }
}

/// A role-conditioned specialist slot: specialty identity plus a
/// case-specific focus directive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialistRole {
    pub role: String,
    pub focus: String,
}

/// The assembled panel for one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub specialists: Vec<SpecialistRole>,
    pub case_summary: String,
}

impl PanelSpec {
    pub fn size(&self) -> usize {
        self.specialists.len()
    }
}

/// Lowercase, whitespace-collapsed role string used for alignment
/// reporting so "Vascular  Surgeon" and "vascular surgeon" count as one.
pub fn normalize_role(role: &str) -> String {
    role.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// k×n grid of specialist evaluations, one row per specialist, columns
/// aligned to candidate indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "Vec<Vec<SpecialistEvaluation>>",
    into = "Vec<Vec<SpecialistEvaluation>>"
)]
pub struct VoteMatrix {
    rows: Vec<Vec<SpecialistEvaluation>>,
}

impl VoteMatrix {
    pub fn new(rows: Vec<Vec<SpecialistEvaluation>>) -> Result<Self, MatrixShapeError> {
        if rows.is_empty() {
            return Err(MatrixShapeError::NoRows);
        }
        let n = rows[0].len();
        if let Some((row, len)) = rows
            .iter()
            .enumerate()
            .find_map(|(i, r)| (r.len() != n).then_some((i, r.len())))
        {
            return Err(MatrixShapeError::RaggedRow {
                row,
                len,
                expected: n,
            });
        }
        Ok(Self { rows })
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<SpecialistEvaluation>] {
        &self.rows
    }

    /// Evaluations for diagnosis `index` (1-based), one per specialist in
    /// row order.
    pub fn column(&self, index: usize) -> Vec<&SpecialistEvaluation> {
        self.rows.iter().map(|r| &r[index - 1]).collect()
    }

    pub fn column_votes(&self, index: usize) -> Vec<Vote> {
        self.rows.iter().map(|r| r[index - 1].vote).collect()
    }
}

impl TryFrom<Vec<Vec<SpecialistEvaluation>>> for VoteMatrix {
    type Error = MatrixShapeError;
    fn try_from(rows: Vec<Vec<SpecialistEvaluation>>) -> Result<Self, Self::Error> {
        VoteMatrix::new(rows)
    }
}

impl From<VoteMatrix> for Vec<Vec<SpecialistEvaluation>> {
    fn from(m: VoteMatrix) -> Self {
        m.rows
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixShapeError {
    #[error("vote matrix must have at least one specialist row")]
    NoRows,
    #[error("vote matrix row {row} has {len} entries, expected {expected}")]
    RaggedRow {
        row: usize,
        len: usize,
        expected: usize,
    },
}

/// Per-diagnosis vote counts. `keeps + refuses + neutrals` equals the
/// panel size that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub keeps: usize,
    pub refuses: usize,
    pub neutrals: usize,
}

impl Tally {
    pub fn new(keeps: usize, refuses: usize, neutrals: usize) -> Self {
        Self {
            keeps,
            refuses,
            neutrals,
        }
    }

    pub fn total(&self) -> usize {
        self.keeps + self.refuses + self.neutrals
    }
}

/// Which of the three resolution paths a diagnosis took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionPath {
    StrongConsensus,
    WeakConsensus,
    Conflict,
}

impl fmt::Display for ResolutionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResolutionPath::StrongConsensus => write!(f, "strong_consensus"),
            ResolutionPath::WeakConsensus => write!(f, "weak_consensus"),
            ResolutionPath::Conflict => write!(f, "conflict"),
        }
    }
}

/// One specialist's contribution as presented to the arbitrator.
/// `quote_verified` is the mechanical substring check of the quote
/// against the note; it informs the arbitrator but never overrides it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationInput {
    pub role: String,
    pub vote: Vote,
    pub quote: String,
    pub confidence: f64,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quote_verified: Option<bool>,
}

/// The serialized context and outcome of one arbitration call, persisted
/// for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationTrace {
    pub inputs: Vec<ArbitrationInput>,
    pub decision: Decision,
    pub reasoning: String,
    #[serde(default)]
    pub degraded: bool,
}

/// Per-diagnosis resolution outcome: the tally, the path taken, the final
/// decision, and the arbitration trace when the path was Conflict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRecord {
    pub diagnosis_index: usize,
    pub tally: Tally,
    pub path: ResolutionPath,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arbitration: Option<ArbitrationTrace>,
    pub fallback_used: bool,
}

impl ResolutionRecord {
    /// Structural invariants: arbitration present iff Conflict,
    /// fallback_used iff WeakConsensus.
    pub fn validate(&self) -> Result<(), RecordInvariantError> {
        let is_conflict = self.path == ResolutionPath::Conflict;
        if self.arbitration.is_some() != is_conflict {
            return Err(RecordInvariantError::ArbitrationPresence {
                diagnosis_index: self.diagnosis_index,
                path: self.path,
            });
        }
        let is_weak = self.path == ResolutionPath::WeakConsensus;
        if self.fallback_used != is_weak {
            return Err(RecordInvariantError::FallbackFlag {
                diagnosis_index: self.diagnosis_index,
                path: self.path,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordInvariantError {
    #[error("diagnosis {diagnosis_index}: arbitration trace must be present iff path is conflict (path = {path:?})")]
    ArbitrationPresence {
        diagnosis_index: usize,
        path: ResolutionPath,
    },
    #[error("diagnosis {diagnosis_index}: fallback_used must hold iff path is weak_consensus (path = {path:?})")]
    FallbackFlag {
        diagnosis_index: usize,
        path: ResolutionPath,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_vote_vocabulary() {
        assert_eq!(Vote::parse("KEEP").unwrap(), Vote::Keep);
        assert_eq!(Vote::parse("keep").unwrap(), Vote::Keep);
        assert_eq!(Vote::parse("remove").unwrap(), Vote::Refuse);
        assert_eq!(Vote::parse("REFUSE").unwrap(), Vote::Refuse);
        assert_eq!(Vote::parse("Neutral").unwrap(), Vote::Neutral);
        assert_eq!(Vote::parse("  KEEP. ").unwrap(), Vote::Keep);
        assert_eq!(Vote::parse("\"REMOVE\"").unwrap(), Vote::Refuse);
    }

    #[test]
    fn parse_vote_rejects_unknown_tokens() {
        for bad in ["maybe", "", "keepish", "accept", "k"] {
            assert!(Vote::parse(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn vote_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Vote::Keep).unwrap(), "\"keep\"");
        assert_eq!(serde_json::to_string(&Vote::Refuse).unwrap(), "\"refuse\"");
        assert_eq!(
            serde_json::to_string(&Vote::Neutral).unwrap(),
            "\"neutral\""
        );
        let back: Vote = serde_json::from_str("\"refuse\"").unwrap();
        assert_eq!(back, Vote::Refuse);
    }

    #[test]
    fn clamp_confidence_bounds() {
        assert_eq!(clamp_confidence(0.7), 0.7);
        assert_eq!(clamp_confidence(1.5), 1.0);
        assert_eq!(clamp_confidence(-0.2), 0.0);
        assert_eq!(clamp_confidence(f64::NAN), 0.0);
        assert_eq!(clamp_confidence(f64::INFINITY), 0.0);
    }

    #[test]
    fn candidate_rejects_empty_and_zero() {
        assert!(CandidateDiagnosis::new(0, "Sepsis").is_err());
        assert!(CandidateDiagnosis::new(1, "   ").is_err());
        let c = CandidateDiagnosis::new(2, "  Sepsis ").unwrap();
        assert_eq!(c.text, "Sepsis");
    }

    #[test]
    fn instance_validation() {
        let inst = TaskInstance {
            case_id: "c1".into(),
            masked_note: "note".into(),
            candidates: vec![
                CandidateDiagnosis::new(1, "A thing").unwrap(),
                CandidateDiagnosis::new(2, "B thing").unwrap(),
            ],
            gold: BTreeSet::from([1]),
            service_label: None,
            shuffle_seed: 0,
        };
        assert!(inst.validate().is_ok());

        let mut bad = inst.clone();
        bad.gold = BTreeSet::from([3]);
        assert!(matches!(
            bad.validate(),
            Err(InstanceError::GoldOutOfRange { .. })
        ));

        let mut gap = inst.clone();
        gap.candidates[1].index = 5;
        assert!(matches!(
            gap.validate(),
            Err(InstanceError::NonContiguousIndices { .. })
        ));
    }

    #[test]
    fn masking_violation_detection() {
        let inst = TaskInstance {
            case_id: "c1".into(),
            masked_note: "patient admitted with PNEUMONIA and gout".into(),
            candidates: vec![
                CandidateDiagnosis::new(1, "Pneumonia").unwrap(),
                CandidateDiagnosis::new(2, "gout").unwrap(),
            ],
            gold: BTreeSet::from([1]),
            service_label: None,
            shuffle_seed: 0,
        };
        // length > 4 leaks are reported; "gout" (length 4) is exempt
        assert_eq!(inst.masking_violations(), vec!["Pneumonia"]);
    }

    #[test]
    fn matrix_must_be_rectangular() {
        let e = SpecialistEvaluation::neutral_fill();
        assert!(VoteMatrix::new(vec![]).is_err());
        assert!(VoteMatrix::new(vec![vec![e.clone(), e.clone()], vec![e.clone()]]).is_err());
        let m =
            VoteMatrix::new(vec![vec![e.clone(), e.clone()], vec![e.clone(), e.clone()]]).unwrap();
        assert_eq!(m.k(), 2);
        assert_eq!(m.n(), 2);
        assert_eq!(m.column(1).len(), 2);
    }

    #[test]
    fn record_invariants_enforced() {
        let ok = ResolutionRecord {
            diagnosis_index: 1,
            tally: Tally::new(2, 0, 1),
            path: ResolutionPath::StrongConsensus,
            decision: Decision::Accept,
            arbitration: None,
            fallback_used: false,
        };
        assert!(ok.validate().is_ok());

        let mut bad = ok.clone();
        bad.fallback_used = true;
        assert!(bad.validate().is_err());

        let mut conflict_missing_trace = ok.clone();
        conflict_missing_trace.path = ResolutionPath::Conflict;
        assert!(conflict_missing_trace.validate().is_err());
    }

    #[test]
    fn normalize_role_collapses_case_and_whitespace() {
        assert_eq!(normalize_role("Vascular   Surgeon"), "vascular surgeon");
        assert_eq!(normalize_role(" neurologist "), "neurologist");
    }

    #[test]
    fn find_ci_matches_mixed_case() {
        assert_eq!(find_ci("Acute PNEUMONIA noted", "pneumonia"), Some(6));
        assert_eq!(find_ci("nothing here", "pneumonia"), None);
    }
}
