//! Prompt construction and response parsing for every agent role:
//! attending initial assessment, orchestrator panel assembly, specialist
//! review, arbitration, BHC writer, BHC judge, and the shared plumbing
//! the baseline strategies reuse.
//!
//! Every structured reply is requested as a strict JSON object with a
//! per-role schema (documented in `docs/schemas.md`). A reply that fails
//! to parse or validate gets exactly one repair round: the original
//! prompt, the failed reply, and a fix-to-schema instruction are re-sent.
//! After a failed repair the role-specific degradation rule applies; no
//! degradation ever aborts a case.

mod jsonx;
pub mod replies;
mod template;

pub use jsonx::extract_json;
pub use template::{PromptTemplate, TemplateError, TemplateSet};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{CallMeta, ChatMessage, ChatProvider, ChatRequest, ProviderError};
use crate::router::ArbitrationVerdict;
use crate::types::{
    clamp_confidence, CandidateDiagnosis, Decision, PanelSpec, SpecialistEvaluation,
    SpecialistRole, Vote,
};

/// The ten ranking dimensions named in the BHC judge prompt, in prompt
/// order. Reports may select any subset.
pub const JUDGE_DIMENSIONS: [&str; 10] = [
    "faithfulness",
    "reference_agreement",
    "prioritization",
    "timeline_coherence",
    "linkage",
    "tracking",
    "completeness",
    "density",
    "readability",
    "utility",
];

/// Everything needed to issue agent calls: provider, prompt set, and the
/// request defaults recorded in the manifest.
pub struct AgentRuntime {
    pub provider: Arc<dyn ChatProvider>,
    pub templates: TemplateSet,
    pub model: String,
    pub temperature: f64,
    /// Default completion cap; absent leaves the provider-side default.
    pub max_tokens: Option<u32>,
    /// Per-stage completion caps overriding the default.
    pub max_tokens_by_stage: BTreeMap<String, u32>,
}

impl AgentRuntime {
    pub fn new(
        provider: Arc<dyn ChatProvider>,
        templates: TemplateSet,
        model: impl Into<String>,
    ) -> Self {
        Self {
            provider,
            templates,
            model: model.into(),
            temperature: 0.0,
            max_tokens: None,
            max_tokens_by_stage: BTreeMap::new(),
        }
    }

    fn max_tokens_for(&self, stage: &str) -> Option<u32> {
        self.max_tokens_by_stage
            .get(stage)
            .copied()
            .or(self.max_tokens)
    }
}

/// Parse metadata kept alongside each structured reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredReply {
    pub raw: String,
    pub repair_attempts: u32,
    pub parse_ok: bool,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judging requires at least two candidate systems, got {0}")]
    TooFewSystems(usize),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

const REPAIR_INSTRUCTION: &str =
    "Your previous reply did not conform to the required JSON schema. \
Resend the full answer as a single valid JSON object exactly matching the schema below, with no \
surrounding text.";

fn parse_and_validate<T: DeserializeOwned>(
    raw: &str,
    validate: &dyn Fn(&T) -> Result<(), String>,
) -> (Option<T>, bool) {
    let Some(value) = extract_json(raw) else {
        return (None, false);
    };
    match serde_json::from_value::<T>(value) {
        Ok(parsed) => {
            let ok = validate(&parsed).is_ok();
            (Some(parsed), ok)
        }
        Err(_) => (None, false),
    }
}

impl AgentRuntime {
    fn request(&self, messages: Vec<ChatMessage>, temperature: f64, stage: &str) -> ChatRequest {
        ChatRequest::new(self.model.clone(), messages)
            .with_temperature(temperature)
            .with_max_tokens(self.max_tokens_for(stage))
            .json_hint()
    }

    /// Issue a structured call with one repair round.
    ///
    /// Returns the last successfully deserialized value (even when
    /// validation failed, so callers can salvage partially valid
    /// replies) plus the parse metadata. `parse_ok` is true only when
    /// both deserialization and validation succeeded.
    fn call_structured<T: DeserializeOwned>(
        &self,
        meta: &CallMeta,
        prompt: &str,
        format_instructions: &str,
        temperature: f64,
        validate: &dyn Fn(&T) -> Result<(), String>,
    ) -> Result<(Option<T>, StructuredReply), ProviderError> {
        let full_prompt = format!("{prompt}\n\n{format_instructions}");
        let first = self.provider.complete(
            &self.request(
                vec![ChatMessage::user(&full_prompt)],
                temperature,
                &meta.stage,
            ),
            meta,
        )?;
        let (value, ok) = parse_and_validate(&first.content, validate);
        if ok {
            return Ok((
                value,
                StructuredReply {
                    raw: first.content,
                    repair_attempts: 0,
                    parse_ok: true,
                },
            ));
        }

        tracing::warn!(
            stage = %meta.stage,
            case_id = %meta.case_id,
            "structured reply failed to parse; issuing repair round"
        );
        let repair_messages = vec![
            ChatMessage::user(&full_prompt),
            ChatMessage::assistant(&first.content),
            ChatMessage::user(format!("{REPAIR_INSTRUCTION}\n\n{format_instructions}")),
        ];
        let second = self.provider.complete(
            &self.request(repair_messages, temperature, &meta.stage),
            meta,
        )?;
        let (value, ok) = parse_and_validate(&second.content, validate);
        Ok((
            value,
            StructuredReply {
                raw: second.content,
                repair_attempts: 1,
                parse_ok: ok,
            },
        ))
    }

    /// Unstructured narrative call (BHC generation).
    fn call_text(&self, meta: &CallMeta, prompt: &str) -> Result<String, ProviderError> {
        let req = ChatRequest::new(self.model.clone(), vec![ChatMessage::user(prompt)])
            .with_temperature(self.temperature)
            .with_max_tokens(self.max_tokens_for(&meta.stage));
        Ok(self.provider.complete(&req, meta)?.content)
    }
}

/// "1. Text" lines, one per candidate, in index order.
pub fn format_candidates(candidates: &[CandidateDiagnosis]) -> String {
    candidates
        .iter()
        .map(|c| format!("{}. {}", c.index, c.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn vars(pairs: Vec<(&'static str, String)>) -> BTreeMap<&'static str, String> {
    pairs.into_iter().collect()
}

/// Exact substring check of a claimed quote against the note. `None`
/// when there is no quote to verify.
pub fn verify_quote(note: &str, quote: &str) -> Option<bool> {
    let trimmed = quote.trim();
    if trimmed.is_empty() {
        return None;
    }
    Some(note.contains(trimmed))
}

// ---------------------------------------------------------------------------
// format instructions (reply schemas)
// ---------------------------------------------------------------------------

const SELECTION_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"selected": [{"index": <exact 1-based integer>, "evidence": "<brief supporting evidence>"}, ...]}
Use {"selected": []} to select nothing."#;

const INITIAL_REVIEW_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"selected": [{"index": <exact 1-based integer>, "confidence": "high" | "medium"}, ...],
 "key_dimensions": "<primary organ systems, ambiguous findings, and main sources of diagnostic uncertainty>"}
Use {"selected": [], "key_dimensions": "..."} to select nothing."#;

const ORCHESTRATOR_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"case_summary": "<1-2 sentence summary>",
 "specialists": [{"role": "<clinical role>", "focus": "<one-sentence focus directive>"}, ...]}"#;

const SPECIALIST_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"evaluations": [{"index": <exact 1-based integer>, "vote": "KEEP" | "REMOVE" | "NEUTRAL",
  "confidence": <number between 0 and 1>, "in_scope": <true|false>,
  "evidence_level": "<direct | indirect | absent>", "quote": "<verbatim span from the note, empty if none>",
  "rationale": "<brief reasoning>"}, ...]}
Include one entry for every candidate diagnosis."#;

const ARBITRATION_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"decision": "INCLUDE" | "EXCLUDE", "reasoning": "<how the competing evidence was weighed>"}"#;

const VOTE_LIST_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"decisions": [{"index": <exact 1-based integer>, "vote": "KEEP" | "REMOVE", "rationale": "<brief rationale>"}, ...]}
Include one entry for every candidate diagnosis."#;

const PHRASE_MASK_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"spans": ["<exact verbatim span from the note>", ...]}
Use {"spans": []} if nothing reveals a diagnosis."#;

const SEMANTIC_FILTER_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"recoverable": true | false}"#;

const DISTRACTOR_FILTER_FORMAT: &str = r#"Respond with one JSON object and nothing else:
{"remove": ["<exact candidate text to remove>", ...]}
Use {"remove": []} if every candidate is distinct."#;

// ---------------------------------------------------------------------------
// attending / panel roles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct InitialAssessment {
    pub decisions: Vec<Decision>,
    pub key_dimensions: String,
    pub degraded: bool,
}

/// Confidence-aware initial review: selected indices with high or medium
/// confidence become ACCEPT, everything else REJECT. A failed repair
/// degrades to all-REJECT and the case still completes.
pub fn initial_assessment(
    rt: &AgentRuntime,
    case_id: &str,
    note: &str,
    candidates: &[CandidateDiagnosis],
) -> Result<InitialAssessment, ProviderError> {
    let n = candidates.len();
    let prompt = rt
        .templates
        .render(
            "initial_review",
            &vars(vec![
                ("clinical_note", note.to_string()),
                ("options_text", format_candidates(candidates)),
            ]),
        )
        .expect("initial_review placeholders");
    let meta = CallMeta::new("assessment", case_id);
    let (parsed, reply) = rt.call_structured::<replies::InitialReviewReply>(
        &meta,
        &prompt,
        INITIAL_REVIEW_FORMAT,
        rt.temperature,
        &|_| Ok(()),
    )?;

    let mut decisions = vec![Decision::Reject; n];
    let mut key_dimensions = String::new();
    let degraded = !reply.parse_ok;
    if let Some(body) = parsed {
        key_dimensions = body.key_dimensions;
        for sel in body.selected {
            let confident = sel
                .confidence
                .as_deref()
                .map(|c| c.eq_ignore_ascii_case("high") || c.eq_ignore_ascii_case("medium"))
                .unwrap_or(true);
            if !confident {
                continue;
            }
            match usize::try_from(sel.index) {
                Ok(idx) if (1..=n).contains(&idx) => decisions[idx - 1] = Decision::Accept,
                _ => {
                    tracing::warn!(
                        case_id,
                        index = sel.index,
                        "assessment index out of range; dropped"
                    )
                }
            }
        }
    } else {
        tracing::warn!(
            case_id,
            "initial assessment unparseable after repair; all-REJECT"
        );
    }
    Ok(InitialAssessment {
        decisions,
        key_dimensions,
        degraded,
    })
}

#[derive(Debug, Clone)]
pub struct PanelOutcome {
    pub panel: PanelSpec,
    pub degraded: bool,
}

const DEFAULT_ROLE: &str = "general internist";
const DEFAULT_FOCUS: &str =
    "Review the overall inpatient course and weigh each candidate diagnosis on general medical grounds.";

/// Case-adaptive panel assembly: exactly `k` (role, focus) pairs plus a
/// short case summary. Overlong rosters are truncated to the first `k`;
/// short rosters get one re-prompt and are then padded with generalists.
pub fn assemble_panel(
    rt: &AgentRuntime,
    case_id: &str,
    note: &str,
    candidates: &[CandidateDiagnosis],
    k: usize,
) -> Result<PanelOutcome, ProviderError> {
    let prompt = rt
        .templates
        .render(
            "orchestrator",
            &vars(vec![
                ("clinical_note", note.to_string()),
                ("options_text", format_candidates(candidates)),
                ("panel_size", k.to_string()),
            ]),
        )
        .expect("orchestrator placeholders");
    let meta = CallMeta::new("assembly", case_id);
    let validate = move |r: &replies::OrchestratorReply| {
        let usable = r
            .specialists
            .iter()
            .filter(|s| !s.role.trim().is_empty())
            .count();
        if usable < k {
            Err(format!("need exactly {k} specialists, got {usable}"))
        } else {
            Ok(())
        }
    };
    let (parsed, reply) = rt.call_structured::<replies::OrchestratorReply>(
        &meta,
        &prompt,
        ORCHESTRATOR_FORMAT,
        rt.temperature,
        &validate,
    )?;

    let mut specialists: Vec<SpecialistRole> = Vec::new();
    let mut case_summary = String::new();
    if let Some(body) = parsed {
        case_summary = body.case_summary;
        specialists = body
            .specialists
            .into_iter()
            .filter(|s| !s.role.trim().is_empty())
            .take(k)
            .map(|s| SpecialistRole {
                role: s.role.trim().to_string(),
                focus: s.focus.trim().to_string(),
            })
            .collect();
    }
    let degraded = specialists.len() < k || !reply.parse_ok;
    while specialists.len() < k {
        specialists.push(SpecialistRole {
            role: DEFAULT_ROLE.to_string(),
            focus: DEFAULT_FOCUS.to_string(),
        });
    }
    if degraded {
        tracing::warn!(
            case_id,
            "panel assembly degraded; padded with general internists"
        );
    }
    Ok(PanelOutcome {
        panel: PanelSpec {
            specialists,
            case_summary,
        },
        degraded,
    })
}

#[derive(Debug, Clone)]
pub struct SpecialistRow {
    pub evaluations: Vec<SpecialistEvaluation>,
    pub degraded: bool,
}

/// One specialist's pass over every candidate. The returned row always
/// has exactly `n` entries aligned to candidate order; anything missing
/// or unparseable is an abstention (NEUTRAL, confidence 0).
pub fn specialist_review(
    rt: &AgentRuntime,
    case_id: &str,
    note: &str,
    role: &SpecialistRole,
    candidates: &[CandidateDiagnosis],
) -> Result<SpecialistRow, ProviderError> {
    let n = candidates.len();
    let prompt = rt
        .templates
        .render(
            "specialist_review",
            &vars(vec![
                ("role", role.role.clone()),
                ("focus", role.focus.clone()),
                ("clinical_note", note.to_string()),
                ("candidates_text", format_candidates(candidates)),
            ]),
        )
        .expect("specialist_review placeholders");
    let meta = CallMeta::new("specialist", case_id).with_role(&role.role);
    let (parsed, reply) = rt.call_structured::<replies::SpecialistReviewReply>(
        &meta,
        &prompt,
        SPECIALIST_FORMAT,
        rt.temperature,
        &|_| Ok(()),
    )?;

    let mut evaluations = vec![SpecialistEvaluation::neutral_fill(); n];
    let mut filled = vec![false; n];
    if let Some(body) = parsed {
        for entry in body.evaluations {
            let idx = match usize::try_from(entry.index) {
                Ok(idx) if (1..=n).contains(&idx) => idx,
                _ => {
                    tracing::warn!(case_id, role = %role.role, index = entry.index, "evaluation index out of range; dropped");
                    continue;
                }
            };
            if filled[idx - 1] {
                tracing::warn!(case_id, role = %role.role, index = idx, "duplicate evaluation; first kept");
                continue;
            }
            let Ok(vote) = Vote::parse(&entry.vote) else {
                tracing::warn!(case_id, role = %role.role, token = %entry.vote, "unrecognized vote; abstention recorded");
                continue;
            };
            let in_scope = entry.in_scope.unwrap_or(vote != Vote::Neutral);
            evaluations[idx - 1] = SpecialistEvaluation::new(
                vote,
                entry.quote,
                entry.confidence.map(clamp_confidence).unwrap_or(0.0),
                entry.rationale,
                in_scope,
                entry
                    .evidence_level
                    .unwrap_or_else(|| "unspecified".to_string()),
            );
            filled[idx - 1] = true;
        }
    } else {
        tracing::warn!(case_id, role = %role.role, "specialist reply unparseable after repair; all-NEUTRAL row");
    }
    Ok(SpecialistRow {
        evaluations,
        degraded: !reply.parse_ok,
    })
}

/// Serialize the per-specialist context block the arbitrator sees.
fn contested_evidence(
    note: &str,
    diagnosis: &CandidateDiagnosis,
    specialists: &[(&str, &SpecialistEvaluation)],
) -> String {
    let mut blocks = vec![format!("Diagnosis {}: {}", diagnosis.index, diagnosis.text)];
    for (role, eval) in specialists {
        let verified = match verify_quote(note, &eval.quote) {
            Some(true) => "yes",
            Some(false) => "NO - quote not found in note",
            None => "no quote provided",
        };
        blocks.push(format!(
            "Specialist: {role}\nVote: {}\nConfidence: {:.2}\nQuote: {:?}\nQuote verified in note: {verified}\nRationale: {}",
            eval.vote, eval.confidence, eval.quote, eval.rationale
        ));
    }
    blocks.join("\n\n")
}

/// Evidence-based arbitration for one contested diagnosis. INCLUDE maps
/// to ACCEPT and EXCLUDE to REJECT; an unrepairable reply degrades to the
/// conservative REJECT.
pub fn arbitrate(
    rt: &AgentRuntime,
    case_id: &str,
    note: &str,
    diagnosis: &CandidateDiagnosis,
    specialists: &[(&str, &SpecialistEvaluation)],
) -> Result<ArbitrationVerdict, ProviderError> {
    let prompt = rt
        .templates
        .render(
            "arbitration",
            &vars(vec![
                ("clinical_note", note.to_string()),
                (
                    "contested_evidence",
                    contested_evidence(note, diagnosis, specialists),
                ),
            ]),
        )
        .expect("arbitration placeholders");
    let meta =
        CallMeta::new("arbitration", case_id).with_role(format!("diagnosis_{}", diagnosis.index));
    let validate = |r: &replies::ArbitrationReply| {
        let token = r
            .decision
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric());
        if token.eq_ignore_ascii_case("include") || token.eq_ignore_ascii_case("exclude") {
            Ok(())
        } else {
            Err(format!(
                "decision must be INCLUDE or EXCLUDE, got {:?}",
                r.decision
            ))
        }
    };
    let (parsed, reply) = rt.call_structured::<replies::ArbitrationReply>(
        &meta,
        &prompt,
        ARBITRATION_FORMAT,
        rt.temperature,
        &validate,
    )?;

    match parsed.filter(|_| reply.parse_ok) {
        Some(body) => {
            let include = body
                .decision
                .trim()
                .trim_matches(|c: char| !c.is_alphanumeric())
                .eq_ignore_ascii_case("include");
            Ok(ArbitrationVerdict {
                decision: if include {
                    Decision::Accept
                } else {
                    Decision::Reject
                },
                reasoning: body.reasoning,
                degraded: false,
            })
        }
        None => {
            tracing::warn!(
                case_id,
                diagnosis = diagnosis.index,
                "arbitration unparseable after repair; conservative REJECT"
            );
            Ok(ArbitrationVerdict {
                decision: Decision::Reject,
                reasoning: String::new(),
                degraded: true,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// BHC generation and judging
// ---------------------------------------------------------------------------

/// Narrative brief hospital course organized around the accepted
/// diagnoses. Provider errors propagate; an empty accepted set renders an
/// explicit "(none)" marker and generation still runs.
pub fn generate_bhc(
    rt: &AgentRuntime,
    case_id: &str,
    note: &str,
    accepted: &[CandidateDiagnosis],
) -> Result<String, ProviderError> {
    let diagnosis_list = if accepted.is_empty() {
        "(none)".to_string()
    } else {
        format_candidates(accepted)
    };
    let prompt = rt
        .templates
        .render(
            "bhc_generation",
            &vars(vec![
                ("clinical_note", note.to_string()),
                ("diagnosis_list", diagnosis_list),
            ]),
        )
        .expect("bhc_generation placeholders");
    rt.call_text(&CallMeta::new("bhc", case_id), &prompt)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeOutcome {
    /// dimension -> system name -> rank (1 = best). Empty when unjudged.
    pub per_dimension: BTreeMap<String, BTreeMap<String, u32>>,
    /// Overall order, best first, by system name. May be empty.
    pub overall: Vec<String>,
    pub judged: bool,
}

/// Pooled ranking of candidate BHC texts by an LLM judge.
///
/// System identities are anonymized behind shuffled labels (A, B, C...)
/// before prompting; a ranking that is not a tie-free permutation on
/// every requested dimension gets one repair, after which the case is
/// marked unjudged and excluded from rank averaging.
pub fn judge_bhc(
    rt: &AgentRuntime,
    case_id: &str,
    note: &str,
    reference: &str,
    systems: &BTreeMap<String, String>,
    dimensions: &[String],
    label_seed: u64,
) -> Result<JudgeOutcome, JudgeError> {
    if systems.len() < 2 {
        return Err(JudgeError::TooFewSystems(systems.len()));
    }
    let mut names: Vec<&String> = systems.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(label_seed);
    names.shuffle(&mut rng);
    let labels: Vec<String> = (0..names.len())
        .map(|i| char::from(b'A' + i as u8).to_string())
        .collect();
    let label_to_name: BTreeMap<&str, &str> = labels
        .iter()
        .zip(&names)
        .map(|(l, n)| (l.as_str(), n.as_str()))
        .collect();

    let candidate_systems_text = labels
        .iter()
        .zip(&names)
        .map(|(label, name)| format!("System {label}:\n{}", systems[*name]))
        .collect::<Vec<_>>()
        .join("\n\n");
    let prompt = rt
        .templates
        .render(
            "bhc_judge",
            &vars(vec![
                ("clinical_note", note.to_string()),
                ("target_bhc", reference.to_string()),
                ("candidate_systems_text", candidate_systems_text),
            ]),
        )
        .expect("bhc_judge placeholders");

    let label_list = labels.join(", ");
    let dimension_list = dimensions.join(", ");
    let format_instructions = format!(
        "Respond with one JSON object and nothing else:\n\
         {{\"rankings\": {{\"<dimension>\": {{\"<label>\": <rank integer>}}}}, \"overall\": [\"<label>\", ...]}}\n\
         Dimensions (include every one): {dimension_list}.\n\
         Labels (rank every one per dimension): {label_list}.\n\
         Ranks within one dimension must be the integers 1..{m} with no ties; 1 is best.",
        m = labels.len()
    );

    let m = labels.len();
    let expected_labels: BTreeSet<String> = labels.iter().cloned().collect();
    let wanted: Vec<String> = dimensions.to_vec();
    let validate = move |r: &replies::JudgeReply| {
        for dim in &wanted {
            let Some(ranks) = r.rankings.get(dim) else {
                return Err(format!("missing dimension {dim:?}"));
            };
            let got: BTreeSet<String> = ranks.keys().cloned().collect();
            if got != expected_labels {
                return Err(format!("dimension {dim:?} must rank exactly the labels"));
            }
            let mut values: Vec<i64> = ranks.values().copied().collect();
            values.sort_unstable();
            if values != (1..=m as i64).collect::<Vec<_>>() {
                return Err(format!(
                    "dimension {dim:?} ranks must be a tie-free permutation of 1..={m}"
                ));
            }
        }
        Ok(())
    };

    let meta = CallMeta::new("bhc_judge", case_id);
    let (parsed, reply) = rt.call_structured::<replies::JudgeReply>(
        &meta,
        &prompt,
        &format_instructions,
        rt.temperature,
        &validate,
    )?;

    if !reply.parse_ok {
        tracing::warn!(
            case_id,
            "judge ranking malformed after repair; case unjudged"
        );
        return Ok(JudgeOutcome {
            per_dimension: BTreeMap::new(),
            overall: Vec::new(),
            judged: false,
        });
    }
    let body = parsed.expect("parse_ok implies parsed");
    let mut per_dimension = BTreeMap::new();
    for dim in dimensions {
        let ranks = &body.rankings[dim];
        let by_system: BTreeMap<String, u32> = ranks
            .iter()
            .map(|(label, rank)| (label_to_name[label.as_str()].to_string(), *rank as u32))
            .collect();
        per_dimension.insert(dim.clone(), by_system);
    }
    let overall = body
        .overall
        .iter()
        .filter_map(|label| label_to_name.get(label.as_str()).map(|n| n.to_string()))
        .collect();
    Ok(JudgeOutcome {
        per_dimension,
        overall,
        judged: true,
    })
}

// ---------------------------------------------------------------------------
// shared plumbing for baseline strategies and data prep
// ---------------------------------------------------------------------------

/// Selection-style call: returns the chosen candidate indices.
/// Out-of-range indices are dropped with a warning; a failed repair
/// yields the empty set with `parse_ok = false`.
pub fn select_indices(
    rt: &AgentRuntime,
    meta: &CallMeta,
    template_name: &str,
    template_vars: &BTreeMap<&str, String>,
    n: usize,
    temperature: f64,
) -> Result<(BTreeSet<usize>, StructuredReply), ProviderError> {
    let prompt = rt
        .templates
        .render(template_name, template_vars)
        .expect("selection template placeholders");
    let (parsed, reply) = rt.call_structured::<replies::SelectionReply>(
        meta,
        &prompt,
        SELECTION_FORMAT,
        temperature,
        &|_| Ok(()),
    )?;
    let mut selected = BTreeSet::new();
    if let Some(body) = parsed {
        for sel in body.selected {
            match usize::try_from(sel.index) {
                Ok(idx) if (1..=n).contains(&idx) => {
                    selected.insert(idx);
                }
                _ => tracing::warn!(index = sel.index, "selected index out of range; dropped"),
            }
        }
    }
    Ok((selected, reply))
}

/// Vote-list call: per-candidate KEEP/REMOVE decisions with rationales.
/// Entry `j` of the result is `None` when the reply did not mention
/// candidate `j` or its vote token did not parse; the caller picks the
/// default. Outer `None` means the whole reply was unusable after
/// repair.
#[allow(clippy::type_complexity)]
pub fn vote_decisions(
    rt: &AgentRuntime,
    meta: &CallMeta,
    template_name: &str,
    template_vars: &BTreeMap<&str, String>,
    n: usize,
) -> Result<(Option<Vec<Option<(Vote, String)>>>, StructuredReply), ProviderError> {
    let prompt = rt
        .templates
        .render(template_name, template_vars)
        .expect("vote template placeholders");
    let (parsed, reply) = rt.call_structured::<replies::VoteListReply>(
        meta,
        &prompt,
        VOTE_LIST_FORMAT,
        rt.temperature,
        &|_| Ok(()),
    )?;
    let Some(body) = parsed else {
        return Ok((None, reply));
    };
    let mut votes: Vec<Option<(Vote, String)>> = vec![None; n];
    for entry in body.decisions {
        let idx = match usize::try_from(entry.index) {
            Ok(idx) if (1..=n).contains(&idx) => idx,
            _ => {
                tracing::warn!(index = entry.index, "vote index out of range; dropped");
                continue;
            }
        };
        match Vote::parse(&entry.vote) {
            Ok(vote) if votes[idx - 1].is_none() => votes[idx - 1] = Some((vote, entry.rationale)),
            Ok(_) => {}
            Err(_) => tracing::warn!(index = idx, token = %entry.vote, "unparseable vote token"),
        }
    }
    Ok((Some(votes), reply))
}

/// Structured span-extraction call used by diagnosis-aware note masking.
pub fn phrase_mask_spans(
    rt: &AgentRuntime,
    note_id: &str,
    note: &str,
    diagnoses: &[String],
) -> Result<Vec<String>, ProviderError> {
    let prompt = rt
        .templates
        .render(
            "phrase_mask",
            &vars(vec![
                ("clinical_note", note.to_string()),
                ("diagnoses_text", diagnoses.join("; ")),
            ]),
        )
        .expect("phrase_mask placeholders");
    let meta = CallMeta::new("phrase_mask", note_id);
    let (parsed, _) = rt.call_structured::<replies::PhraseMaskReply>(
        &meta,
        &prompt,
        PHRASE_MASK_FORMAT,
        rt.temperature,
        &|_| Ok(()),
    )?;
    Ok(parsed.map(|p| p.spans).unwrap_or_default())
}

/// LLM leakage check: is the label directly or partially recoverable
/// from the note text? `None` when the reply was unusable.
pub fn semantic_filter_recoverable(
    rt: &AgentRuntime,
    note_id: &str,
    note: &str,
    diagnoses: &[String],
) -> Result<Option<bool>, ProviderError> {
    let prompt = rt
        .templates
        .render(
            "semantic_filter",
            &vars(vec![
                ("clinical_note", note.to_string()),
                ("diagnoses_text", diagnoses.join("; ")),
            ]),
        )
        .expect("semantic_filter placeholders");
    let meta = CallMeta::new("semantic_filter", note_id);
    let (parsed, _) = rt.call_structured::<replies::SemanticFilterReply>(
        &meta,
        &prompt,
        SEMANTIC_FILTER_FORMAT,
        rt.temperature,
        &|_| Ok(()),
    )?;
    Ok(parsed.map(|p| p.recoverable))
}

/// Near-duplicate distractor filter: returns the candidate texts the
/// model flags as synonyms, abbreviations, or paraphrases of the gold
/// labels.
pub fn distractor_near_duplicates(
    rt: &AgentRuntime,
    note_id: &str,
    gold: &[String],
    candidates: &[String],
) -> Result<Vec<String>, ProviderError> {
    let candidates_text = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}", i + 1, c))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = rt
        .templates
        .render(
            "distractor_filter",
            &vars(vec![
                ("gold_text", gold.join("; ")),
                ("candidates_text", candidates_text),
            ]),
        )
        .expect("distractor_filter placeholders");
    let meta = CallMeta::new("distractor_filter", note_id);
    let (parsed, _) = rt.call_structured::<replies::DistractorFilterReply>(
        &meta,
        &prompt,
        DISTRACTOR_FILTER_FORMAT,
        rt.temperature,
        &|_| Ok(()),
    )?;
    Ok(parsed.map(|p| p.remove).unwrap_or_default())
}
