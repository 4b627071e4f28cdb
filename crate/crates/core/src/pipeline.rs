//! End-to-end case execution and corpus runs.
//!
//! One case flows through assessment, panel assembly, specialist
//! deliberation, hybrid resolution, and (optionally) BHC generation; the
//! full audit record is persisted before the case returns. A corpus run
//! writes one JSONL trace line per case in input order regardless of
//! completion order, plus a manifest carrying config and prompt hashes,
//! path counts, and token totals. Runs are resumable: case ids already
//! present in the trace are skipped on restart. A failed case never
//! poisons the run; it is written as a failed line and excluded from
//! metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, AgentRuntime};
use crate::baselines;
use crate::config::{Method, RunConfig};
use crate::provider::{ProviderError, TokenLedger, TokenTotals};
use crate::router::{self, ArbitrationFailure, ArbitrationRequest, RouterError};
use crate::types::{
    CandidateDiagnosis, Decision, PanelSpec, ResolutionPath, ResolutionRecord, TaskInstance,
    VoteMatrix,
};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Everything recorded for one completed deliberation case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub panel: PanelSpec,
    pub initial_decisions: Vec<Decision>,
    pub matrix: VoteMatrix,
    pub resolutions: Vec<ResolutionRecord>,
    pub accepted: BTreeSet<usize>,
    pub bhc: Option<String>,
    pub tokens_by_stage: BTreeMap<String, TokenTotals>,
    pub degraded_flags: Vec<String>,
}

/// Pipeline-internal detail embedded in a trace line for deliberation
/// runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampTrace {
    pub panel: PanelSpec,
    pub initial_decisions: Vec<Decision>,
    pub matrix: VoteMatrix,
    pub resolutions: Vec<ResolutionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bhc: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Completed,
    Failed,
}

/// One line of `trace.jsonl`: a uniform record across all methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub case_id: String,
    pub method: String,
    pub model: String,
    pub temperature: f64,
    pub status: CaseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub candidates: Vec<String>,
    pub gold: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_label: Option<String>,
    pub accepted: Vec<usize>,
    pub tokens_by_stage: BTreeMap<String, TokenTotals>,
    pub degraded_flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camp: Option<CampTrace>,
}

impl TraceRecord {
    pub fn total_tokens(&self) -> u64 {
        self.tokens_by_stage.values().map(|t| t.total()).sum()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad trace line {line} in {path}: {source}")]
    BadTrace {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// single-case execution
// ---------------------------------------------------------------------------

/// Stage names a deliberation case is allowed to charge tokens to.
pub const CAMP_STAGES: [&str; 5] = ["assessment", "assembly", "specialist", "arbitration", "bhc"];

/// Execute the full deliberation pipeline for one case.
///
/// Stage 1 (assessment + assembly) runs first; the k specialist reviews
/// run concurrently when configured; resolution and arbitration follow;
/// BHC generation is optional. Per-stage degradations are recorded in
/// `degraded_flags`; only provider failure aborts the case.
pub fn run_case(
    rt: &AgentRuntime,
    instance: &TaskInstance,
    config: &RunConfig,
    ledger: &TokenLedger,
) -> Result<CaseResult, ProviderError> {
    let k = config.k.clamp(1, config.max_panel_size);
    let case_id = instance.case_id.as_str();
    let note = instance.masked_note.as_str();
    let mut degraded_flags = Vec::new();

    // Stage 1: initial assessment and panel assembly
    let assessment = agents::initial_assessment(rt, case_id, note, &instance.candidates)?;
    if assessment.degraded {
        degraded_flags.push("assessment:parse_failure".to_string());
    }
    let panel_outcome = agents::assemble_panel(rt, case_id, note, &instance.candidates, k)?;
    if panel_outcome.degraded {
        degraded_flags.push("assembly:degraded".to_string());
    }
    let panel = panel_outcome.panel;

    // Stage 2: specialist deliberation
    let mut rows: Vec<Option<Result<agents::SpecialistRow, ProviderError>>> =
        (0..panel.size()).map(|_| None).collect();
    if config.specialist_parallelism && panel.size() > 1 {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for specialist in &panel.specialists {
                handles.push(scope.spawn(move || {
                    agents::specialist_review(rt, case_id, note, specialist, &instance.candidates)
                }));
            }
            for (slot, handle) in rows.iter_mut().zip(handles) {
                *slot = Some(handle.join().expect("specialist thread panicked"));
            }
        });
    } else {
        for (slot, specialist) in rows.iter_mut().zip(&panel.specialists) {
            *slot = Some(agents::specialist_review(
                rt,
                case_id,
                note,
                specialist,
                &instance.candidates,
            ));
        }
    }
    let mut matrix_rows = Vec::with_capacity(panel.size());
    for (specialist, row) in panel.specialists.iter().zip(rows) {
        let row = row.expect("specialist slot filled")?;
        if row.degraded {
            degraded_flags.push(format!("specialist:{}:parse_failure", specialist.role));
        }
        matrix_rows.push(row.evaluations);
    }
    let matrix = VoteMatrix::new(matrix_rows).expect("rows are rectangular by construction");

    // Stage 3: hybrid resolution with the attending as arbitrator
    let roles: Vec<String> = panel.specialists.iter().map(|s| s.role.clone()).collect();
    let provider_failure: Mutex<Option<ProviderError>> = Mutex::new(None);
    let mut arbitrate = |req: ArbitrationRequest<'_>| {
        let diagnosis = &instance.candidates[req.diagnosis_index - 1];
        match agents::arbitrate(rt, case_id, note, diagnosis, &req.specialists) {
            Ok(verdict) => Ok(verdict),
            Err(e) => {
                let message = e.to_string();
                *provider_failure.lock().expect("poisoned") = Some(e);
                Err(ArbitrationFailure(message))
            }
        }
    };
    let resolutions = if config.always_arbitrate {
        router::resolve_case_always_arbitrate(&matrix, &roles, &mut arbitrate)
    } else {
        router::resolve_case(&matrix, &roles, &assessment.decisions, &mut arbitrate)
    };
    let mut resolutions = match resolutions {
        Ok(records) => records,
        Err(RouterError::ArbitrationFailed { .. }) => {
            let failure = provider_failure
                .lock()
                .expect("poisoned")
                .take()
                .expect("arbitration failure stored");
            return Err(failure);
        }
        Err(other) => unreachable!("router dimension errors cannot happen here: {other}"),
    };

    // enrich arbitration traces with the mechanical quote check
    for record in &mut resolutions {
        if let Some(trace) = &mut record.arbitration {
            for input in &mut trace.inputs {
                input.quote_verified = agents::verify_quote(note, &input.quote);
            }
            if trace.degraded {
                degraded_flags.push(format!(
                    "arbitration:diagnosis_{}:degraded",
                    record.diagnosis_index
                ));
            }
        }
    }

    let accepted = router::accepted_set(&resolutions);

    // optional BHC generation over the accepted set
    let bhc = if config.bhc_enabled {
        let accepted_diagnoses: Vec<CandidateDiagnosis> = instance
            .candidates
            .iter()
            .filter(|c| accepted.contains(&c.index))
            .cloned()
            .collect();
        Some(agents::generate_bhc(
            rt,
            case_id,
            note,
            &accepted_diagnoses,
        )?)
    } else {
        None
    };

    let tokens_by_stage = ledger.totals_for_case(case_id);
    debug_assert!(
        tokens_by_stage
            .keys()
            .all(|s| CAMP_STAGES.contains(&s.as_str())),
        "unexpected stage in {tokens_by_stage:?}"
    );

    Ok(CaseResult {
        case_id: case_id.to_string(),
        panel,
        initial_decisions: assessment.decisions,
        matrix,
        resolutions,
        accepted,
        bhc,
        tokens_by_stage,
        degraded_flags,
    })
}

fn trace_from_case_result(
    instance: &TaskInstance,
    result: CaseResult,
    config: &RunConfig,
) -> TraceRecord {
    TraceRecord {
        schema_version: TRACE_SCHEMA_VERSION,
        case_id: result.case_id,
        method: config.method.name().to_string(),
        model: config.provider.model.clone(),
        temperature: config.temperature,
        status: CaseStatus::Completed,
        error: None,
        candidates: instance.candidates.iter().map(|c| c.text.clone()).collect(),
        gold: instance.gold.iter().copied().collect(),
        service_label: instance.service_label.clone(),
        accepted: result.accepted.iter().copied().collect(),
        tokens_by_stage: result.tokens_by_stage,
        degraded_flags: result.degraded_flags,
        camp: Some(CampTrace {
            panel: result.panel,
            initial_decisions: result.initial_decisions,
            matrix: result.matrix,
            resolutions: result.resolutions,
            bhc: result.bhc,
        }),
    }
}

/// Execute one case under the configured method and produce its trace
/// line. Provider failures yield a failed record instead of an error.
pub fn execute_case(
    rt: &AgentRuntime,
    instance: &TaskInstance,
    config: &RunConfig,
    ledger: &TokenLedger,
) -> TraceRecord {
    let outcome: Result<TraceRecord, ProviderError> = match config.method.baseline_kind() {
        None => run_case(rt, instance, config, ledger)
            .map(|result| trace_from_case_result(instance, result, config)),
        Some(kind) => {
            baselines::run_baseline(kind, rt, instance, &config.baseline).map(|outcome| {
                TraceRecord {
                    schema_version: TRACE_SCHEMA_VERSION,
                    case_id: instance.case_id.clone(),
                    method: config.method.name().to_string(),
                    model: config.provider.model.clone(),
                    temperature: config.temperature,
                    status: CaseStatus::Completed,
                    error: None,
                    candidates: instance.candidates.iter().map(|c| c.text.clone()).collect(),
                    gold: instance.gold.iter().copied().collect(),
                    service_label: instance.service_label.clone(),
                    accepted: outcome.accepted.into_iter().collect(),
                    tokens_by_stage: ledger.totals_for_case(&instance.case_id),
                    degraded_flags: outcome.degraded_flags,
                    camp: None,
                }
            })
        }
    };
    match outcome {
        Ok(record) => record,
        Err(e) => {
            tracing::error!(case_id = %instance.case_id, error = %e, "case failed");
            TraceRecord {
                schema_version: TRACE_SCHEMA_VERSION,
                case_id: instance.case_id.clone(),
                method: config.method.name().to_string(),
                model: config.provider.model.clone(),
                temperature: config.temperature,
                status: CaseStatus::Failed,
                error: Some(e.to_string()),
                candidates: instance.candidates.iter().map(|c| c.text.clone()).collect(),
                gold: instance.gold.iter().copied().collect(),
                service_label: instance.service_label.clone(),
                accepted: Vec::new(),
                tokens_by_stage: ledger.totals_for_case(&instance.case_id),
                degraded_flags: vec!["case:failed".to_string()],
                camp: None,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// corpus runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TokensSummary {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total: u64,
    pub by_stage: BTreeMap<String, TokenTotals>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub method: String,
    pub provider: String,
    pub model: String,
    pub temperature: f64,
    pub seed: u64,
    pub k: usize,
    pub config_hash: String,
    pub prompt_set_hash: String,
    pub n_instances: usize,
    pub n_completed: usize,
    pub n_failed: usize,
    pub n_skipped: usize,
    /// Resolution-path histogram over all per-diagnosis records.
    pub path_counts: BTreeMap<String, u64>,
    /// Number of diagnoses decided by arbitration.
    pub arbitration_calls: u64,
    pub tokens: TokensSummary,
}

pub fn trace_path(out_dir: &Path) -> PathBuf {
    out_dir.join("trace.jsonl")
}

pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}

/// Read every trace line from a file. Partial files from interrupted
/// runs are valid; blank lines are skipped.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, PipelineError> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| PipelineError::BadTrace {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

fn summarize(records: &[TraceRecord]) -> (BTreeMap<String, u64>, u64, TokensSummary) {
    let mut path_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut arbitration_calls = 0u64;
    let mut tokens = TokensSummary::default();
    for record in records {
        if let Some(camp) = &record.camp {
            for resolution in &camp.resolutions {
                *path_counts.entry(resolution.path.to_string()).or_default() += 1;
                if resolution.path == ResolutionPath::Conflict {
                    arbitration_calls += 1;
                }
            }
        }
        for (stage, totals) in &record.tokens_by_stage {
            tokens.prompt_tokens += totals.prompt_tokens;
            tokens.completion_tokens += totals.completion_tokens;
            tokens
                .by_stage
                .entry(stage.clone())
                .or_default()
                .add(totals.prompt_tokens, totals.completion_tokens);
        }
    }
    tokens.total = tokens.prompt_tokens + tokens.completion_tokens;
    (path_counts, arbitration_calls, tokens)
}

/// Run a corpus under the configured method, appending one trace line
/// per case in input order and writing the manifest at the end.
///
/// With `resume`, case ids already present in the trace file are skipped
/// and the manifest is recomputed over the full file.
pub fn run_corpus(
    rt: &AgentRuntime,
    instances: &[TaskInstance],
    config: &RunConfig,
    ledger: &Arc<TokenLedger>,
    out_dir: &Path,
    resume: bool,
) -> Result<RunManifest, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let trace_file = trace_path(out_dir);

    let mut done: BTreeSet<String> = BTreeSet::new();
    if resume && trace_file.exists() {
        for record in read_trace(&trace_file)? {
            done.insert(record.case_id);
        }
    } else if trace_file.exists() {
        std::fs::remove_file(&trace_file).map_err(|e| io_err(&trace_file, e))?;
    }

    let todo: Vec<&TaskInstance> = instances
        .iter()
        .filter(|i| !done.contains(&i.case_id))
        .collect();
    let n_skipped = instances.len() - todo.len();

    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&trace_file)
        .map_err(|e| io_err(&trace_file, e))?;
    let mut writer = std::io::BufWriter::new(file);

    let bhc_dir = out_dir.join("bhc");
    if config.bhc_enabled && config.method == Method::Camp {
        std::fs::create_dir_all(&bhc_dir).map_err(|e| io_err(&bhc_dir, e))?;
    }

    // Workers execute cases; the writer thread holds completed records
    // until every earlier case is written, so trace order always equals
    // input order and interrupted files stay valid prefixes.
    let workers = config.case_parallelism.clamp(1, todo.len().max(1));
    let next_case = AtomicUsize::new(0);
    let (sender, receiver) = mpsc::channel::<(usize, TraceRecord)>();
    let write_error: Mutex<Option<PipelineError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let sender = sender.clone();
            let todo = &todo;
            let next_case = &next_case;
            scope.spawn(move || loop {
                let index = next_case.fetch_add(1, Ordering::SeqCst);
                if index >= todo.len() {
                    break;
                }
                let record = execute_case(rt, todo[index], config, ledger);
                if sender.send((index, record)).is_err() {
                    break;
                }
            });
        }
        drop(sender);

        let mut pending: BTreeMap<usize, TraceRecord> = BTreeMap::new();
        let mut next_to_write = 0usize;
        while let Ok((index, record)) = receiver.recv() {
            pending.insert(index, record);
            while let Some(record) = pending.remove(&next_to_write) {
                if let Some(camp) = &record.camp {
                    if let Some(bhc) = &camp.bhc {
                        let path = bhc_dir.join(format!("{}.txt", record.case_id));
                        if let Err(e) = std::fs::write(&path, bhc) {
                            *write_error.lock().expect("poisoned") = Some(io_err(&path, e));
                        }
                    }
                }
                let line = serde_json::to_string(&record).expect("trace record serializes");
                if let Err(e) = writeln!(writer, "{line}").and_then(|_| writer.flush()) {
                    *write_error.lock().expect("poisoned") = Some(io_err(&trace_file, e));
                }
                next_to_write += 1;
            }
        }
    });
    if let Some(error) = write_error.into_inner().expect("poisoned") {
        return Err(error);
    }

    // manifest over the full trace file (including resumed lines)
    let all_records = read_trace(&trace_file)?;
    let (path_counts, arbitration_calls, tokens) = summarize(&all_records);
    let manifest = RunManifest {
        schema_version: TRACE_SCHEMA_VERSION,
        method: config.method.name().to_string(),
        provider: rt.provider.id().to_string(),
        model: config.provider.model.clone(),
        temperature: config.temperature,
        seed: config.seed,
        k: config.k,
        config_hash: config.content_hash(),
        prompt_set_hash: rt.templates.content_hash(),
        n_instances: instances.len(),
        n_completed: all_records
            .iter()
            .filter(|r| r.status == CaseStatus::Completed)
            .count(),
        n_failed: all_records
            .iter()
            .filter(|r| r.status == CaseStatus::Failed)
            .count(),
        n_skipped,
        path_counts,
        arbitration_calls,
        tokens,
    };
    let manifest_file = manifest_path(out_dir);
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_file, body).map_err(|e| io_err(&manifest_file, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::TemplateSet;
    use crate::provider::{
        CallMeta, ChatProvider, ChatRequest, ChatResponse, MockEntry, MockMatcher, MockProvider,
        RecordingProvider,
    };
    use crate::types::Vote;

    fn instance(case_id: &str, n: usize, gold: &[usize]) -> TaskInstance {
        TaskInstance {
            case_id: case_id.into(),
            masked_note: format!("COURSE:\nfindings for {case_id}, nothing named."),
            candidates: (1..=n)
                .map(|i| CandidateDiagnosis {
                    index: i,
                    text: format!("Condition {i} of {case_id}"),
                })
                .collect(),
            gold: gold.iter().copied().collect(),
            service_label: Some("MEDICINE".into()),
            shuffle_seed: 0,
        }
    }

    fn entry(
        stage: &str,
        case_id: Option<&str>,
        role: Option<&str>,
        response: serde_json::Value,
    ) -> MockEntry {
        MockEntry {
            matcher: MockMatcher::Meta {
                stage: stage.into(),
                case_id: case_id.map(String::from),
                role: role.map(String::from),
            },
            response: match response {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            },
            prompt_tokens: Some(10),
            completion_tokens: Some(5),
        }
    }

    fn assessment_reply(indices: &[usize]) -> serde_json::Value {
        serde_json::json!({
            "selected": indices.iter().map(|i| serde_json::json!({"index": i, "confidence": "high"})).collect::<Vec<_>>(),
            "key_dimensions": "test dimensions"
        })
    }

    fn panel_reply(roles: &[&str]) -> serde_json::Value {
        serde_json::json!({
            "case_summary": "a test case",
            "specialists": roles.iter().map(|r| serde_json::json!({"role": r, "focus": format!("focus for {r}")})).collect::<Vec<_>>()
        })
    }

    fn review_reply(votes: &[(usize, &str)]) -> serde_json::Value {
        serde_json::json!({
            "evaluations": votes.iter().map(|(i, v)| serde_json::json!({
                "index": i, "vote": v, "confidence": 0.9, "in_scope": true,
                "evidence_level": "direct", "quote": "findings", "rationale": "because"
            })).collect::<Vec<_>>()
        })
    }

    /// Mock script for a 3-specialist case over 3 candidates: candidate 1
    /// strong keep, candidate 2 conflict, candidate 3 weak consensus.
    fn camp_entries(case_id: &str) -> Vec<MockEntry> {
        vec![
            entry("assessment", Some(case_id), None, assessment_reply(&[1, 3])),
            entry(
                "assembly",
                Some(case_id),
                None,
                panel_reply(&["alpha", "beta", "gamma"]),
            ),
            entry(
                "specialist",
                Some(case_id),
                Some("alpha"),
                review_reply(&[(1, "KEEP"), (2, "KEEP"), (3, "NEUTRAL")]),
            ),
            entry(
                "specialist",
                Some(case_id),
                Some("beta"),
                review_reply(&[(1, "KEEP"), (2, "REMOVE"), (3, "NEUTRAL")]),
            ),
            entry(
                "specialist",
                Some(case_id),
                Some("gamma"),
                review_reply(&[(1, "KEEP"), (2, "KEEP"), (3, "KEEP")]),
            ),
            entry(
                "arbitration",
                Some(case_id),
                Some("diagnosis_2"),
                serde_json::json!({"decision": "INCLUDE", "reasoning": "minority evidence decisive"}),
            ),
        ]
    }

    fn runtime_with_ledger(entries: Vec<MockEntry>) -> (AgentRuntime, Arc<TokenLedger>) {
        let ledger = Arc::new(TokenLedger::new());
        let provider = RecordingProvider::new(MockProvider::new(entries), Arc::clone(&ledger));
        let rt = AgentRuntime::new(Arc::new(provider), TemplateSet::builtin(), "mock-model");
        (rt, ledger)
    }

    #[test]
    fn run_case_routes_all_three_paths() {
        let (rt, ledger) = runtime_with_ledger(camp_entries("c1"));
        let config = RunConfig::default();
        let inst = instance("c1", 3, &[1, 2]);
        let result = run_case(&rt, &inst, &config, &ledger).unwrap();

        assert_eq!(result.resolutions.len(), 3);
        assert_eq!(result.resolutions[0].path, ResolutionPath::StrongConsensus);
        assert_eq!(result.resolutions[1].path, ResolutionPath::Conflict);
        assert_eq!(result.resolutions[2].path, ResolutionPath::WeakConsensus);
        // conflict resolved by scripted INCLUDE; weak consensus falls back
        // to the attending's ACCEPT on 3
        assert_eq!(result.accepted, BTreeSet::from([1, 2, 3]));
        assert!(result.resolutions[1].arbitration.is_some());
        assert!(result.resolutions[2].fallback_used);
        for record in &result.resolutions {
            record.validate().unwrap();
        }
        // the accepted set is exactly the records' accept set
        let from_records = router::accepted_set(&result.resolutions);
        assert_eq!(result.accepted, from_records);
        // token stages stay within the allowed set
        assert!(result
            .tokens_by_stage
            .keys()
            .all(|s| CAMP_STAGES.contains(&s.as_str())));
    }

    #[test]
    fn arbitration_happens_exactly_once_per_conflict() {
        let (rt, ledger) = runtime_with_ledger(camp_entries("c1"));
        let config = RunConfig::default();
        let inst = instance("c1", 3, &[1]);
        let result = run_case(&rt, &inst, &config, &ledger).unwrap();
        let conflicts = result
            .resolutions
            .iter()
            .filter(|r| r.path == ResolutionPath::Conflict)
            .count();
        assert_eq!(conflicts, 1);
        assert_eq!(ledger.entries_for_stage("arbitration"), 1);
    }

    /// Stage-ordering probe: records the stage sequence, then delegates.
    struct Sequencer<P> {
        inner: P,
        stages: Mutex<Vec<String>>,
    }

    impl<P: ChatProvider> ChatProvider for Sequencer<P> {
        fn complete(
            &self,
            req: &ChatRequest,
            meta: &CallMeta,
        ) -> Result<ChatResponse, ProviderError> {
            self.stages.lock().unwrap().push(meta.stage.clone());
            self.inner.complete(req, meta)
        }
        fn id(&self) -> &str {
            self.inner.id()
        }
    }

    #[test]
    fn stage_ordering_is_respected() {
        let sequencer = Arc::new(Sequencer {
            inner: MockProvider::new(camp_entries("c1")),
            stages: Mutex::new(Vec::new()),
        });
        let ledger = Arc::new(TokenLedger::new());
        let provider = RecordingProvider::new(Arc::clone(&sequencer), Arc::clone(&ledger));
        let rt = AgentRuntime::new(Arc::new(provider), TemplateSet::builtin(), "m");
        let config = RunConfig::default();
        run_case(&rt, &instance("c1", 3, &[1]), &config, &ledger).unwrap();

        let stages = sequencer.stages.lock().unwrap();
        let position = |name: &str| stages.iter().position(|s| s == name);
        let last_position = |name: &str| stages.iter().rposition(|s| s == name);
        assert!(position("assessment").unwrap() < position("assembly").unwrap());
        assert!(position("assembly").unwrap() < position("specialist").unwrap());
        assert!(last_position("specialist").unwrap() < position("arbitration").unwrap());
    }

    #[test]
    fn always_arbitrate_calls_arbitrator_for_every_column() {
        let mut entries = camp_entries("c1");
        // generic arbitration fallback for the non-conflict columns
        entries.push(entry(
            "arbitration",
            Some("c1"),
            None,
            serde_json::json!({"decision": "EXCLUDE", "reasoning": "variant"}),
        ));
        let (rt, ledger) = runtime_with_ledger(entries);
        let config = RunConfig {
            always_arbitrate: true,
            ..RunConfig::default()
        };
        let result = run_case(&rt, &instance("c1", 3, &[1]), &config, &ledger).unwrap();
        assert_eq!(ledger.entries_for_stage("arbitration"), 3);
        assert!(result.resolutions.iter().all(|r| r.arbitration.is_some()));
    }

    #[test]
    fn provider_failure_fails_case_but_not_run() {
        // no entries at all: the first assessment call errors
        let (rt, ledger) = runtime_with_ledger(vec![]);
        let config = RunConfig::default();
        let record = execute_case(&rt, &instance("c1", 3, &[1]), &config, &ledger);
        assert_eq!(record.status, CaseStatus::Failed);
        assert!(record.error.is_some());
    }

    #[test]
    fn run_corpus_writes_ordered_trace_and_manifest() {
        let mut entries = Vec::new();
        for case in ["a-case", "b-case", "c-case"] {
            entries.extend(camp_entries(case));
        }
        let (rt, ledger) = runtime_with_ledger(entries);
        let config = RunConfig {
            case_parallelism: 3,
            ..RunConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let instances = vec![
            instance("c-case", 3, &[1]),
            instance("a-case", 3, &[1]),
            instance("b-case", 3, &[2]),
        ];
        let manifest = run_corpus(&rt, &instances, &config, &ledger, dir.path(), false).unwrap();

        let records = read_trace(&trace_path(dir.path())).unwrap();
        let ids: Vec<&str> = records.iter().map(|r| r.case_id.as_str()).collect();
        // input order preserved regardless of completion order
        assert_eq!(ids, vec!["c-case", "a-case", "b-case"]);
        assert_eq!(manifest.n_completed, 3);
        assert_eq!(manifest.n_failed, 0);
        // per-case tallies: one conflict each
        assert_eq!(manifest.arbitration_calls, 3);
        assert_eq!(manifest.path_counts["conflict"], 3);
        assert_eq!(manifest.path_counts["strong_consensus"], 3);
        assert_eq!(manifest.path_counts["weak_consensus"], 3);
        // manifest token totals equal the ledger sum exactly
        assert_eq!(manifest.tokens.total, ledger.total().total());
        let stage_sum: u64 = manifest.tokens.by_stage.values().map(|t| t.total()).sum();
        assert_eq!(stage_sum, manifest.tokens.total);
    }

    #[test]
    fn resume_skips_completed_cases() {
        let mut entries = Vec::new();
        for case in ["a", "b", "c", "d"] {
            entries.extend(camp_entries(case));
        }
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig::default();
        let all: Vec<TaskInstance> = ["a", "b", "c", "d"]
            .iter()
            .map(|c| instance(c, 3, &[1]))
            .collect();

        let (rt, ledger) = runtime_with_ledger(entries.clone());
        run_corpus(&rt, &all[..2], &config, &ledger, dir.path(), false).unwrap();
        assert_eq!(read_trace(&trace_path(dir.path())).unwrap().len(), 2);

        // fresh provider and ledger for the restart
        let (rt2, ledger2) = runtime_with_ledger(entries);
        let manifest = run_corpus(&rt2, &all, &config, &ledger2, dir.path(), true).unwrap();
        assert_eq!(manifest.n_skipped, 2);
        assert_eq!(manifest.n_completed, 4);
        // exactly two new case executions: ledger2 saw only c and d
        let case_ids: BTreeSet<String> = ledger2
            .snapshot()
            .iter()
            .map(|e| e.case_id.clone())
            .collect();
        assert_eq!(case_ids, BTreeSet::from(["c".to_string(), "d".to_string()]));
        let records = read_trace(&trace_path(dir.path())).unwrap();
        assert_eq!(records.len(), 4);
    }

    #[test]
    fn empty_corpus_yields_valid_manifest() {
        let (rt, ledger) = runtime_with_ledger(vec![]);
        let config = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let manifest = run_corpus(&rt, &[], &config, &ledger, dir.path(), false).unwrap();
        assert_eq!(manifest.n_instances, 0);
        assert_eq!(manifest.n_completed, 0);
        assert!(trace_path(dir.path()).exists());
    }

    #[test]
    fn baseline_method_produces_uniform_trace() {
        let entries = vec![entry(
            "single_agent",
            None,
            None,
            serde_json::json!({"selected": [{"index": 1}]}),
        )];
        let (rt, ledger) = runtime_with_ledger(entries);
        let config = RunConfig {
            method: Method::SingleAgent,
            ..RunConfig::default()
        };
        let record = execute_case(&rt, &instance("c1", 3, &[1]), &config, &ledger);
        assert_eq!(record.status, CaseStatus::Completed);
        assert_eq!(record.accepted, vec![1]);
        assert_eq!(record.method, "single_agent");
        assert!(record.camp.is_none());
        assert!(record.tokens_by_stage.contains_key("single_agent"));
    }

    #[test]
    fn specialist_rows_fill_to_neutral_on_partial_coverage() {
        let mut entries = camp_entries("c1");
        // beta covers only candidate 1 of 3
        entries[3] = entry(
            "specialist",
            Some("c1"),
            Some("beta"),
            review_reply(&[(1, "KEEP")]),
        );
        let (rt, ledger) = runtime_with_ledger(entries);
        let config = RunConfig::default();
        let result = run_case(&rt, &instance("c1", 3, &[1]), &config, &ledger).unwrap();
        let beta_row = &result.matrix.rows()[1];
        assert_eq!(beta_row[0].vote, Vote::Keep);
        assert_eq!(beta_row[1].vote, Vote::Neutral);
        assert_eq!(beta_row[1].confidence, 0.0);
        assert_eq!(beta_row[2].vote, Vote::Neutral);
    }
}
