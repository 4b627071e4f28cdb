//! Dataset construction: diagnosis normalization, discharge-section
//! masking, diagnosis-aware phrase masking, distractor sampling with
//! dynamic candidate scaling, and seeded task assembly.
//!
//! The whole offline path is deterministic given the seed. The two
//! LLM-backed refinements (semantic leakage filtering and near-duplicate
//! distractor filtering) are optional and off by default; the final
//! exact-match masking pass guarantees the hard invariant either way: no
//! candidate text longer than four characters survives case-insensitively
//! in any assembled note.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{self, AgentRuntime};
use crate::types::{find_ci, CandidateDiagnosis, TaskInstance};

pub const MASK_TOKEN: &str = "___";

/// Sections that leak discharge-time information and are removed from
/// model input.
pub const LEAK_SECTIONS: [&str; 6] = [
    "DISCHARGE DIAGNOSIS",
    "DISCHARGE INSTRUCTIONS",
    "DISCHARGE CONDITION",
    "DISCHARGE DISPOSITION",
    "FOLLOWUP INSTRUCTIONS",
    "DISCHARGE MEDICATIONS",
];

/// Canonical admission-time and in-hospital sections preserved in input.
/// Unknown names pass through preserved, with a warning.
pub const CANONICAL_SECTIONS: [&str; 16] = [
    "CHIEF COMPLAINT",
    "MAJOR SURGICAL OR INVASIVE PROCEDURE",
    "HISTORY OF PRESENT ILLNESS",
    "PAST MEDICAL HISTORY",
    "SOCIAL HISTORY",
    "FAMILY HISTORY",
    "ALLERGIES",
    "MEDICATIONS ON ADMISSION",
    "PHYSICAL EXAM",
    "VITAL SIGNS",
    "PERTINENT RESULTS",
    "LABORATORY RESULTS",
    "IMAGING",
    "MICROBIOLOGY",
    "HOSPITAL COURSE NOTES",
    "DEMOGRAPHICS",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub text: String,
}

/// One source record in the documented input schema. `sections` keeps
/// the original document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub note_id: String,
    pub sections: Vec<Section>,
    pub discharge_diagnosis_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
}

#[derive(Debug, Error)]
pub enum DataPrepError {
    #[error("diagnosis pool exhausted: need {needed} distractors, only {available} available")]
    PoolExhausted { needed: usize, available: usize },
    #[error("records must have 1..=3 gold diagnoses, got {0}")]
    UnsupportedGoldCount(usize),
    #[error("io at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad jsonl at {path} line {line}: {source}")]
    BadJsonl {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> DataPrepError {
    DataPrepError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// diagnosis normalization
// ---------------------------------------------------------------------------

/// Entries longer than this are recursively re-split on residual
/// multi-diagnosis delimiters.
pub const RESPLIT_THRESHOLD: usize = 120;

const PREFIX_LABELS: [&str; 6] = [
    "primary",
    "secondary",
    "tertiary",
    "principal",
    "main",
    "other",
];

fn strip_prefix_label(line: &str) -> &str {
    let trimmed = line.trim_start();
    if let Some(colon) = trimmed.find(':') {
        let label = trimmed[..colon].trim().to_lowercase();
        let is_axis = label.starts_with("axis ")
            && label.len() > 5
            && label[5..].chars().all(|c| matches!(c, 'i' | 'v' | 'x'));
        if is_axis
            || PREFIX_LABELS.contains(&label.as_str())
            || label.ends_with(" diagnosis")
            || label.ends_with(" diagnoses")
        {
            return &trimmed[colon + 1..];
        }
    }
    trimmed
}

/// Strip leading bullet characters and residual "1." / "1)" markers to a
/// fixpoint, so the result never re-exposes strippable decoration.
fn strip_bullet(entry: &str) -> &str {
    let mut rest = entry.trim_start();
    loop {
        let stripped = rest.trim_start_matches(['-', '*', '#', '>', '.', ')', ' ', '\t']);
        let bytes = stripped.as_bytes();
        let digits = bytes.iter().take_while(|b| b.is_ascii_digit()).count();
        let stripped = if (1..=2).contains(&digits)
            && bytes.get(digits).is_some_and(|b| *b == b'.' || *b == b')')
        {
            &stripped[digits + 1..]
        } else {
            stripped
        };
        if stripped.len() == rest.len() {
            return rest;
        }
        rest = stripped;
    }
}

/// Split a line at inline numbered markers like "1." or "2)", dropping
/// the markers themselves.
fn split_numbered_markers(line: &str) -> Vec<&str> {
    let bytes = line.as_bytes();
    let mut pieces = Vec::new();
    let mut piece_start = 0usize;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let num_len = i - start;
            if num_len <= 2
                && i < bytes.len()
                && (bytes[i] == b'.' || bytes[i] == b')')
                && i + 1 < bytes.len()
                && bytes[i + 1] == b' '
                && (start == 0 || bytes[start - 1] == b' ')
            {
                pieces.push(&line[piece_start..start]);
                piece_start = i + 2;
                i += 2;
            }
        } else {
            i += 1;
        }
    }
    pieces.push(&line[piece_start..]);
    pieces
        .into_iter()
        .filter(|s| !s.trim().is_empty())
        .collect()
}

fn clean_entry(entry: &str) -> String {
    let no_bullet = strip_bullet(entry);
    // drop placeholder tokens like "stage ___" or bare "___"
    let mut cleaned = no_bullet.replace("stage ___", " ").replace(MASK_TOKEN, " ");
    cleaned = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
    while cleaned.ends_with(['.', ';', ',']) {
        cleaned.pop();
        cleaned = cleaned.trim_end().to_string();
    }
    cleaned
}

fn resplit_long(entry: String, depth: usize) -> Vec<String> {
    if entry.chars().count() <= RESPLIT_THRESHOLD || depth >= 4 {
        return vec![entry];
    }
    for delimiter in ["; ", " and "] {
        if entry.contains(delimiter) {
            return entry
                .split(delimiter)
                .map(clean_entry)
                .filter(|part| part.chars().count() >= 3)
                .flat_map(|part| resplit_long(part, depth + 1))
                .collect();
        }
    }
    vec![entry]
}

/// Multi-step normalization of a raw discharge-diagnosis block into
/// individual diagnosis strings.
///
/// Strips prefix labels ("Primary:", "Axis I:"); splits on newlines,
/// leading hyphens, and "1." / "1)" numbered markers; removes bullets,
/// trailing periods, and placeholder tokens; expands comma-separated
/// entries; drops entries shorter than three characters; recursively
/// re-splits entries longer than [`RESPLIT_THRESHOLD`]. Idempotent under
/// newline join.
pub fn normalize_diagnoses(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in raw.lines() {
        let line = strip_prefix_label(line);
        for piece in split_numbered_markers(line) {
            for part in piece.split(',') {
                let cleaned = clean_entry(part);
                if cleaned.chars().count() < 3 {
                    continue;
                }
                for entry in resplit_long(cleaned, 0) {
                    if entry.chars().count() >= 3 {
                        out.push(entry);
                    }
                }
            }
        }
    }
    out
}

/// Deduplicated, case-insensitively unique set of normalized diagnosis
/// strings; the sampling source for distractors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DiagnosisPool {
    entries: Vec<String>,
}

impl DiagnosisPool {
    pub fn from_diagnoses<I: IntoIterator<Item = String>>(diagnoses: I) -> Self {
        let mut seen = BTreeSet::new();
        let mut entries = Vec::new();
        for d in diagnoses {
            if d.chars().count() < 3 {
                continue;
            }
            if seen.insert(d.to_lowercase()) {
                entries.push(d);
            }
        }
        entries.sort();
        Self { entries }
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// ---------------------------------------------------------------------------
// section masking
// ---------------------------------------------------------------------------

fn canonical_name(name: &str) -> String {
    name.trim().trim_end_matches(':').trim().to_uppercase()
}

/// Remove discharge-time sections, preserving every other section in its
/// original order. Output renders each kept section as "NAME:\ntext".
pub fn mask_sections(record: &RawRecord) -> String {
    let mut kept = Vec::new();
    for section in &record.sections {
        let name = canonical_name(&section.name);
        if LEAK_SECTIONS.contains(&name.as_str()) {
            continue;
        }
        if !CANONICAL_SECTIONS.contains(&name.as_str()) {
            tracing::warn!(note_id = %record.note_id, section = %name, "unknown section preserved");
        }
        kept.push(format!("{name}:\n{}", section.text.trim()));
    }
    kept.join("\n\n")
}

// ---------------------------------------------------------------------------
// phrase masking
// ---------------------------------------------------------------------------

/// Replace every case-insensitive occurrence of `needle` with the mask
/// token.
fn replace_all_ci(text: &str, needle: &str) -> (String, bool) {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    let mut replaced = false;
    while let Some(pos) = find_ci(rest, needle) {
        out.push_str(&rest[..pos]);
        out.push_str(MASK_TOKEN);
        rest = &rest[pos + needle.len()..];
        replaced = true;
    }
    out.push_str(rest);
    (out, replaced)
}

/// Apply model-identified diagnosis-revealing spans, longest first to
/// prevent partial-match artifacts. Spans absent from the note are
/// ignored with a warning.
pub fn apply_phrase_masks(note: &str, spans: &[String]) -> String {
    let mut ordered: Vec<&String> = spans.iter().filter(|s| !s.trim().is_empty()).collect();
    ordered.sort_by_key(|s| std::cmp::Reverse(s.len()));
    ordered.dedup();
    let mut masked = note.to_string();
    for span in ordered {
        let (next, replaced) = replace_all_ci(&masked, span);
        if replaced {
            masked = next;
        } else {
            tracing::warn!(span = %span, "masking span not found in note; ignored");
        }
    }
    masked
}

/// Provider-backed fine-grained masking. Optional: on provider failure
/// the step is skipped with a warning, and the exact-match pass during
/// assembly still guarantees the hard masking invariant.
pub fn llm_phrase_mask(
    rt: &AgentRuntime,
    note_id: &str,
    note: &str,
    diagnoses: &[String],
) -> String {
    match agents::phrase_mask_spans(rt, note_id, note, diagnoses) {
        Ok(spans) => apply_phrase_masks(note, &spans),
        Err(e) => {
            tracing::warn!(note_id, error = %e, "phrase-mask step skipped");
            note.to_string()
        }
    }
}

/// Final exact-match safeguard: every candidate text longer than four
/// characters is replaced case-insensitively by the mask token, longest
/// candidate first, repeated to a fixpoint.
pub fn mask_candidate_strings(note: &str, candidates: &[String]) -> String {
    let mut ordered: Vec<&String> = candidates
        .iter()
        .filter(|c| c.chars().count() > 4)
        .collect();
    ordered.sort_by_key(|c| std::cmp::Reverse(c.len()));
    let mut masked = note.to_string();
    loop {
        let mut any = false;
        for candidate in &ordered {
            let (next, replaced) = replace_all_ci(&masked, candidate);
            if replaced {
                masked = next;
                any = true;
            }
        }
        if !any {
            return masked;
        }
    }
}

// ---------------------------------------------------------------------------
// distractor sampling and task assembly
// ---------------------------------------------------------------------------

/// Dynamic candidate scaling: total option counts for 1, 2, or 3 gold
/// diagnoses.
pub fn option_count_for_gold(gold_count: usize) -> Result<usize, DataPrepError> {
    match gold_count {
        1 => Ok(6),
        2 => Ok(8),
        3 => Ok(12),
        other => Err(DataPrepError::UnsupportedGoldCount(other)),
    }
}

fn eq_ci(a: &str, b: &str) -> bool {
    a.len() == b.len() && a.eq_ignore_ascii_case(b)
}

/// Deterministically sample distractors from the pool, excluding the
/// gold labels (and any extra exclusions from the near-duplicate
/// filter). The pool is shuffled under the seed and taken in order.
pub fn sample_distractors_excluding(
    gold: &[String],
    pool: &DiagnosisPool,
    seed: u64,
    excluded: &[String],
    count: usize,
) -> Result<Vec<String>, DataPrepError> {
    let mut available: Vec<&String> = pool
        .entries()
        .iter()
        .filter(|entry| !gold.iter().any(|g| eq_ci(g, entry)))
        .filter(|entry| !excluded.iter().any(|x| eq_ci(x, entry)))
        .collect();
    if available.len() < count {
        return Err(DataPrepError::PoolExhausted {
            needed: count,
            available: available.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    available.shuffle(&mut rng);
    Ok(available.into_iter().take(count).cloned().collect())
}

/// Distractor sampling under the scaling table: |gold| of 1/2/3 yields
/// 5/6/9 distractors (6/8/12 total options).
pub fn sample_distractors(
    gold: &[String],
    pool: &DiagnosisPool,
    seed: u64,
) -> Result<Vec<String>, DataPrepError> {
    let count = option_count_for_gold(gold.len())? - gold.len();
    sample_distractors_excluding(gold, pool, seed, &[], count)
}

/// Assemble one evaluation instance: shuffle gold and distractors under
/// the seed, run the exact-match masking pass, and recompute the gold
/// indices post-shuffle.
pub fn assemble_instance(
    case_id: &str,
    masked_note: &str,
    gold: &[String],
    distractors: &[String],
    seed: u64,
    service_label: Option<String>,
) -> TaskInstance {
    let mut options: Vec<String> = gold.iter().chain(distractors).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    options.shuffle(&mut rng);

    let final_note = mask_candidate_strings(masked_note, &options);

    let candidates: Vec<CandidateDiagnosis> = options
        .iter()
        .enumerate()
        .map(|(i, text)| CandidateDiagnosis {
            index: i + 1,
            text: text.clone(),
        })
        .collect();
    let gold_indices: BTreeSet<usize> = candidates
        .iter()
        .filter(|c| gold.iter().any(|g| eq_ci(g, &c.text)))
        .map(|c| c.index)
        .collect();

    TaskInstance {
        case_id: case_id.to_string(),
        masked_note: final_note,
        candidates,
        gold: gold_indices,
        service_label,
        shuffle_seed: seed,
    }
}

/// Stable per-note seed: the corpus seed mixed with the note id, so one
/// record's instance does not depend on corpus order.
pub fn note_seed(corpus_seed: u64, note_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(note_id.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    corpus_seed ^ u64::from_le_bytes(bytes)
}

// ---------------------------------------------------------------------------
// corpus preparation
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
pub struct PrepareOptions {
    /// Enable the LLM-backed refinements (semantic leakage filter, phrase
    /// masking, near-duplicate distractor filter). Off by default so
    /// offline prep is fully deterministic.
    pub llm_steps: bool,
    pub seed: u64,
    /// Per-note distractor cache directory.
    pub distractor_cache_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct PrepareCounts {
    pub input_records: usize,
    pub prepared: usize,
    pub no_valid_diagnoses: usize,
    pub too_many_diagnoses: usize,
    pub leakage_filtered: usize,
    pub pool_exhausted: usize,
}

#[derive(Debug)]
pub struct PreparedCorpus {
    pub instances: Vec<TaskInstance>,
    pub pool: DiagnosisPool,
    pub counts: PrepareCounts,
}

#[derive(Serialize, Deserialize)]
struct DistractorCacheEntry {
    note_id: String,
    distractors: Vec<String>,
}

fn cached_distractors(dir: &Path, note_id: &str) -> Option<Vec<String>> {
    let path = dir.join(format!("{note_id}.json"));
    let text = std::fs::read_to_string(path).ok()?;
    let entry: DistractorCacheEntry = serde_json::from_str(&text).ok()?;
    Some(entry.distractors)
}

fn store_distractors(dir: &Path, note_id: &str, distractors: &[String]) {
    if std::fs::create_dir_all(dir).is_err() {
        return;
    }
    let entry = DistractorCacheEntry {
        note_id: note_id.to_string(),
        distractors: distractors.to_vec(),
    };
    let path = dir.join(format!("{note_id}.json"));
    if let Ok(body) = serde_json::to_string_pretty(&entry) {
        let _ = std::fs::write(path, body);
    }
}

fn distractors_for_record(
    gold: &[String],
    pool: &DiagnosisPool,
    seed: u64,
    note_id: &str,
    options: &PrepareOptions,
    rt: Option<&AgentRuntime>,
) -> Result<Vec<String>, DataPrepError> {
    if let Some(dir) = &options.distractor_cache_dir {
        if let Some(cached) = cached_distractors(dir, note_id) {
            return Ok(cached);
        }
    }
    let count = option_count_for_gold(gold.len())? - gold.len();
    let mut excluded: Vec<String> = Vec::new();
    let mut distractors = sample_distractors_excluding(gold, pool, seed, &excluded, count)?;

    if options.llm_steps {
        if let Some(rt) = rt {
            // remove near-duplicates and resample until the list is clean
            for _round in 0..4 {
                let flagged =
                    match agents::distractor_near_duplicates(rt, note_id, gold, &distractors) {
                        Ok(flagged) => flagged,
                        Err(e) => {
                            tracing::warn!(note_id, error = %e, "distractor filter skipped");
                            break;
                        }
                    };
                let flagged: Vec<String> = distractors
                    .iter()
                    .filter(|d| flagged.iter().any(|f| eq_ci(f, d)))
                    .cloned()
                    .collect();
                if flagged.is_empty() {
                    break;
                }
                excluded.extend(flagged);
                distractors = sample_distractors_excluding(gold, pool, seed, &excluded, count)?;
            }
        }
    }

    if let Some(dir) = &options.distractor_cache_dir {
        store_distractors(dir, note_id, &distractors);
    }
    Ok(distractors)
}

/// Run the full preparation pipeline over raw records. Records are
/// processed in note_id order for a deterministic merge; records with no
/// valid diagnoses or more than three are rejected at ingestion.
pub fn prepare_corpus(
    records: &[RawRecord],
    options: &PrepareOptions,
    rt: Option<&AgentRuntime>,
) -> PreparedCorpus {
    let mut counts = PrepareCounts {
        input_records: records.len(),
        ..Default::default()
    };

    let mut sorted: Vec<&RawRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.note_id.cmp(&b.note_id));

    let pool = DiagnosisPool::from_diagnoses(
        sorted
            .iter()
            .flat_map(|r| normalize_diagnoses(&r.discharge_diagnosis_text)),
    );

    let mut instances = Vec::new();
    for record in sorted {
        let gold = normalize_diagnoses(&record.discharge_diagnosis_text);
        if gold.is_empty() {
            counts.no_valid_diagnoses += 1;
            continue;
        }
        if gold.len() > 3 {
            counts.too_many_diagnoses += 1;
            continue;
        }
        let mut masked = mask_sections(record);
        if options.llm_steps {
            if let Some(rt) = rt {
                match agents::semantic_filter_recoverable(rt, &record.note_id, &masked, &gold) {
                    Ok(Some(true)) => {
                        counts.leakage_filtered += 1;
                        continue;
                    }
                    Ok(_) => {}
                    Err(e) => {
                        tracing::warn!(note_id = %record.note_id, error = %e, "semantic filter skipped")
                    }
                }
                masked = llm_phrase_mask(rt, &record.note_id, &masked, &gold);
            }
        }
        let seed = note_seed(options.seed, &record.note_id);
        let distractors =
            match distractors_for_record(&gold, &pool, seed, &record.note_id, options, rt) {
                Ok(d) => d,
                Err(e) => {
                    tracing::warn!(note_id = %record.note_id, error = %e, "record skipped");
                    counts.pool_exhausted += 1;
                    continue;
                }
            };
        let instance = assemble_instance(
            &record.note_id,
            &masked,
            &gold,
            &distractors,
            seed,
            record.service.clone(),
        );
        debug_assert!(instance.validate().is_ok());
        debug_assert!(instance.masking_violations().is_empty());
        instances.push(instance);
        counts.prepared += 1;
    }
    PreparedCorpus {
        instances,
        pool,
        counts,
    }
}

// ---------------------------------------------------------------------------
// converter stub: plain note text -> sectioned RawRecord
// ---------------------------------------------------------------------------

/// Split a flat discharge-summary text into sections on ALL-CAPS header
/// lines ending with a colon ("CHIEF COMPLAINT:"). Content before the
/// first header lands in a DEMOGRAPHICS section. This is the converter
/// entry point for users bringing their own licensed source documents;
/// no source data ships with the repo.
pub fn sectionize(note_id: &str, text: &str, service: Option<String>) -> RawRecord {
    fn is_header(line: &str) -> Option<String> {
        let trimmed = line.trim();
        let name = trimmed.strip_suffix(':')?;
        if !name.is_empty()
            && name.len() <= 60
            && name
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_whitespace() || c == '/')
            && name.chars().any(|c| c.is_ascii_uppercase())
        {
            Some(name.trim().to_string())
        } else {
            None
        }
    }

    let mut sections: Vec<Section> = Vec::new();
    let mut current_name = "DEMOGRAPHICS".to_string();
    let mut current_text: Vec<String> = Vec::new();
    let mut discharge_diagnosis = String::new();

    let flush =
        |name: &str, lines: &mut Vec<String>, sections: &mut Vec<Section>, dd: &mut String| {
            let text = lines.join("\n").trim().to_string();
            lines.clear();
            if text.is_empty() {
                return;
            }
            if canonical_name(name) == "DISCHARGE DIAGNOSIS" {
                *dd = text.clone();
            }
            sections.push(Section {
                name: name.to_string(),
                text,
            });
        };

    for line in text.lines() {
        if let Some(header) = is_header(line) {
            flush(
                &current_name,
                &mut current_text,
                &mut sections,
                &mut discharge_diagnosis,
            );
            current_name = header;
        } else {
            current_text.push(line.to_string());
        }
    }
    flush(
        &current_name,
        &mut current_text,
        &mut sections,
        &mut discharge_diagnosis,
    );

    RawRecord {
        note_id: note_id.to_string(),
        sections,
        discharge_diagnosis_text: discharge_diagnosis,
        service,
    }
}

// ---------------------------------------------------------------------------
// jsonl io
// ---------------------------------------------------------------------------

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataPrepError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| DataPrepError::BadJsonl {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataPrepError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("jsonl item serializes");
        writeln!(writer, "{line}").map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// descriptive statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct StatLine {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

fn stat_line(metric: &str, values: &[f64]) -> StatLine {
    if values.is_empty() {
        return StatLine {
            metric: metric.to_string(),
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            median: 0.0,
            max: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    StatLine {
        metric: metric.to_string(),
        mean,
        std: var.sqrt(),
        min: sorted[0],
        median,
        max: *sorted.last().expect("non-empty"),
    }
}

/// Descriptive statistics over an assembled corpus, mirroring the
/// dataset summary table (options, labels, distractors, input size,
/// correct-option ratio).
pub fn corpus_stats(instances: &[TaskInstance]) -> Vec<StatLine> {
    let options: Vec<f64> = instances
        .iter()
        .map(|i| i.candidates.len() as f64)
        .collect();
    let gold: Vec<f64> = instances.iter().map(|i| i.gold.len() as f64).collect();
    let distractors: Vec<f64> = instances
        .iter()
        .map(|i| (i.candidates.len() - i.gold.len()) as f64)
        .collect();
    let words: Vec<f64> = instances
        .iter()
        .map(|i| i.masked_note.split_whitespace().count() as f64)
        .collect();
    let chars: Vec<f64> = instances
        .iter()
        .map(|i| i.masked_note.chars().count() as f64)
        .collect();
    let ratio: Vec<f64> = instances
        .iter()
        .map(|i| 100.0 * i.gold.len() as f64 / i.candidates.len() as f64)
        .collect();
    vec![
        stat_line("Options per case", &options),
        stat_line("Correct labels per case", &gold),
        stat_line("Distractors per case", &distractors),
        stat_line("Input words", &words),
        stat_line("Input characters", &chars),
        stat_line("Correct option ratio (%)", &ratio),
    ]
}
