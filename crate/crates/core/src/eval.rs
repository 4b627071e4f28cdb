//! Metrics, reports, and analyses over completed traces: set-level
//! macro F1 / precision / recall / perfect rate, pooled-rank judging
//! reports, the specialist-service alignment matrix, token reports, and
//! the panel-size sweep. Pure aggregation over immutable trace records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agents::JudgeOutcome;
use crate::pipeline::{CaseStatus, TraceRecord};
use crate::types::{normalize_role, ResolutionPath};

// ---------------------------------------------------------------------------
// diagnostic scores
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub perfect: bool,
}

/// Set-level scores for one case.
///
/// precision = |P∩G|/|P| and recall = |P∩G|/|G|, with an empty divisor
/// scored 1 when the other set is also empty and 0 otherwise; f1 is
/// their harmonic mean, equal to the closed form 2|P∩G|/(|P|+|G|)
/// whenever P∪G is non-empty.
pub fn score_case(predicted: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> CaseScore {
    let hits = predicted.intersection(gold).count() as f64;
    let precision = if predicted.is_empty() {
        if gold.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        hits / predicted.len() as f64
    };
    let recall = if gold.is_empty() {
        if predicted.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        hits / gold.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    CaseScore {
        f1,
        precision,
        recall,
        perfect: predicted == gold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticScore {
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub perfect_rate: f64,
    pub n_cases: usize,
    pub n_failed: usize,
}

/// Macro averages of per-case scores over non-failed cases. Failed cases
/// are excluded from the averages and counted separately.
pub fn score_corpus(records: &[TraceRecord]) -> DiagnosticScore {
    let mut n_cases = 0usize;
    let mut n_failed = 0usize;
    let mut sum_f1 = 0.0;
    let mut sum_precision = 0.0;
    let mut sum_recall = 0.0;
    let mut perfect = 0usize;
    for record in records {
        if record.status == CaseStatus::Failed {
            n_failed += 1;
            continue;
        }
        let predicted: BTreeSet<usize> = record.accepted.iter().copied().collect();
        let gold: BTreeSet<usize> = record.gold.iter().copied().collect();
        let score = score_case(&predicted, &gold);
        sum_f1 += score.f1;
        sum_precision += score.precision;
        sum_recall += score.recall;
        if score.perfect {
            perfect += 1;
        }
        n_cases += 1;
    }
    let denom = n_cases.max(1) as f64;
    DiagnosticScore {
        macro_f1: sum_f1 / denom,
        macro_precision: sum_precision / denom,
        macro_recall: sum_recall / denom,
        perfect_rate: perfect as f64 / denom,
        n_cases,
        n_failed,
    }
}

/// Alternative reading of "macro F1": per-label F1 over the global label
/// space (each distinct candidate text is a label; a label's score pools
/// its predictions across every instance that offered it), macro-averaged
/// over labels with any gold or predicted support.
pub fn score_corpus_label_level(records: &[TraceRecord]) -> DiagnosticScore {
    #[derive(Default)]
    struct LabelCounts {
        tp: usize,
        fp: usize,
        fn_: usize,
    }
    let mut labels: BTreeMap<String, LabelCounts> = BTreeMap::new();
    let mut n_cases = 0usize;
    let mut n_failed = 0usize;
    let mut perfect = 0usize;
    for record in records {
        if record.status == CaseStatus::Failed {
            n_failed += 1;
            continue;
        }
        n_cases += 1;
        let predicted: BTreeSet<usize> = record.accepted.iter().copied().collect();
        let gold: BTreeSet<usize> = record.gold.iter().copied().collect();
        if predicted == gold {
            perfect += 1;
        }
        for (i, text) in record.candidates.iter().enumerate() {
            let index = i + 1;
            let counts = labels.entry(text.to_lowercase()).or_default();
            match (predicted.contains(&index), gold.contains(&index)) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let mut sum_f1 = 0.0;
    let mut sum_precision = 0.0;
    let mut sum_recall = 0.0;
    let mut n_labels = 0usize;
    for counts in labels.values() {
        if counts.tp + counts.fp + counts.fn_ == 0 {
            continue;
        }
        let precision = if counts.tp + counts.fp == 0 {
            0.0
        } else {
            counts.tp as f64 / (counts.tp + counts.fp) as f64
        };
        let recall = if counts.tp + counts.fn_ == 0 {
            0.0
        } else {
            counts.tp as f64 / (counts.tp + counts.fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        sum_f1 += f1;
        sum_precision += precision;
        sum_recall += recall;
        n_labels += 1;
    }
    let denom = n_labels.max(1) as f64;
    DiagnosticScore {
        macro_f1: sum_f1 / denom,
        macro_precision: sum_precision / denom,
        macro_recall: sum_recall / denom,
        perfect_rate: perfect as f64 / n_cases.max(1) as f64,
        n_cases,
        n_failed,
    }
}

pub fn score_report_text(label: &str, score: &DiagnosticScore) -> String {
    format!(
        "method            {label}\n\
         cases             {}  (failed {})\n\
         macro F1          {:.4}\n\
         macro precision   {:.4}\n\
         macro recall      {:.4}\n\
         perfect rate      {:.4}\n",
        score.n_cases,
        score.n_failed,
        score.macro_f1,
        score.macro_precision,
        score.macro_recall,
        score.perfect_rate
    )
}

// ---------------------------------------------------------------------------
// pooled-rank judging report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseJudgment {
    pub case_id: String,
    pub outcome: JudgeOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    /// dimension -> system -> mean rank over judged cases (lower is
    /// better).
    pub mean_ranks: BTreeMap<String, BTreeMap<String, f64>>,
    pub n_judged: usize,
    pub n_unjudged: usize,
}

/// Mean pooled rank per (dimension, system) over judged cases; unjudged
/// cases are excluded from the averages and counted.
pub fn pooled_rank_report(judgments: &[CaseJudgment]) -> RankReport {
    let mut sums: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    let mut n_judged = 0usize;
    let mut n_unjudged = 0usize;
    for judgment in judgments {
        if !judgment.outcome.judged {
            n_unjudged += 1;
            continue;
        }
        n_judged += 1;
        for (dimension, ranks) in &judgment.outcome.per_dimension {
            let by_system = sums.entry(dimension.clone()).or_default();
            for (system, rank) in ranks {
                let slot = by_system.entry(system.clone()).or_insert((0.0, 0));
                slot.0 += *rank as f64;
                slot.1 += 1;
            }
        }
    }
    let mean_ranks = sums
        .into_iter()
        .map(|(dimension, by_system)| {
            let means = by_system
                .into_iter()
                .map(|(system, (sum, count))| (system, sum / count as f64))
                .collect();
            (dimension, means)
        })
        .collect();
    RankReport {
        mean_ranks,
        n_judged,
        n_unjudged,
    }
}

pub fn rank_report_text(report: &RankReport) -> String {
    let mut out = format!(
        "judged cases      {}  (unjudged {})\n",
        report.n_judged, report.n_unjudged
    );
    for (dimension, ranks) in &report.mean_ranks {
        let mut ordered: Vec<(&String, &f64)> = ranks.iter().collect();
        ordered.sort_by(|a, b| a.1.partial_cmp(b.1).expect("finite ranks"));
        let line = ordered
            .iter()
            .map(|(system, mean)| format!("{system} {mean:.2}"))
            .collect::<Vec<_>>()
            .join("  ");
        out.push_str(&format!("{dimension:<20} {line}\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// specialist-service alignment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    /// Service labels, sorted.
    pub rows: Vec<String>,
    /// Normalized specialist roles, sorted.
    pub cols: Vec<String>,
    /// Row-normalized frequencies; each non-empty row sums to 1.
    pub cells: Vec<Vec<f64>>,
    /// Raw assignment counts per row, same order as `rows`.
    pub row_totals: Vec<u64>,
}

/// Count (service, normalized role) panel assignments over completed
/// deliberation cases that carry a service label, then row-normalize.
pub fn alignment_matrix(records: &[TraceRecord]) -> AlignmentMatrix {
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for record in records {
        if record.status == CaseStatus::Failed {
            continue;
        }
        let (Some(service), Some(camp)) = (&record.service_label, &record.camp) else {
            continue;
        };
        let row = counts.entry(service.clone()).or_default();
        for specialist in &camp.panel.specialists {
            *row.entry(normalize_role(&specialist.role)).or_default() += 1;
        }
    }
    let rows: Vec<String> = counts.keys().cloned().collect();
    let mut cols: BTreeSet<String> = BTreeSet::new();
    for row in counts.values() {
        cols.extend(row.keys().cloned());
    }
    let cols: Vec<String> = cols.into_iter().collect();
    let mut cells = Vec::with_capacity(rows.len());
    let mut row_totals = Vec::with_capacity(rows.len());
    for service in &rows {
        let row = &counts[service];
        let total: u64 = row.values().sum();
        row_totals.push(total);
        let normalized: Vec<f64> = cols
            .iter()
            .map(|role| {
                if total == 0 {
                    0.0
                } else {
                    *row.get(role).unwrap_or(&0) as f64 / total as f64
                }
            })
            .collect();
        cells.push(normalized);
    }
    AlignmentMatrix {
        rows,
        cols,
        cells,
        row_totals,
    }
}

pub fn alignment_text(matrix: &AlignmentMatrix) -> String {
    let mut out = String::new();
    let header = matrix
        .cols
        .iter()
        .map(|c| format!("{c:>24}"))
        .collect::<Vec<_>>()
        .join("");
    out.push_str(&format!("{:<20}{header}\n", "service"));
    for (i, service) in matrix.rows.iter().enumerate() {
        let cells = matrix.cells[i]
            .iter()
            .map(|v| format!("{:>23.1}%", 100.0 * v))
            .collect::<Vec<_>>()
            .join("");
        out.push_str(&format!("{service:<20}{cells}\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// token report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodTokenReport {
    pub method: String,
    pub n_cases: usize,
    pub total_tokens: u64,
    pub mean_tokens_per_case: f64,
    pub by_stage: BTreeMap<String, u64>,
    /// Deliberation-only extras: resolution-path histogram and the
    /// arbitration share of spend, the gating's footprint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_counts: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arbitration_tokens: Option<u64>,
}

/// Per-method token accounting over any mix of traces: mean
/// (prompt + completion) per case plus the per-stage breakdown; the
/// deliberation method additionally reports its resolution-path
/// histogram and arbitration spend.
pub fn token_report(records: &[TraceRecord]) -> Vec<MethodTokenReport> {
    let mut by_method: BTreeMap<String, Vec<&TraceRecord>> = BTreeMap::new();
    for record in records {
        by_method
            .entry(record.method.clone())
            .or_default()
            .push(record);
    }
    by_method
        .into_iter()
        .map(|(method, records)| {
            let n_cases = records.len();
            let mut by_stage: BTreeMap<String, u64> = BTreeMap::new();
            let mut path_counts: BTreeMap<String, u64> = BTreeMap::new();
            let mut has_camp = false;
            for record in &records {
                for (stage, totals) in &record.tokens_by_stage {
                    *by_stage.entry(stage.clone()).or_default() += totals.total();
                }
                if let Some(camp) = &record.camp {
                    has_camp = true;
                    for resolution in &camp.resolutions {
                        *path_counts.entry(resolution.path.to_string()).or_default() += 1;
                    }
                }
            }
            let total_tokens: u64 = by_stage.values().sum();
            MethodTokenReport {
                method,
                n_cases,
                total_tokens,
                mean_tokens_per_case: total_tokens as f64 / n_cases.max(1) as f64,
                arbitration_tokens: has_camp
                    .then(|| by_stage.get("arbitration").copied().unwrap_or(0)),
                path_counts: has_camp.then_some(path_counts),
                by_stage,
            }
        })
        .collect()
}

pub fn token_report_text(reports: &[MethodTokenReport]) -> String {
    let mut out = format!(
        "{:<18}{:>8}{:>12}{:>16}\n",
        "method", "cases", "tokens", "mean/case"
    );
    for report in reports {
        out.push_str(&format!(
            "{:<18}{:>8}{:>12}{:>16.1}\n",
            report.method, report.n_cases, report.total_tokens, report.mean_tokens_per_case
        ));
        for (stage, tokens) in &report.by_stage {
            out.push_str(&format!("    {stage:<24}{tokens:>10}\n"));
        }
        if let Some(paths) = &report.path_counts {
            let line = paths
                .iter()
                .map(|(path, count)| format!("{path}={count}"))
                .collect::<Vec<_>>()
                .join("  ");
            out.push_str(&format!("    paths: {line}\n"));
        }
    }
    out
}

/// Arbitration invocations implied by a trace (conflict-path records).
pub fn arbitration_call_count(records: &[TraceRecord]) -> u64 {
    records
        .iter()
        .filter_map(|r| r.camp.as_ref())
        .flat_map(|c| &c.resolutions)
        .filter(|r| r.path == ResolutionPath::Conflict)
        .count() as u64
}

// ---------------------------------------------------------------------------
// panel-size sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub score: DiagnosticScore,
}

/// Re-run the corpus per panel size via the supplied runner and shape
/// the results like the panel-size table.
pub fn panel_size_sweep<F, E>(k_values: &[usize], mut run_at_k: F) -> Result<Vec<SweepRow>, E>
where
    F: FnMut(usize) -> Result<Vec<TraceRecord>, E>,
{
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let records = run_at_k(k)?;
        rows.push(SweepRow {
            k,
            score: score_corpus(&records),
        });
    }
    Ok(rows)
}

/// Plot-ready CSV with a fixed column order.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,macro_f1,macro_precision,macro_recall\n");
    for row in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            row.k, row.score.macro_f1, row.score.macro_precision, row.score.macro_recall
        ));
    }
    out
}

pub fn sweep_table_text(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:>8}{:>12}{:>18}{:>15}\n",
        "# Agents", "Macro F1", "Macro Precision", "Macro Recall"
    );
    for row in rows {
        out.push_str(&format!(
            "{:>8}{:>12.4}{:>18.4}{:>15.4}\n",
            row.k, row.score.macro_f1, row.score.macro_precision, row.score.macro_recall
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::TRACE_SCHEMA_VERSION;

    fn set(values: &[usize]) -> BTreeSet<usize> {
        values.iter().copied().collect()
    }

    #[test]
    fn score_case_examples() {
        let exact = score_case(&set(&[1, 2]), &set(&[1, 2]));
        assert_eq!(
            (exact.f1, exact.precision, exact.recall, exact.perfect),
            (1.0, 1.0, 1.0, true)
        );

        let partial = score_case(&set(&[1]), &set(&[1, 2]));
        assert!((partial.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(partial.precision, 1.0);
        assert_eq!(partial.recall, 0.5);
        assert!(!partial.perfect);

        let empty = score_case(&set(&[]), &set(&[3]));
        assert_eq!(
            (empty.f1, empty.precision, empty.recall, empty.perfect),
            (0.0, 0.0, 0.0, false)
        );

        let both_empty = score_case(&set(&[]), &set(&[]));
        assert_eq!(both_empty.f1, 1.0);
        assert!(both_empty.perfect);
    }

    #[test]
    fn f1_is_symmetric_with_swapped_precision_recall() {
        let p = set(&[1, 2, 5]);
        let g = set(&[2, 3]);
        let forward = score_case(&p, &g);
        let backward = score_case(&g, &p);
        assert_eq!(forward.f1, backward.f1);
        assert_eq!(forward.precision, backward.recall);
        assert_eq!(forward.recall, backward.precision);
    }

    #[test]
    fn f1_closed_form_identity() {
        // f1 = 2|P∩G|/(|P|+|G|) for non-empty unions
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p: BTreeSet<usize> = (1..=12).filter(|_| rng.random_bool(0.4)).collect();
            let g: BTreeSet<usize> = (1..=12).filter(|_| rng.random_bool(0.3)).collect();
            if p.is_empty() && g.is_empty() {
                continue;
            }
            let score = score_case(&p, &g);
            let closed = 2.0 * p.intersection(&g).count() as f64 / (p.len() + g.len()) as f64;
            assert!((score.f1 - closed).abs() < 1e-12, "P={p:?} G={g:?}");
        }
    }

    fn record(case_id: &str, accepted: &[usize], gold: &[usize]) -> TraceRecord {
        TraceRecord {
            schema_version: TRACE_SCHEMA_VERSION,
            case_id: case_id.into(),
            method: "camp".into(),
            model: "m".into(),
            temperature: 0.0,
            status: CaseStatus::Completed,
            error: None,
            candidates: (1..=6).map(|i| format!("Label {i}")).collect(),
            gold: gold.to_vec(),
            service_label: None,
            accepted: accepted.to_vec(),
            tokens_by_stage: BTreeMap::new(),
            degraded_flags: vec![],
            camp: None,
        }
    }

    #[test]
    fn corpus_macro_averages() {
        let records = vec![record("a", &[1, 2], &[1, 2]), record("b", &[1], &[1, 2])];
        let score = score_corpus(&records);
        assert!((score.macro_f1 - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(score.perfect_rate, 0.5);
        assert_eq!(score.n_cases, 2);
    }

    #[test]
    fn failed_cases_excluded_from_averages() {
        let mut failed = record("c", &[], &[1]);
        failed.status = CaseStatus::Failed;
        let records = vec![record("a", &[1], &[1]), failed];
        let score = score_corpus(&records);
        assert_eq!(score.n_cases, 1);
        assert_eq!(score.n_failed, 1);
        assert_eq!(score.macro_f1, 1.0);
        assert_eq!(score.perfect_rate, 1.0);
    }

    #[test]
    fn pooled_ranks_average_and_exclude_unjudged() {
        let judged = |case_id: &str, ranks: &[(&str, u32)]| CaseJudgment {
            case_id: case_id.into(),
            outcome: JudgeOutcome {
                per_dimension: BTreeMap::from([(
                    "utility".to_string(),
                    ranks.iter().map(|(s, r)| (s.to_string(), *r)).collect(),
                )]),
                overall: vec![],
                judged: true,
            },
        };
        let unjudged = CaseJudgment {
            case_id: "x".into(),
            outcome: JudgeOutcome {
                per_dimension: BTreeMap::new(),
                overall: vec![],
                judged: false,
            },
        };
        let report = pooled_rank_report(&[
            judged("a", &[("camp", 1), ("single", 2)]),
            judged("b", &[("camp", 2), ("single", 1)]),
            unjudged,
        ]);
        assert_eq!(report.n_judged, 2);
        assert_eq!(report.n_unjudged, 1);
        assert_eq!(report.mean_ranks["utility"]["camp"], 1.5);
        assert_eq!(report.mean_ranks["utility"]["single"], 1.5);
    }

    fn camp_record_with_panel(case_id: &str, service: Option<&str>, roles: &[&str]) -> TraceRecord {
        use crate::types::{PanelSpec, SpecialistRole};
        let mut record = record(case_id, &[1], &[1]);
        record.service_label = service.map(String::from);
        record.camp = Some(crate::pipeline::CampTrace {
            panel: PanelSpec {
                specialists: roles
                    .iter()
                    .map(|r| SpecialistRole {
                        role: r.to_string(),
                        focus: String::new(),
                    })
                    .collect(),
                case_summary: String::new(),
            },
            initial_decisions: vec![],
            matrix: crate::types::VoteMatrix::new(vec![vec![
                crate::types::SpecialistEvaluation::neutral_fill(),
            ]])
            .unwrap(),
            resolutions: vec![],
            bhc: None,
        });
        record
    }

    #[test]
    fn alignment_rows_normalize() {
        let records = vec![
            camp_record_with_panel(
                "a",
                Some("NEUROLOGY"),
                &["Neurologist", "neurologist", "vascular surgeon"],
            ),
            camp_record_with_panel("b", Some("NEUROLOGY"), &["neurologist"]),
            camp_record_with_panel("c", None, &["cardiologist"]),
        ];
        let matrix = alignment_matrix(&records);
        assert_eq!(matrix.rows, vec!["NEUROLOGY".to_string()]);
        let neurologist_col = matrix.cols.iter().position(|c| c == "neurologist").unwrap();
        let surgeon_col = matrix
            .cols
            .iter()
            .position(|c| c == "vascular surgeon")
            .unwrap();
        assert!((matrix.cells[0][neurologist_col] - 0.75).abs() < 1e-9);
        assert!((matrix.cells[0][surgeon_col] - 0.25).abs() < 1e-9);
        let row_sum: f64 = matrix.cells[0].iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn token_report_means_and_stage_sums() {
        let mut a = record("a", &[1], &[1]);
        a.tokens_by_stage.insert(
            "single_agent".into(),
            crate::provider::TokenTotals {
                prompt_tokens: 80,
                completion_tokens: 20,
            },
        );
        a.method = "single_agent".into();
        let mut b = record("b", &[1], &[1]);
        b.tokens_by_stage.insert(
            "single_agent".into(),
            crate::provider::TokenTotals {
                prompt_tokens: 250,
                completion_tokens: 50,
            },
        );
        b.method = "single_agent".into();
        let reports = token_report(&[a, b]);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].total_tokens, 400);
        assert_eq!(reports[0].mean_tokens_per_case, 200.0);
        assert_eq!(reports[0].by_stage["single_agent"], 400);
        assert!(reports[0].path_counts.is_none());
    }

    #[test]
    fn consensus_only_corpus_reports_zero_arbitration_tokens() {
        let mut record = camp_record_with_panel("a", None, &["internist"]);
        record.tokens_by_stage.insert(
            "specialist".into(),
            crate::provider::TokenTotals {
                prompt_tokens: 100,
                completion_tokens: 10,
            },
        );
        let reports = token_report(&[record]);
        assert_eq!(reports[0].arbitration_tokens, Some(0));
        assert_eq!(reports[0].total_tokens, 110);
    }

    #[test]
    fn sweep_csv_column_order() {
        let rows = vec![SweepRow {
            k: 1,
            score: DiagnosticScore {
                macro_f1: 0.5,
                macro_precision: 0.25,
                macro_recall: 1.0,
                perfect_rate: 0.0,
                n_cases: 4,
                n_failed: 0,
            },
        }];
        let csv = sweep_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,macro_f1,macro_precision,macro_recall"
        );
        assert!(lines.next().unwrap().starts_with("1,0.5"));
    }
}
