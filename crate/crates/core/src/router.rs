//! Deterministic hybrid resolution: tally the three-valued votes for each
//! diagnosis and route it through one of three paths.
//!
//! Path 1 (strong consensus) applies the unanimous non-abstaining opinion
//! directly when it outnumbers abstentions. Path 2 (weak consensus) falls
//! back to the attending's initial judgment when abstentions dominate.
//! Path 3 (conflict) escalates to evidence-based arbitration whenever
//! KEEP and REFUSE coexist.
//!
//! The router is a pure function of the vote matrix, the initial
//! decisions, and an injected arbitrator callback; it performs no LLM
//! access itself, so the whole mechanism is testable with zero network.

use thiserror::Error;

use crate::types::{
    ArbitrationInput, ArbitrationTrace, Decision, ResolutionPath, ResolutionRecord,
    SpecialistEvaluation, Tally, Vote, VoteMatrix,
};

/// Outcome of routing one tally: the path, plus the immediate decision
/// when the path is strong consensus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutedOutcome {
    pub path: ResolutionPath,
    pub immediate_decision: Option<Decision>,
}

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("cannot tally an empty vote column")]
    EmptyColumn,
    #[error("{what}: got {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("arbitration failed for diagnosis {diagnosis_index}: {message}")]
    ArbitrationFailed {
        diagnosis_index: usize,
        /// Records completed before the failure, in diagnosis order.
        partial: Vec<ResolutionRecord>,
        message: String,
    },
}

/// Context handed to the arbitrator for one contested diagnosis: the
/// 1-based index and every specialist's (role, evaluation) pair.
#[derive(Debug, Clone)]
pub struct ArbitrationRequest<'a> {
    pub diagnosis_index: usize,
    pub specialists: Vec<(&'a str, &'a SpecialistEvaluation)>,
}

/// What an arbitrator returns: the decision plus the reasoning captured
/// for the audit trace. `degraded` marks a conservative default applied
/// after an unrepairable parse failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArbitrationVerdict {
    pub decision: Decision,
    pub reasoning: String,
    pub degraded: bool,
}

/// Non-recoverable arbitrator failure (provider exhaustion and the like).
/// Parse problems never surface here; the agent layer degrades those to a
/// verdict instead.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct ArbitrationFailure(pub String);

pub type Arbitrator<'a> =
    dyn FnMut(ArbitrationRequest<'_>) -> Result<ArbitrationVerdict, ArbitrationFailure> + 'a;

/// Count keep/refuse/neutral votes in one diagnosis column.
pub fn tally(column: &[Vote]) -> Result<Tally, RouterError> {
    if column.is_empty() {
        return Err(RouterError::EmptyColumn);
    }
    let mut t = Tally::new(0, 0, 0);
    for vote in column {
        match vote {
            Vote::Keep => t.keeps += 1,
            Vote::Refuse => t.refuses += 1,
            Vote::Neutral => t.neutrals += 1,
        }
    }
    Ok(t)
}

/// Route one tally through the three-path case split.
///
/// Exactly one branch fires for every tally with at least one vote:
/// conflict whenever both sides are present, strong consensus when the
/// single expressed side strictly outnumbers abstentions (strict
/// inequality, so a tie falls through to weak consensus), and weak
/// consensus otherwise.
pub fn route(t: Tally) -> RoutedOutcome {
    debug_assert!(t.total() >= 1, "route requires at least one vote");
    if t.keeps > 0 && t.refuses > 0 {
        return RoutedOutcome {
            path: ResolutionPath::Conflict,
            immediate_decision: None,
        };
    }
    if t.refuses == 0 && t.keeps > t.neutrals {
        return RoutedOutcome {
            path: ResolutionPath::StrongConsensus,
            immediate_decision: Some(Decision::Accept),
        };
    }
    if t.keeps == 0 && t.refuses > t.neutrals {
        return RoutedOutcome {
            path: ResolutionPath::StrongConsensus,
            immediate_decision: Some(Decision::Reject),
        };
    }
    RoutedOutcome {
        path: ResolutionPath::WeakConsensus,
        immediate_decision: None,
    }
}

/// Resolve a single diagnosis column.
///
/// * Path 1: the consensus decision is applied; the arbitrator is not
///   invoked.
/// * Path 2: the attending's `initial` decision is applied bit-for-bit;
///   the arbitrator is not invoked and `fallback_used` is set.
/// * Path 3: the arbitrator is invoked exactly once with the full
///   specialist context.
pub fn resolve_diagnosis(
    diagnosis_index: usize,
    specialists: &[(String, SpecialistEvaluation)],
    initial: Decision,
    arbitrate: &mut Arbitrator<'_>,
) -> Result<ResolutionRecord, RouterError> {
    let votes: Vec<Vote> = specialists.iter().map(|(_, e)| e.vote).collect();
    let t = tally(&votes)?;
    let routed = route(t);
    let record = match routed.path {
        ResolutionPath::StrongConsensus => ResolutionRecord {
            diagnosis_index,
            tally: t,
            path: ResolutionPath::StrongConsensus,
            decision: routed
                .immediate_decision
                .expect("strong consensus carries an immediate decision"),
            arbitration: None,
            fallback_used: false,
        },
        ResolutionPath::WeakConsensus => ResolutionRecord {
            diagnosis_index,
            tally: t,
            path: ResolutionPath::WeakConsensus,
            decision: initial,
            arbitration: None,
            fallback_used: true,
        },
        ResolutionPath::Conflict => {
            let request = ArbitrationRequest {
                diagnosis_index,
                specialists: specialists.iter().map(|(r, e)| (r.as_str(), e)).collect(),
            };
            let verdict = arbitrate(request).map_err(|e| RouterError::ArbitrationFailed {
                diagnosis_index,
                partial: Vec::new(),
                message: e.0,
            })?;
            let inputs = specialists
                .iter()
                .map(|(role, eval)| ArbitrationInput {
                    role: role.clone(),
                    vote: eval.vote,
                    quote: eval.quote.clone(),
                    confidence: eval.confidence,
                    rationale: eval.rationale.clone(),
                    quote_verified: None,
                })
                .collect();
            ResolutionRecord {
                diagnosis_index,
                tally: t,
                path: ResolutionPath::Conflict,
                decision: verdict.decision,
                arbitration: Some(ArbitrationTrace {
                    inputs,
                    decision: verdict.decision,
                    reasoning: verdict.reasoning,
                    degraded: verdict.degraded,
                }),
                fallback_used: false,
            }
        }
    };
    debug_assert!(record.validate().is_ok());
    Ok(record)
}

/// Resolve every diagnosis of a case independently, in index order.
///
/// `roles` names the specialists (row order); `initials` holds the
/// attending's per-diagnosis initial decisions (column order). Returns
/// one record per diagnosis; an arbitrator failure carries the records
/// completed so far.
pub fn resolve_case(
    matrix: &VoteMatrix,
    roles: &[String],
    initials: &[Decision],
    arbitrate: &mut Arbitrator<'_>,
) -> Result<Vec<ResolutionRecord>, RouterError> {
    if initials.len() != matrix.n() {
        return Err(RouterError::DimensionMismatch {
            what: "initial decisions",
            got: initials.len(),
            expected: matrix.n(),
        });
    }
    if roles.len() != matrix.k() {
        return Err(RouterError::DimensionMismatch {
            what: "specialist roles",
            got: roles.len(),
            expected: matrix.k(),
        });
    }
    let mut records = Vec::with_capacity(matrix.n());
    for j in 1..=matrix.n() {
        let column: Vec<(String, SpecialistEvaluation)> = matrix
            .column(j)
            .into_iter()
            .zip(roles)
            .map(|(eval, role)| (role.clone(), eval.clone()))
            .collect();
        match resolve_diagnosis(j, &column, initials[j - 1], arbitrate) {
            Ok(record) => records.push(record),
            Err(RouterError::ArbitrationFailed {
                diagnosis_index,
                message,
                ..
            }) => {
                return Err(RouterError::ArbitrationFailed {
                    diagnosis_index,
                    partial: records,
                    message,
                })
            }
            Err(other) => return Err(other),
        }
    }
    Ok(records)
}

/// Resolve every diagnosis by unconditional arbitration, bypassing the
/// gating. Comparison variant for cost analysis only; each record is
/// tagged as a conflict-path arbitration.
pub fn resolve_case_always_arbitrate(
    matrix: &VoteMatrix,
    roles: &[String],
    arbitrate: &mut Arbitrator<'_>,
) -> Result<Vec<ResolutionRecord>, RouterError> {
    if roles.len() != matrix.k() {
        return Err(RouterError::DimensionMismatch {
            what: "specialist roles",
            got: roles.len(),
            expected: matrix.k(),
        });
    }
    let mut records = Vec::with_capacity(matrix.n());
    for j in 1..=matrix.n() {
        let column: Vec<(String, SpecialistEvaluation)> = matrix
            .column(j)
            .into_iter()
            .zip(roles)
            .map(|(eval, role)| (role.clone(), eval.clone()))
            .collect();
        let votes: Vec<Vote> = column.iter().map(|(_, e)| e.vote).collect();
        let t = tally(&votes)?;
        let request = ArbitrationRequest {
            diagnosis_index: j,
            specialists: column.iter().map(|(r, e)| (r.as_str(), e)).collect(),
        };
        let verdict = arbitrate(request).map_err(|e| RouterError::ArbitrationFailed {
            diagnosis_index: j,
            partial: records.clone(),
            message: e.0,
        })?;
        let inputs = column
            .iter()
            .map(|(role, eval)| ArbitrationInput {
                role: role.clone(),
                vote: eval.vote,
                quote: eval.quote.clone(),
                confidence: eval.confidence,
                rationale: eval.rationale.clone(),
                quote_verified: None,
            })
            .collect();
        records.push(ResolutionRecord {
            diagnosis_index: j,
            tally: t,
            path: ResolutionPath::Conflict,
            decision: verdict.decision,
            arbitration: Some(ArbitrationTrace {
                inputs,
                decision: verdict.decision,
                reasoning: verdict.reasoning,
                degraded: verdict.degraded,
            }),
            fallback_used: false,
        });
    }
    Ok(records)
}

/// The accepted index set implied by a record list.
pub fn accepted_set(records: &[ResolutionRecord]) -> std::collections::BTreeSet<usize> {
    records
        .iter()
        .filter(|r| r.decision == Decision::Accept)
        .map(|r| r.diagnosis_index)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn eval(vote: Vote) -> SpecialistEvaluation {
        SpecialistEvaluation::new(vote, "", 0.5, "", true, "direct")
    }

    fn column(votes: &[Vote]) -> Vec<(String, SpecialistEvaluation)> {
        votes
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("specialist {}", i + 1), eval(v)))
            .collect()
    }

    fn no_arbitration(
        req: ArbitrationRequest<'_>,
    ) -> Result<ArbitrationVerdict, ArbitrationFailure> {
        panic!(
            "arbitrator must not be called for diagnosis {}",
            req.diagnosis_index
        );
    }

    #[test]
    fn tally_counts_exactly() {
        use Vote::*;
        assert_eq!(tally(&[Keep, Keep, Neutral]).unwrap(), Tally::new(2, 0, 1));
        assert_eq!(
            tally(&[Neutral, Neutral, Neutral]).unwrap(),
            Tally::new(0, 0, 3)
        );
        assert_eq!(tally(&[Keep, Refuse, Keep]).unwrap(), Tally::new(2, 1, 0));
        assert!(matches!(tally(&[]), Err(RouterError::EmptyColumn)));
    }

    #[test]
    fn route_examples() {
        let strong_accept = route(Tally::new(2, 0, 1));
        assert_eq!(strong_accept.path, ResolutionPath::StrongConsensus);
        assert_eq!(strong_accept.immediate_decision, Some(Decision::Accept));

        assert_eq!(route(Tally::new(2, 1, 0)).path, ResolutionPath::Conflict);
        assert_eq!(
            route(Tally::new(0, 0, 3)).path,
            ResolutionPath::WeakConsensus
        );
        assert_eq!(
            route(Tally::new(1, 0, 2)).path,
            ResolutionPath::WeakConsensus
        );

        let strong_reject = route(Tally::new(0, 2, 1));
        assert_eq!(strong_reject.path, ResolutionPath::StrongConsensus);
        assert_eq!(strong_reject.immediate_decision, Some(Decision::Reject));
    }

    #[test]
    fn tie_with_abstentions_falls_back() {
        // strict inequality: one keep vs one neutral is not a strong consensus
        assert_eq!(
            route(Tally::new(1, 0, 1)).path,
            ResolutionPath::WeakConsensus
        );
        assert_eq!(
            route(Tally::new(0, 1, 1)).path,
            ResolutionPath::WeakConsensus
        );
    }

    #[test]
    fn unanimous_keep_overrides_initial() {
        use Vote::*;
        let record = resolve_diagnosis(
            1,
            &column(&[Keep, Keep, Keep]),
            Decision::Reject,
            &mut no_arbitration,
        )
        .unwrap();
        assert_eq!(record.path, ResolutionPath::StrongConsensus);
        assert_eq!(record.decision, Decision::Accept);
        assert!(!record.fallback_used);
        assert!(record.arbitration.is_none());
    }

    #[test]
    fn weak_consensus_applies_initial_bit_for_bit() {
        use Vote::*;
        for initial in [Decision::Accept, Decision::Reject] {
            let record = resolve_diagnosis(
                2,
                &column(&[Keep, Neutral, Neutral]),
                initial,
                &mut no_arbitration,
            )
            .unwrap();
            assert_eq!(record.path, ResolutionPath::WeakConsensus);
            assert_eq!(record.decision, initial);
            assert!(record.fallback_used);
        }
    }

    #[test]
    fn conflict_invokes_arbitrator_exactly_once() {
        use Vote::*;
        let mut calls = 0;
        let mut arb = |req: ArbitrationRequest<'_>| {
            calls += 1;
            assert_eq!(req.diagnosis_index, 3);
            assert_eq!(req.specialists.len(), 3);
            Ok(ArbitrationVerdict {
                decision: Decision::Accept,
                reasoning: "minority evidence is decisive".into(),
                degraded: false,
            })
        };
        let record = resolve_diagnosis(
            3,
            &column(&[Keep, Refuse, Refuse]),
            Decision::Reject,
            &mut arb,
        )
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(record.path, ResolutionPath::Conflict);
        assert_eq!(record.decision, Decision::Accept);
        let trace = record.arbitration.expect("conflict records carry a trace");
        assert_eq!(trace.inputs.len(), 3);
        assert_eq!(trace.decision, Decision::Accept);
    }

    #[test]
    fn resolve_case_hand_traced_example() {
        use Vote::*;
        // columns tally (3,0,0), (0,3,0), (1,1,1), (0,1,2)
        let rows = vec![
            vec![eval(Keep), eval(Refuse), eval(Keep), eval(Refuse)],
            vec![eval(Keep), eval(Refuse), eval(Refuse), eval(Neutral)],
            vec![eval(Keep), eval(Refuse), eval(Neutral), eval(Neutral)],
        ];
        let matrix = VoteMatrix::new(rows).unwrap();
        let roles = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let initials = vec![
            Decision::Reject,
            Decision::Accept,
            Decision::Reject,
            Decision::Accept,
        ];
        let mut arb_calls = Vec::new();
        let mut arb = |req: ArbitrationRequest<'_>| {
            arb_calls.push(req.diagnosis_index);
            Ok(ArbitrationVerdict {
                decision: Decision::Reject,
                reasoning: String::new(),
                degraded: false,
            })
        };
        let records = resolve_case(&matrix, &roles, &initials, &mut arb).unwrap();
        assert_eq!(arb_calls, vec![3]);
        assert_eq!(accepted_set(&records), BTreeSet::from([1, 4]));
        for r in &records {
            r.validate().unwrap();
        }
        assert_eq!(records[1].decision, Decision::Reject);
        assert_eq!(records[3].path, ResolutionPath::WeakConsensus);
    }

    #[test]
    fn single_specialist_panel() {
        use Vote::*;
        let matrix = VoteMatrix::new(vec![vec![eval(Keep)]]).unwrap();
        let records = resolve_case(
            &matrix,
            &["solo".to_string()],
            &[Decision::Reject],
            &mut no_arbitration,
        )
        .unwrap();
        assert_eq!(accepted_set(&records), BTreeSet::from([1]));
    }

    #[test]
    fn minimal_conflict() {
        use Vote::*;
        let matrix = VoteMatrix::new(vec![vec![eval(Keep)], vec![eval(Refuse)]]).unwrap();
        let mut arb = |_req: ArbitrationRequest<'_>| {
            Ok(ArbitrationVerdict {
                decision: Decision::Accept,
                reasoning: String::new(),
                degraded: false,
            })
        };
        let records = resolve_case(
            &matrix,
            &["a".to_string(), "b".to_string()],
            &[Decision::Reject],
            &mut arb,
        )
        .unwrap();
        assert_eq!(accepted_set(&records), BTreeSet::from([1]));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        use Vote::*;
        let matrix = VoteMatrix::new(vec![vec![eval(Keep), eval(Keep)]]).unwrap();
        let err = resolve_case(
            &matrix,
            &["a".to_string()],
            &[Decision::Accept],
            &mut no_arbitration,
        )
        .unwrap_err();
        assert!(matches!(err, RouterError::DimensionMismatch { .. }));
    }

    #[test]
    fn arbitration_failure_carries_partial_records() {
        use Vote::*;
        let rows = vec![vec![eval(Keep), eval(Keep)], vec![eval(Keep), eval(Refuse)]];
        let matrix = VoteMatrix::new(rows).unwrap();
        let mut arb =
            |_req: ArbitrationRequest<'_>| Err(ArbitrationFailure("provider exhausted".into()));
        let err = resolve_case(
            &matrix,
            &["a".to_string(), "b".to_string()],
            &[Decision::Reject, Decision::Reject],
            &mut arb,
        )
        .unwrap_err();
        match err {
            RouterError::ArbitrationFailed {
                diagnosis_index,
                partial,
                ..
            } => {
                assert_eq!(diagnosis_index, 2);
                assert_eq!(partial.len(), 1);
                assert_eq!(partial[0].decision, Decision::Accept);
            }
            other => panic!("unexpected error: {other:?}"),
        }
    }

    /// Exhaustive totality and oracle agreement over every vote vector of
    /// panel sizes 1..=5, against a literal evaluation of the three path
    /// conditions.
    #[test]
    fn route_agrees_with_literal_condition_oracle() {
        for k in 1..=5usize {
            for combo in 0..3usize.pow(k as u32) {
                let mut votes = Vec::with_capacity(k);
                let mut c = combo;
                for _ in 0..k {
                    votes.push(match c % 3 {
                        0 => Vote::Keep,
                        1 => Vote::Refuse,
                        _ => Vote::Neutral,
                    });
                    c /= 3;
                }
                let t = tally(&votes).unwrap();
                let (kj, rj, nj) = (t.keeps, t.refuses, t.neutrals);

                let strong_accept = rj == 0 && kj > nj;
                let strong_reject = kj == 0 && rj > nj;
                let weak = kj * rj == 0 && kj.max(rj) <= nj;
                let conflict = kj > 0 && rj > 0;
                let fired = [strong_accept || strong_reject, weak, conflict]
                    .iter()
                    .filter(|b| **b)
                    .count();
                assert_eq!(fired, 1, "exactly one path must fire for {votes:?}");

                let outcome = route(t);
                match outcome.path {
                    ResolutionPath::StrongConsensus => {
                        assert!(strong_accept || strong_reject);
                        let expected = if strong_accept {
                            Decision::Accept
                        } else {
                            Decision::Reject
                        };
                        assert_eq!(outcome.immediate_decision, Some(expected));
                    }
                    ResolutionPath::WeakConsensus => {
                        assert!(weak);
                        assert_eq!(outcome.immediate_decision, None);
                    }
                    ResolutionPath::Conflict => {
                        assert!(conflict);
                        assert_eq!(outcome.immediate_decision, None);
                    }
                }
            }
        }
    }
}
