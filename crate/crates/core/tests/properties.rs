//! Property tests over the core invariants: serialization round-trips,
//! the masking guarantee under arbitrary inputs, normalization
//! idempotence, totality of vote parsing, and cache-key uniqueness.

use std::collections::BTreeSet;

use proptest::prelude::*;

use camp_core::dataprep;
use camp_core::provider::{cache_key, ChatMessage, ChatRequest};
use camp_core::router;
use camp_core::types::{
    ArbitrationTrace, CandidateDiagnosis, Decision, ResolutionPath, ResolutionRecord,
    SpecialistEvaluation, Tally, TaskInstance, Vote,
};

fn vote_strategy() -> impl Strategy<Value = Vote> {
    prop_oneof![Just(Vote::Keep), Just(Vote::Refuse), Just(Vote::Neutral)]
}

fn evaluation_strategy() -> impl Strategy<Value = SpecialistEvaluation> {
    (
        vote_strategy(),
        "[a-zA-Z0-9 .,;-]{0,40}",
        -0.5f64..1.5,
        "[a-zA-Z0-9 ]{0,30}",
        any::<bool>(),
        prop_oneof![Just("direct"), Just("indirect"), Just("absent")],
    )
        .prop_map(|(vote, quote, confidence, rationale, in_scope, level)| {
            SpecialistEvaluation::new(vote, quote, confidence, rationale, in_scope, level)
        })
}

fn instance_strategy() -> impl Strategy<Value = TaskInstance> {
    (
        2usize..8,
        "[a-z0-9-]{1,12}",
        "[a-zA-Z0-9 .,\n]{0,200}",
        any::<u64>(),
    )
        .prop_flat_map(|(n, case_id, note, seed)| {
            let gold = prop::collection::btree_set(1..=n, 1..=n.min(3));
            (Just(n), Just(case_id), Just(note), Just(seed), gold).prop_map(
                |(n, case_id, note, seed, gold)| TaskInstance {
                    case_id,
                    masked_note: note,
                    candidates: (1..=n)
                        .map(|i| CandidateDiagnosis {
                            index: i,
                            text: format!("candidate {i}"),
                        })
                        .collect(),
                    gold,
                    service_label: None,
                    shuffle_seed: seed,
                },
            )
        })
}

proptest! {
    /// serialize -> deserialize is the identity for every core type.
    #[test]
    fn instance_round_trip(instance in instance_strategy()) {
        let json = serde_json::to_string(&instance).unwrap();
        let back: TaskInstance = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(instance, back);
    }

    #[test]
    fn evaluation_round_trip(eval in evaluation_strategy()) {
        let json = serde_json::to_string(&eval).unwrap();
        let back: SpecialistEvaluation = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(eval, back);
    }

    #[test]
    fn resolution_record_round_trip(
        index in 1usize..12,
        keeps in 0usize..4,
        refuses in 0usize..4,
        neutrals in 0usize..4,
        accept in any::<bool>(),
    ) {
        prop_assume!(keeps + refuses + neutrals > 0);
        let decision = if accept { Decision::Accept } else { Decision::Reject };
        let tally = Tally::new(keeps, refuses, neutrals);
        let outcome = router::route(tally);
        let record = ResolutionRecord {
            diagnosis_index: index,
            tally,
            path: outcome.path,
            decision: outcome.immediate_decision.unwrap_or(decision),
            arbitration: (outcome.path == ResolutionPath::Conflict).then(|| ArbitrationTrace {
                inputs: vec![],
                decision,
                reasoning: "r".into(),
                degraded: false,
            }),
            fallback_used: outcome.path == ResolutionPath::WeakConsensus,
        };
        record.validate().unwrap();
        let json = serde_json::to_string(&record).unwrap();
        let back: ResolutionRecord = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(record, back);
    }

    /// The assembled instance never contains a candidate longer than
    /// four characters, for arbitrary notes and candidate texts.
    #[test]
    fn masking_guarantee_holds_for_arbitrary_inputs(
        note in "[a-zA-Z0-9 .,\n]{0,300}",
        words in prop::collection::vec("[a-zA-Z]{1,12}( [a-zA-Z]{1,12}){0,2}", 6..10),
    ) {
        let gold = vec![words[0].clone()];
        let distractors: Vec<String> = words[1..6].to_vec();
        // embed some candidates into the note verbatim
        let note = format!("{note} {} {} tail", words[0], words[2]);
        let instance = dataprep::assemble_instance("p", &note, &gold, &distractors, 1, None);
        prop_assert!(
            instance.masking_violations().is_empty(),
            "violations: {:?}",
            instance.masking_violations()
        );
    }

    /// normalize(join(normalize(x))) == normalize(x) under newline join.
    #[test]
    fn normalization_idempotent(raw in "[a-zA-Z0-9 .,:;()\\-\n]{0,200}") {
        let once = dataprep::normalize_diagnoses(&raw);
        let twice = dataprep::normalize_diagnoses(&once.join("\n"));
        prop_assert_eq!(once, twice);
    }

    /// parse_vote accepts exactly the four surface tokens under any case
    /// mix and errors on everything else.
    #[test]
    fn vote_parsing_total_over_vocabulary(token in "[a-zA-Z]{1,10}") {
        let parsed = Vote::parse(&token);
        let lowered = token.to_lowercase();
        match lowered.as_str() {
            "keep" => prop_assert_eq!(parsed.unwrap(), Vote::Keep),
            "refuse" | "remove" => prop_assert_eq!(parsed.unwrap(), Vote::Refuse),
            "neutral" => prop_assert_eq!(parsed.unwrap(), Vote::Neutral),
            _ => prop_assert!(parsed.is_err()),
        }
    }

    /// Tally counts always sum to the column length and route fires for
    /// every non-empty column.
    #[test]
    fn tally_sums_and_route_totality(votes in prop::collection::vec(vote_strategy(), 1..8)) {
        let tally = router::tally(&votes).unwrap();
        prop_assert_eq!(tally.total(), votes.len());
        let outcome = router::route(tally);
        match outcome.path {
            ResolutionPath::StrongConsensus => prop_assert!(outcome.immediate_decision.is_some()),
            _ => prop_assert!(outcome.immediate_decision.is_none()),
        }
    }
}

/// Distinct requests in a realistic corpus of prompts never collide.
#[test]
fn cache_keys_unique_across_fixture_requests() {
    let mut keys = BTreeSet::new();
    let mut count = 0;
    for model in ["model-a", "model-b"] {
        for stage in ["assessment", "assembly", "specialist", "arbitration", "bhc"] {
            for case in 0..20 {
                for temperature in [0.0, 0.7] {
                    let req = ChatRequest::new(
                        model,
                        vec![
                            ChatMessage::system(format!("{stage} preamble")),
                            ChatMessage::user(format!("case {case} body for {stage}")),
                        ],
                    )
                    .with_temperature(temperature);
                    keys.insert(cache_key(&req));
                    count += 1;
                }
            }
        }
    }
    assert_eq!(keys.len(), count, "cache key collision detected");
}
