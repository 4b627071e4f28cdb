//! End-to-end narrative judging: generate per-system BHC texts, rank
//! them with a scripted judge, and aggregate pooled ranks with unjudged
//! cases excluded from the averages.

use std::collections::BTreeMap;
use std::sync::Arc;

use camp_core::agents::{self, AgentRuntime, TemplateSet, JUDGE_DIMENSIONS};
use camp_core::eval::{self, CaseJudgment};
use camp_core::provider::{MockEntry, MockMatcher, MockProvider};

fn entry(stage: &str, case_id: Option<&str>, response: serde_json::Value) -> MockEntry {
    MockEntry {
        matcher: MockMatcher::Meta {
            stage: stage.into(),
            case_id: case_id.map(String::from),
            role: None,
        },
        response: match response {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        },
        prompt_tokens: None,
        completion_tokens: None,
    }
}

fn ranking_for(labels: &[(&str, i64)]) -> serde_json::Value {
    let dims: serde_json::Map<String, serde_json::Value> = JUDGE_DIMENSIONS
        .iter()
        .map(|d| {
            let ranks: serde_json::Map<String, serde_json::Value> = labels
                .iter()
                .map(|(l, r)| (l.to_string(), serde_json::json!(r)))
                .collect();
            (d.to_string(), serde_json::Value::Object(ranks))
        })
        .collect();
    serde_json::json!({"rankings": dims, "overall": []})
}

#[test]
fn pooled_rank_report_over_judged_cases() {
    let systems: BTreeMap<String, String> = BTreeMap::from([
        ("camp".to_string(), "deliberated narrative".to_string()),
        ("single_agent".to_string(), "direct narrative".to_string()),
    ]);
    let dimensions: Vec<String> = JUDGE_DIMENSIONS.iter().map(|d| d.to_string()).collect();

    // two judged cases with opposite rankings plus one unjudgeable case
    let garbled = serde_json::json!("not a ranking");
    let provider = Arc::new(MockProvider::new(vec![
        entry("bhc_judge", Some("j1"), ranking_for(&[("A", 1), ("B", 2)])),
        entry("bhc_judge", Some("j2"), ranking_for(&[("A", 2), ("B", 1)])),
        entry("bhc_judge", Some("j3"), garbled.clone()),
        entry("bhc_judge", Some("j3"), garbled),
    ]));
    let rt = AgentRuntime::new(provider, TemplateSet::builtin(), "m");

    let mut judgments = Vec::new();
    for case_id in ["j1", "j2", "j3"] {
        let outcome = agents::judge_bhc(
            &rt,
            case_id,
            "source note",
            "reference",
            &systems,
            &dimensions,
            // fixed label seed so A/B assignment is stable across cases
            11,
        )
        .unwrap();
        judgments.push(CaseJudgment {
            case_id: case_id.to_string(),
            outcome,
        });
    }

    let report = eval::pooled_rank_report(&judgments);
    assert_eq!(report.n_judged, 2);
    assert_eq!(report.n_unjudged, 1);
    for dimension in JUDGE_DIMENSIONS {
        let ranks = &report.mean_ranks[dimension];
        // opposite rankings over two cases average to 1.5 for both systems
        assert!(
            (ranks["camp"] - 1.5).abs() < 1e-12,
            "{dimension}: {ranks:?}"
        );
        assert!((ranks["single_agent"] - 1.5).abs() < 1e-12);
    }

    let text = eval::rank_report_text(&report);
    assert!(text.contains("judged cases      2  (unjudged 1)"));
    assert!(text.contains("utility"));
}
