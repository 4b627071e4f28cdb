//! Scripted mock provider for deterministic end-to-end runs.
//!
//! A script is a JSON list of entries, each with a matcher and a canned
//! response. Matchers address calls either by content hash (`{"key":
//! ...}`) or by call metadata (`{"stage": ..., "case_id": ..., "role":
//! ...}`, where `case_id` and `role` may be omitted to match broadly).
//!
//! Matching precedence is most-specific-first: key, then (stage,
//! case_id, role), then (stage, case_id), then (stage). Entries at the
//! winning specificity are used round-robin in file order, so a repair
//! path can script "garbled first, valid second" for the same call site.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{cache_key, CallMeta, ChatProvider, ChatRequest, ChatResponse, ProviderError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockMatcher {
    Key {
        key: String,
    },
    Meta {
        stage: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        case_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(rename = "match")]
    pub matcher: MockMatcher,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

/// Specificity tiers, highest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Tier {
    Key,
    StageCaseRole,
    StageCase,
    Stage,
}

pub struct MockProvider {
    entries: Vec<MockEntry>,
    hits: Mutex<Vec<u64>>,
}

impl MockProvider {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        let hits = Mutex::new(vec![0; entries.len()]);
        Self { entries, hits }
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<MockEntry> = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(entries))
    }

    fn tier(&self, idx: usize, key: &str, meta: &CallMeta) -> Option<Tier> {
        match &self.entries[idx].matcher {
            MockMatcher::Key { key: k } => (k == key).then_some(Tier::Key),
            MockMatcher::Meta {
                stage,
                case_id,
                role,
            } => {
                if stage != &meta.stage {
                    return None;
                }
                match (case_id, role) {
                    (Some(c), Some(r)) => (c == &meta.case_id && meta.role.as_ref() == Some(r))
                        .then_some(Tier::StageCaseRole),
                    (Some(c), None) => (c == &meta.case_id).then_some(Tier::StageCase),
                    (None, Some(r)) => {
                        (meta.role.as_ref() == Some(r)).then_some(Tier::StageCaseRole)
                    }
                    (None, None) => Some(Tier::Stage),
                }
            }
        }
    }
}

impl ChatProvider for MockProvider {
    fn complete(&self, req: &ChatRequest, meta: &CallMeta) -> Result<ChatResponse, ProviderError> {
        let key = cache_key(req);
        let mut best: Option<(Tier, Vec<usize>)> = None;
        for idx in 0..self.entries.len() {
            if let Some(tier) = self.tier(idx, &key, meta) {
                match &mut best {
                    Some((t, idxs)) if *t == tier => idxs.push(idx),
                    Some((t, _)) if tier < *t => best = Some((tier, vec![idx])),
                    None => best = Some((tier, vec![idx])),
                    _ => {}
                }
            }
        }
        let Some((_, candidates)) = best else {
            return Err(ProviderError::NoScriptMatch {
                stage: meta.stage.clone(),
                case_id: meta.case_id.clone(),
                role: meta.role.clone(),
            });
        };

        // round-robin among equally specific entries, in file order
        let mut hits = self.hits.lock().expect("mock hits poisoned");
        let chosen = *candidates
            .iter()
            .min_by_key(|&&idx| (hits[idx], idx))
            .expect("candidates non-empty");
        hits[chosen] += 1;
        drop(hits);

        let entry = &self.entries[chosen];
        let prompt_chars: usize = req.messages.iter().map(|m| m.content.len()).sum();
        Ok(ChatResponse {
            content: entry.response.clone(),
            prompt_tokens: entry
                .prompt_tokens
                .unwrap_or_else(|| (prompt_chars as u64).div_ceil(4)),
            completion_tokens: entry
                .completion_tokens
                .unwrap_or_else(|| (entry.response.len() as u64).div_ceil(4)),
            provider_id: "mock".to_string(),
            cached: false,
        })
    }

    fn id(&self) -> &str {
        "mock"
    }
}
