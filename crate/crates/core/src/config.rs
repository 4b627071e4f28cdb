//! Run configuration: one declarative document (TOML on disk) with flag
//! overrides layered on top by the CLI. The environment is used only for
//! credentials. The config's content hash is embedded in the run
//! manifest so a trace always names the exact configuration that
//! produced it.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineKind, BaselineParams};

/// Strategy selector: the deliberation pipeline or one of the seven
/// comparison strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Camp,
    SingleAgent,
    Cot,
    SelfConsistency,
    MajorityVoting,
    LlmJudge,
    DevilsAdvocate,
    Medagents,
}

pub const ALL_METHODS: [Method; 8] = [
    Method::Camp,
    Method::SingleAgent,
    Method::Cot,
    Method::SelfConsistency,
    Method::MajorityVoting,
    Method::LlmJudge,
    Method::DevilsAdvocate,
    Method::Medagents,
];

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Camp => "camp",
            Method::SingleAgent => "single_agent",
            Method::Cot => "cot",
            Method::SelfConsistency => "self_consistency",
            Method::MajorityVoting => "majority_voting",
            Method::LlmJudge => "llm_judge",
            Method::DevilsAdvocate => "devils_advocate",
            Method::Medagents => "medagents",
        }
    }

    /// The baseline dispatch kind; `None` for the pipeline itself.
    pub fn baseline_kind(&self) -> Option<BaselineKind> {
        match self {
            Method::Camp => None,
            Method::SingleAgent => Some(BaselineKind::SingleAgent),
            Method::Cot => Some(BaselineKind::Cot),
            Method::SelfConsistency => Some(BaselineKind::SelfConsistency),
            Method::MajorityVoting => Some(BaselineKind::MajorityVoting),
            Method::LlmJudge => Some(BaselineKind::LlmJudge),
            Method::DevilsAdvocate => Some(BaselineKind::DevilsAdvocate),
            Method::Medagents => Some(BaselineKind::MedAgents),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_METHODS
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = ALL_METHODS.iter().map(|m| m.name()).collect();
                format!("unknown method {s:?}; expected one of {}", names.join(", "))
            })
    }
}

fn default_credential_env() -> String {
    "CAMP_API_KEY".to_string()
}
fn default_in_flight() -> usize {
    4
}
fn default_retry_cap() -> u32 {
    3
}
fn default_timeout() -> u64 {
    120
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_model() -> String {
    "default".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// OpenAI-compatible endpoint base URL; absent means mock-only runs.
    pub base_url: Option<String>,
    pub model: String,
    /// Environment variable holding the bearer credential.
    pub credential_env: String,
    pub in_flight_limit: usize,
    /// Total attempts per call, including the first.
    pub retry_cap: u32,
    pub timeout_secs: u64,
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: None,
            model: default_model(),
            credential_env: default_credential_env(),
            in_flight_limit: default_in_flight(),
            retry_cap: default_retry_cap(),
            timeout_secs: default_timeout(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

fn default_k() -> usize {
    3
}
fn default_case_parallelism() -> usize {
    1
}
fn default_max_panel() -> usize {
    8
}
fn default_method() -> Method {
    Method::Camp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub method: Method,
    /// Specialist panel size.
    pub k: usize,
    pub seed: u64,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    /// Per-stage completion caps overriding `max_tokens` (for example
    /// `bhc = 1024`).
    pub max_tokens_by_stage: std::collections::BTreeMap<String, u32>,
    /// Response cache directory; absent disables caching.
    pub cache_dir: Option<PathBuf>,
    pub bhc_enabled: bool,
    /// Prompt template directory override; absent uses the compiled-in
    /// prompt set.
    pub prompt_dir: Option<PathBuf>,
    pub case_parallelism: usize,
    /// Specialist reviews within a case fan out across threads.
    pub specialist_parallelism: bool,
    /// Cost-comparison variant: route every diagnosis to arbitration,
    /// bypassing the gated resolution.
    pub always_arbitrate: bool,
    pub max_panel_size: usize,
    pub baseline: BaselineParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            provider: ProviderConfig::default(),
            method: default_method(),
            k: default_k(),
            seed: 0,
            temperature: 0.0,
            max_tokens: None,
            max_tokens_by_stage: std::collections::BTreeMap::new(),
            cache_dir: None,
            bhc_enabled: false,
            prompt_dir: None,
            case_parallelism: default_case_parallelism(),
            specialist_parallelism: true,
            always_arbitrate: false,
            max_panel_size: default_max_panel(),
            baseline: BaselineParams::default(),
        }
    }
}

impl RunConfig {
    /// Stable hash of the full configuration, embedded in the manifest.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to toml")
    }
}
