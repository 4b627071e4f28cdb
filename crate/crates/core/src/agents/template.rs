//! Plain-text prompt templates with `{placeholder}` markers.
//!
//! Placeholders are lowercase snake-case identifiers. Rendering is a
//! single pass, so substituted content is never rescanned and a complete
//! placeholder map always yields a fully resolved prompt. Templates are
//! data files versioned in the repo (`prompts/`); compiled-in copies are
//! the default and a directory override replaces them at runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: no value for placeholder {placeholder:?}")]
    MissingPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let name = name.into();
        let body = body.into();
        let required_placeholders = scan_placeholders(&body);
        Self {
            name,
            body,
            required_placeholders,
        }
    }

    /// Substitute every placeholder. Errors if the map lacks a required
    /// placeholder; extra map entries are ignored.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        for placeholder in &self.required_placeholders {
            if !vars.contains_key(placeholder.as_str()) {
                return Err(TemplateError::MissingPlaceholder {
                    template: self.name.clone(),
                    placeholder: placeholder.clone(),
                });
            }
        }
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some((before, name, after)) = next_placeholder(rest) {
            out.push_str(before);
            out.push_str(vars.get(name).expect("checked above"));
            rest = after;
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Find the next `{ident}` marker; returns (text before, ident, text after).
fn next_placeholder(text: &str) -> Option<(&str, &str, &str)> {
    let mut search_from = 0;
    loop {
        let open = text[search_from..].find('{')? + search_from;
        let after_open = &text[open + 1..];
        let close = after_open.find('}');
        if let Some(close) = close {
            let ident = &after_open[..close];
            if !ident.is_empty()
                && ident
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                return Some((&text[..open], ident, &after_open[close + 1..]));
            }
        }
        search_from = open + 1;
    }
}

fn scan_placeholders(body: &str) -> BTreeSet<String> {
    let mut found = BTreeSet::new();
    let mut rest = body;
    while let Some((_, name, after)) = next_placeholder(rest) {
        found.insert(name.to_string());
        rest = after;
    }
    found
}

macro_rules! builtin_templates {
    ($($name:literal),+ $(,)?) => {
        &[$(($name, include_str!(concat!("../../../../prompts/", $name, ".txt")))),+]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_templates![
    "single_baseline",
    "cot_baseline",
    "initial_review",
    "orchestrator",
    "specialist_review",
    "arbitration",
    "majority_vote",
    "medagents_revote",
    "devils_advocate",
    "bhc_generation",
    "bhc_judge",
    "llm_judge_adjudicate",
    "phrase_mask",
    "semantic_filter",
    "distractor_filter",
];

/// The full prompt set for one run. Hashable so the run manifest can pin
/// exactly which prompt text produced a trace.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateSet {
    /// Compiled-in copies of the repo's `prompts/` directory.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(name, body)| {
                (
                    (*name).to_string(),
                    PromptTemplate::new(*name, body.trim_end()),
                )
            })
            .collect();
        Self { templates }
    }

    /// Load `{name}.txt` files from a directory; names not present fall
    /// back to the builtin copy.
    pub fn from_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut set = Self::builtin();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    let body = std::fs::read_to_string(&path)?;
                    set.templates
                        .insert(stem.to_string(), PromptTemplate::new(stem, body.trim_end()));
                }
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::UnknownTemplate(name.to_string()))
    }

    pub fn render(
        &self,
        name: &str,
        vars: &BTreeMap<&str, String>,
    ) -> Result<String, TemplateError> {
        self.get(name)?.render(vars)
    }

    /// Stable hash over the sorted (name, body) pairs.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, template) in &self.templates {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(template.body.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}
