//! The seven comparison strategies behind one interface: single agent,
//! chain-of-thought, self-consistency, majority voting, LLM-as-a-judge,
//! devil's advocate, and fixed-specialty voting with one revote round.
//! Every strategy maps a task instance to a set of accepted candidate
//! indices plus degradation flags; token usage flows through the shared
//! provider ledger.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agents::{self, format_candidates, AgentRuntime};
use crate::provider::{CallMeta, ProviderError};
use crate::types::{TaskInstance, Vote};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Reasoning paths sampled by self-consistency.
    pub samples: usize,
    /// Sampling temperature for self-consistency paths; everything else
    /// in the system runs at the configured run temperature (0 by
    /// default). Meaningless at 0, so it defaults above 0.
    pub sc_temperature: f64,
    /// Identical-prompt voters for majority voting.
    pub agents: usize,
    /// Proposal calls feeding the adjudicator.
    pub proposers: usize,
    /// Fixed specialty roles for the revote strategy.
    pub specialties: Vec<String>,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            samples: 10,
            sc_temperature: 0.7,
            agents: 3,
            proposers: 3,
            specialties: vec![
                "internist".to_string(),
                "surgeon".to_string(),
                "radiologist".to_string(),
            ],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BaselineOutcome {
    pub accepted: BTreeSet<usize>,
    pub degraded_flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    SingleAgent,
    Cot,
    SelfConsistency,
    MajorityVoting,
    LlmJudge,
    DevilsAdvocate,
    MedAgents,
}

pub fn run_baseline(
    kind: BaselineKind,
    rt: &AgentRuntime,
    instance: &TaskInstance,
    params: &BaselineParams,
) -> Result<BaselineOutcome, ProviderError> {
    match kind {
        BaselineKind::SingleAgent => single_agent(rt, instance),
        BaselineKind::Cot => chain_of_thought(rt, instance),
        BaselineKind::SelfConsistency => self_consistency(rt, instance, params),
        BaselineKind::MajorityVoting => majority_voting(rt, instance, params),
        BaselineKind::LlmJudge => llm_judge(rt, instance, params),
        BaselineKind::DevilsAdvocate => devils_advocate(rt, instance),
        BaselineKind::MedAgents => medagents(rt, instance, params),
    }
}

fn base_vars(instance: &TaskInstance) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("clinical_note", instance.masked_note.clone()),
        ("options_text", format_candidates(&instance.candidates)),
    ])
}

fn selection_call(
    rt: &AgentRuntime,
    instance: &TaskInstance,
    stage: &str,
    role: Option<String>,
    template: &str,
    temperature: f64,
) -> Result<(BTreeSet<usize>, bool), ProviderError> {
    let mut meta = CallMeta::new(stage, &instance.case_id);
    if let Some(role) = role {
        meta = meta.with_role(role);
    }
    let (selected, reply) = agents::select_indices(
        rt,
        &meta,
        template,
        &base_vars(instance),
        instance.n_candidates(),
        temperature,
    )?;
    Ok((selected, reply.parse_ok))
}

/// One prompt, one parse.
pub fn single_agent(
    rt: &AgentRuntime,
    instance: &TaskInstance,
) -> Result<BaselineOutcome, ProviderError> {
    let (accepted, parse_ok) = selection_call(
        rt,
        instance,
        "single_agent",
        None,
        "single_baseline",
        rt.temperature,
    )?;
    let degraded_flags = if parse_ok {
        vec![]
    } else {
        vec!["single_agent:parse_failure".to_string()]
    };
    Ok(BaselineOutcome {
        accepted: if parse_ok { accepted } else { BTreeSet::new() },
        degraded_flags,
    })
}

/// Single call with explicit step-by-step reasoning elicitation.
pub fn chain_of_thought(
    rt: &AgentRuntime,
    instance: &TaskInstance,
) -> Result<BaselineOutcome, ProviderError> {
    let (accepted, parse_ok) =
        selection_call(rt, instance, "cot", None, "cot_baseline", rt.temperature)?;
    let degraded_flags = if parse_ok {
        vec![]
    } else {
        vec!["cot:parse_failure".to_string()]
    };
    Ok(BaselineOutcome {
        accepted: if parse_ok { accepted } else { BTreeSet::new() },
        degraded_flags,
    })
}

/// Sample several reasoning paths at elevated temperature and keep the
/// diagnoses included in a strict majority of the successfully parsed
/// paths (ties exclude).
pub fn self_consistency(
    rt: &AgentRuntime,
    instance: &TaskInstance,
    params: &BaselineParams,
) -> Result<BaselineOutcome, ProviderError> {
    let samples = params.samples.max(1);
    let mut per_index_votes: BTreeMap<usize, usize> = BTreeMap::new();
    let mut ok_samples = 0usize;
    let mut failed = 0usize;
    for i in 1..=samples {
        let (selected, parse_ok) = selection_call(
            rt,
            instance,
            "self_consistency",
            Some(format!("sample_{i}")),
            "single_baseline",
            params.sc_temperature,
        )?;
        if parse_ok {
            ok_samples += 1;
            for idx in selected {
                *per_index_votes.entry(idx).or_default() += 1;
            }
        } else {
            failed += 1;
        }
    }
    let mut degraded_flags = Vec::new();
    if failed > 0 {
        degraded_flags.push(format!("self_consistency:failed_samples:{failed}"));
    }
    if failed * 2 > samples {
        degraded_flags.push("self_consistency:majority_of_samples_failed".to_string());
    }
    let accepted = per_index_votes
        .into_iter()
        .filter(|(_, votes)| votes * 2 > ok_samples)
        .map(|(idx, _)| idx)
        .collect();
    Ok(BaselineOutcome {
        accepted,
        degraded_flags,
    })
}

#[derive(Debug, Clone)]
struct VoteCast {
    vote: Vote,
    rationale: String,
}

type VoteRow = Vec<Option<VoteCast>>;

fn vote_call(
    rt: &AgentRuntime,
    instance: &TaskInstance,
    stage: &str,
    role: &str,
    template: &str,
    extra_vars: Vec<(&'static str, String)>,
) -> Result<(Option<VoteRow>, bool), ProviderError> {
    let mut vars = base_vars(instance);
    vars.insert("agent_id", role.to_string());
    for (k, v) in extra_vars {
        vars.insert(k, v);
    }
    let meta = CallMeta::new(stage, &instance.case_id).with_role(role);
    let (parsed, reply) =
        agents::vote_decisions(rt, &meta, template, &vars, instance.n_candidates())?;
    let row = parsed.map(|votes| {
        votes
            .into_iter()
            .map(|entry| entry.map(|(vote, rationale)| VoteCast { vote, rationale }))
            .collect()
    });
    Ok((row, reply.parse_ok))
}

fn keep_count(rows: &[VoteRow], index: usize) -> usize {
    rows.iter()
        .filter(|row| matches!(row.get(index - 1), Some(Some(cast)) if cast.vote == Vote::Keep))
        .count()
}

/// Identical prompts, per-candidate KEEP/REMOVE votes, strict-majority
/// aggregation. A failed or silent voter counts as REMOVE.
pub fn majority_voting(
    rt: &AgentRuntime,
    instance: &TaskInstance,
    params: &BaselineParams,
) -> Result<BaselineOutcome, ProviderError> {
    let n_agents = params.agents.max(1);
    let mut rows: Vec<VoteRow> = Vec::with_capacity(n_agents);
    let mut degraded_flags = Vec::new();
    for i in 1..=n_agents {
        let role = format!("agent_{i}");
        let (row, parse_ok) = vote_call(
            rt,
            instance,
            "majority_voting",
            &role,
            "majority_vote",
            vec![],
        )?;
        if !parse_ok || row.is_none() {
            degraded_flags.push(format!("majority_voting:{role}_parse_failure"));
        }
        rows.push(row.unwrap_or_else(|| vec![None; instance.n_candidates()]));
    }
    let accepted = (1..=instance.n_candidates())
        .filter(|&j| keep_count(&rows, j) * 2 > n_agents)
        .collect();
    Ok(BaselineOutcome {
        accepted,
        degraded_flags,
    })
}

fn peer_opinions_text(
    instance: &TaskInstance,
    rows: &[(String, VoteRow)],
    excluding: &str,
) -> String {
    let mut blocks = Vec::new();
    for (role, row) in rows {
        if role == excluding {
            continue;
        }
        let lines: Vec<String> = instance
            .candidates
            .iter()
            .map(|c| match &row[c.index - 1] {
                Some(cast) if cast.rationale.is_empty() => {
                    format!("  {}. {} -> {}", c.index, c.text, cast.vote)
                }
                Some(cast) => {
                    format!(
                        "  {}. {} -> {} ({})",
                        c.index, c.text, cast.vote, cast.rationale
                    )
                }
                None => format!("  {}. {} -> (no decision)", c.index, c.text),
            })
            .collect();
        blocks.push(format!("Agent {role}:\n{}", lines.join("\n")));
    }
    blocks.join("\n\n")
}

/// Fixed-specialty agents vote independently, read the other agents'
/// round-0 opinions, revote once, and the final round aggregates by
/// strict majority.
pub fn medagents(
    rt: &AgentRuntime,
    instance: &TaskInstance,
    params: &BaselineParams,
) -> Result<BaselineOutcome, ProviderError> {
    let specialties = if params.specialties.is_empty() {
        BaselineParams::default().specialties
    } else {
        params.specialties.clone()
    };
    let mut degraded_flags = Vec::new();

    let mut round0: Vec<(String, VoteRow)> = Vec::with_capacity(specialties.len());
    for specialty in &specialties {
        let (row, parse_ok) = vote_call(
            rt,
            instance,
            "medagents_round0",
            specialty,
            "majority_vote",
            vec![],
        )?;
        if !parse_ok || row.is_none() {
            degraded_flags.push(format!("medagents:round0_{specialty}_parse_failure"));
        }
        round0.push((
            specialty.clone(),
            row.unwrap_or_else(|| vec![None; instance.n_candidates()]),
        ));
    }

    let mut final_rows: Vec<VoteRow> = Vec::with_capacity(specialties.len());
    for (specialty, own_row) in &round0 {
        let peers = peer_opinions_text(instance, &round0, specialty);
        let (row, parse_ok) = vote_call(
            rt,
            instance,
            "medagents_revote",
            specialty,
            "medagents_revote",
            vec![("peer_opinions", peers)],
        )?;
        match row.filter(|_| parse_ok) {
            Some(row) => final_rows.push(row),
            None => {
                // a failed revote keeps the agent's round-0 decisions
                degraded_flags.push(format!("medagents:revote_{specialty}_parse_failure"));
                final_rows.push(own_row.clone());
            }
        }
    }

    let n_agents = specialties.len();
    let accepted = (1..=instance.n_candidates())
        .filter(|&j| keep_count(&final_rows, j) * 2 > n_agents)
        .collect();
    Ok(BaselineOutcome {
        accepted,
        degraded_flags,
    })
}

/// Independent proposers, then one adjudication call that sees every
/// proposal and selects the final set. If the adjudication reply is
/// unusable the per-diagnosis majority of the proposals stands in.
pub fn llm_judge(
    rt: &AgentRuntime,
    instance: &TaskInstance,
    params: &BaselineParams,
) -> Result<BaselineOutcome, ProviderError> {
    let n_proposers = params.proposers.max(1);
    let mut proposals: Vec<BTreeSet<usize>> = Vec::with_capacity(n_proposers);
    let mut degraded_flags = Vec::new();
    for i in 1..=n_proposers {
        let (selected, parse_ok) = selection_call(
            rt,
            instance,
            "llm_judge_propose",
            Some(format!("proposer_{i}")),
            "single_baseline",
            rt.temperature,
        )?;
        if !parse_ok {
            degraded_flags.push(format!("llm_judge:proposer_{i}_parse_failure"));
        }
        proposals.push(if parse_ok { selected } else { BTreeSet::new() });
    }

    let proposals_text = proposals
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let texts: Vec<String> = instance
                .candidates
                .iter()
                .filter(|c| set.contains(&c.index))
                .map(|c| format!("{}. {}", c.index, c.text))
                .collect();
            format!(
                "Reviewer {} selected: {}",
                i + 1,
                if texts.is_empty() {
                    "(none)".to_string()
                } else {
                    texts.join("; ")
                }
            )
        })
        .collect::<Vec<_>>()
        .join("\n");

    let mut vars = base_vars(instance);
    vars.insert("proposals_text", proposals_text);
    let meta = CallMeta::new("llm_judge_adjudicate", &instance.case_id);
    let (selected, reply) = agents::select_indices(
        rt,
        &meta,
        "llm_judge_adjudicate",
        &vars,
        instance.n_candidates(),
        rt.temperature,
    )?;

    if reply.parse_ok {
        Ok(BaselineOutcome {
            accepted: selected,
            degraded_flags,
        })
    } else {
        degraded_flags.push("llm_judge:adjudication_parse_failure".to_string());
        let accepted = (1..=instance.n_candidates())
            .filter(|j| proposals.iter().filter(|p| p.contains(j)).count() * 2 > n_proposers)
            .collect();
        Ok(BaselineOutcome {
            accepted,
            degraded_flags,
        })
    }
}

/// Single-agent proposal followed by a critic that must challenge every
/// proposed diagnosis. Only an explicit, parseable REMOVE removes a
/// proposal; anything else keeps it.
pub fn devils_advocate(
    rt: &AgentRuntime,
    instance: &TaskInstance,
) -> Result<BaselineOutcome, ProviderError> {
    let (proposed, parse_ok) = selection_call(
        rt,
        instance,
        "devils_initial",
        None,
        "single_baseline",
        rt.temperature,
    )?;
    let mut degraded_flags = Vec::new();
    if !parse_ok {
        degraded_flags.push("devils_advocate:initial_parse_failure".to_string());
        return Ok(BaselineOutcome {
            accepted: BTreeSet::new(),
            degraded_flags,
        });
    }
    if proposed.is_empty() {
        return Ok(BaselineOutcome {
            accepted: proposed,
            degraded_flags,
        });
    }

    let pool_text = instance
        .candidates
        .iter()
        .filter(|c| proposed.contains(&c.index))
        .map(|c| format!("{}. {}", c.index, c.text))
        .collect::<Vec<_>>()
        .join("\n");
    let mut vars = base_vars(instance);
    vars.insert("pool_text", pool_text);
    let meta = CallMeta::new("devils_critic", &instance.case_id);
    let (parsed, reply) =
        agents::vote_decisions(rt, &meta, "devils_advocate", &vars, instance.n_candidates())?;

    let critic_row = match parsed.filter(|_| reply.parse_ok) {
        Some(row) => row,
        None => {
            // the challenge must be explicit; an unusable critic keeps everything
            degraded_flags.push("devils_advocate:critic_parse_failure".to_string());
            return Ok(BaselineOutcome {
                accepted: proposed,
                degraded_flags,
            });
        }
    };
    let accepted = proposed
        .into_iter()
        .filter(|&j| !matches!(critic_row[j - 1], Some((Vote::Refuse, _))))
        .collect();
    Ok(BaselineOutcome {
        accepted,
        degraded_flags,
    })
}
