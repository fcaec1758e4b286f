//! Candidate generation: sample proposals, keep the most frequent distinct
//! actions, then let the model prune them.

use std::collections::HashMap;

use thiserror::Error;

use crate::action::{parse_action, Action, ActionParseError};
use crate::llm::prompts::{proposal_request, refinement_request};
use crate::llm::{Gateway, LlmError, LlmSettings};
use crate::observation::Observation;
use crate::types::TaskInstance;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_M: u32 = 10;

#[derive(Debug, Error)]
pub enum ProposeError {
    #[error("none of the {0} proposal samples parsed as an action")]
    NoValidCandidates(usize),
    #[error("k and m must be at least 1 (k={k}, m={m})")]
    InvalidCounts { k: usize, m: u32 },
    #[error(transparent)]
    MalformedAction(#[from] ActionParseError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Groups actions by signature and returns up to `k` distinct actions, most
/// frequent first; ties keep first-occurrence order.
pub fn rank_by_frequency(samples: &[Action], k: usize) -> Vec<Action> {
    let mut groups: Vec<(usize, &Action)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for a in samples {
        match index.get(&a.signature()) {
            Some(&i) => groups[i].0 += 1,
            None => {
                index.insert(a.signature(), groups.len());
                groups.push((1, a));
            }
        }
    }
    // Stable sort keeps first occurrence among equal counts.
    groups.sort_by_key(|g| std::cmp::Reverse(g.0));
    groups.into_iter().take(k).map(|(_, a)| a.clone()).collect()
}

/// Samples `m` proposals and returns the top `k` distinct actions.
pub fn get_candidates(
    gateway: &Gateway,
    settings: &LlmSettings,
    task: &TaskInstance,
    obs: &Observation,
    history: &[Action],
    k: usize,
    m: u32,
) -> Result<Vec<Action>, ProposeError> {
    if k == 0 || m == 0 {
        return Err(ProposeError::InvalidCounts { k, m });
    }
    let req = proposal_request(settings, task, obs, history, &[], m)?;
    let replies = gateway.complete(&req)?;
    let parsed: Vec<Action> = replies
        .iter()
        .filter_map(|r| match parse_action(r) {
            Ok(a) => Some(a),
            Err(e) => {
                tracing::debug!(error = %e, "dropping unparseable proposal");
                None
            }
        })
        .collect();
    if parsed.is_empty() {
        return Err(ProposeError::NoValidCandidates(replies.len()));
    }
    Ok(rank_by_frequency(&parsed, k))
}

/// Reads the `Selected actions:` line. Accepts `id`/`aid` prefixes, skips
/// indices outside `0..len`, and returns `None` when nothing valid remains.
pub fn parse_selection(text: &str, len: usize) -> Option<Vec<usize>> {
    const LABEL: &str = "selected actions:";
    let line = text.lines().rev().find_map(|l| {
        let t = l.trim();
        let lower = t.to_ascii_lowercase();
        lower.find(LABEL).map(|i| t[i + LABEL.len()..].to_string())
    })?;
    let mut picked = Vec::new();
    for token in line.split([';', ',']) {
        let token = token.trim().trim_end_matches('.');
        if token.is_empty() {
            continue;
        }
        let digits = token.trim_start_matches(|c: char| c.is_ascii_alphabetic());
        match digits.parse::<usize>() {
            Ok(i) if i < len => {
                if !picked.contains(&i) {
                    picked.push(i);
                }
            }
            Ok(i) => tracing::warn!(index = i, len, "ignoring out-of-range selection"),
            Err(_) => tracing::warn!(token, "ignoring unparseable selection"),
        }
    }
    if picked.is_empty() {
        None
    } else {
        picked.sort_unstable();
        Some(picked)
    }
}

/// Asks the model to drop irrelevant candidates. Fails open: any error or
/// empty selection returns `candidates` unchanged.
pub fn self_refine(
    gateway: &Gateway,
    settings: &LlmSettings,
    task: &TaskInstance,
    obs: &Observation,
    history: &[Action],
    candidates: &[Action],
) -> Vec<Action> {
    if candidates.len() <= 1 {
        return candidates.to_vec();
    }
    let reply = refinement_request(settings, task, obs, history, candidates).and_then(|req| gateway.complete(&req));
    let text = match reply {
        Ok(r) => r.into_iter().next().unwrap_or_default(),
        Err(e) => {
            tracing::warn!(error = %e, "self-refinement failed; keeping all candidates");
            return candidates.to_vec();
        }
    };
    match parse_selection(&text, candidates.len()) {
        Some(idx) => idx.into_iter().map(|i| candidates[i].clone()).collect(),
        None => {
            tracing::warn!("unusable self-refinement reply; keeping all candidates");
            candidates.to_vec()
        }
    }
}

/// One proposal sample, parsed.
pub fn propose_one(
    gateway: &Gateway,
    settings: &LlmSettings,
    task: &TaskInstance,
    obs: &Observation,
    history: &[Action],
) -> Result<Action, ProposeError> {
    let req = proposal_request(settings, task, obs, history, &[], 1)?;
    let reply = gateway.complete(&req)?;
    Ok(parse_action(reply.first().map(String::as_str).unwrap_or(""))?)
}
