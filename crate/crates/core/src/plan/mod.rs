//! Agents: the simulate-then-act planner, the reactive baseline, the
//! rerank-only ablation and best-first tree search over real interactions.

mod episode;
mod mpc;
mod tree;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use episode::{run_episode, EpisodeOutcome, RunRecord};
pub use mpc::decide;
pub use tree::tree_search_episode;

use crate::action::Action;
use crate::env::EnvError;
use crate::judge::{Judge, JudgeError, DEFAULT_JUDGE_SAMPLES};
use crate::llm::{Gateway, LlmSettings};
use crate::propose::{ProposeError, DEFAULT_K, DEFAULT_M};
use crate::types::ScoredTrajectory;
use crate::wm::{SimConfig, SimulationError, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub branching: usize,
    pub max_depth: usize,
    pub expansion_budget: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            branching: 3,
            max_depth: 4,
            expansion_budget: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub sim: SimConfig,
    pub judge_samples: u32,
    /// Distinct candidates kept per step.
    pub k: usize,
    /// Proposal samples drawn per step.
    pub m: u32,
    pub max_steps: u32,
    pub repeat_limit: u32,
    /// Count every earlier occurrence of an action, not just the trailing run.
    pub repeat_cumulative: bool,
    pub refine: bool,
    pub tree: Option<TreeConfig>,
    pub llm: LlmSettings,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            judge_samples: DEFAULT_JUDGE_SAMPLES,
            k: DEFAULT_K,
            m: DEFAULT_M,
            max_steps: 10,
            repeat_limit: 3,
            repeat_cumulative: false,
            refine: true,
            tree: None,
            llm: LlmSettings::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        self.sim.validate()?;
        let bad = |m: &str| Err(PlanError::InvalidConfig(m.to_string()));
        if self.judge_samples == 0 {
            return bad("judge_samples must be at least 1");
        }
        if self.k == 0 || self.m == 0 {
            return bad("k and m must be at least 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if self.repeat_limit == 0 {
            return bad("repeat_limit must be at least 1");
        }
        if let Some(t) = &self.tree {
            if t.branching == 0 || t.max_depth == 0 {
                return bad("tree branching and max_depth must be at least 1");
            }
        }
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the config's JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Mpc,
    Reactive,
    RerankOnly,
    TreeSearch,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Mpc,
        AgentKind::Reactive,
        AgentKind::RerankOnly,
        AgentKind::TreeSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Mpc => "mpc",
            AgentKind::Reactive => "reactive",
            AgentKind::RerankOnly => "rerank_only",
            AgentKind::TreeSearch => "tree_search",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentKind::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown agent {s:?}"))
    }
}

/// Audit record of one planning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecision {
    pub candidates: Vec<Action>,
    pub refined: Vec<Action>,
    pub scored: Vec<ScoredTrajectory>,
    pub chosen: Action,
    /// Index into `refined`.
    pub chosen_index: usize,
    /// Every candidate scored 0.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    StopIssued,
    MaxSteps,
    RepeatedAction,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::StopIssued => "stop_issued",
            TerminationReason::MaxSteps => "max_steps",
            TerminationReason::RepeatedAction => "repeated_action",
        }
    }
}

/// Decides whether an episode ends after `last_action`, the `step`-th
/// executed action. `history` holds the actions executed before it. The
/// repeat rule fires when `last_action` makes more than `repeat_limit`
/// consecutive identical signatures (or occurrences overall when
/// `cumulative`).
pub fn termination_check(
    history: &[Action],
    last_action: &Action,
    step: u32,
    max_steps: u32,
    repeat_limit: u32,
    cumulative: bool,
) -> Option<TerminationReason> {
    if last_action.is_stop() {
        return Some(TerminationReason::StopIssued);
    }
    let sig = last_action.signature();
    let earlier = if cumulative {
        history.iter().filter(|a| a.signature() == sig).count()
    } else {
        history.iter().rev().take_while(|a| a.signature() == sig).count()
    };
    if earlier + 1 > repeat_limit as usize {
        return Some(TerminationReason::RepeatedAction);
    }
    if step >= max_steps {
        return Some(TerminationReason::MaxSteps);
    }
    None
}

/// Index of the largest score; ties go to the lowest index. `None` for an
/// empty slice.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Propose(#[from] ProposeError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
}

/// Components an agent plans with.
#[derive(Clone)]
pub struct Planner {
    pub gateway: Arc<Gateway>,
    pub world_model: Arc<dyn WorldModel>,
    pub judge: Arc<dyn Judge>,
    pub config: PlannerConfig,
}

impl fmt::Debug for Planner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Planner")
            .field("gateway", &self.gateway)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Planner {
    pub fn new(
        gateway: Arc<Gateway>,
        world_model: Arc<dyn WorldModel>,
        judge: Arc<dyn Judge>,
        config: PlannerConfig,
    ) -> Result<Self, PlanError> {
        config.validate()?;
        Ok(Self {
            gateway,
            world_model,
            judge,
            config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.5, 1.0, 1.0]), Some(1));
        assert_eq!(argmax(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), Some(0));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn termination_rules() {
        let c = Action::click(1);
        let three = vec![c.clone(), c.clone(), c.clone()];
        assert_eq!(
            termination_check(&[], &Action::stop(None), 1, 10, 3, false),
            Some(TerminationReason::StopIssued)
        );
        assert_eq!(
            termination_check(&three, &c, 4, 10, 3, false),
            Some(TerminationReason::RepeatedAction)
        );
        assert_eq!(termination_check(&three[..2], &c, 3, 10, 3, false), None);
        assert_eq!(termination_check(&[Action::click(2)], &c, 2, 10, 3, false), None);
        assert_eq!(
            termination_check(&[], &c, 10, 10, 3, false),
            Some(TerminationReason::MaxSteps)
        );
        let spread = vec![c.clone(), Action::click(2), c.clone(), Action::click(3), c.clone()];
        assert_eq!(termination_check(&spread, &c, 6, 10, 3, false), None);
        assert_eq!(
            termination_check(&spread, &c, 6, 10, 3, true),
            Some(TerminationReason::RepeatedAction)
        );
    }

    #[test]
    fn agent_names_round_trip() {
        for a in AgentKind::ALL {
            assert_eq!(a.as_str().parse::<AgentKind>().unwrap(), a);
        }
        assert!("greedy".parse::<AgentKind>().is_err());
    }
}
