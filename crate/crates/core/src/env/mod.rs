//! Deterministic website simulator: site graphs, the stateful environment
//! agents act in, and the search oracle.

mod fixtures;
mod goal;
mod graph;
mod search;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixtures::{bundled_site, bundled_site_source, bundled_sites, BUNDLED_SITE_NAMES};
pub use goal::{AnswerMatcher, GoalKind, GoalSpec, Predicate};
pub use graph::{ElementTemplate, PageTemplate, SiteGraph, SiteLoadError, StepKind, Transition, TransitionEffect};
pub use search::{oracle_distance, shortest_path, Distance};

use crate::action::Action;
use crate::observation::Observation;
use crate::types::TaskInstance;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stopped {
    pub answer: Option<String>,
}

/// Full simulator state, including variables the agent cannot see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub page: String,
    pub bindings: BTreeMap<String, String>,
    /// Signatures of every executed action, in order.
    pub history: Vec<String>,
    pub irreversible_count: u32,
    /// Pages shown so far, starting with the start page.
    pub visited: Vec<String>,
    pub stopped: Option<Stopped>,
    /// Message shown after an action that had no effect.
    pub error_banner: Option<String>,
}

/// Loads and validates a site-graph file.
pub fn load_site(path: impl AsRef<std::path::Path>) -> Result<SiteGraph, SiteLoadError> {
    SiteGraph::load(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("environment has not been reset")]
    NotReset,
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown page {0:?}")]
    UnknownPage(String),
    #[error("replay refuses to cross irreversible action {0}")]
    IrreversibleReplay(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub terminal: bool,
    /// 1 only on a terminal step whose stop satisfied the goal.
    pub reward: u8,
}

/// An environment an agent interacts with. `snapshot` exposes the true state
/// for oracle components; agents never read it directly.
pub trait Environment {
    fn reset(&mut self, task: &TaskInstance) -> Result<Observation, EnvError>;
    fn execute(&mut self, action: &Action) -> Result<StepOutcome, EnvError>;
    /// Reset to the bound task, then execute `actions` in order.
    fn replay(&mut self, actions: &[Action]) -> Result<Observation, EnvError>;
    fn observe(&self) -> Result<Observation, EnvError>;
    fn snapshot(&self) -> Option<EnvState>;
    /// Real `execute` calls since construction, including those made by
    /// `replay`.
    fn execute_count(&self) -> u64;
}

/// Simulator instance over one site graph. Single-writer.
#[derive(Debug, Clone)]
pub struct SiteEnv {
    graph: Arc<SiteGraph>,
    task: Option<TaskInstance>,
    state: Option<EnvState>,
    strict_irreversible: bool,
    execute_calls: u64,
}

impl SiteEnv {
    pub fn new(graph: Arc<SiteGraph>) -> Self {
        Self {
            graph,
            task: None,
            state: None,
            strict_irreversible: false,
            execute_calls: 0,
        }
    }

    /// Make `replay` refuse to re-execute irreversible transitions.
    pub fn with_strict_irreversible(mut self, strict: bool) -> Self {
        self.strict_irreversible = strict;
        self
    }

    pub fn graph(&self) -> &Arc<SiteGraph> {
        &self.graph
    }

    pub fn task(&self) -> Option<&TaskInstance> {
        self.task.as_ref()
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    fn goal(&self) -> Result<&GoalSpec, EnvError> {
        let task = self.task.as_ref().ok_or(EnvError::NotReset)?;
        self.graph
            .goal_for(task)
            .ok_or_else(|| EnvError::UnknownTask(task.id.clone()))
    }
}

impl Environment for SiteEnv {
    fn reset(&mut self, task: &TaskInstance) -> Result<Observation, EnvError> {
        if self.graph.goal_for(task).is_none() {
            return Err(EnvError::UnknownTask(task.id.clone()));
        }
        let state = self
            .graph
            .initial_state(&task.start_page)
            .ok_or_else(|| EnvError::UnknownPage(task.start_page.clone()))?;
        let obs = self.graph.observe(&state);
        self.task = Some(task.clone());
        self.state = Some(state);
        Ok(obs)
    }

    fn execute(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        let (next, _) = self.graph.step(state, action);
        self.execute_calls += 1;
        let terminal = next.stopped.is_some();
        let reward = u8::from(terminal && self.goal()?.is_satisfied(&next));
        let observation = self.graph.observe(&next);
        self.state = Some(next);
        Ok(StepOutcome {
            observation,
            terminal,
            reward,
        })
    }

    fn replay(&mut self, actions: &[Action]) -> Result<Observation, EnvError> {
        let task = self.task.clone().ok_or(EnvError::NotReset)?;
        let mut obs = self.reset(&task)?;
        for action in actions {
            if self.strict_irreversible {
                let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
                if let Some(i) = self.graph.lookup(state, action) {
                    if self.graph.transitions()[i].effect.irreversible {
                        return Err(EnvError::IrreversibleReplay(action.signature()));
                    }
                }
            }
            obs = self.execute(action)?.observation;
        }
        Ok(obs)
    }

    fn observe(&self) -> Result<Observation, EnvError> {
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        Ok(self.graph.observe(state))
    }

    fn snapshot(&self) -> Option<EnvState> {
        self.state.clone()
    }

    fn execute_count(&self) -> u64 {
        self.execute_calls
    }
}
