use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{termination_check, AgentKind, PlanError, Planner, StepDecision, TerminationReason};
use crate::action::Action;
use crate::env::{EnvState, Environment, SiteEnv};
use crate::types::TaskInstance;
use crate::wm::SimContext;

/// Screenshots kept for the judge.
const SCREENSHOT_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Completed,
    BudgetExhausted,
    Error,
}

/// Everything about one episode needed to audit it and rebuild reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task_id: String,
    pub site: String,
    #[serde(default)]
    pub difficulty: Option<String>,
    pub agent: AgentKind,
    /// False for the no-self-refinement ablation.
    pub refine: bool,
    /// Executed actions; for tree search, the action path of the final node.
    pub actions: Vec<Action>,
    pub decisions: Vec<StepDecision>,
    pub reward: u8,
    pub milestones_satisfied: f64,
    /// Real `execute` calls, including replays.
    pub real_action_count: u64,
    pub simulated_trajectory_count: u64,
    pub irreversible_count: u32,
    /// Harness time only; no model latency is simulated.
    pub wall_clock_seconds: f64,
    pub seed: u64,
    pub config_digest: String,
    pub outcome: EpisodeOutcome,
    #[serde(default)]
    pub termination: Option<TerminationReason>,
    #[serde(default)]
    pub error: Option<String>,
}

impl RunRecord {
    /// Agent name as reported: `mpc`, `mpc_no_refine`, `reactive`, ...
    pub fn agent_label(&self) -> String {
        let refines = matches!(self.agent, AgentKind::Mpc | AgentKind::RerankOnly);
        if refines && !self.refine {
            format!("{}_no_refine", self.agent)
        } else {
            self.agent.to_string()
        }
    }
}

pub(crate) struct Scoreboard {
    pub reward: u8,
    pub milestones: f64,
    pub irreversible: u32,
}

/// Reward, milestone fraction and irreversible count of a final state.
pub(crate) fn scoreboard(env: &SiteEnv, task: &TaskInstance, state: Option<&EnvState>) -> Scoreboard {
    let Some(state) = state else {
        return Scoreboard {
            reward: 0,
            milestones: 0.0,
            irreversible: 0,
        };
    };
    let goal = env.graph().goal_for(task);
    let reward = u8::from(goal.is_some_and(|g| g.is_satisfied(state)));
    let milestones = goal
        .and_then(|g| g.milestone_fraction(state))
        .unwrap_or(f64::from(reward));
    Scoreboard {
        reward,
        milestones,
        irreversible: state.irreversible_count,
    }
}

pub(crate) fn empty_record(planner: &Planner, agent: AgentKind, task: &TaskInstance) -> RunRecord {
    RunRecord {
        task_id: task.id.clone(),
        site: task.site.clone(),
        difficulty: task.difficulty.clone(),
        agent,
        refine: planner.config.refine,
        actions: Vec::new(),
        decisions: Vec::new(),
        reward: 0,
        milestones_satisfied: 0.0,
        real_action_count: 0,
        simulated_trajectory_count: 0,
        irreversible_count: 0,
        wall_clock_seconds: 0.0,
        seed: planner.config.sim.seed,
        config_digest: planner.config.digest(),
        outcome: EpisodeOutcome::Completed,
        termination: None,
        error: None,
    }
}

/// Runs one episode. Failures are reported in the record's `outcome` and
/// `error` fields; the record is always returned.
pub fn run_episode(planner: &Planner, agent: AgentKind, env: &mut SiteEnv, task: &TaskInstance) -> RunRecord {
    if agent == AgentKind::TreeSearch {
        return super::tree_search_episode(planner, env, task);
    }
    let started = Instant::now();
    let executes_before = env.execute_count();
    let mut record = empty_record(planner, agent, task);
    let result = act_loop(planner, agent, env, task, &mut record);
    if let Err(e) = result {
        tracing::warn!(task = %task.id, agent = %agent, error = %e, "episode failed");
        record.outcome = EpisodeOutcome::Error;
        record.error = Some(e.to_string());
    }
    let board = scoreboard(env, task, env.state());
    record.reward = board.reward;
    record.milestones_satisfied = board.milestones;
    record.irreversible_count = board.irreversible;
    record.real_action_count = env.execute_count() - executes_before;
    record.wall_clock_seconds = started.elapsed().as_secs_f64();
    record
}

fn act_loop(
    planner: &Planner,
    agent: AgentKind,
    env: &mut SiteEnv,
    task: &TaskInstance,
    record: &mut RunRecord,
) -> Result<(), PlanError> {
    let cfg = &planner.config;
    let max_steps = task.max_steps.min(cfg.max_steps);
    let mut obs = env.reset(task)?;
    let mut screenshots: Vec<String> = obs.image_ref.iter().cloned().collect();
    let mut step = 0u32;
    loop {
        let state = env.snapshot();
        let ctx = SimContext {
            task,
            obs: &obs,
            history: &record.actions,
            screenshots: &screenshots,
            state: state.as_ref(),
        };
        let action = match agent {
            AgentKind::Mpc | AgentKind::RerankOnly => {
                let decision = if agent == AgentKind::Mpc {
                    planner.plan_step(&ctx)?
                } else {
                    planner.rerank_only_step(&ctx)?
                };
                if agent == AgentKind::Mpc {
                    record.simulated_trajectory_count += decision.scored.len() as u64;
                }
                let chosen = decision.chosen.clone();
                record.decisions.push(decision);
                chosen
            }
            AgentKind::Reactive => planner.reactive_step(&ctx)?,
            AgentKind::TreeSearch => unreachable!("handled by tree_search_episode"),
        };
        tracing::debug!(task = %task.id, step, action = %action, "executing");
        let outcome = env.execute(&action)?;
        step += 1;
        let reason = termination_check(
            &record.actions,
            &action,
            step,
            max_steps,
            cfg.repeat_limit,
            cfg.repeat_cumulative,
        );
        record.actions.push(action);
        if let Some(reason) = reason {
            record.termination = Some(reason);
            return Ok(());
        }
        obs = outcome.observation;
        screenshots.extend(obs.image_ref.clone());
        if screenshots.len() > SCREENSHOT_WINDOW {
            screenshots.drain(..screenshots.len() - SCREENSHOT_WINDOW);
        }
    }
}
