use std::sync::Arc;
use std::time::Instant;

use super::episode::{empty_record, scoreboard};
use super::{AgentKind, EpisodeOutcome, PlanError, Planner, RunRecord, TerminationReason};
use crate::action::Action;
use crate::env::{EnvState, Environment, SiteEnv};
use crate::propose::get_candidates;
use crate::types::TaskInstance;
use crate::wm::SimContext;

#[derive(Debug, Clone)]
struct Node {
    path: Vec<Action>,
    value: f64,
    /// Insertion order, for deterministic tie-breaking.
    seq: usize,
}

impl Node {
    /// Higher value first, then deeper, then older.
    fn better_than(&self, other: &Node) -> bool {
        match self.value.partial_cmp(&other.value) {
            Some(std::cmp::Ordering::Greater) => true,
            Some(std::cmp::Ordering::Less) => false,
            _ => match self.path.len().cmp(&other.path.len()) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => self.seq < other.seq,
            },
        }
    }
}

enum SearchEnd {
    Solved(Vec<Action>),
    Exhausted,
    OutOfBudget,
}

/// Best-first search that expands nodes by executing actions for real. A
/// node's state is restored by resetting the environment and replaying its
/// path, and every such execute is counted. The record's actions are the
/// solving path, or the best node's path when no solution was found.
pub fn tree_search_episode(planner: &Planner, env: &mut SiteEnv, task: &TaskInstance) -> RunRecord {
    let started = Instant::now();
    let executes_before = env.execute_count();
    let mut record = empty_record(planner, AgentKind::TreeSearch, task);
    let mut best = Vec::new();
    match search(planner, env, task, &mut best) {
        Ok(SearchEnd::Solved(path)) => {
            record.actions = path;
            record.termination = Some(TerminationReason::StopIssued);
        }
        Ok(SearchEnd::Exhausted) => record.actions = best,
        Ok(SearchEnd::OutOfBudget) => {
            record.actions = best;
            record.outcome = EpisodeOutcome::BudgetExhausted;
        }
        Err(e) => {
            tracing::warn!(task = %task.id, error = %e, "tree search failed");
            record.actions = best;
            record.outcome = EpisodeOutcome::Error;
            record.error = Some(e.to_string());
        }
    }
    record.real_action_count = env.execute_count() - executes_before;

    // Score the reported path on a separate instance so the counts above
    // only reflect the search itself.
    let mut check = SiteEnv::new(Arc::clone(env.graph()));
    let final_state = check
        .reset(task)
        .and_then(|_| check.replay(&record.actions))
        .ok()
        .and_then(|_| check.snapshot());
    let board = scoreboard(&check, task, final_state.as_ref());
    record.reward = board.reward;
    record.milestones_satisfied = board.milestones;
    record.irreversible_count = board.irreversible;
    record.wall_clock_seconds = started.elapsed().as_secs_f64();
    record
}

fn search(
    planner: &Planner,
    env: &mut SiteEnv,
    task: &TaskInstance,
    best_path: &mut Vec<Action>,
) -> Result<SearchEnd, PlanError> {
    let cfg = &planner.config;
    let tree = cfg.tree.unwrap_or_default();
    let max_depth = tree.max_depth.min(task.max_steps.min(cfg.max_steps) as usize);
    let root_obs = env.reset(task)?;
    if tree.expansion_budget == 0 {
        return Ok(SearchEnd::OutOfBudget);
    }
    let root_state: Option<EnvState> = env.snapshot();
    let root_shots: Vec<String> = root_obs.image_ref.iter().cloned().collect();
    let root_value = planner.judge.score_state(
        &SimContext {
            task,
            obs: &root_obs,
            history: &[],
            screenshots: &root_shots,
            state: root_state.as_ref(),
        },
        root_state.as_ref(),
        cfg.judge_samples,
    )?;
    let mut frontier = vec![Node {
        path: Vec::new(),
        value: root_value,
        seq: 0,
    }];
    let mut best = frontier[0].clone();
    let mut seq = 1;
    let mut expansions = 0;

    while !frontier.is_empty() {
        let pick = (0..frontier.len())
            .reduce(|a, b| if frontier[b].better_than(&frontier[a]) { b } else { a })
            .expect("non-empty");
        let node = frontier.swap_remove(pick);
        if node.path.len() >= max_depth {
            continue;
        }
        if expansions >= tree.expansion_budget {
            *best_path = best.path;
            return Ok(SearchEnd::OutOfBudget);
        }
        expansions += 1;

        let obs = env.replay(&node.path)?;
        let proposals = get_candidates(
            &planner.gateway,
            &cfg.llm,
            task,
            &obs,
            &node.path,
            tree.branching,
            cfg.m,
        )?;
        for (i, action) in proposals.into_iter().enumerate() {
            if i > 0 {
                env.replay(&node.path)?;
            }
            let outcome = env.execute(&action)?;
            let mut path = node.path.clone();
            path.push(action);
            if outcome.terminal {
                if outcome.reward == 1 {
                    return Ok(SearchEnd::Solved(path));
                }
                continue;
            }
            let state = env.snapshot();
            let shots: Vec<String> = outcome.observation.image_ref.iter().cloned().collect();
            let value = planner.judge.score_state(
                &SimContext {
                    task,
                    obs: &outcome.observation,
                    history: &path,
                    screenshots: &shots,
                    state: state.as_ref(),
                },
                root_state.as_ref(),
                cfg.judge_samples,
            )?;
            let child = Node { path, value, seq };
            seq += 1;
            if child.better_than(&best) {
                best = child.clone();
            }
            frontier.push(child);
        }
    }
    *best_path = best.path;
    Ok(SearchEnd::Exhausted)
}
