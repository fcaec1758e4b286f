use std::thread;

use super::{argmax, PlanError, Planner, StepDecision};
use crate::action::Action;
use crate::propose::{get_candidates, propose_one, self_refine};
use crate::types::ScoredTrajectory;
use crate::wm::{simulate, SimContext};

/// Builds the decision record: the highest aggregate wins, ties go to the
/// lowest index. Panics if `scored` is empty or shorter than `refined`.
pub fn decide(candidates: Vec<Action>, refined: Vec<Action>, scored: Vec<ScoredTrajectory>) -> StepDecision {
    assert_eq!(refined.len(), scored.len(), "one score per refined candidate");
    let aggregates: Vec<f64> = scored.iter().map(|s| s.aggregate).collect();
    let chosen_index = argmax(&aggregates).expect("at least one candidate");
    StepDecision {
        chosen: refined[chosen_index].clone(),
        low_confidence: aggregates.iter().all(|&a| a == 0.0),
        candidates,
        refined,
        scored,
        chosen_index,
    }
}

impl Planner {
    fn candidates(&self, ctx: &SimContext<'_>) -> Result<(Vec<Action>, Vec<Action>), PlanError> {
        let cfg = &self.config;
        let candidates = get_candidates(&self.gateway, &cfg.llm, ctx.task, ctx.obs, ctx.history, cfg.k, cfg.m)?;
        let refined = if cfg.refine {
            self_refine(&self.gateway, &cfg.llm, ctx.task, ctx.obs, ctx.history, &candidates)
        } else {
            candidates.clone()
        };
        Ok((candidates, refined))
    }

    /// Scores every refined candidate on its own thread, preserving order.
    fn score_all<F>(&self, refined: &[Action], score: F) -> Result<Vec<ScoredTrajectory>, PlanError>
    where
        F: Fn(&Action) -> Result<ScoredTrajectory, PlanError> + Sync,
    {
        if refined.len() == 1 {
            return Ok(vec![score(&refined[0])?]);
        }
        thread::scope(|s| {
            let handles: Vec<_> = refined.iter().map(|a| s.spawn(|| score(a))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scoring thread panicked"))
                .collect()
        })
    }

    /// One planning step: propose, refine, simulate and score each candidate,
    /// pick the best.
    pub fn plan_step(&self, ctx: &SimContext<'_>) -> Result<StepDecision, PlanError> {
        let (candidates, refined) = self.candidates(ctx)?;
        let horizon = self.config.sim.horizon;
        let n = self.config.judge_samples;
        let scored = self.score_all(&refined, |a| {
            let traj = simulate(self.world_model.as_ref(), ctx, a, horizon)?;
            Ok(self.judge.score_trajectory(ctx, &traj, n)?)
        })?;
        Ok(decide(candidates, refined, scored))
    }

    /// Like [`plan_step`](Self::plan_step) but the judge scores each
    /// candidate directly, with no simulation.
    pub fn rerank_only_step(&self, ctx: &SimContext<'_>) -> Result<StepDecision, PlanError> {
        let (candidates, refined) = self.candidates(ctx)?;
        let n = self.config.judge_samples;
        let scored = self.score_all(&refined, |a| Ok(self.judge.score_action(ctx, a, n)?))?;
        Ok(decide(candidates, refined, scored))
    }

    /// A single proposal, executed as is.
    pub fn reactive_step(&self, ctx: &SimContext<'_>) -> Result<Action, PlanError> {
        Ok(propose_one(
            &self.gateway,
            &self.config.llm,
            ctx.task,
            ctx.obs,
            ctx.history,
        )?)
    }
}
