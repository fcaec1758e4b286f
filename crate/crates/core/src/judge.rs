//! Scoring: how promising a simulated trajectory, a single candidate or a
//! real page is, on the scale 1.0 (task complete), 0.5 (on track), 0.

use std::sync::Arc;

use thiserror::Error;

use crate::action::Action;
use crate::env::{oracle_distance, EnvState, GoalSpec, SiteGraph};
use crate::llm::heuristic::overlap;
use crate::llm::prompts::{judge_request, JudgeSubject};
use crate::llm::{Gateway, LlmError, LlmSettings};
use crate::types::{ScoredTrajectory, SimulatedTrajectory};
use crate::wm::SimContext;

pub const DEFAULT_JUDGE_SAMPLES: u32 = 3;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judgement lacks a {0:?} line")]
    MalformedJudgement(&'static str),
    #[error("all {0} judge samples were malformed")]
    AllSamplesMalformed(u32),
    #[error("judge needs at least one sample")]
    ZeroSamples,
    #[error("the oracle judge needs the true environment state")]
    MissingState,
    #[error("task {0:?} has no goal in the site graph")]
    UnknownTask(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn field<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines().find_map(|line| {
        let line = line.trim().trim_start_matches(['*', '-', ' ']);
        let head = line.get(..label.len())?;
        head.eq_ignore_ascii_case(label).then(|| line[label.len()..].trim())
    })
}

fn word(value: &str) -> String {
    value.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase()
}

/// Maps a reward-model reply to 1.0, 0.5 or 0.
pub fn parse_judgement(text: &str) -> Result<f64, JudgeError> {
    let status = field(text, "status:").ok_or(JudgeError::MalformedJudgement("Status:"))?;
    let track = field(text, "on the right track to success:")
        .ok_or(JudgeError::MalformedJudgement("On the right track to success:"))?;
    let status = word(status);
    let track = word(track);
    match (status.as_str(), track.as_str()) {
        ("success", _) => Ok(1.0),
        ("failure", "yes") => Ok(0.5),
        ("failure", "no") => Ok(0.0),
        ("failure", _) => Err(JudgeError::MalformedJudgement("On the right track to success:")),
        _ => Err(JudgeError::MalformedJudgement("Status:")),
    }
}

pub trait Judge: Send + Sync {
    /// Scores a simulated trajectory rooted at `ctx`.
    fn score_trajectory(
        &self,
        ctx: &SimContext<'_>,
        traj: &SimulatedTrajectory,
        n: u32,
    ) -> Result<ScoredTrajectory, JudgeError>;

    /// Scores a candidate directly, without simulating it.
    fn score_action(&self, ctx: &SimContext<'_>, action: &Action, n: u32) -> Result<ScoredTrajectory, JudgeError>;

    /// Value of the real page in `ctx`; `root` is the state a search started
    /// from.
    fn score_state(&self, ctx: &SimContext<'_>, root: Option<&EnvState>, n: u32) -> Result<f64, JudgeError>;
}

/// Judge with access to the site graph: 1.0 when the end state satisfies the
/// goal, 0.5 when the search distance to the goal strictly decreased, else 0.
#[derive(Debug, Clone)]
pub struct OracleJudge {
    graph: Arc<SiteGraph>,
}

impl OracleJudge {
    pub fn new(graph: Arc<SiteGraph>) -> Self {
        Self { graph }
    }

    fn goal(&self, ctx: &SimContext<'_>) -> Result<&GoalSpec, JudgeError> {
        self.graph
            .goal_for(ctx.task)
            .ok_or_else(|| JudgeError::UnknownTask(ctx.task.id.clone()))
    }

    fn value(&self, goal: &GoalSpec, end: &EnvState, root: &EnvState) -> f64 {
        if goal.is_satisfied(end) {
            1.0
        } else if oracle_distance(&self.graph, end, goal) < oracle_distance(&self.graph, root, goal) {
            0.5
        } else {
            0.0
        }
    }
}

impl Judge for OracleJudge {
    fn score_trajectory(
        &self,
        ctx: &SimContext<'_>,
        traj: &SimulatedTrajectory,
        n: u32,
    ) -> Result<ScoredTrajectory, JudgeError> {
        if n == 0 {
            return Err(JudgeError::ZeroSamples);
        }
        let goal = self.goal(ctx)?;
        let root = ctx.state.ok_or(JudgeError::MissingState)?;
        let mut end = match traj.steps.last() {
            Some(step) => step.latent.clone().ok_or(JudgeError::MissingState)?,
            None => root.clone(),
        };
        if let Some(stop) = traj
            .steps
            .last()
            .and_then(|s| s.imagined.as_ref())
            .filter(|a| a.is_stop())
        {
            end = self.graph.step(&end, stop).0;
        }
        let v = self.value(goal, &end, root);
        Ok(ScoredTrajectory::new(traj.clone(), vec![v]).expect("one sample"))
    }

    /// Without simulation the oracle only knows whether stopping now would
    /// succeed and whether the targeted element mentions the task.
    fn score_action(&self, ctx: &SimContext<'_>, action: &Action, n: u32) -> Result<ScoredTrajectory, JudgeError> {
        if n == 0 {
            return Err(JudgeError::ZeroSamples);
        }
        let goal = self.goal(ctx)?;
        let state = ctx.state.ok_or(JudgeError::MissingState)?;
        let v = match action {
            Action::Stop { answer } => {
                if goal.holds_on_stop(state, answer.as_deref()) {
                    1.0
                } else {
                    0.0
                }
            }
            a => {
                let text = a
                    .element()
                    .and_then(|id| ctx.obs.find(id))
                    .map(|e| e.text_content.as_str())
                    .unwrap_or("");
                if overlap(&ctx.task.instruction, text) > 0 {
                    0.5
                } else {
                    0.0
                }
            }
        };
        let traj = SimulatedTrajectory::unsimulated(ctx.obs.digest(), action.clone());
        Ok(ScoredTrajectory::new(traj, vec![v]).expect("one sample"))
    }

    fn score_state(&self, ctx: &SimContext<'_>, root: Option<&EnvState>, n: u32) -> Result<f64, JudgeError> {
        if n == 0 {
            return Err(JudgeError::ZeroSamples);
        }
        let goal = self.goal(ctx)?;
        let state = ctx.state.ok_or(JudgeError::MissingState)?;
        Ok(self.value(goal, state, root.unwrap_or(state)))
    }
}

/// Judge that prompts a chat model `n` times and averages the parseable
/// replies. Samples differ only in the order of the screenshot refs, which
/// keeps temperature-zero judging reproducible.
#[derive(Debug, Clone)]
pub struct LlmJudge {
    gateway: Arc<Gateway>,
    settings: LlmSettings,
}

impl LlmJudge {
    pub fn new(gateway: Arc<Gateway>, settings: LlmSettings) -> Self {
        Self { gateway, settings }
    }

    fn samples(&self, ctx: &SimContext<'_>, subject: JudgeSubject<'_>, n: u32) -> Result<Vec<f64>, JudgeError> {
        if n == 0 {
            return Err(JudgeError::ZeroSamples);
        }
        let mut shots: Vec<String> = ctx.screenshots.to_vec();
        if shots.is_empty() {
            shots.extend(ctx.obs.image_ref.clone());
        }
        let mut out = Vec::with_capacity(n as usize);
        for i in 0..n as usize {
            let mut order = shots.clone();
            if !order.is_empty() {
                let shift = i % order.len();
                order.rotate_left(shift);
            }
            let req = judge_request(&self.settings, ctx.task, ctx.history, ctx.obs, order, subject)?;
            let reply = self.gateway.complete(&req)?;
            match parse_judgement(reply.first().map(String::as_str).unwrap_or("")) {
                Ok(v) => out.push(v),
                Err(e) => tracing::warn!(sample = i, error = %e, "dropping malformed judgement"),
            }
        }
        if out.is_empty() {
            return Err(JudgeError::AllSamplesMalformed(n));
        }
        Ok(out)
    }
}

impl Judge for LlmJudge {
    fn score_trajectory(
        &self,
        ctx: &SimContext<'_>,
        traj: &SimulatedTrajectory,
        n: u32,
    ) -> Result<ScoredTrajectory, JudgeError> {
        let changes: Vec<_> = traj.changes().cloned().collect();
        let final_action = traj.steps.last().and_then(|s| s.imagined.as_ref());
        let samples = self.samples(
            ctx,
            JudgeSubject::Simulated {
                changes: &changes,
                final_action,
            },
            n,
        )?;
        Ok(ScoredTrajectory::new(traj.clone(), samples).expect("non-empty"))
    }

    fn score_action(&self, ctx: &SimContext<'_>, action: &Action, n: u32) -> Result<ScoredTrajectory, JudgeError> {
        let samples = self.samples(ctx, JudgeSubject::Action(action), n)?;
        let traj = SimulatedTrajectory::unsimulated(ctx.obs.digest(), action.clone());
        Ok(ScoredTrajectory::new(traj, samples).expect("non-empty"))
    }

    fn score_state(&self, ctx: &SimContext<'_>, _root: Option<&EnvState>, n: u32) -> Result<f64, JudgeError> {
        let samples = self.samples(ctx, JudgeSubject::Current, n)?;
        Ok(samples.iter().sum::<f64>() / samples.len() as f64)
    }
}
