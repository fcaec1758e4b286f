//! World models: predict what an action would change without executing it,
//! and imagine the action that would follow.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{parse_action, Action, ActionParseError};
use crate::env::{shortest_path, EnvState, SiteGraph, StepKind};
use crate::llm::prompts::{proposal_request, world_model_request};
use crate::llm::{Gateway, LlmError, LlmSettings};
use crate::observation::Observation;
use crate::types::{SimStep, SimulatedTrajectory, StateChange, TaskInstance};

pub use crate::llm::prompts::StateRepresentation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: u32,
    pub state_representation: StateRepresentation,
    /// Oracle only: probability that a prediction is the true change.
    pub fidelity: f64,
    /// Oracle only.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 1,
            state_representation: StateRepresentation::ChangeDescription,
            fidelity: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.horizon == 0 {
            return Err(SimulationError::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(SimulationError::InvalidConfig(format!(
                "fidelity {} is outside [0, 1]",
                self.fidelity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("world model reply does not start with \"State changes:\": {0:?}")]
    MalformedPrediction(String),
    #[error("no transition for {action} on page {page:?} and no distractor available")]
    UnknownTransition { page: String, action: String },
    #[error("the oracle world model needs the true environment state")]
    MissingState,
    #[error("task {0:?} has no goal in the site graph")]
    UnknownTask(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Action(#[from] ActionParseError),
}

/// Everything a world model may condition on at the root of a simulation.
#[derive(Debug, Clone, Copy)]
pub struct SimContext<'a> {
    pub task: &'a TaskInstance,
    pub obs: &'a Observation,
    /// Actions already executed in the real environment.
    pub history: &'a [Action],
    /// Recent real screenshot refs, oldest first; the last one belongs to
    /// `obs`.
    pub screenshots: &'a [String],
    /// True state behind `obs`. Only oracle components read it.
    pub state: Option<&'a EnvState>,
}

pub trait WorldModel: Send + Sync {
    /// Predicts the change `action` causes after the `prior` simulated steps.
    /// Returns the change and, for oracle models, the resulting belief state.
    fn predict_state_change(
        &self,
        ctx: &SimContext<'_>,
        prior: &[SimStep],
        action: &Action,
        step_index: u32,
    ) -> Result<(StateChange, Option<EnvState>), SimulationError>;

    /// Imagines the next action after the simulated steps in `prior`.
    fn imagine_action(&self, ctx: &SimContext<'_>, prior: &[SimStep]) -> Result<Action, SimulationError>;
}

/// Rolls `candidate` forward for up to `horizon` predicted changes. Stops
/// early after a `stop` candidate or when the imagined action is `stop`; the
/// imagined stop stays on the last step.
pub fn simulate(
    wm: &dyn WorldModel,
    ctx: &SimContext<'_>,
    candidate: &Action,
    horizon: u32,
) -> Result<SimulatedTrajectory, SimulationError> {
    if horizon == 0 {
        return Err(SimulationError::InvalidConfig("horizon must be at least 1".into()));
    }
    let mut steps: Vec<SimStep> = Vec::with_capacity(horizon as usize);
    let mut action = candidate.clone();
    for i in 1..=horizon {
        let (change, latent) = wm.predict_state_change(ctx, &steps, &action, i)?;
        steps.push(SimStep {
            change,
            imagined: None,
            latent,
        });
        if action.is_stop() || i == horizon {
            break;
        }
        let next = wm.imagine_action(ctx, &steps)?;
        let halt = next.is_stop();
        steps.last_mut().expect("just pushed").imagined = Some(next.clone());
        if halt {
            break;
        }
        action = next;
    }
    Ok(SimulatedTrajectory {
        root: ctx.obs.digest(),
        candidate: candidate.clone(),
        steps,
        horizon,
    })
}

/// Deterministic world model backed by the site graph. With probability
/// `fidelity` a prediction is the true change; otherwise it is the
/// description of a different transition and the belief state follows that
/// transition instead. Every draw is seeded from the config seed, the root
/// observation, the simulated action prefix and the step index.
#[derive(Debug, Clone)]
pub struct OracleWorldModel {
    graph: Arc<SiteGraph>,
    fidelity: f64,
    seed: u64,
    representation: StateRepresentation,
}

impl OracleWorldModel {
    pub fn new(graph: Arc<SiteGraph>, cfg: &SimConfig) -> Result<Self, SimulationError> {
        cfg.validate()?;
        Ok(Self {
            graph,
            fidelity: cfg.fidelity,
            seed: cfg.seed,
            representation: cfg.state_representation,
        })
    }

    fn rng(&self, ctx: &SimContext<'_>, prior: &[SimStep], action: &Action, step_index: u32) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(ctx.obs.digest().as_bytes());
        for step in prior {
            h.update(step.change.producing_action.signature().as_bytes());
            h.update([0]);
        }
        h.update(action.signature().as_bytes());
        h.update(step_index.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn base_state<'a>(ctx: &'a SimContext<'_>, prior: &'a [SimStep]) -> Result<&'a EnvState, SimulationError> {
        match prior.last() {
            Some(step) => step.latent.as_ref().ok_or(SimulationError::MissingState),
            None => ctx.state.ok_or(SimulationError::MissingState),
        }
    }

    fn describe(&self, text: String, latent: &EnvState) -> String {
        match self.representation {
            StateRepresentation::ChangeDescription => text,
            StateRepresentation::FullHtml => self.graph.render_html(latent),
            StateRepresentation::AccessibilityTree => self.graph.render_accessibility_tree(latent),
        }
    }

    /// The true change of `action` in `state`, as the oracle reports it.
    pub fn true_description(&self, state: &EnvState, action: &Action) -> (String, EnvState) {
        let (next, kind) = self.graph.step(state, action);
        let text = match kind {
            StepKind::Transition(i) => self.graph.transitions()[i].effect.canonical_change_description.clone(),
            StepKind::Stopped => match action {
                Action::Stop { answer: Some(a) } => {
                    format!("The agent stops with the answer '{a}' and the task ends.")
                }
                _ => "The agent stops and the task ends.".to_string(),
            },
            StepKind::Undefined if state.stopped.is_some() => {
                "Nothing changes; the task has already ended.".to_string()
            }
            StepKind::Undefined => format!("Nothing changes on the page; the action {action} is not available here."),
        };
        (text, next)
    }
}

impl WorldModel for OracleWorldModel {
    fn predict_state_change(
        &self,
        ctx: &SimContext<'_>,
        prior: &[SimStep],
        action: &Action,
        step_index: u32,
    ) -> Result<(StateChange, Option<EnvState>), SimulationError> {
        let base = Self::base_state(ctx, prior)?;
        let (true_text, true_next) = self.true_description(base, action);
        let mut rng = self.rng(ctx, prior, action, step_index);
        // Stops and actions after a stop are always predicted faithfully.
        let faithful = action.is_stop() || base.stopped.is_some() || rng.random_bool(self.fidelity);
        let (text, latent) = if faithful {
            (true_text, true_next)
        } else {
            let distractors: Vec<_> = self
                .graph
                .transitions()
                .iter()
                .filter(|t| t.effect.canonical_change_description != true_text)
                .collect();
            if distractors.is_empty() {
                return Err(SimulationError::UnknownTransition {
                    page: base.page.clone(),
                    action: action.signature(),
                });
            }
            let t = distractors[rng.random_range(0..distractors.len())];
            let mut latent = base.clone();
            latent.history.push(action.signature());
            latent.error_banner = None;
            self.graph.apply_effect(&mut latent, &t.effect);
            (t.effect.canonical_change_description.clone(), latent)
        };
        let change = StateChange {
            description: self.describe(text, &latent),
            step_index,
            producing_action: action.clone(),
        };
        Ok((change, Some(latent)))
    }

    /// First action of a shortest path to the goal from the belief state, or
    /// `stop []` when no path exists.
    fn imagine_action(&self, ctx: &SimContext<'_>, prior: &[SimStep]) -> Result<Action, SimulationError> {
        let state = Self::base_state(ctx, prior)?;
        let goal = self
            .graph
            .goal_for(ctx.task)
            .ok_or_else(|| SimulationError::UnknownTask(ctx.task.id.clone()))?;
        Ok(shortest_path(&self.graph, state, goal)
            .and_then(|p| p.into_iter().next())
            .unwrap_or_else(|| Action::stop(None)))
    }
}

/// Splits a world-model reply into its description.
pub fn parse_prediction(text: &str) -> Result<String, SimulationError> {
    const MARKER: &str = "state changes:";
    let trimmed = text.trim_start();
    let head = trimmed.get(..MARKER.len()).unwrap_or("");
    if !head.eq_ignore_ascii_case(MARKER) {
        return Err(SimulationError::MalformedPrediction(text.chars().take(80).collect()));
    }
    let rest = trimmed[MARKER.len()..].trim();
    if rest.is_empty() {
        return Err(SimulationError::MalformedPrediction(text.chars().take(80).collect()));
    }
    Ok(rest.to_string())
}

/// World model that prompts a chat model.
#[derive(Debug, Clone)]
pub struct LlmWorldModel {
    gateway: Arc<Gateway>,
    settings: LlmSettings,
    representation: StateRepresentation,
}

impl LlmWorldModel {
    pub fn new(gateway: Arc<Gateway>, settings: LlmSettings, representation: StateRepresentation) -> Self {
        Self {
            gateway,
            settings,
            representation,
        }
    }
}

fn prior_changes(prior: &[SimStep]) -> Vec<StateChange> {
    prior.iter().map(|s| s.change.clone()).collect()
}

impl WorldModel for LlmWorldModel {
    fn predict_state_change(
        &self,
        ctx: &SimContext<'_>,
        prior: &[SimStep],
        action: &Action,
        step_index: u32,
    ) -> Result<(StateChange, Option<EnvState>), SimulationError> {
        let req = world_model_request(
            &self.settings,
            ctx.obs,
            &prior_changes(prior),
            action,
            self.representation,
        )?;
        let reply = self.gateway.complete(&req)?;
        let description = parse_prediction(reply.first().map(String::as_str).unwrap_or(""))?;
        Ok((
            StateChange {
                description,
                step_index,
                producing_action: action.clone(),
            },
            None,
        ))
    }

    fn imagine_action(&self, ctx: &SimContext<'_>, prior: &[SimStep]) -> Result<Action, SimulationError> {
        let mut history = ctx.history.to_vec();
        history.extend(prior.iter().map(|s| s.change.producing_action.clone()));
        let req = proposal_request(&self.settings, ctx.task, ctx.obs, &history, &prior_changes(prior), 1)?;
        let reply = self.gateway.complete(&req)?;
        Ok(parse_action(reply.first().map(String::as_str).unwrap_or(""))?)
    }
}
