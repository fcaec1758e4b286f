//! Planning engine for web agents: candidate actions are simulated with a
//! world model, scored by a judge, and the best one is executed.

pub mod action;
pub mod env;
pub mod judge;
pub mod llm;
pub mod observation;
pub mod plan;
pub mod propose;
pub mod types;
pub mod wm;

pub use action::{parse_action, Action, ActionKind, ActionParseError, ElementId, ScrollDirection};
pub use observation::{render_observation, ElementRecord, Observation, TabInfo};
pub use types::{ScoredTrajectory, SimStep, SimulatedTrajectory, StateChange, TaskInstance};
