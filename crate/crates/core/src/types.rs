//! Task and trajectory types shared by the world models, judges and planners.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::env::EnvState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    /// Name of the site graph the task belongs to.
    #[serde(default)]
    pub site: String,
    pub instruction: String,
    #[serde(default)]
    pub instruction_image_refs: Vec<String>,
    pub start_page: String,
    pub max_steps: u32,
    /// Key into the site graph's goals; defaults to the task id.
    #[serde(default)]
    pub goal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
}

/// Natural-language description of what one action changed on the page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub description: String,
    /// 1-based position within the simulated trajectory.
    pub step_index: u32,
    pub producing_action: Action,
}

/// One simulated step: the predicted change and, unless the trajectory ends
/// here, the action imagined next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStep {
    pub change: StateChange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imagined: Option<Action>,
    /// Ground-truth-shaped belief state. Only oracle world models fill it;
    /// oracle judges read it.
    #[serde(skip)]
    pub latent: Option<EnvState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrajectory {
    /// Digest of the observation the simulation started from.
    pub root: String,
    pub candidate: Action,
    pub steps: Vec<SimStep>,
    pub horizon: u32,
}

impl SimulatedTrajectory {
    /// A trajectory with no simulated steps, used when candidates are judged
    /// directly.
    pub fn unsimulated(root: String, candidate: Action) -> Self {
        Self {
            root,
            candidate,
            steps: Vec::new(),
            horizon: 1,
        }
    }

    pub fn changes(&self) -> impl Iterator<Item = &StateChange> {
        self.steps.iter().map(|s| &s.change)
    }

    /// Candidate followed by every imagined action, in order.
    pub fn actions(&self) -> Vec<&Action> {
        std::iter::once(&self.candidate)
            .chain(self.steps.iter().filter_map(|s| s.imagined.as_ref()))
            .collect()
    }

    /// Checks the shape invariants: at most `horizon` changes, the first
    /// change produced by the candidate, each change produced by the action
    /// imagined in the previous step, and only the last step may lack an
    /// imagined action.
    pub fn is_well_formed(&self) -> bool {
        if self.horizon == 0 || self.steps.len() > self.horizon as usize {
            return false;
        }
        let mut expected = &self.candidate;
        for (i, step) in self.steps.iter().enumerate() {
            if &step.change.producing_action != expected
                || step.change.step_index as usize != i + 1
                || step.change.description.trim().is_empty()
            {
                return false;
            }
            let last = i + 1 == self.steps.len();
            match &step.imagined {
                Some(next) => expected = next,
                None if last => {}
                None => return false,
            }
        }
        true
    }
}

/// Judge samples for one trajectory; `aggregate` is their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    pub trajectory: SimulatedTrajectory,
    pub samples: Vec<f64>,
    pub aggregate: f64,
}

impl ScoredTrajectory {
    /// Returns `None` when `samples` is empty.
    pub fn new(trajectory: SimulatedTrajectory, samples: Vec<f64>) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let aggregate = samples.iter().sum::<f64>() / samples.len() as f64;
        Some(Self {
            trajectory,
            samples,
            aggregate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn change(i: u32, a: Action) -> StateChange {
        StateChange {
            description: format!("change {i}"),
            step_index: i,
            producing_action: a,
        }
    }

    #[test]
    fn aggregate_is_the_mean() {
        let t = SimulatedTrajectory::unsimulated("r".into(), Action::click(1));
        let s = ScoredTrajectory::new(t.clone(), vec![1.0, 0.5, 0.0]).unwrap();
        assert_eq!(s.aggregate, 0.5);
        assert!(ScoredTrajectory::new(t, vec![]).is_none());
    }

    #[test]
    fn well_formed_two_step_trajectory() {
        let t = SimulatedTrajectory {
            root: "r".into(),
            candidate: Action::click(1),
            steps: vec![
                SimStep {
                    change: change(1, Action::click(1)),
                    imagined: Some(Action::click(2)),
                    latent: None,
                },
                SimStep {
                    change: change(2, Action::click(2)),
                    imagined: None,
                    latent: None,
                },
            ],
            horizon: 2,
        };
        assert!(t.is_well_formed());
        assert_eq!(t.actions(), vec![&Action::click(1), &Action::click(2)]);

        let mut broken = t.clone();
        broken.steps[0].imagined = None;
        assert!(!broken.is_well_formed());
        let mut too_long = t;
        too_long.horizon = 1;
        assert!(!too_long.is_well_formed());
    }
}
