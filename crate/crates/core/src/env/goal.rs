use serde::{Deserialize, Serialize};

use super::EnvState;
use crate::action::normalize_whitespace;

/// A condition over an environment state, used for transition guards, goal
/// conditions and milestones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    AtPage(String),
    /// The page has been shown at some point during the episode.
    Visited(String),
    VarEquals {
        var: String,
        value: String,
    },
    VarNotEquals {
        var: String,
        value: String,
    },
}

impl Predicate {
    pub fn holds(&self, state: &EnvState) -> bool {
        match self {
            Predicate::AtPage(page) => &state.page == page,
            Predicate::Visited(page) => state.visited.iter().any(|p| p == page),
            Predicate::VarEquals { var, value } => state.bindings.get(var) == Some(value),
            Predicate::VarNotEquals { var, value } => state.bindings.get(var) != Some(value),
        }
    }

    pub(crate) fn referenced_page(&self) -> Option<&str> {
        match self {
            Predicate::AtPage(p) | Predicate::Visited(p) => Some(p),
            _ => None,
        }
    }

    pub(crate) fn referenced_var(&self) -> Option<&str> {
        match self {
            Predicate::VarEquals { var, .. } | Predicate::VarNotEquals { var, .. } => Some(var),
            _ => None,
        }
    }
}

/// Answer comparison after lowercasing and whitespace collapsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMatcher {
    Exact(String),
    Contains(String),
}

impl AnswerMatcher {
    pub fn matches(&self, answer: Option<&str>) -> bool {
        let Some(answer) = answer else {
            return false;
        };
        let answer = normalize_answer(answer);
        match self {
            AnswerMatcher::Exact(expected) => answer == normalize_answer(expected),
            AnswerMatcher::Contains(expected) => answer.contains(&normalize_answer(expected)),
        }
    }

    /// An answer that satisfies the matcher.
    pub fn canonical_answer(&self) -> &str {
        match self {
            AnswerMatcher::Exact(s) | AnswerMatcher::Contains(s) => s,
        }
    }
}

fn normalize_answer(s: &str) -> String {
    normalize_whitespace(&s.to_lowercase())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    ReachPage,
    StopWithAnswer,
    Conjunction,
}

/// Reward is 1 when the agent stops in a state where every present field
/// holds: the page, the answer and all conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub kind: GoalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_page: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<AnswerMatcher>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<Predicate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub milestones: Vec<Predicate>,
}

impl GoalSpec {
    pub(crate) fn consistency_error(&self) -> Option<&'static str> {
        match self.kind {
            GoalKind::ReachPage if self.target_page.is_none() => Some("reach_page goal needs target_page"),
            GoalKind::StopWithAnswer if self.answer.is_none() => Some("stop_with_answer goal needs an answer matcher"),
            GoalKind::Conjunction if self.conditions.is_empty() => {
                Some("conjunction goal needs at least one condition")
            }
            _ => None,
        }
    }

    /// Whether a state, once stopped, earns reward 1.
    pub fn is_satisfied(&self, state: &EnvState) -> bool {
        let Some(stopped) = &state.stopped else {
            return false;
        };
        self.holds_on_stop(state, stopped.answer.as_deref())
    }

    /// Whether stopping in `state` with `answer` would satisfy the goal.
    pub fn holds_on_stop(&self, state: &EnvState, answer: Option<&str>) -> bool {
        if let Some(page) = &self.target_page {
            if &state.page != page {
                return false;
            }
        }
        if let Some(matcher) = &self.answer {
            if !matcher.matches(answer) {
                return false;
            }
        }
        self.conditions.iter().all(|c| c.holds(state))
    }

    /// Stop answer the search oracle issues.
    pub fn canonical_answer(&self) -> Option<&str> {
        self.answer.as_ref().map(AnswerMatcher::canonical_answer)
    }

    /// Fraction of milestones that hold, or `None` when there are none.
    pub fn milestone_fraction(&self, state: &EnvState) -> Option<f64> {
        if self.milestones.is_empty() {
            return None;
        }
        let hit = self.milestones.iter().filter(|m| m.holds(state)).count();
        Some(hit as f64 / self.milestones.len() as f64)
    }
}
