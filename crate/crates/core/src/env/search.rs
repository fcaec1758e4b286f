//! Breadth-first search over the transition relation. Ground truth for the
//! oracle world model, the oracle judge and the acceptance suite.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::goal::GoalSpec;
use super::graph::SiteGraph;
use super::EnvState;
use crate::action::Action;

/// Number of actions to a goal-satisfying stopped state. Orders finite
/// distances before `Unreachable`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Steps(u32),
    Unreachable,
}

impl Distance {
    pub fn steps(self) -> Option<u32> {
        match self {
            Distance::Steps(n) => Some(n),
            Distance::Unreachable => None,
        }
    }

    pub fn is_reachable(self) -> bool {
        matches!(self, Distance::Steps(_))
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Steps(n) => write!(f, "{n}"),
            Distance::Unreachable => f.write_str("inf"),
        }
    }
}

type StateKey = (String, BTreeMap<String, String>);

fn key(state: &EnvState) -> StateKey {
    (state.page.clone(), state.bindings.clone())
}

/// Shortest action sequence from `state` to a stopped state satisfying
/// `goal`, ending with the stop action. Ties resolve to transitions in file
/// order. `None` when unreachable; an empty path when `state` already
/// satisfies the goal.
pub fn shortest_path(graph: &SiteGraph, state: &EnvState, goal: &GoalSpec) -> Option<Vec<Action>> {
    if state.stopped.is_some() {
        return goal.is_satisfied(state).then(Vec::new);
    }
    let stop = Action::stop(goal.canonical_answer());

    let mut seen: HashSet<StateKey> = HashSet::new();
    let mut queue: VecDeque<(EnvState, Vec<Action>)> = VecDeque::new();
    seen.insert(key(state));
    queue.push_back((state.clone(), Vec::new()));

    while let Some((current, path)) = queue.pop_front() {
        if goal.holds_on_stop(&current, goal.canonical_answer()) {
            let mut done = path;
            done.push(stop);
            return Some(done);
        }
        for (_, t) in graph.enabled_transitions(&current) {
            let mut next = current.clone();
            graph.apply_effect(&mut next, &t.effect);
            if seen.insert(key(&next)) {
                let mut p = path.clone();
                p.push(t.action.clone());
                queue.push_back((next, p));
            }
        }
    }
    None
}

/// Length of [`shortest_path`], or `Unreachable`.
pub fn oracle_distance(graph: &SiteGraph, state: &EnvState, goal: &GoalSpec) -> Distance {
    match shortest_path(graph, state, goal) {
        Some(path) => Distance::Steps(path.len() as u32),
        None => Distance::Unreachable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::graph::SiteGraph;

    const LINE: &str = r#"{
        "name": "line",
        "pages": {
            "p0": { "url": "u0", "title": "0", "elements": [ { "id": 1, "tag": "link", "text": "next" } ] },
            "p1": { "url": "u1", "title": "1", "elements": [ { "id": 1, "tag": "link", "text": "next" } ] },
            "p2": { "url": "u2", "title": "2", "elements": [] },
            "island": { "url": "u3", "title": "3", "elements": [] }
        },
        "transitions": [
            { "from": "p0", "action": "click [1]", "to": "p1", "description": "to p1" },
            { "from": "p1", "action": "click [1]", "to": "p2", "description": "to p2" }
        ],
        "goals": {
            "reach": { "kind": "reach_page", "target_page": "p2" },
            "island": { "kind": "reach_page", "target_page": "island" }
        }
    }"#;

    #[test]
    fn distances_count_the_stop() {
        let g = SiteGraph::from_json(LINE).unwrap();
        let goal = g.goal("reach").unwrap();
        let s0 = g.initial_state("p0").unwrap();
        assert_eq!(oracle_distance(&g, &s0, goal), Distance::Steps(3));
        let path = shortest_path(&g, &s0, goal).unwrap();
        assert_eq!(path, vec![Action::click(1), Action::click(1), Action::stop(None)]);

        let (s_stop, _) = g.step(&g.initial_state("p2").unwrap(), &Action::stop(None));
        assert_eq!(oracle_distance(&g, &s_stop, goal), Distance::Steps(0));
    }

    #[test]
    fn disconnected_goal_is_unreachable() {
        let g = SiteGraph::from_json(LINE).unwrap();
        let s0 = g.initial_state("p0").unwrap();
        assert_eq!(
            oracle_distance(&g, &s0, g.goal("island").unwrap()),
            Distance::Unreachable
        );
        assert!(Distance::Steps(1000) < Distance::Unreachable);
    }

    #[test]
    fn a_wrong_stop_is_final() {
        let g = SiteGraph::from_json(LINE).unwrap();
        let (stopped, _) = g.step(&g.initial_state("p0").unwrap(), &Action::stop(None));
        assert_eq!(
            oracle_distance(&g, &stopped, g.goal("reach").unwrap()),
            Distance::Unreachable
        );
    }
}
