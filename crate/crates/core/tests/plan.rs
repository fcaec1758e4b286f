use std::sync::Arc;

use proptest::prelude::*;
use webplan_core::action::SUMMARY_PHRASE;
use webplan_core::env::{bundled_site, bundled_sites, Environment, SiteEnv, SiteGraph};
use webplan_core::judge::{Judge, LlmJudge, OracleJudge};
use webplan_core::llm::prompts::StateRepresentation;
use webplan_core::llm::{
    CompletionRequest, Gateway, GatewayConfig, GatewayMode, HeuristicModel, LlmSettings, Transport, TransportError,
};
use webplan_core::plan::{
    argmax, decide, run_episode, termination_check, AgentKind, EpisodeOutcome, Planner, PlannerConfig, RunRecord,
    TerminationReason, TreeConfig,
};
use webplan_core::wm::{LlmWorldModel, OracleWorldModel, SimConfig, WorldModel};
use webplan_core::{Action, ScoredTrajectory, SimulatedTrajectory};

fn oracle_planner(graph: &Arc<SiteGraph>, gateway: Arc<Gateway>, config: PlannerConfig) -> Planner {
    let wm = Arc::new(OracleWorldModel::new(graph.clone(), &config.sim).unwrap());
    Planner::new(gateway, wm, Arc::new(OracleJudge::new(graph.clone())), config).unwrap()
}

fn heuristic() -> Arc<Gateway> {
    Arc::new(Gateway::live(Arc::new(HeuristicModel)))
}

/// First index holding the maximum, computed independently of `argmax`.
fn first_max(scores: &[f64]) -> Option<usize> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s == max)
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    // Means of up to three samples on the 0 / 0.5 / 1 scale.
    proptest::collection::vec((0u32..=6).prop_map(|k| f64::from(k) / 6.0), 0..8)
}

proptest! {
    #[test]
    fn argmax_takes_the_first_maximum(s in scores()) {
        prop_assert_eq!(argmax(&s), first_max(&s));
    }

    #[test]
    fn argmax_ignores_positive_affine_rescaling(s in scores(), scale in 0.1f64..100.0, shift in -10.0f64..10.0) {
        let moved: Vec<f64> = s.iter().map(|x| x * scale + shift).collect();
        prop_assert_eq!(argmax(&moved), argmax(&s));
    }

    #[test]
    fn decide_picks_the_first_best_candidate(s in scores().prop_filter("non-empty", |v| !v.is_empty())) {
        let refined: Vec<Action> = (0..s.len() as u32).map(Action::click).collect();
        let scored: Vec<ScoredTrajectory> = refined
            .iter()
            .zip(&s)
            .map(|(a, &v)| ScoredTrajectory::new(SimulatedTrajectory::unsimulated("r".into(), a.clone()), vec![v]).unwrap())
            .collect();
        let d = decide(refined.clone(), refined.clone(), scored);
        let i = first_max(&s).unwrap();
        prop_assert_eq!(d.chosen_index, i);
        prop_assert_eq!(&d.chosen, &refined[i]);
        prop_assert_eq!(d.low_confidence, s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn repeats_terminate_after_the_limit(n in 0usize..8, limit in 1u32..5, cumulative in any::<bool>()) {
        let history = vec![Action::click(7); n];
        let got = termination_check(&history, &Action::click(7), n as u32 + 1, 100, limit, cumulative);
        if n + 1 > limit as usize {
            prop_assert_eq!(got, Some(TerminationReason::RepeatedAction));
        } else {
            prop_assert_eq!(got, None);
        }
    }
}

#[test]
fn termination_order() {
    let h = [Action::click(1)];
    assert_eq!(
        termination_check(&h, &Action::stop(None), 10, 10, 1, false),
        Some(TerminationReason::StopIssued)
    );
    assert_eq!(
        termination_check(&h, &Action::click(2), 10, 10, 3, false),
        Some(TerminationReason::MaxSteps)
    );
    // Only consecutive repeats count unless cumulative.
    let h = [Action::click(1), Action::click(2)];
    assert_eq!(termination_check(&h, &Action::click(1), 3, 10, 1, false), None);
    assert_eq!(
        termination_check(&h, &Action::click(1), 3, 10, 1, true),
        Some(TerminationReason::RepeatedAction)
    );
}

/// Always proposes the same action and approves everything.
struct Stubborn;

impl Transport for Stubborn {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, TransportError> {
        let text = format!("Thinking. {SUMMARY_PHRASE} ```click [99]```\nSelected actions: 0");
        Ok(vec![text; req.n_samples as usize])
    }
}

#[test]
fn an_agent_stuck_on_one_action_is_stopped() {
    let graph = Arc::new(bundled_site("forum").unwrap().unwrap());
    let gateway = Arc::new(Gateway::live(Arc::new(Stubborn)));
    for agent in [AgentKind::Reactive, AgentKind::Mpc, AgentKind::RerankOnly] {
        let planner = oracle_planner(&graph, gateway.clone(), PlannerConfig::default());
        let mut env = SiteEnv::new(graph.clone());
        let r = run_episode(&planner, agent, &mut env, &graph.tasks()[0]);
        assert_eq!(r.termination, Some(TerminationReason::RepeatedAction), "{agent}");
        assert_eq!(r.actions.len(), planner.config.repeat_limit as usize + 1);
        assert_eq!(r.reward, 0);
        assert_eq!(r.outcome, EpisodeOutcome::Completed);
    }
}

#[test]
fn one_step_budget_executes_one_action() {
    let graph = Arc::new(bundled_site("shop-small").unwrap().unwrap());
    let config = PlannerConfig {
        max_steps: 1,
        ..PlannerConfig::default()
    };
    for agent in [AgentKind::Reactive, AgentKind::Mpc, AgentKind::RerankOnly] {
        let planner = oracle_planner(&graph, heuristic(), config.clone());
        for task in graph.tasks() {
            let mut env = SiteEnv::new(graph.clone());
            let r = run_episode(&planner, agent, &mut env, task);
            assert_eq!(
                r.outcome,
                EpisodeOutcome::Completed,
                "{agent} {}: {:?}",
                task.id,
                r.error
            );
            assert_eq!(r.actions.len(), 1);
            assert_eq!(r.real_action_count, 1);
            let planned = usize::from(agent != AgentKind::Reactive);
            assert_eq!(r.decisions.len(), planned, "{agent}");
        }
    }
}

#[test]
fn tree_search_with_no_budget_does_nothing() {
    let graph = Arc::new(bundled_site("trap-site").unwrap().unwrap());
    let config = PlannerConfig {
        tree: Some(TreeConfig {
            expansion_budget: 0,
            ..TreeConfig::default()
        }),
        ..PlannerConfig::default()
    };
    let planner = oracle_planner(&graph, heuristic(), config);
    let mut env = SiteEnv::new(graph.clone());
    let r = run_episode(&planner, AgentKind::TreeSearch, &mut env, &graph.tasks()[0]);
    assert_eq!(r.outcome, EpisodeOutcome::BudgetExhausted);
    assert_eq!(r.real_action_count, 0);
    assert!(r.actions.is_empty());
    assert_eq!(r.reward, 0);
}

fn replayed_reward(graph: &Arc<SiteGraph>, record: &RunRecord) -> u8 {
    let task = graph.task(&record.task_id).unwrap();
    let mut env = SiteEnv::new(graph.clone());
    env.reset(task).unwrap();
    let mut reward = 0;
    for a in &record.actions {
        reward = env.execute(a).unwrap().reward;
    }
    reward
}

#[test]
fn executing_a_record_reproduces_its_reward() {
    for graph in bundled_sites().unwrap() {
        let graph = Arc::new(graph);
        let config = PlannerConfig {
            sim: SimConfig {
                fidelity: 0.75,
                seed: 4,
                ..SimConfig::default()
            },
            ..PlannerConfig::default()
        };
        let planner = oracle_planner(&graph, heuristic(), config);
        for task in graph.tasks() {
            for agent in AgentKind::ALL {
                let mut env = SiteEnv::new(graph.clone());
                let r = run_episode(&planner, agent, &mut env, task);
                assert_ne!(r.outcome, EpisodeOutcome::Error, "{:?}", r.error);
                assert_eq!(
                    replayed_reward(&graph, &r),
                    r.reward,
                    "{}/{} {agent}",
                    graph.name(),
                    task.id
                );
                assert!((0.0..=1.0).contains(&r.milestones_satisfied));
                // Belief states are not serialized; everything else survives.
                let json = serde_json::to_string(&r).unwrap();
                let parsed: RunRecord = serde_json::from_str(&json).unwrap();
                assert_eq!(serde_json::to_string(&parsed).unwrap(), json);
            }
        }
    }
}

#[test]
fn episodes_are_deterministic() {
    let graph = Arc::new(bundled_site("classifieds").unwrap().unwrap());
    let config = PlannerConfig {
        sim: SimConfig {
            horizon: 2,
            fidelity: 0.6,
            seed: 9,
            ..SimConfig::default()
        },
        ..PlannerConfig::default()
    };
    let run = || {
        let planner = oracle_planner(&graph, heuristic(), config.clone());
        graph
            .tasks()
            .iter()
            .flat_map(|t| {
                AgentKind::ALL.map(|a| {
                    let mut env = SiteEnv::new(graph.clone());
                    let r = run_episode(&planner, a, &mut env, t);
                    (r.actions, r.decisions, r.reward, r.real_action_count)
                })
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

fn llm_planner(gateway: Arc<Gateway>) -> Planner {
    let settings = LlmSettings::default();
    let wm: Arc<dyn WorldModel> = Arc::new(LlmWorldModel::new(
        gateway.clone(),
        settings.clone(),
        StateRepresentation::ChangeDescription,
    ));
    let judge: Arc<dyn Judge> = Arc::new(LlmJudge::new(gateway.clone(), settings));
    Planner::new(gateway, wm, judge, PlannerConfig::default()).unwrap()
}

#[test]
fn recorded_episodes_replay_without_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcript.jsonl");
    let graph = Arc::new(bundled_site("shop-small").unwrap().unwrap());
    let record_gw = Arc::new(
        Gateway::new(
            GatewayConfig {
                mode: GatewayMode::Record,
                transcript: Some(path.clone()),
                ..GatewayConfig::default()
            },
            Some(Arc::new(HeuristicModel)),
        )
        .unwrap(),
    );
    let recorded = llm_planner(record_gw.clone());
    let agents = [AgentKind::Mpc, AgentKind::RerankOnly, AgentKind::Reactive];
    let mut originals = Vec::new();
    for task in graph.tasks() {
        for agent in agents {
            let a = run_episode(&recorded, agent, &mut SiteEnv::new(graph.clone()), task);
            assert_eq!(
                a.outcome,
                EpisodeOutcome::Completed,
                "{agent} {}: {:?}",
                task.id,
                a.error
            );
            originals.push(a);
        }
    }
    // The transcript is read once, when the replaying gateway is built.
    let replay_gw = Arc::new(
        Gateway::new(
            GatewayConfig {
                mode: GatewayMode::Replay,
                transcript: Some(path),
                ..GatewayConfig::default()
            },
            None,
        )
        .unwrap(),
    );
    let replayed = llm_planner(replay_gw.clone());
    let mut originals = originals.into_iter();
    for task in graph.tasks() {
        for agent in agents {
            let a = originals.next().unwrap();
            let b = run_episode(&replayed, agent, &mut SiteEnv::new(graph.clone()), task);
            assert_eq!(
                b.outcome,
                EpisodeOutcome::Completed,
                "{agent} {}: {:?}",
                task.id,
                b.error
            );
            assert_eq!(
                (&a.actions, &a.decisions, a.reward),
                (&b.actions, &b.decisions, b.reward)
            );
        }
    }
    assert!(record_gw.transport_calls() > 0);
    assert_eq!(replay_gw.transport_calls(), 0);
}
