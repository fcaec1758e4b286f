//! Episode grids: every (site, task, seed, agent) combination, sharded over
//! a worker pool with one environment per episode.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use webplan_core::env::{SiteEnv, SiteGraph};
use webplan_core::judge::{Judge, LlmJudge, OracleJudge};
use webplan_core::llm::Gateway;
use webplan_core::plan::{run_episode, AgentKind, PlanError, Planner, PlannerConfig, RunRecord};
use webplan_core::types::TaskInstance;
use webplan_core::wm::{LlmWorldModel, OracleWorldModel, SimulationError, WorldModel};

/// Whether a world model or judge is backed by the site graph or a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Oracle,
    Llm,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Backend::Oracle),
            "llm" => Ok(Backend::Llm),
            other => Err(format!("unknown backend {other:?} (oracle, llm)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("task {task:?} not found on any selected site")]
    UnknownTask { task: String },
    #[error("no episodes selected")]
    NothingToRun,
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// One grid of episodes.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub agents: Vec<AgentKind>,
    pub sites: Vec<Arc<SiteGraph>>,
    /// Task ids to keep; `None` runs every task of every site.
    pub tasks: Option<Vec<String>>,
    pub seeds: Vec<u64>,
    pub world_model: Backend,
    pub judge: Backend,
    /// Template configuration; each seed overrides `sim.seed`.
    pub planner: PlannerConfig,
}

struct Job {
    planner: usize,
    graph: Arc<SiteGraph>,
    task: TaskInstance,
    agent: AgentKind,
}

fn build_planner(
    spec: &RunSpec,
    gateway: &Arc<Gateway>,
    graph: &Arc<SiteGraph>,
    seed: u64,
) -> Result<Planner, RunError> {
    let mut config = spec.planner.clone();
    config.sim.seed = seed;
    let world_model: Arc<dyn WorldModel> = match spec.world_model {
        Backend::Oracle => Arc::new(OracleWorldModel::new(graph.clone(), &config.sim)?),
        Backend::Llm => Arc::new(LlmWorldModel::new(
            gateway.clone(),
            config.llm.clone(),
            config.sim.state_representation,
        )),
    };
    let judge: Arc<dyn Judge> = match spec.judge {
        Backend::Oracle => Arc::new(OracleJudge::new(graph.clone())),
        Backend::Llm => Arc::new(LlmJudge::new(gateway.clone(), config.llm.clone())),
    };
    Ok(Planner::new(gateway.clone(), world_model, judge, config)?)
}

/// Runs the grid. Records come back in (site, task, seed, agent) order
/// whatever the scheduling. Episode failures are recorded, not returned.
pub fn run_grid(spec: &RunSpec, gateway: &Arc<Gateway>) -> Result<Vec<RunRecord>, RunError> {
    if let Some(wanted) = &spec.tasks {
        let known: BTreeSet<&str> = spec
            .sites
            .iter()
            .flat_map(|g| g.tasks().iter().map(|t| t.id.as_str()))
            .collect();
        if let Some(missing) = wanted.iter().find(|t| !known.contains(t.as_str())) {
            return Err(RunError::UnknownTask { task: missing.clone() });
        }
    }

    let mut planners = Vec::new();
    let mut jobs = Vec::new();
    for graph in &spec.sites {
        let tasks: Vec<&TaskInstance> = graph
            .tasks()
            .iter()
            .filter(|t| spec.tasks.as_ref().is_none_or(|w| w.contains(&t.id)))
            .collect();
        if tasks.is_empty() {
            continue;
        }
        for &seed in &spec.seeds {
            planners.push(build_planner(spec, gateway, graph, seed)?);
            for task in &tasks {
                for &agent in &spec.agents {
                    jobs.push(Job {
                        planner: planners.len() - 1,
                        graph: graph.clone(),
                        task: (*task).clone(),
                        agent,
                    });
                }
            }
        }
    }
    if jobs.is_empty() {
        return Err(RunError::NothingToRun);
    }
    tracing::info!(episodes = jobs.len(), "running grid");

    let records = jobs
        .par_iter()
        .map(|job| {
            let mut env = SiteEnv::new(job.graph.clone());
            let record = run_episode(&planners[job.planner], job.agent, &mut env, &job.task);
            tracing::debug!(
                task = %record.task_id,
                agent = %record.agent_label(),
                reward = record.reward,
                "episode done"
            );
            record
        })
        .collect();
    Ok(records)
}

/// Writes one JSON record per line.
pub fn write_records(path: &Path, records: &[RunRecord]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a line-delimited record file; blank lines are skipped.
pub fn read_records(path: &Path) -> io::Result<Vec<RunRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// A bundled site name, or a path to a site-graph JSON file.
pub fn resolve_site(name: &str) -> Result<SiteGraph, webplan_core::env::SiteLoadError> {
    match webplan_core::env::bundled_site(name) {
        Some(site) => site,
        None => SiteGraph::load(name),
    }
}
