use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tracing_subscriber::EnvFilter;
use webplan_bench::metrics::success_rate;
use webplan_bench::report::{parse_group_by, summarize};
use webplan_bench::runner::{read_records, resolve_site, run_grid, write_records, Backend, RunSpec};
use webplan_core::env::BUNDLED_SITE_NAMES;
use webplan_core::llm::prompts::StateRepresentation;
use webplan_core::llm::{Gateway, GatewayConfig, GatewayMode, HeuristicModel, HttpConfig, HttpTransport, Transport};
use webplan_core::plan::{AgentKind, EpisodeOutcome, PlannerConfig, RunRecord, TreeConfig};
use webplan_core::wm::SimConfig;

#[derive(Parser)]
#[command(name = "webplan", version, about = "Run and report web-agent planning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a grid of episodes and write records plus a report.
    Run(RunArgs),
    /// Rebuild report tables from a record file.
    Report(ReportArgs),
    /// Repeat a run for each value of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Compare the full planner against one ablated variant.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        variant: Variant,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Horizon,
    Fidelity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    #[value(name = "rerank_only", alias = "rerank-only")]
    RerankOnly,
    #[value(name = "no_refine", alias = "no-refine")]
    NoRefine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LlmBackend {
    /// Offline keyword-overlap stand-in.
    Heuristic,
    /// OpenAI-compatible chat endpoint configured through the environment.
    Http,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Agents to run (mpc, reactive, rerank_only, tree_search).
    #[arg(long = "agent", value_delimiter = ',', default_value = "mpc")]
    agents: Vec<AgentKind>,
    /// Bundled site names or site-graph files; defaults to every bundled site.
    #[arg(long = "site", value_delimiter = ',')]
    sites: Vec<String>,
    /// Task ids to keep.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    #[arg(long, default_value = "oracle")]
    wm: Backend,
    #[arg(long, default_value = "oracle")]
    judge: Backend,
    #[arg(long, default_value_t = 1)]
    horizon: u32,
    /// Oracle world-model fidelity in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    fidelity: f64,
    #[arg(long = "seed", value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "change_description")]
    representation: StateRepresentation,
    #[arg(long, default_value_t = 3)]
    judge_samples: u32,
    /// Candidates kept after frequency ranking.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Proposal samples drawn.
    #[arg(long, default_value_t = 10)]
    m: u32,
    #[arg(long, default_value_t = 10)]
    max_steps: u32,
    /// Skip the self-refinement pass.
    #[arg(long)]
    no_refine: bool,
    #[arg(long, default_value_t = 3)]
    tree_branching: usize,
    #[arg(long, default_value_t = 4)]
    tree_depth: usize,
    #[arg(long, default_value_t = 20)]
    tree_budget: usize,
    #[arg(long, default_value = "live")]
    mode: GatewayMode,
    #[arg(long, value_enum, default_value = "heuristic")]
    llm: LlmBackend,
    /// Transcript file for record and replay modes.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "site")]
    group_by: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Record file, or a run directory containing records.jsonl.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "site")]
    group_by: String,
    /// Write tables here instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything needed to rerun a command, written next to its records.
#[derive(Serialize)]
struct Snapshot<'a> {
    command: &'a str,
    agents: &'a [AgentKind],
    sites: Vec<String>,
    tasks: &'a [String],
    seeds: &'a [u64],
    world_model: Backend,
    judge: Backend,
    mode: &'static str,
    llm: LlmBackend,
    transcript: Option<&'a Path>,
    planner: &'a PlannerConfig,
}

impl RunArgs {
    fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            sim: SimConfig {
                horizon: self.horizon,
                state_representation: self.representation,
                fidelity: self.fidelity,
                seed: self.seeds.first().copied().unwrap_or(0),
            },
            judge_samples: self.judge_samples,
            k: self.k,
            m: self.m,
            max_steps: self.max_steps,
            refine: !self.no_refine,
            tree: Some(TreeConfig {
                branching: self.tree_branching,
                max_depth: self.tree_depth,
                expansion_budget: self.tree_budget,
            }),
            ..PlannerConfig::default()
        }
    }

    fn spec(&self, planner: PlannerConfig) -> Result<RunSpec> {
        let names: Vec<String> = if self.sites.is_empty() {
            BUNDLED_SITE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            self.sites.clone()
        };
        let sites = names
            .iter()
            .map(|n| {
                resolve_site(n)
                    .map(Arc::new)
                    .with_context(|| format!("loading site {n:?}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunSpec {
            agents: self.agents.clone(),
            sites,
            tasks: (!self.tasks.is_empty()).then(|| self.tasks.clone()),
            seeds: self.seeds.clone(),
            world_model: self.wm,
            judge: self.judge,
            planner,
        })
    }

    fn gateway(&self) -> Result<Arc<Gateway>> {
        let transport: Arc<dyn Transport> = match self.llm {
            LlmBackend::Heuristic => Arc::new(HeuristicModel),
            LlmBackend::Http => Arc::new(HttpTransport::new(HttpConfig::from_env())),
        };
        let config = GatewayConfig {
            mode: self.mode,
            transcript: self.transcript.clone(),
            ..GatewayConfig::default()
        };
        let transport = (self.mode != GatewayMode::Replay).then_some(transport);
        Ok(Arc::new(Gateway::new(config, transport)?))
    }

    fn snapshot<'a>(&'a self, command: &'a str, planner: &'a PlannerConfig, spec: &RunSpec) -> Snapshot<'a> {
        Snapshot {
            command,
            agents: &self.agents,
            sites: spec.sites.iter().map(|g| g.name().to_string()).collect(),
            tasks: &self.tasks,
            seeds: &self.seeds,
            world_model: self.wm,
            judge: self.judge,
            mode: self.mode.as_str(),
            llm: self.llm,
            transcript: self.transcript.as_deref(),
            planner,
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes records and report tables into `dir`; returns how many episodes
/// errored.
fn persist(dir: &Path, records: &[RunRecord], group_by: &str) -> Result<usize> {
    let dims = parse_group_by(group_by).map_err(anyhow::Error::msg)?;
    write_records(&dir.join("records.jsonl"), records).context("writing records")?;
    let report = summarize(records, &dims);
    report.write_to(&dir.join("report")).context("writing report")?;
    print!("{}", report.render());
    let errors = records.iter().filter(|r| r.outcome == EpisodeOutcome::Error).count();
    if errors > 0 {
        tracing::warn!(errors, "some episodes errored");
    }
    Ok(errors)
}

fn execute(args: &RunArgs, planner: PlannerConfig, command: &str, dir: &Path) -> Result<Vec<RunRecord>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let spec = args.spec(planner.clone())?;
    write_json(&dir.join("config.json"), &args.snapshot(command, &planner, &spec))?;
    let gateway = args.gateway()?;
    let records = run_grid(&spec, &gateway)?;
    tracing::info!(
        transport_calls = gateway.transport_calls(),
        cache_hits = gateway.cache_hits(),
        "gateway usage"
    );
    Ok(records)
}

fn cmd_run(args: &RunArgs) -> Result<usize> {
    let records = execute(args, args.planner_config(), "run", &args.out)?;
    persist(&args.out, &records, &args.group_by)
}

fn cmd_report(args: &ReportArgs) -> Result<usize> {
    let path = if args.input.is_dir() {
        args.input.join("records.jsonl")
    } else {
        args.input.clone()
    };
    let records = read_records(&path).with_context(|| format!("reading {}", path.display()))?;
    let dims = parse_group_by(&args.group_by).map_err(anyhow::Error::msg)?;
    let report = summarize(&records, &dims);
    match &args.out {
        Some(dir) => report.write_to(dir).context("writing report")?,
        None => print!("{}", report.render()),
    }
    Ok(0)
}

fn cmd_sweep(args: &RunArgs, param: SweepParam, values: &[f64]) -> Result<usize> {
    let name = match param {
        SweepParam::Horizon => "horizon",
        SweepParam::Fidelity => "fidelity",
    };
    let mut table = String::from("param\tvalue\tagent\tepisodes\tsuccess_rate\n");
    let mut errors = 0;
    for &v in values {
        let mut planner = args.planner_config();
        match param {
            SweepParam::Horizon => {
                if v < 1.0 || v.fract() != 0.0 {
                    bail!("horizon values must be positive integers, got {v}");
                }
                planner.sim.horizon = v as u32;
            }
            SweepParam::Fidelity => planner.sim.fidelity = v,
        }
        let dir = args.out.join(format!("{name}-{v}"));
        let records = execute(args, planner, "sweep", &dir)?;
        errors += persist(&dir, &records, &args.group_by)?;
        for agent in &args.agents {
            let rs: Vec<RunRecord> = records.iter().filter(|r| r.agent == *agent).cloned().collect();
            if let Ok(sr) = success_rate(&rs) {
                let _ = writeln!(table, "{name}\t{v}\t{agent}\t{}\t{sr:.4}", rs.len());
            }
        }
    }
    fs::write(args.out.join("sweep.tsv"), &table).context("writing sweep table")?;
    print!("{table}");
    Ok(errors)
}

fn cmd_ablate(args: &RunArgs, variant: Variant) -> Result<usize> {
    let base = args.planner_config();
    let mut records = Vec::new();
    match variant {
        Variant::RerankOnly => {
            let mut a = args.clone();
            a.agents = vec![AgentKind::Mpc, AgentKind::RerankOnly, AgentKind::Reactive];
            records.extend(execute(&a, base, "ablate_rerank_only", &args.out)?);
        }
        Variant::NoRefine => {
            let mut a = args.clone();
            a.agents = vec![AgentKind::Mpc];
            let mut no_refine = base.clone();
            no_refine.refine = false;
            records.extend(execute(&a, base, "ablate_refine", &args.out.join("refine"))?);
            records.extend(execute(&a, no_refine, "ablate_no_refine", &args.out.join("no_refine"))?);
        }
    }
    persist(&args.out, &records, &args.group_by)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();

    let threads = match &cli.command {
        Command::Run(a) | Command::Sweep { run: a, .. } | Command::Ablate { run: a, .. } => a.jobs,
        Command::Report(_) => None,
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: configuring worker pool: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Sweep { run, param, values } => cmd_sweep(run, *param, values),
        Command::Ablate { run, variant } => cmd_ablate(run, *variant),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
