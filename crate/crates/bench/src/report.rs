//! Report tables built from a record set. Output depends only on the records:
//! rows are sorted by group and agent, numbers use fixed precision.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use webplan_core::plan::{EpisodeOutcome, RunRecord};

use crate::metrics::{completion_rate, gamma, mean, success_rate};

/// Agent labels the gap-closure column compares.
pub const GAMMA_REACTIVE: &str = "reactive";
pub const GAMMA_TREE: &str = "tree_search";
pub const GAMMA_PLANNER: &str = "mpc";

/// Record attribute a report can be split by, besides the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Site,
    Difficulty,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Site => "site",
            Dimension::Difficulty => "difficulty",
        }
    }

    fn value(self, record: &RunRecord) -> String {
        match self {
            Dimension::Site => record.site.clone(),
            Dimension::Difficulty => record.difficulty.clone().unwrap_or_else(|| "-".into()),
        }
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "site" => Ok(Dimension::Site),
            "difficulty" => Ok(Dimension::Difficulty),
            other => Err(format!("unknown group dimension {other:?} (site, difficulty)")),
        }
    }
}

/// Parses a comma list such as `agent,site`. `agent` is always a row
/// dimension and is accepted as a no-op.
pub fn parse_group_by(spec: &str) -> Result<Vec<Dimension>, String> {
    let mut dims = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "agent" {
            continue;
        }
        let d: Dimension = part.parse()?;
        if !dims.contains(&d) {
            dims.push(d);
        }
    }
    Ok(dims)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub group: Vec<String>,
    pub agent: String,
    pub episodes: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub completion_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub group: Vec<String>,
    pub agent: String,
    pub episodes: usize,
    pub mean_real_actions: f64,
    pub mean_simulated_trajectories: f64,
    pub mean_irreversible_actions: f64,
    /// Harness time; no model latency is included.
    pub mean_harness_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub group: Vec<String>,
    pub reactive: Option<f64>,
    pub tree_search: Option<f64>,
    pub mpc: Option<f64>,
    /// Present only when all three agents ran and their gap is non-zero.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub group_by: Vec<Dimension>,
    pub episodes: usize,
    pub rates: Vec<RateRow>,
    pub steps: Vec<StepRow>,
    pub gamma: Vec<GammaRow>,
}

/// Builds every table. An empty record set gives empty tables.
pub fn summarize(records: &[RunRecord], group_by: &[Dimension]) -> Report {
    let mut cells: BTreeMap<(Vec<String>, String), Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        let group = group_by.iter().map(|d| d.value(r)).collect();
        cells.entry((group, r.agent_label())).or_default().push(r.clone());
    }

    let mut rates = Vec::new();
    let mut steps = Vec::new();
    let mut by_group: BTreeMap<Vec<String>, BTreeMap<String, f64>> = BTreeMap::new();
    for ((group, agent), rs) in &cells {
        let sr = success_rate(rs).expect("cells are non-empty");
        by_group.entry(group.clone()).or_default().insert(agent.clone(), sr);
        rates.push(RateRow {
            group: group.clone(),
            agent: agent.clone(),
            episodes: rs.len(),
            errors: rs.iter().filter(|r| r.outcome == EpisodeOutcome::Error).count(),
            success_rate: sr,
            completion_rate: completion_rate(rs).expect("cells are non-empty"),
        });
        let avg = |f: fn(&RunRecord) -> f64| mean(rs.iter().map(f)).expect("cells are non-empty");
        steps.push(StepRow {
            group: group.clone(),
            agent: agent.clone(),
            episodes: rs.len(),
            mean_real_actions: avg(|r| r.real_action_count as f64),
            mean_simulated_trajectories: avg(|r| r.simulated_trajectory_count as f64),
            mean_irreversible_actions: avg(|r| f64::from(r.irreversible_count)),
            mean_harness_seconds: avg(|r| r.wall_clock_seconds),
        });
    }

    let gamma_rows = by_group
        .into_iter()
        .map(|(group, srs)| {
            let reactive = srs.get(GAMMA_REACTIVE).copied();
            let tree_search = srs.get(GAMMA_TREE).copied();
            let mpc = srs.get(GAMMA_PLANNER).copied();
            let g = match (reactive, tree_search, mpc) {
                (Some(r), Some(t), Some(w)) => gamma(r, t, w).ok(),
                _ => None,
            };
            GammaRow {
                group,
                reactive,
                tree_search,
                mpc,
                gamma: g,
            }
        })
        .collect();

    Report {
        group_by: group_by.to_vec(),
        episodes: records.len(),
        rates,
        steps,
        gamma: gamma_rows,
    }
}

fn opt(x: Option<f64>, precision: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.precision$}"))
}

impl Report {
    fn header(&self, rest: &[&str], with_agent: bool) -> String {
        let mut cols: Vec<&str> = self.group_by.iter().map(|d| d.as_str()).collect();
        if with_agent {
            cols.push("agent");
        }
        cols.extend_from_slice(rest);
        cols.join("\t") + "\n"
    }

    fn prefix(group: &[String]) -> String {
        group.iter().map(|g| format!("{g}\t")).collect()
    }

    pub fn rates_tsv(&self) -> String {
        let mut out = self.header(&["episodes", "errors", "success_rate", "completion_rate"], true);
        for r in &self.rates {
            let _ = writeln!(
                out,
                "{}{}\t{}\t{}\t{:.4}\t{:.4}",
                Self::prefix(&r.group),
                r.agent,
                r.episodes,
                r.errors,
                r.success_rate,
                r.completion_rate
            );
        }
        out
    }

    pub fn steps_tsv(&self) -> String {
        let mut out = self.header(
            &[
                "episodes",
                "mean_real_actions",
                "mean_simulated_trajectories",
                "mean_irreversible_actions",
                "mean_harness_seconds",
            ],
            true,
        );
        for r in &self.steps {
            let _ = writeln!(
                out,
                "{}{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.3}",
                Self::prefix(&r.group),
                r.agent,
                r.episodes,
                r.mean_real_actions,
                r.mean_simulated_trajectories,
                r.mean_irreversible_actions,
                r.mean_harness_seconds
            );
        }
        out
    }

    pub fn gamma_tsv(&self) -> String {
        let mut out = self.header(&["reactive", "tree_search", "mpc", "gamma_pct"], false);
        for r in &self.gamma {
            let _ = writeln!(
                out,
                "{}{}\t{}\t{}\t{}",
                Self::prefix(&r.group),
                opt(r.reactive, 4),
                opt(r.tree_search, 4),
                opt(r.mpc, 4),
                opt(r.gamma, 1)
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// All tables, for printing.
    pub fn render(&self) -> String {
        format!(
            "# success and completion\n{}\n# gap closure\n{}\n# steps and harness time\n{}",
            self.rates_tsv(),
            self.gamma_tsv(),
            self.steps_tsv()
        )
    }

    /// Writes `rates.tsv`, `gamma.tsv`, `steps.tsv` and `summary.json`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("rates.tsv"), self.rates_tsv())?;
        fs::write(dir.join("gamma.tsv"), self.gamma_tsv())?;
        fs::write(dir.join("steps.tsv"), self.steps_tsv())?;
        fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_by_parsing() {
        assert_eq!(
            parse_group_by("agent, site,difficulty,site"),
            Ok(vec![Dimension::Site, Dimension::Difficulty])
        );
        assert_eq!(parse_group_by(""), Ok(vec![]));
        assert!(parse_group_by("model").is_err());
    }

    #[test]
    fn empty_records_give_header_only_tables() {
        let r = summarize(&[], &[Dimension::Site]);
        assert_eq!(
            r.rates_tsv(),
            "site\tagent\tepisodes\terrors\tsuccess_rate\tcompletion_rate\n"
        );
        assert!(r.gamma.is_empty());
    }
}
