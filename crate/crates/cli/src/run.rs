//! `run` and `sweep`.
//!
//! Output directory layout:
//!
//! | file             | content                                                        |
//! |------------------|----------------------------------------------------------------|
//! | `metrics.json`   | [`MetricsSummary`]; no wall-clock values, so seeded runs with an iteration budget reproduce it byte for byte |
//! | `timing.json`    | [`Timing`]: wall time of every planning call                   |
//! | `heatmap.json`   | wait usage per cell, `null` on obstacles                       |
//! | `trajectory.txt` | one line per step, agents as `row col O` joined by `,`         |
//! | `commits.jsonl`  | one JSON object per LNS proposal, tagged with its planning call |

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use wppl_core::simulator::{GoalRecord, Heatmap, SimOutput};
use wppl_core::wppl::CommitEntry;
use wppl_core::{
    export_heatmap, simulate, ActionModel, DisablePolicy, HeuristicCache, PibtPlanner, Planner, RunMetrics,
    SimConfig, TaskAssigner, WpplPlanner,
};

use crate::config::{Algorithm, CliError, Loaded, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub algorithm: Algorithm,
    pub action_model: ActionModel,
    pub agents: usize,
    pub seed: u64,
    pub steps: usize,
    pub goals_reached: usize,
    pub throughput: f64,
    pub planning_calls: usize,
    pub overrun_steps: usize,
    pub disabled_agents: usize,
    pub lns_proposals: usize,
    pub lns_commits: usize,
    /// Objective of the first window before and after refinement.
    pub first_window_objective: Option<(f64, f64)>,
    pub goal_log: Vec<GoalRecord>,
}

impl MetricsSummary {
    pub fn new(cfg: &RunConfig, agents: usize, m: &RunMetrics) -> Self {
        Self {
            algorithm: cfg.algorithm,
            action_model: cfg.action_model,
            agents,
            seed: cfg.seed,
            steps: m.steps,
            goals_reached: m.goals_reached,
            throughput: m.throughput,
            planning_calls: m.plan_times_ms.len(),
            overrun_steps: m.overrun_steps,
            disabled_agents: m.disabled_agents,
            lns_proposals: m.lns_proposals,
            lns_commits: m.lns_commits,
            first_window_objective: m.first_window_objective,
            goal_log: m.goal_log.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub plan_times_ms: Vec<f64>,
    pub mean_plan_time_ms_per_step: f64,
}

#[derive(Serialize)]
struct CommitLine<'a> {
    call: usize,
    #[serde(flatten)]
    entry: &'a CommitEntry,
}

pub fn planner_for(cfg: &RunConfig, loaded: &Loaded) -> Result<Box<dyn Planner>, CliError> {
    let cache = Arc::new(HeuristicCache::new(Arc::new(loaded.guidance.clone()), cfg.action_model));
    Ok(match cfg.algorithm {
        Algorithm::Pibt => Box::new(PibtPlanner::new(cache, cfg.wppl.disable.clone())),
        Algorithm::Wppl => Box::new(WpplPlanner::new(cache, cfg.wppl_config()?)),
    })
}

/// Simulates `cfg` on already loaded files. `record` keeps the trajectory
/// and commit logs.
pub fn execute(cfg: &RunConfig, loaded: &Loaded, record: bool) -> Result<SimOutput, CliError> {
    let mut planner = planner_for(cfg, loaded)?;
    let mut assigner = TaskAssigner::uniform(loaded.map(), cfg.seed);
    let sim = SimConfig {
        seed: cfg.seed,
        record_trajectory: record,
        keep_commit_log: record,
    };
    Ok(simulate(&loaded.instance, planner.as_mut(), &mut assigner, cfg.total_steps, &sim)?)
}

pub struct RunReport {
    pub summary: MetricsSummary,
    pub timing: Timing,
    pub heatmap: Heatmap,
    pub dir: PathBuf,
}

pub fn commit_lines(out: &SimOutput) -> String {
    let mut text = String::new();
    for (call, log) in &out.commit_logs {
        for entry in &log.entries {
            text.push_str(&serde_json::to_string(&CommitLine { call: *call, entry }).expect("commit lines serialize"));
            text.push('\n');
        }
    }
    text
}

pub fn write_outputs(dir: &Path, cfg: &RunConfig, loaded: &Loaded, out: &SimOutput) -> Result<RunReport, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    };
    let summary = MetricsSummary::new(cfg, loaded.instance.num_agents(), &out.metrics);
    let timing = Timing {
        plan_times_ms: out.metrics.plan_times_ms.clone(),
        mean_plan_time_ms_per_step: out.metrics.mean_plan_time_ms(),
    };
    let heatmap = export_heatmap(&out.metrics, loaded.map());
    write("metrics.json", &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    write("timing.json", &(serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n"))?;
    write("heatmap.json", &heatmap.to_json())?;
    if let Some(t) = &out.trajectory {
        write("trajectory.txt", &t.to_text(loaded.map()))?;
    }
    write("commits.jsonl", &commit_lines(out))?;
    Ok(RunReport {
        summary,
        timing,
        heatmap,
        dir: dir.to_path_buf(),
    })
}

pub fn run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let loaded = cfg.load()?;
    let out = execute(cfg, &loaded, true)?;
    write_outputs(&cfg.output_dir, cfg, &loaded, &out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Window,
    /// Number of agents left enabled; the rest are disabled at random.
    Agents,
    /// An iteration count (`5000`) or a per-step time (`250ms`).
    #[value(name = "time_budget")]
    TimeBudget,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Window => "window",
            SweepParam::Agents => "agents",
            SweepParam::TimeBudget => "time_budget",
        }
    }
}

/// `cfg` with one sweep value applied. `agents` is the instance size.
pub fn apply_sweep_value(cfg: &RunConfig, agents: usize, param: SweepParam, value: &str) -> Result<RunConfig, CliError> {
    let bad = || CliError::Invalid(format!("bad {} value `{value}`", param.name()));
    let mut out = cfg.clone();
    match param {
        SweepParam::Window => {
            let w: usize = value.parse().map_err(|_| bad())?;
            out.wppl.window = w;
            out.wppl.replan_period = out.wppl.replan_period.min(w);
        }
        SweepParam::Agents => {
            let enabled: usize = value.parse().map_err(|_| bad())?;
            if enabled == 0 || enabled > agents {
                return Err(CliError::Invalid(format!("{enabled} enabled agents out of {agents}")));
            }
            if enabled < agents {
                out.wppl.disable = DisablePolicy::RandomK {
                    k: agents - enabled,
                    seed: cfg.seed,
                };
            }
        }
        SweepParam::TimeBudget => {
            if let Some(ms) = value.strip_suffix("ms") {
                out.wppl.time_ms = Some(ms.trim().parse().map_err(|_| bad())?);
                out.wppl.iterations = None;
            } else {
                out.wppl.iterations = Some(value.parse().map_err(|_| bad())?);
                out.wppl.time_ms = None;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub summary: MetricsSummary,
    pub mean_plan_time_ms_per_step: f64,
}

/// One run per value, all with the base config's seed.
pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[String]) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Invalid("sweep needs at least one value".into()));
    }
    let loaded = cfg.load()?;
    let n = loaded.instance.num_agents();
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let c = apply_sweep_value(cfg, n, param, v)?;
        if c.algorithm == Algorithm::Wppl {
            c.wppl_config()?.validate(n)?;
        }
        let out = execute(&c, &loaded, false)?;
        tracing::info!(param = param.name(), value = %v, throughput = out.metrics.throughput, "sweep point");
        rows.push(SweepRow {
            value: v.clone(),
            summary: MetricsSummary::new(&c, n, &out.metrics),
            mean_plan_time_ms_per_step: out.metrics.mean_plan_time_ms(),
        });
    }
    Ok(rows)
}

/// Columns: value, throughput, mean planning ms per step, first-window
/// objective after refinement (empty for PIBT).
pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!("{},throughput,mean_plan_ms_per_step,first_window_objective\n", param.name());
    for r in rows {
        let obj = r
            .summary
            .first_window_objective
            .map(|(_, after)| after.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.value, r.summary.throughput, r.mean_plan_time_ms_per_step, obj
        ));
    }
    out
}

pub fn write_sweep(cfg: &RunConfig, param: SweepParam, rows: &[SweepRow]) -> Result<PathBuf, CliError> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(format!("sweep_{}.csv", param.name()));
    std::fs::write(&path, sweep_csv(param, rows)).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
