use std::path::Path;
use std::process::Command;

use wppl_cli::config::{CliError, RunConfig};
use wppl_cli::generate::{generate, MapKind};
use wppl_cli::run::{apply_sweep_value, run, sweep, sweep_csv, MetricsSummary, SweepParam, Timing};
use wppl_cli::Algorithm;
use wppl_core::domain::parse_map;
use wppl_core::simulator::Heatmap;
use wppl_core::{ActionModel, Trajectory};

fn fixture(dir: &Path, agents: usize, steps: usize) -> RunConfig {
    let path = generate(MapKind::Random32, agents, ActionModel::Rotation, 1, dir).unwrap();
    let mut cfg = RunConfig::from_file(&path).unwrap();
    cfg.total_steps = steps;
    cfg.wppl.iterations = Some(30);
    cfg
}

#[test]
fn run_writes_parseable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 60, 24);
    let report = run(&cfg).unwrap();
    let out = &cfg.output_dir;

    let summary: MetricsSummary = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(summary, report.summary);
    let timing: Timing = serde_json::from_str(&std::fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing, report.timing);
    assert_eq!(timing.plan_times_ms.len(), summary.planning_calls);
    let heat: Heatmap = serde_json::from_str(&std::fs::read_to_string(out.join("heatmap.json")).unwrap()).unwrap();
    assert_eq!(heat, report.heatmap);

    let map = parse_map(&std::fs::read_to_string(&cfg.map).unwrap()).unwrap();
    let traj = Trajectory::parse(&std::fs::read_to_string(out.join("trajectory.txt")).unwrap(), &map, ActionModel::Rotation).unwrap();
    assert_eq!(traj.states.len(), 25);
    traj.validate(&map).unwrap();

    let commits = std::fs::read_to_string(out.join("commits.jsonl")).unwrap();
    assert_eq!(commits.lines().count(), summary.lns_proposals);
    let first: serde_json::Value = serde_json::from_str(commits.lines().next().unwrap()).unwrap();
    for key in ["call", "iteration", "worker", "neighborhood", "objective_before", "objective_after", "accepted"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn missing_weights_means_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture(dir.path(), 20, 5);
    assert!(cfg.weights.is_none());
    let uniform = cfg.load().unwrap().guidance;
    assert_eq!(uniform, wppl_core::GuidanceGraph::uniform(uniform.map().clone()));
    cfg.weights = Some(dir.path().join("crisscross.json"));
    assert_ne!(cfg.load().unwrap().guidance, uniform);
}

#[test]
fn bad_map_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture(dir.path(), 20, 5);
    let bad = dir.path().join("bad.map");
    std::fs::write(&bad, "type octile\nheight 2\nwidth 3\nmap\n...\n.x.\n").unwrap();
    cfg.map = bad;
    let err = cfg.load().unwrap_err();
    assert!(matches!(err, CliError::Parse { .. }));
    let msg = err.to_string();
    assert!(msg.contains("bad.map") && msg.contains("line 6"), "{msg}");
}

#[test]
fn single_value_sweep_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 60, 15);
    let report = run(&cfg).unwrap();
    for (param, value) in [(SweepParam::Window, "10"), (SweepParam::Agents, "60"), (SweepParam::TimeBudget, "30")] {
        let rows = sweep(&cfg, param, &[value.to_string()]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].summary, report.summary, "{param:?}");
    }
}

#[test]
fn window_sweep_has_a_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 40, 6);
    let values: Vec<String> = ["1", "5", "10", "15", "20"].iter().map(|s| s.to_string()).collect();
    let rows = sweep(&cfg, SweepParam::Window, &values).unwrap();
    assert_eq!(rows.len(), 5);
    let csv = sweep_csv(SweepParam::Window, &rows);
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("window,throughput,mean_plan_ms_per_step,first_window_objective\n"));
    // h is clamped to w.
    let one = apply_sweep_value(&cfg, 40, SweepParam::Window, "1").unwrap();
    assert_eq!((one.wppl.window, one.wppl.replan_period), (1, 1));
    assert!(sweep(&cfg, SweepParam::Window, &[]).is_err());
}

#[test]
fn budget_sweep_objective_never_rises() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 120, 3);
    let values: Vec<String> = ["0", "100", "500", "2500"].iter().map(|s| s.to_string()).collect();
    let rows = sweep(&cfg, SweepParam::TimeBudget, &values).unwrap();
    let objs: Vec<f64> = rows.iter().map(|r| r.summary.first_window_objective.unwrap().1).collect();
    assert!(objs.windows(2).all(|w| w[1] <= w[0]), "{objs:?}");
    let (before, after) = rows[0].summary.first_window_objective.unwrap();
    assert_eq!(before, after);
}

#[test]
fn agents_sweep_disables_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 50, 10);
    let rows = sweep(&cfg, SweepParam::Agents, &["30".to_string()]).unwrap();
    assert_eq!(rows[0].summary.disabled_agents, 20);
    assert!(sweep(&cfg, SweepParam::Agents, &["51".to_string()]).is_err());
}

#[test]
fn pibt_run_has_no_commits() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture(dir.path(), 40, 10);
    cfg.algorithm = Algorithm::Pibt;
    let report = run(&cfg).unwrap();
    assert_eq!(report.summary.planning_calls, 10);
    assert_eq!(report.summary.lns_proposals, 0);
    assert!(std::fs::read_to_string(cfg.output_dir.join("commits.jsonl")).unwrap().is_empty());
}

fn wppl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wppl"))
}

#[test]
fn binary_runs_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let config = generate(MapKind::Warehouse, 30, ActionModel::Rotation, 0, dir.path()).unwrap();
    let out_dir = dir.path().join("elsewhere");
    let status = wppl()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--steps", "12", "--iterations", "10"])
        .env("WPPL_OUTPUT_DIR", &out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("metrics.json").exists());

    let ok = wppl()
        .args(["validate", "--map"])
        .arg(dir.path().join("map.map"))
        .arg("--trajectory")
        .arg(out_dir.join("trajectory.txt"))
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("ok: 12 steps, 30 agents"));

    // Teleport agent 0 to another agent's cell on the last line.
    let text = std::fs::read_to_string(out_dir.join("trajectory.txt")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let last = lines.last_mut().unwrap();
    let mut agents: Vec<String> = last.split(',').map(str::to_string).collect();
    agents[0] = agents[1].clone();
    *last = agents.join(",");
    let broken = dir.path().join("broken.txt");
    std::fs::write(&broken, lines.join("\n") + "\n").unwrap();
    let bad = wppl()
        .args(["validate", "--map"])
        .arg(dir.path().join("map.map"))
        .arg("--trajectory")
        .arg(&broken)
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn binary_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "map = \"m\"\nagents = \"a\"\ntotal_steps = \"many\"\n").unwrap();
    let out = wppl().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.toml") && err.contains("line 3"), "{err}");
}
