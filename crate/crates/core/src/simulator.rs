//! The lifelong loop: ask the planner for steps, validate and apply them,
//! detect goal arrivals, hand out new goals, and keep metrics.

use std::fmt::Write as _;
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    apply_action, check_joint_step, infer_action, Action, ActionModel, AgentState, Conflict, DomainError, GridMap,
    Instance, Orientation, VertexId, FOUR_WAY_ORIENTATION,
};
use crate::error::ParseError;
use crate::pibt::PriorityState;
use crate::seed;
use crate::wppl::{apply_disable_policy, effective_goals, CommitLog, DisablePolicy};

/// What a planner sees at the start of a call.
pub struct WorldView<'a> {
    pub step: usize,
    pub states: &'a [AgentState],
    /// Goals to plan for; disabled agents already point at their own cell.
    pub goals: &'a [VertexId],
    pub priorities: &'a PriorityState,
}

/// Per planning call summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleReport {
    pub plan_time: Duration,
    /// Window objective before and after refinement, for windowed planners.
    pub objectives: Option<(f64, f64)>,
    pub proposals: usize,
    pub commits: usize,
    pub log: CommitLog,
}

pub struct PlannedSteps {
    /// Joint actions for the next steps, at least one.
    pub actions: Vec<Vec<Action>>,
    /// Trailing all-Wait steps caused by planning past its budget.
    pub overrun_steps: usize,
    pub reports: Vec<CycleReport>,
}

pub trait Planner {
    fn next_steps(&mut self, world: &WorldView<'_>) -> PlannedSteps;

    fn disable_policy(&self) -> DisablePolicy {
        DisablePolicy::None
    }
}

/// Hands out the next goal when an agent completes one.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum TaskAssigner {
    /// Uniform over free cells other than the agent's current cell.
    UniformRandom { free: Vec<VertexId>, rng: ChaCha8Rng },
    /// Each agent cycles through its own list.
    Scripted { goals: Vec<Vec<VertexId>>, next: Vec<usize> },
}

impl TaskAssigner {
    pub fn uniform(map: &GridMap, root_seed: u64) -> Self {
        TaskAssigner::UniformRandom {
            free: map.free_vertices().collect(),
            rng: seed::rng(root_seed, seed::ASSIGNER),
        }
    }

    pub fn scripted(goals: Vec<Vec<VertexId>>) -> Self {
        assert!(goals.iter().all(|g| !g.is_empty()), "every agent needs at least one scripted goal");
        let next = vec![0; goals.len()];
        TaskAssigner::Scripted { goals, next }
    }

    pub fn assign(&mut self, agent: usize, current: VertexId) -> VertexId {
        match self {
            TaskAssigner::UniformRandom { free, rng } => {
                if free.len() == 1 {
                    return free[0];
                }
                let mut i = rng.gen_range(0..free.len() - 1);
                if let Ok(p) = free.binary_search(&current) {
                    if i >= p {
                        i += 1;
                    }
                }
                free[i]
            }
            TaskAssigner::Scripted { goals, next } => {
                let list = &goals[agent];
                let g = list[next[agent] % list.len()];
                next[agent] += 1;
                g
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub agent: usize,
    pub step: usize,
    pub goal: VertexId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    pub goals_reached: usize,
    pub throughput: f64,
    /// Per vertex: agent-steps spent without changing location.
    pub wait_usage: Vec<u64>,
    pub goal_log: Vec<GoalRecord>,
    /// Wall time of each planning call, in milliseconds.
    pub plan_times_ms: Vec<f64>,
    pub overrun_steps: usize,
    pub disabled_agents: usize,
    pub lns_proposals: usize,
    pub lns_commits: usize,
    /// Objective of the first window before and after refinement.
    pub first_window_objective: Option<(f64, f64)>,
}

impl RunMetrics {
    fn new(cells: usize) -> Self {
        Self {
            steps: 0,
            goals_reached: 0,
            throughput: 0.0,
            wait_usage: vec![0; cells],
            goal_log: Vec::new(),
            plan_times_ms: Vec::new(),
            overrun_steps: 0,
            disabled_agents: 0,
            lns_proposals: 0,
            lns_commits: 0,
            first_window_objective: None,
        }
    }

    /// Mean planning time per executed step, in milliseconds.
    pub fn mean_plan_time_ms(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.plan_times_ms.iter().sum::<f64>() / self.steps as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step {step}: planner returned {got} actions for {expected} agents")]
    Arity { step: usize, got: usize, expected: usize },
    #[error("step {step}: planner returned no actions")]
    NoActions { step: usize },
    #[error("step {step}: agent {agent}: {source}")]
    IllegalAction {
        step: usize,
        agent: usize,
        source: DomainError,
    },
    #[error("step {step}: invalid joint action, conflicts {conflicts:?}")]
    InvalidJointAction { step: usize, conflicts: Vec<Conflict> },
}

#[derive(Debug, Clone, Default)]
pub struct SimConfig {
    /// Root seed; priorities use its PRIORITY stream.
    pub seed: u64,
    pub record_trajectory: bool,
    pub keep_commit_log: bool,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: RunMetrics,
    pub trajectory: Option<Trajectory>,
    /// `(planning call, log)` when requested.
    pub commit_logs: Vec<(usize, CommitLog)>,
}

/// Runs `total_steps` steps. Every executed joint step is checked for legality
/// and conflicts; a bad step is a hard error.
pub fn simulate(
    instance: &Instance,
    planner: &mut dyn Planner,
    assigner: &mut TaskAssigner,
    total_steps: usize,
    cfg: &SimConfig,
) -> Result<SimOutput, SimError> {
    let map = instance.map.as_ref();
    let n = instance.num_agents();
    let mut states = instance.agents.clone();
    let mut priorities = PriorityState::new(n, &mut seed::rng(cfg.seed, seed::PRIORITY));
    let mut goals: Vec<VertexId> = states.iter().enumerate().map(|(a, s)| assigner.assign(a, s.location)).collect();
    let policy = planner.disable_policy();
    let mut disabled = apply_disable_policy(map, &states, &goals, &vec![false; n], &policy).disabled;
    for (a, &d) in disabled.iter().enumerate() {
        priorities.set_disabled(a, d);
    }

    let mut metrics = RunMetrics::new(map.num_cells());
    let mut trajectory = cfg.record_trajectory.then(|| Trajectory {
        model: instance.action_model,
        states: vec![states.clone()],
    });
    let mut commit_logs = Vec::new();
    let mut calls = 0usize;
    let mut step = 0usize;

    while step < total_steps {
        let planning_goals = effective_goals(&states, &goals, &disabled);
        let planned = planner.next_steps(&WorldView {
            step,
            states: &states,
            goals: &planning_goals,
            priorities: &priorities,
        });
        if planned.actions.is_empty() {
            return Err(SimError::NoActions { step });
        }
        for report in planned.reports {
            metrics.plan_times_ms.push(report.plan_time.as_secs_f64() * 1e3);
            metrics.lns_proposals += report.proposals;
            metrics.lns_commits += report.commits;
            if metrics.first_window_objective.is_none() {
                metrics.first_window_objective = report.objectives;
            }
            if cfg.keep_commit_log {
                commit_logs.push((calls, report.log));
            }
            calls += 1;
        }
        let executable = planned.actions.len();
        for (k, joint) in planned.actions.into_iter().enumerate() {
            if step == total_steps {
                break;
            }
            if joint.len() != n {
                return Err(SimError::Arity {
                    step: step + 1,
                    got: joint.len(),
                    expected: n,
                });
            }
            let mut next = Vec::with_capacity(n);
            for (agent, (&s, &a)) in states.iter().zip(&joint).enumerate() {
                let t = apply_action(map, s, a).map_err(|source| SimError::IllegalAction {
                    step: step + 1,
                    agent,
                    source,
                })?;
                next.push(t);
            }
            let conflicts = check_joint_step(&states, &next, step + 1);
            if !conflicts.is_empty() {
                return Err(SimError::InvalidJointAction {
                    step: step + 1,
                    conflicts,
                });
            }
            for (before, after) in states.iter().zip(&next) {
                if before.location == after.location {
                    metrics.wait_usage[before.location] += 1;
                }
            }
            step += 1;
            states = next;
            if k + planned.overrun_steps >= executable {
                metrics.overrun_steps += 1;
            }

            let mut reached = vec![false; n];
            for a in 0..n {
                if disabled[a] || states[a].location != goals[a] {
                    continue;
                }
                metrics.goal_log.push(GoalRecord {
                    agent: a,
                    step,
                    goal: goals[a],
                });
                reached[a] = true;
                goals[a] = assigner.assign(a, states[a].location);
            }
            if reached.iter().any(|&r| r) && policy == DisablePolicy::DeadendGoals {
                disabled = apply_disable_policy(map, &states, &goals, &disabled, &policy).disabled;
                for (a, &d) in disabled.iter().enumerate() {
                    priorities.set_disabled(a, d);
                }
            }
            priorities.update(&reached);
            if let Some(t) = trajectory.as_mut() {
                t.states.push(states.clone());
            }
        }
    }

    metrics.steps = step;
    metrics.goals_reached = metrics.goal_log.len();
    metrics.throughput = if step == 0 {
        0.0
    } else {
        metrics.goals_reached as f64 / step as f64
    };
    metrics.disabled_agents = disabled.iter().filter(|&&d| d).count();
    Ok(SimOutput {
        metrics,
        trajectory,
        commit_logs,
    })
}

/// Wait-usage grid with `null` on obstacles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<Vec<Option<u64>>>,
}

pub fn export_heatmap(metrics: &RunMetrics, map: &GridMap) -> Heatmap {
    let values = (0..map.height())
        .map(|r| {
            (0..map.width())
                .map(|c| {
                    let v = map.vertex(r, c);
                    map.is_free(v).then(|| metrics.wait_usage.get(v).copied().unwrap_or(0))
                })
                .collect()
        })
        .collect();
    Heatmap {
        height: map.height(),
        width: map.width(),
        values,
    }
}

impl Heatmap {
    pub fn to_json(&self) -> String {
        let mut out = format!("{{\n  \"height\": {},\n  \"width\": {},\n  \"values\": [\n", self.height, self.width);
        for (i, row) in self.values.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map_or_else(|| "null".to_string(), |x| x.to_string()))
                .collect();
            let sep = if i + 1 < self.values.len() { "," } else { "" };
            let _ = writeln!(out, "    [{}]{}", cells.join(", "), sep);
        }
        out.push_str("  ]\n}\n");
        out
    }
}

/// Joint states per step; index 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub model: ActionModel,
    pub states: Vec<Vec<AgentState>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("step {step}: agent {agent} makes an illegal transition")]
    Illegal { step: usize, agent: usize },
    #[error("step {step}: conflicts {conflicts:?}")]
    Conflict { step: usize, conflicts: Vec<Conflict> },
}

impl Trajectory {
    /// One line per step, agents separated by `,`, each as `row col O`
    /// (`row col` under the four-way model).
    pub fn to_text(&self, map: &GridMap) -> String {
        let mut out = String::new();
        for joint in &self.states {
            let parts: Vec<String> = joint
                .iter()
                .map(|s| {
                    let (r, c) = map.coords(s.location);
                    match self.model {
                        ActionModel::Rotation => format!("{r} {c} {}", s.orientation.as_char()),
                        ActionModel::FourWay => format!("{r} {c}"),
                    }
                })
                .collect();
            out.push_str(&parts.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, map: &GridMap, model: ActionModel) -> Result<Self, ParseError> {
        let mut states = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut joint = Vec::new();
            for (a, tuple) in line.split(',').enumerate() {
                let fields: Vec<&str> = tuple.split_whitespace().collect();
                let want = if model == ActionModel::Rotation { 3 } else { 2 };
                if fields.len() != want {
                    return Err(ParseError::new(
                        lineno,
                        format!("agent {a}: expected {want} fields, found {}", fields.len()),
                    ));
                }
                let coord = |k: usize, name: &str, bound: usize| -> Result<usize, ParseError> {
                    let v: usize = fields[k]
                        .parse()
                        .map_err(|_| ParseError::with_field(lineno, name, format!("agent {a}: not a number: {}", fields[k])))?;
                    if v >= bound {
                        return Err(ParseError::with_field(lineno, name, format!("agent {a}: {v} out of range")));
                    }
                    Ok(v)
                };
                let row = coord(0, "row", map.height())?;
                let col = coord(1, "col", map.width())?;
                let orientation = if model == ActionModel::Rotation {
                    let mut chars = fields[2].chars();
                    match (chars.next().and_then(Orientation::from_char), chars.next()) {
                        (Some(o), None) => o,
                        _ => {
                            return Err(ParseError::with_field(
                                lineno,
                                "orientation",
                                format!("agent {a}: bad orientation {}", fields[2]),
                            ))
                        }
                    }
                } else {
                    FOUR_WAY_ORIENTATION
                };
                let v = map.vertex(row, col);
                if !map.is_free(v) {
                    return Err(ParseError::new(lineno, format!("agent {a}: ({row}, {col}) is an obstacle")));
                }
                joint.push(AgentState::new(v, orientation));
            }
            if let Some(first) = states.first().map(Vec::len) {
                if joint.len() != first {
                    return Err(ParseError::new(
                        lineno,
                        format!("{} agents, first line has {first}", joint.len()),
                    ));
                }
            }
            states.push(joint);
        }
        Ok(Self { model, states })
    }

    /// Re-checks every step: legal per-agent transitions, no conflicts.
    pub fn validate(&self, map: &GridMap) -> Result<(), TrajectoryError> {
        for t in 1..self.states.len() {
            let (before, after) = (&self.states[t - 1], &self.states[t]);
            for (agent, (&s, &u)) in before.iter().zip(after).enumerate() {
                if infer_action(map, s, u, self.model).is_none() {
                    return Err(TrajectoryError::Illegal { step: t, agent });
                }
            }
            let conflicts = check_joint_step(before, after, t);
            if !conflicts.is_empty() {
                return Err(TrajectoryError::Conflict { step: t, conflicts });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Orientation::*;
    use crate::guidance::GuidanceGraph;
    use crate::heuristic::HeuristicCache;
    use crate::lns::Budget;
    use crate::wppl::{PibtPlanner, WpplConfig, WpplPlanner};
    use std::sync::Arc;

    fn open_instance(h: usize, w: usize, agents: Vec<AgentState>, model: ActionModel) -> Instance {
        Instance::new(Arc::new(GridMap::open(h, w)), agents, model).unwrap()
    }

    fn pibt(inst: &Instance) -> PibtPlanner {
        let cache = HeuristicCache::new(Arc::new(GuidanceGraph::uniform(inst.map.clone())), inst.action_model);
        PibtPlanner::new(Arc::new(cache), DisablePolicy::None)
    }

    struct Scripted(Vec<Vec<Action>>);

    impl Planner for Scripted {
        fn next_steps(&mut self, _: &WorldView<'_>) -> PlannedSteps {
            PlannedSteps {
                actions: self.0.clone(),
                overrun_steps: 0,
                reports: Vec::new(),
            }
        }
    }

    #[test]
    fn shuttle_between_two_cells() {
        // Goals 3 apart on a row: 3 steps out, then 2 turns + 3 forwards per leg.
        let inst = open_instance(1, 8, vec![AgentState::new(0, East)], ActionModel::Rotation);
        let mut assigner = TaskAssigner::scripted(vec![vec![3, 0]]);
        let out = simulate(&inst, &mut pibt(&inst), &mut assigner, 500, &SimConfig::default()).unwrap();
        let m = out.metrics;
        assert_eq!(m.goals_reached, 1 + (500 - 3) / 5);
        assert_eq!(m.throughput, m.goals_reached as f64 / 500.0);
        assert_eq!(m.goal_log[0], GoalRecord { agent: 0, step: 3, goal: 3 });
        assert_eq!(m.goal_log[1].step, 8);
    }

    #[test]
    fn swap_is_rejected() {
        let inst = open_instance(
            1,
            2,
            vec![AgentState::new(0, East), AgentState::new(1, West)],
            ActionModel::Rotation,
        );
        let mut planner = Scripted(vec![vec![Action::Forward, Action::Forward]]);
        let mut assigner = TaskAssigner::scripted(vec![vec![1], vec![0]]);
        let err = simulate(&inst, &mut planner, &mut assigner, 5, &SimConfig::default()).unwrap_err();
        assert!(matches!(err, SimError::InvalidJointAction { step: 1, .. }));
    }

    #[test]
    fn illegal_forward_is_rejected() {
        let inst = open_instance(1, 2, vec![AgentState::new(1, East)], ActionModel::Rotation);
        let mut planner = Scripted(vec![vec![Action::Forward]]);
        let mut assigner = TaskAssigner::scripted(vec![vec![0]]);
        let err = simulate(&inst, &mut planner, &mut assigner, 5, &SimConfig::default()).unwrap_err();
        assert!(matches!(err, SimError::IllegalAction { step: 1, agent: 0, .. }));
    }

    #[test]
    fn waits_and_turns_count_in_heatmap() {
        let map = Arc::new(GridMap::from_rows(&["..", ".@"]).unwrap());
        let inst = Instance::new(map.clone(), vec![AgentState::new(0, East)], ActionModel::Rotation).unwrap();
        let mut planner = Scripted(vec![vec![Action::Wait], vec![Action::RotateCw], vec![Action::Wait]]);
        let mut assigner = TaskAssigner::scripted(vec![vec![1]]);
        let out = simulate(&inst, &mut planner, &mut assigner, 3, &SimConfig::default()).unwrap();
        let heat = export_heatmap(&out.metrics, &map);
        assert_eq!(heat.values, vec![vec![Some(3), Some(0)], vec![Some(0), None]]);
        let empty = export_heatmap(&RunMetrics::new(4), &map);
        assert_eq!(empty.values[0], vec![Some(0), Some(0)]);
        let parsed: Heatmap = serde_json::from_str(&heat.to_json()).unwrap();
        assert_eq!(parsed, heat);
    }

    #[test]
    fn uniform_assigner_never_repeats_current() {
        let map = GridMap::open(3, 3);
        let mut a = TaskAssigner::uniform(&map, 1);
        for _ in 0..500 {
            assert_ne!(a.assign(0, 4), 4);
        }
    }

    #[test]
    fn all_disabled_reach_nothing() {
        let inst = open_instance(
            4,
            4,
            vec![AgentState::new(0, East), AgentState::new(5, East)],
            ActionModel::Rotation,
        );
        let cache = Arc::new(HeuristicCache::new(
            Arc::new(GuidanceGraph::uniform(inst.map.clone())),
            ActionModel::Rotation,
        ));
        let mut planner = PibtPlanner::new(cache, DisablePolicy::RandomK { k: 2, seed: 0 });
        let mut assigner = TaskAssigner::uniform(&inst.map, 3);
        let out = simulate(&inst, &mut planner, &mut assigner, 50, &SimConfig::default()).unwrap();
        assert_eq!(out.metrics.throughput, 0.0);
        assert_eq!(out.metrics.disabled_agents, 2);
    }

    #[test]
    fn trajectory_round_trips_and_validates() {
        let inst = open_instance(
            5,
            5,
            vec![AgentState::new(0, East), AgentState::new(24, West), AgentState::new(12, North)],
            ActionModel::Rotation,
        );
        let cache = Arc::new(HeuristicCache::new(
            Arc::new(GuidanceGraph::uniform(inst.map.clone())),
            ActionModel::Rotation,
        ));
        let cfg = WpplConfig {
            window: 4,
            replan_period: 2,
            budget: Budget::Iterations(10),
            ..WpplConfig::default()
        };
        let mut planner = WpplPlanner::new(cache, cfg);
        let mut assigner = TaskAssigner::uniform(&inst.map, 9);
        let sim = SimConfig {
            record_trajectory: true,
            ..SimConfig::default()
        };
        let out = simulate(&inst, &mut planner, &mut assigner, 41, &sim).unwrap();
        let traj = out.trajectory.unwrap();
        assert_eq!(traj.states.len(), 42);
        let text = traj.to_text(&inst.map);
        assert!(text.starts_with("0 0 E,4 4 W,2 2 N\n"));
        let back = Trajectory::parse(&text, &inst.map, ActionModel::Rotation).unwrap();
        assert_eq!(back, traj);
        back.validate(&inst.map).unwrap();
        assert_eq!(out.metrics.steps, 41);
        let json = out.metrics.to_json();
        assert_eq!(RunMetrics::from_json(&json).unwrap(), out.metrics);
    }

    #[test]
    fn trajectory_parse_errors_name_the_line() {
        let map = GridMap::open(2, 2);
        let err = Trajectory::parse("0 0 E\n0 9 E\n", &map, ActionModel::Rotation).unwrap_err();
        assert_eq!(err.line, 2);
        let err = Trajectory::parse("0 0 Q\n", &map, ActionModel::Rotation).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("orientation"));
        let t = Trajectory::parse("0 0\n0 1\n", &map, ActionModel::FourWay).unwrap();
        assert!(t.validate(&map).is_ok());
        let bad = Trajectory::parse("0 0\n1 1\n", &map, ActionModel::FourWay).unwrap();
        assert_eq!(bad.validate(&map), Err(TrajectoryError::Illegal { step: 1, agent: 0 }));
    }
}
