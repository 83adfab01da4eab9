//! Windowed planning: every `h` steps, roll PIBT out for `w` steps (hinted
//! by the unexecuted tail of the previous window), refine the rollout with
//! parallel LNS, and execute its first `h` steps.

mod parallel;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{infer_action, Action, ActionModel, AgentState, GridMap, VertexId};
use crate::guidance::GuidanceGraph;
use crate::heuristic::{DistanceTable, HeuristicCache};
use crate::lns::{Budget, LnsContext, WindowedPlan, DEFAULT_NEIGHBORHOOD_SIZE};
use crate::pibt::{pibt_rollout, pibt_step, tables_for, Hints, PibtContext, PriorityState};
use crate::seed;
use crate::simulator::{CycleReport, PlannedSteps, Planner, WorldView};

pub use parallel::{parallel_refine, CommitEntry, CommitLog};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisablePolicy {
    #[default]
    None,
    /// Disable an agent once it is handed a goal on a cell with one neighbor.
    DeadendGoals,
    /// Disable `k` agents sampled with `seed`.
    RandomK { k: usize, seed: u64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("replan period h = {h} must satisfy 1 <= h <= w = {w}")]
    Period { h: usize, w: usize },
    #[error("workers must be at least 1")]
    Workers,
    #[error("neighborhood size must be at least 1")]
    Neighborhood,
    #[error("RandomK disables {k} agents but there are only {n}")]
    TooManyDisabled { k: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WpplConfig {
    pub window: usize,
    pub replan_period: usize,
    /// Iterations per replan, or wall time per executed step.
    pub budget: Budget,
    pub workers: usize,
    pub reuse: bool,
    pub disable_policy: DisablePolicy,
    pub seed: u64,
    pub neighborhood_size: usize,
}

impl Default for WpplConfig {
    fn default() -> Self {
        Self {
            window: 10,
            replan_period: 3,
            budget: Budget::WallTime(Duration::from_secs(1)),
            workers: 1,
            reuse: true,
            disable_policy: DisablePolicy::None,
            seed: 0,
            neighborhood_size: DEFAULT_NEIGHBORHOOD_SIZE,
        }
    }
}

impl WpplConfig {
    pub fn validate(&self, num_agents: usize) -> Result<(), ConfigError> {
        if self.replan_period == 0 || self.replan_period > self.window {
            return Err(ConfigError::Period {
                h: self.replan_period,
                w: self.window,
            });
        }
        if self.workers == 0 {
            return Err(ConfigError::Workers);
        }
        if self.neighborhood_size == 0 {
            return Err(ConfigError::Neighborhood);
        }
        if let DisablePolicy::RandomK { k, .. } = self.disable_policy {
            if k >= num_agents {
                return Err(ConfigError::TooManyDisabled { k, n: num_agents });
            }
        }
        Ok(())
    }

    /// Budget of one replan: iteration budgets as given, wall time scaled by
    /// the number of steps the plan is computed alongside.
    pub fn cycle_budget(&self) -> Budget {
        self.budget.times(self.replan_period as u32)
    }

    pub fn is_pipelined(&self) -> bool {
        matches!(self.budget, Budget::WallTime(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisableOutcome {
    pub disabled: Vec<bool>,
    /// Goals with disabled agents pointed at their current cells.
    pub goals: Vec<VertexId>,
}

/// Applies `policy` on top of the already disabled set. Disabling is sticky:
/// a disabled agent gets no new tasks, so it never becomes enabled again.
pub fn apply_disable_policy(
    map: &GridMap,
    states: &[AgentState],
    goals: &[VertexId],
    already: &[bool],
    policy: &DisablePolicy,
) -> DisableOutcome {
    let n = states.len();
    let mut disabled = already.to_vec();
    match policy {
        DisablePolicy::None => {}
        DisablePolicy::DeadendGoals => {
            for (d, &g) in disabled.iter_mut().zip(goals) {
                *d |= map.is_deadend(g);
            }
        }
        DisablePolicy::RandomK { k, seed } => {
            let mut rng = seed::rng(*seed, seed::RANDOM_K);
            for a in index::sample(&mut rng, n, (*k).min(n)) {
                disabled[a] = true;
            }
        }
    }
    let goals = effective_goals(states, goals, &disabled);
    DisableOutcome { disabled, goals }
}

/// Goal used for planning: the assigned goal, or the current cell when
/// disabled.
pub fn effective_goals(states: &[AgentState], goals: &[VertexId], disabled: &[bool]) -> Vec<VertexId> {
    states
        .iter()
        .zip(goals)
        .zip(disabled)
        .map(|((s, &g), &d)| if d { s.location } else { g })
        .collect()
}

/// Hints for the next window from the previous one: steps `h..=w` of each
/// agent whose goal is unchanged and who stands where the plan predicted.
pub fn tail_hints(prev: &WindowedPlan, h: usize, states: &[AgentState], goals: &[VertexId]) -> Hints {
    let tails = (0..prev.num_agents())
        .map(|a| {
            let tail = &prev.path(a)[h.min(prev.window())..];
            (prev.goals()[a] == goals[a] && tail[0] == states[a]).then(|| tail.to_vec())
        })
        .collect();
    Hints::new(tails)
}

#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub plan: WindowedPlan,
    pub log: CommitLog,
    pub initial_objective: f64,
}

/// Everything [`plan_window`] reads about the world besides the joint state.
#[derive(Clone, Copy)]
pub struct WindowInputs<'a> {
    pub guidance: &'a GuidanceGraph,
    pub model: ActionModel,
    pub tables: &'a [Arc<DistanceTable>],
    pub goals: &'a [VertexId],
    pub priorities: &'a PriorityState,
}

/// PIBT rollout of `cfg.window` steps, refined by parallel LNS under `budget`.
pub fn plan_window(
    inputs: WindowInputs<'_>,
    states: &[AgentState],
    cfg: &WpplConfig,
    budget: Budget,
    reused_tail: Option<&Hints>,
    lns_seed: u64,
) -> WindowOutcome {
    let rollout = pibt_rollout(
        inputs.guidance,
        inputs.model,
        inputs.tables,
        states,
        inputs.goals,
        inputs.priorities,
        cfg.window,
        reused_tail,
    );
    let initial_objective = rollout.objective();
    let ctx = LnsContext {
        guidance: inputs.guidance,
        model: inputs.model,
        tables: inputs.tables,
        disabled: inputs.priorities.disabled(),
        neighborhood_size: cfg.neighborhood_size,
    };
    let (plan, log) = parallel_refine(&ctx, rollout, budget, cfg.workers, lns_seed);
    WindowOutcome {
        plan,
        log,
        initial_objective,
    }
}

fn plan_actions(map: &GridMap, model: ActionModel, plan: &WindowedPlan, steps: usize) -> Vec<Vec<Action>> {
    (1..=steps)
        .map(|t| {
            (0..plan.num_agents())
                .map(|a| {
                    infer_action(map, plan.path(a)[t - 1], plan.path(a)[t], model)
                        .expect("windowed plans hold legal transitions")
                })
                .collect()
        })
        .collect()
}

/// The WPPL planner. In iteration-budget mode each cycle plans from the
/// current state and then executes; in wall-time mode the next window is
/// planned from the state the current window predicts `h` steps ahead, with
/// the goals known at the start of the cycle, and any time beyond `h` step
/// budgets is paid as all-Wait steps.
pub struct WpplPlanner {
    guidance: Arc<GuidanceGraph>,
    cache: Arc<HeuristicCache>,
    model: ActionModel,
    cfg: WpplConfig,
    prev: Option<WindowedPlan>,
    cycle: u64,
}

impl WpplPlanner {
    pub fn new(cache: Arc<HeuristicCache>, cfg: WpplConfig) -> Self {
        Self {
            guidance: cache.guidance().clone(),
            model: cache.model(),
            cache,
            cfg,
            prev: None,
            cycle: 0,
        }
    }

    pub fn config(&self) -> &WpplConfig {
        &self.cfg
    }

    fn plan(&mut self, states: &[AgentState], goals: &[VertexId], priorities: &PriorityState) -> (WindowOutcome, Duration) {
        let started = Instant::now();
        let tables = tables_for(&self.cache, goals);
        let hints = match (&self.prev, self.cfg.reuse) {
            (Some(prev), true) => Some(tail_hints(prev, self.cfg.replan_period, states, goals)),
            _ => None,
        };
        let lns_seed = seed::split(seed::split(self.cfg.seed, seed::LNS), self.cycle);
        self.cycle += 1;
        let inputs = WindowInputs {
            guidance: &self.guidance,
            model: self.model,
            tables: &tables,
            goals,
            priorities,
        };
        let cycle_budget = self.cfg.cycle_budget();
        let budget = match cycle_budget {
            // Table lookups and the rollout count against wall-time budgets.
            Budget::WallTime(d) => Budget::WallTime(d.saturating_sub(started.elapsed())),
            b => b,
        };
        let outcome = plan_window(inputs, states, &self.cfg, budget, hints.as_ref(), lns_seed);
        (outcome, started.elapsed())
    }

    fn report(outcome: &WindowOutcome, plan_time: Duration) -> CycleReport {
        CycleReport {
            plan_time,
            objectives: Some((outcome.initial_objective, outcome.plan.objective())),
            proposals: outcome.log.len(),
            commits: outcome.log.committed(),
            log: outcome.log.clone(),
        }
    }
}

impl Planner for WpplPlanner {
    fn disable_policy(&self) -> DisablePolicy {
        self.cfg.disable_policy.clone()
    }

    fn next_steps(&mut self, world: &WorldView<'_>) -> PlannedSteps {
        let h = self.cfg.replan_period;
        let map = self.guidance.map().clone();
        if !self.cfg.is_pipelined() {
            let (outcome, plan_time) = self.plan(world.states, world.goals, world.priorities);
            let actions = plan_actions(&map, self.model, &outcome.plan, h);
            let report = Self::report(&outcome, plan_time);
            self.prev = Some(outcome.plan);
            return PlannedSteps {
                actions,
                overrun_steps: 0,
                reports: vec![report],
            };
        }

        let mut reports = Vec::new();
        let executing = match self.prev.take() {
            Some(p) if p.states_at(0) == world.states => p,
            _ => {
                // Bootstrap, or the world diverged from the prediction.
                let (outcome, plan_time) = self.plan(world.states, world.goals, world.priorities);
                reports.push(Self::report(&outcome, plan_time));
                outcome.plan
            }
        };
        let mut actions = plan_actions(&map, self.model, &executing, h);
        let predicted = executing.states_at(h);
        let goals = effective_goals(&predicted, world.goals, world.priorities.disabled());
        self.prev = Some(executing);
        let (outcome, plan_time) = self.plan(&predicted, &goals, world.priorities);
        let per_step = match self.cfg.budget {
            Budget::WallTime(d) => d,
            Budget::Iterations(_) => unreachable!("pipelining needs a wall-time budget"),
        };
        let allowed = per_step * h as u32;
        let overrun_steps = if plan_time > allowed && !per_step.is_zero() {
            (plan_time - allowed).as_secs_f64() / per_step.as_secs_f64()
        } else {
            0.0
        }
        .ceil() as usize;
        let n = world.states.len();
        actions.extend(std::iter::repeat_n(vec![Action::Wait; n], overrun_steps));
        reports.push(Self::report(&outcome, plan_time));
        self.prev = Some(outcome.plan);
        PlannedSteps {
            actions,
            overrun_steps,
            reports,
        }
    }
}

/// Plain PIBT, one step per call.
pub struct PibtPlanner {
    cache: Arc<HeuristicCache>,
    disable_policy: DisablePolicy,
}

impl PibtPlanner {
    pub fn new(cache: Arc<HeuristicCache>, disable_policy: DisablePolicy) -> Self {
        Self { cache, disable_policy }
    }
}

impl Planner for PibtPlanner {
    fn disable_policy(&self) -> DisablePolicy {
        self.disable_policy.clone()
    }

    fn next_steps(&mut self, world: &WorldView<'_>) -> PlannedSteps {
        let started = Instant::now();
        let tables = tables_for(&self.cache, world.goals);
        let ctx = PibtContext {
            map: self.cache.guidance().map(),
            model: self.cache.model(),
            tables: &tables,
        };
        let intent = pibt_step(ctx, world.states, world.priorities, None);
        PlannedSteps {
            actions: vec![intent.first_action],
            overrun_steps: 0,
            reports: vec![CycleReport {
                plan_time: started.elapsed(),
                ..CycleReport::default()
            }],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Orientation::*;
    use crate::lns::lns_refine;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn crowd(seed: u64, n: usize, size: usize) -> (Arc<HeuristicCache>, Vec<AgentState>, Vec<VertexId>, PriorityState) {
        let map = Arc::new(GridMap::open(size, size));
        let cache = Arc::new(HeuristicCache::new(
            Arc::new(GuidanceGraph::uniform(map)),
            ActionModel::Rotation,
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = index::sample(&mut rng, size * size, 2 * n).into_vec();
        let starts = cells[..n].iter().map(|&v| AgentState::new(v, East)).collect();
        let goals = cells[n..].to_vec();
        (cache, starts, goals, PriorityState::new(n, &mut rng))
    }

    fn window(cfg: &WpplConfig, cache: &HeuristicCache, s: &[AgentState], g: &[VertexId], p: &PriorityState, budget: Budget) -> WindowOutcome {
        let tables = tables_for(cache, g);
        let inputs = WindowInputs {
            guidance: cache.guidance(),
            model: ActionModel::Rotation,
            tables: &tables,
            goals: g,
            priorities: p,
        };
        plan_window(inputs, s, cfg, budget, None, 5)
    }

    #[test]
    fn config_checks() {
        let mut cfg = WpplConfig::default();
        assert!(cfg.validate(10).is_ok());
        cfg.replan_period = 11;
        assert!(matches!(cfg.validate(10), Err(ConfigError::Period { .. })));
        cfg.replan_period = 3;
        cfg.disable_policy = DisablePolicy::RandomK { k: 10, seed: 0 };
        assert!(cfg.validate(10).is_err());
        cfg.workers = 0;
        cfg.disable_policy = DisablePolicy::None;
        assert_eq!(cfg.validate(10), Err(ConfigError::Workers));
    }

    #[test]
    fn zero_budget_is_the_rollout() {
        let (cache, s, g, p) = crowd(1, 20, 8);
        let cfg = WpplConfig {
            workers: 4,
            ..WpplConfig::default()
        };
        let out = window(&cfg, &cache, &s, &g, &p, Budget::Iterations(0));
        let tables = tables_for(&cache, &g);
        let rollout = pibt_rollout(cache.guidance(), ActionModel::Rotation, &tables, &s, &g, &p, 10, None);
        assert_eq!(out.plan, rollout);
        assert!(out.log.is_empty());
    }

    #[test]
    fn one_worker_equals_lns_refine() {
        let (cache, s, g, p) = crowd(2, 20, 8);
        let tables = tables_for(&cache, &g);
        let rollout = pibt_rollout(cache.guidance(), ActionModel::Rotation, &tables, &s, &g, &p, 6, None);
        let disabled = vec![false; 20];
        let ctx = LnsContext {
            guidance: cache.guidance(),
            model: ActionModel::Rotation,
            tables: &tables,
            disabled: &disabled,
            neighborhood_size: 4,
        };
        let (a, log) = parallel_refine(&ctx, rollout.clone(), Budget::Iterations(60), 1, 99);
        let (b, recs) = lns_refine(&ctx, rollout, Budget::Iterations(60), &mut seed::rng(99, 0));
        assert_eq!(a, b);
        assert_eq!(log.len(), recs.len());
        assert!(log.is_monotone());
    }

    #[test]
    fn many_workers_stay_valid_and_monotone() {
        let (cache, s, g, p) = crowd(3, 30, 9);
        let tables = tables_for(&cache, &g);
        let rollout = pibt_rollout(cache.guidance(), ActionModel::Rotation, &tables, &s, &g, &p, 8, None);
        let disabled = vec![false; 30];
        let ctx = LnsContext {
            guidance: cache.guidance(),
            model: ActionModel::Rotation,
            tables: &tables,
            disabled: &disabled,
            neighborhood_size: 4,
        };
        for workers in [2, 4, 8] {
            let (plan, log) = parallel_refine(&ctx, rollout.clone(), Budget::Iterations(300), workers, 7);
            plan.validate(cache.guidance().map(), ActionModel::Rotation).unwrap();
            assert!(log.is_monotone());
            assert!(plan.objective() <= rollout.objective());
            assert_eq!(log.len(), 300.min(log.len()));
            if let Some(last) = log.accepted_objectives().last() {
                assert_eq!(*last, plan.objective());
            }
        }
    }

    #[test]
    fn deadend_goals_disable() {
        // (0,1) only touches (1,1).
        let t = GridMap::from_rows(&["@.@", "...", "@@@"]).unwrap();
        let states = [AgentState::new(3, East), AgentState::new(5, East)];
        let out = apply_disable_policy(&t, &states, &[1, 4], &[false, false], &DisablePolicy::DeadendGoals);
        assert_eq!(out.disabled, vec![true, false]);
        assert_eq!(out.goals, vec![3, 4]);
        let none = apply_disable_policy(&t, &states, &[1, 4], &[false, false], &DisablePolicy::None);
        assert_eq!(none.disabled, vec![false, false]);
    }

    #[test]
    fn random_k_disables_exactly_k() {
        let map = GridMap::open(10, 10);
        let states: Vec<_> = (0..40).map(|v| AgentState::new(v, East)).collect();
        let goals: Vec<_> = (50..90).collect();
        let out = apply_disable_policy(&map, &states, &goals, &[false; 40], &DisablePolicy::RandomK { k: 15, seed: 3 });
        assert_eq!(out.disabled.iter().filter(|d| **d).count(), 15);
        let again = apply_disable_policy(&map, &states, &goals, &[false; 40], &DisablePolicy::RandomK { k: 15, seed: 3 });
        assert_eq!(out, again);
    }

    #[test]
    fn tail_hints_track_previous_plan() {
        let (cache, s, g, p) = crowd(4, 10, 8);
        let cfg = WpplConfig {
            window: 6,
            replan_period: 2,
            ..WpplConfig::default()
        };
        let out = window(&cfg, &cache, &s, &g, &p, Budget::Iterations(20));
        let next = out.plan.states_at(2);
        let hints = tail_hints(&out.plan, 2, &next, &g);
        for a in 0..10 {
            assert_eq!(hints.tail(a).unwrap(), &out.plan.path(a)[2..]);
        }
        let mut moved = g.clone();
        moved[0] = (g[0] + 1) % 64;
        assert!(tail_hints(&out.plan, 2, &next, &moved).tail(0).is_none());
        // w = h leaves single-state tails, which give no hint.
        let flat = tail_hints(&out.plan, 6, &out.plan.states_at(6), &g);
        assert_eq!(flat.target_for(0, 1, out.plan.states_at(6)[0]), None);
    }
}
