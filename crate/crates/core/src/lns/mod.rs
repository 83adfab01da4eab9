//! Anytime large neighborhood search over a windowed plan.
//!
//! Each iteration picks a small group of agents, drops their paths, replans
//! them one after another with space-time A* against everybody else, and
//! keeps the result only if the approximate sum of costs strictly drops.

mod plan;
mod reservation;
mod search;

use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ActionModel, AgentState, VertexId};
use crate::guidance::GuidanceGraph;
use crate::heuristic::DistanceTable;

pub use plan::{agent_cost, eval_objective, step_cost, PlanError, WindowedPlan};
pub use reservation::{Occupancy, ReservationTable};
pub use search::{plan_agent, SearchResult};

pub const DEFAULT_NEIGHBORHOOD_SIZE: usize = 8;

/// How much refinement a planning call may spend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    Iterations(u64),
    WallTime(Duration),
}

impl Budget {
    pub fn is_zero(&self) -> bool {
        match self {
            Budget::Iterations(n) => *n == 0,
            Budget::WallTime(d) => d.is_zero(),
        }
    }

    /// Scales a wall-time budget (e.g. per step to per cycle); iteration
    /// budgets are per planning call and unchanged.
    pub fn times(self, k: u32) -> Self {
        match self {
            Budget::Iterations(n) => Budget::Iterations(n),
            Budget::WallTime(d) => Budget::WallTime(d * k),
        }
    }
}

/// Tracks consumption of a [`Budget`].
#[derive(Debug, Clone, Copy)]
pub struct BudgetClock {
    budget: Budget,
    started: Instant,
}

impl BudgetClock {
    pub fn start(budget: Budget) -> Self {
        Self {
            budget,
            started: Instant::now(),
        }
    }

    pub fn exhausted(&self, iterations_done: u64) -> bool {
        match self.budget {
            Budget::Iterations(n) => iterations_done >= n,
            Budget::WallTime(d) => self.started.elapsed() >= d,
        }
    }

    pub fn deadline(&self) -> Option<Instant> {
        match self.budget {
            Budget::Iterations(_) => None,
            Budget::WallTime(d) => Some(self.started + d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Random,
    AgentBased,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub members: Vec<usize>,
    pub strategy: Strategy,
}

/// Read-only inputs shared by every LNS iteration of one window.
#[derive(Clone, Copy)]
pub struct LnsContext<'a> {
    pub guidance: &'a GuidanceGraph,
    pub model: ActionModel,
    /// Table of each agent's goal, aligned with the plan's goals.
    pub tables: &'a [Arc<DistanceTable>],
    /// Disabled agents are never chosen as seeds.
    pub disabled: &'a [bool],
    pub neighborhood_size: usize,
}

impl LnsContext<'_> {
    /// A lower bound on the objective: every agent's unconstrained cost.
    pub fn lower_bound(&self, plan: &WindowedPlan) -> f64 {
        (0..plan.num_agents())
            .map(|a| self.tables[a].distance(plan.path(a)[0]))
            .sum()
    }

    fn delay(&self, plan: &WindowedPlan, agent: usize) -> f64 {
        plan.costs()[agent] - self.tables[agent].distance(plan.path(agent)[0])
    }
}

/// Seeds already used by agent-based selection; cleared once every
/// delayed agent has been tried.
#[derive(Debug, Default, Clone)]
pub struct SeedTabu {
    used: HashSet<usize>,
}

impl SeedTabu {
    pub fn clear(&mut self) {
        self.used.clear();
    }
}

/// Follows the steepest descent of the cost-to-go for `steps` moves.
fn ideal_route(ctx: &LnsContext<'_>, agent: usize, start: AgentState, steps: usize) -> Vec<VertexId> {
    let table = &ctx.tables[agent];
    let map = ctx.guidance.map();
    let mut s = start;
    let mut cells = vec![s.location];
    for _ in 0..steps {
        let next = crate::domain::successors(map, s, ctx.model)
            .into_iter()
            .map(|(_, t)| t)
            .min_by(|x, y| table.distance(*x).total_cmp(&table.distance(*y)));
        match next {
            Some(t) if table.distance(t) < table.distance(s) => {
                s = t;
                if cells.last() != Some(&s.location) {
                    cells.push(s.location);
                }
            }
            _ => break,
        }
    }
    cells
}

/// Picks a neighborhood. Random samples agents uniformly; AgentBased seeds
/// with the most delayed enabled agent (outside `tabu`) and adds agents
/// that occupy cells of its planned path or of its unobstructed route, then
/// fills up at random.
pub fn select_neighborhood<R: Rng>(
    ctx: &LnsContext<'_>,
    plan: &WindowedPlan,
    occupancy: &Occupancy,
    rng: &mut R,
    strategy: Strategy,
    tabu: &mut SeedTabu,
) -> Neighborhood {
    let n = plan.num_agents();
    assert!(n >= 1, "need at least one agent");
    let size = ctx.neighborhood_size.clamp(1, n);
    if strategy == Strategy::Random {
        return Neighborhood {
            members: index::sample(rng, n, size).into_vec(),
            strategy,
        };
    }

    let mut pick_seed = |tabu: &SeedTabu| {
        let mut best: Option<(f64, usize)> = None;
        let mut ties = 0u32;
        for a in 0..n {
            if ctx.disabled.get(a).copied().unwrap_or(false) || tabu.used.contains(&a) {
                continue;
            }
            let d = ctx.delay(plan, a);
            match best {
                Some((bd, _)) if d < bd => {}
                Some((bd, _)) if d == bd => {
                    // Reservoir sampling among equally delayed agents.
                    ties += 1;
                    if rng.gen_range(0..=ties) == 0 {
                        best = Some((d, a));
                    }
                }
                _ => {
                    best = Some((d, a));
                    ties = 0;
                }
            }
        }
        best.map(|(_, a)| a)
    };
    let seed = match pick_seed(tabu) {
        Some(a) => a,
        None => {
            tabu.clear();
            match pick_seed(tabu) {
                Some(a) => a,
                None => {
                    // Every agent is disabled.
                    return Neighborhood {
                        members: index::sample(rng, n, size).into_vec(),
                        strategy: Strategy::Random,
                    };
                }
            }
        }
    };
    tabu.used.insert(seed);

    let mut cells: Vec<VertexId> = plan.path(seed).iter().map(|s| s.location).collect();
    cells.extend(ideal_route(ctx, seed, plan.path(seed)[0], plan.window()));
    cells.sort_unstable();
    cells.dedup();
    let mut touching: Vec<usize> = Vec::new();
    for &v in &cells {
        for t in 0..occupancy.steps() {
            if let Some(k) = occupancy.get(v, t) {
                if k != seed && !touching.contains(&k) {
                    touching.push(k);
                }
            }
        }
    }
    touching.shuffle(rng);
    let mut members = vec![seed];
    members.extend(touching.into_iter().take(size - 1));
    if members.len() < size {
        let mut rest: Vec<usize> = (0..n).filter(|a| !members.contains(a)).collect();
        rest.shuffle(rng);
        let missing = size - members.len();
        members.extend(rest.into_iter().take(missing));
    }
    Neighborhood { members, strategy }
}

/// One replacement path per member with its windowed cost.
pub type Replacement = Vec<(usize, Vec<AgentState>, f64)>;

/// Replans every member in a random order against the paths of all other
/// agents. Returns `None` if some member has no conflict-free path.
pub fn replan_neighborhood<R: Rng>(
    ctx: &LnsContext<'_>,
    plan: &WindowedPlan,
    nbhd: &Neighborhood,
    occupancy: &Occupancy,
    rng: &mut R,
) -> Option<Replacement> {
    let mut order = nbhd.members.clone();
    order.shuffle(rng);
    let mut reservations = ReservationTable::new(occupancy, &nbhd.members);
    let mut out = Vec::with_capacity(order.len());
    for &a in &order {
        let found = plan_agent(
            ctx.guidance,
            ctx.model,
            &ctx.tables[a],
            plan.goals()[a],
            plan.path(a)[0],
            plan.window(),
            &reservations,
        )?;
        reservations.add_path(a, found.path.clone());
        out.push((a, found.path, found.cost));
    }
    Some(out)
}

/// Whether `replacement` is conflict-free against every non-member path of
/// `plan` and starts where the members currently are.
pub fn replacement_fits(plan: &WindowedPlan, occupancy: &Occupancy, replacement: &Replacement) -> bool {
    let members: Vec<usize> = replacement.iter().map(|(a, _, _)| *a).collect();
    let mut table = ReservationTable::new(occupancy, &members);
    for (a, path, _) in replacement {
        if path.len() != plan.window() + 1 || path[0] != plan.path(*a)[0] {
            return false;
        }
        for t in 1..path.len() {
            if table.blocked(path[t - 1].location, path[t].location, t) {
                return false;
            }
        }
        table.add_path(*a, path.clone());
    }
    true
}

/// What happened in one LNS iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub neighborhood: Neighborhood,
    pub objective_before: f64,
    /// `None` when replanning failed.
    pub objective_after: Option<f64>,
    pub accepted: bool,
}

/// One select + replan round on `plan`; the replacement is not applied.
pub fn propose<R: Rng>(
    ctx: &LnsContext<'_>,
    plan: &WindowedPlan,
    occupancy: &Occupancy,
    rng: &mut R,
    tabu: &mut SeedTabu,
) -> (Neighborhood, Option<Replacement>) {
    let strategy = if rng.gen_bool(0.5) {
        Strategy::Random
    } else {
        Strategy::AgentBased
    };
    let nbhd = select_neighborhood(ctx, plan, occupancy, rng, strategy, tabu);
    let rep = replan_neighborhood(ctx, plan, &nbhd, occupancy, rng);
    (nbhd, rep)
}

/// Installs `replacement` into `plan`, keeping `occupancy` in sync.
pub fn apply_replacement(plan: &mut WindowedPlan, occupancy: &mut Occupancy, replacement: Replacement) {
    for (a, path, _) in &replacement {
        occupancy.remove(*a, plan.path(*a));
        occupancy.insert(*a, path);
    }
    plan.replace(replacement);
}

/// Anytime refinement: repeats select / replan / evaluate until the budget is
/// spent (or the objective meets its lower bound) and keeps strict
/// improvements only.
pub fn lns_refine<R: Rng>(
    ctx: &LnsContext<'_>,
    plan: WindowedPlan,
    budget: Budget,
    rng: &mut R,
) -> (WindowedPlan, Vec<IterationRecord>) {
    let mut plan = plan;
    let mut log = Vec::new();
    if budget.is_zero() {
        return (plan, log);
    }
    let cells = ctx.guidance.map().num_cells();
    let mut occupancy = Occupancy::from_plan(&plan, cells);
    let lower_bound = ctx.lower_bound(&plan);
    let clock = BudgetClock::start(budget);
    let mut tabu = SeedTabu::default();
    let mut iteration = 0u64;
    while !clock.exhausted(iteration) && plan.objective() > lower_bound {
        let before = plan.objective();
        let (nbhd, rep) = propose(ctx, &plan, &occupancy, rng, &mut tabu);
        let after = rep.as_ref().map(|r| plan.objective_with(r));
        let accepted = after.is_some_and(|a| a < before);
        if accepted {
            apply_replacement(&mut plan, &mut occupancy, rep.expect("accepted implies a replacement"));
        }
        log.push(IterationRecord {
            iteration,
            neighborhood: nbhd,
            objective_before: before,
            objective_after: after,
            accepted,
        });
        iteration += 1;
    }
    (plan, log)
}

/// Budget expressed as wall time, for reporting.
pub fn budget_duration(budget: Budget) -> Option<Duration> {
    match budget {
        Budget::WallTime(d) => Some(d),
        Budget::Iterations(_) => None,
    }
}
