//! Priority Inheritance with Backtracking, adapted to rotation kinematics.
//!
//! Each step every agent picks a next *location* the classic way: agents are
//! visited by decreasing priority, candidates are sorted by cost-to-go, and a
//! candidate held by a lower-priority agent pushes that agent first. The
//! chosen location is then converted to the first action leading there. An
//! agent that must rotate first stays where it is, so reservations are made
//! on the cell the agent actually occupies after this step. That makes every
//! executed step collision-free by construction.

use std::sync::Arc;

use arrayvec::ArrayVec;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{apply_action, turn_toward, Action, ActionModel, AgentState, GridMap, Orientation, VertexId};
use crate::guidance::GuidanceGraph;
use crate::heuristic::{DistanceTable, HeuristicCache};
use crate::lns::WindowedPlan;

/// Per-agent priorities: steps since the last goal, a distinct tiebreak in
/// `[0, 1)`, and a disabled flag that ranks the agent below everyone.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityState {
    elapsed: Vec<u32>,
    tiebreak: Vec<f64>,
    disabled: Vec<bool>,
}

impl PriorityState {
    /// Tiebreaks are a random permutation of `k / n`.
    pub fn new<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut ranks: Vec<usize> = (0..n).collect();
        ranks.shuffle(rng);
        Self {
            elapsed: vec![0; n],
            tiebreak: ranks.into_iter().map(|r| r as f64 / n.max(1) as f64).collect(),
            disabled: vec![false; n],
        }
    }

    pub fn from_parts(elapsed: Vec<u32>, tiebreak: Vec<f64>, disabled: Vec<bool>) -> Self {
        assert!(elapsed.len() == tiebreak.len() && tiebreak.len() == disabled.len());
        assert!(tiebreak.iter().all(|t| (0.0..1.0).contains(t)), "tiebreaks must lie in [0, 1)");
        let mut sorted = tiebreak.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted.windows(2).all(|w| w[0] < w[1]), "tiebreaks must be distinct");
        Self {
            elapsed,
            tiebreak,
            disabled,
        }
    }

    pub fn len(&self) -> usize {
        self.elapsed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elapsed.is_empty()
    }

    pub fn elapsed(&self, agent: usize) -> u32 {
        self.elapsed[agent]
    }

    pub fn tiebreak(&self, agent: usize) -> f64 {
        self.tiebreak[agent]
    }

    pub fn is_disabled(&self, agent: usize) -> bool {
        self.disabled[agent]
    }

    pub fn disabled(&self) -> &[bool] {
        &self.disabled
    }

    pub fn set_disabled(&mut self, agent: usize, disabled: bool) {
        self.disabled[agent] = disabled;
    }

    /// `elapsed + tiebreak`, or `-1 - tiebreak` when disabled.
    pub fn priority(&self, agent: usize) -> f64 {
        if self.disabled[agent] {
            -1.0 - self.tiebreak[agent]
        } else {
            self.elapsed[agent] as f64 + self.tiebreak[agent]
        }
    }

    /// Agents by decreasing priority.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.priority(b).total_cmp(&self.priority(a)));
        order
    }

    /// In place form of [`update_priorities`].
    pub fn update(&mut self, reached: &[bool]) {
        for (e, &r) in self.elapsed.iter_mut().zip(reached) {
            *e = if r { 0 } else { e.saturating_add(1) };
        }
    }
}

/// Resets `elapsed` for agents that reached their goal, increments the rest.
pub fn update_priorities(priorities: &PriorityState, reached: &[bool]) -> PriorityState {
    let mut next = priorities.clone();
    next.update(reached);
    next
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepIntent {
    /// Location each agent wants to reach next.
    pub target: Vec<VertexId>,
    /// Location each agent occupies after `first_action`.
    pub realized: Vec<VertexId>,
    pub first_action: Vec<Action>,
    pub next: Vec<AgentState>,
}

/// Everything one PIBT step reads besides the agent states.
#[derive(Clone, Copy)]
pub struct PibtContext<'a> {
    pub map: &'a GridMap,
    pub model: ActionModel,
    /// Cost-to-go table of each agent's goal.
    pub tables: &'a [Arc<DistanceTable>],
}

const NONE: u32 = u32::MAX;

struct Solver<'a> {
    ctx: PibtContext<'a>,
    states: &'a [AgentState],
    hints: Option<&'a [Option<VertexId>]>,
    now: Vec<u32>,
    next: Vec<u32>,
    target: Vec<Option<VertexId>>,
    realized: Vec<VertexId>,
    action: Vec<Action>,
    /// Cells of the agents on the current push path.
    path: Vec<VertexId>,
    /// Nonzero inside pushes made by an agent that is itself staying put.
    /// Those pushes must not move anyone into a cell on the push path, since
    /// the agents there may still fall back to staying.
    fallback_depth: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    key: f64,
    turns: usize,
    cell: VertexId,
    dir: Option<Orientation>,
}

impl<'a> Solver<'a> {
    fn candidates(&self, a: usize) -> ArrayVec<Candidate, 5> {
        let s = self.states[a];
        let table = &self.ctx.tables[a];
        let mut out = ArrayVec::<Candidate, 5>::new();
        out.push(Candidate {
            key: table.distance(s),
            turns: 0,
            cell: s.location,
            dir: None,
        });
        for (d, u) in self.ctx.map.neighbors(s.location) {
            let (reached, turns) = match self.ctx.model {
                ActionModel::Rotation => (AgentState::new(u, d), turn_toward(s.orientation, d).len()),
                ActionModel::FourWay => (AgentState::new(u, s.orientation), 0),
            };
            out.push(Candidate {
                key: table.distance(reached),
                turns,
                cell: u,
                dir: Some(d),
            });
        }
        out.sort_by(|x, y| {
            x.key
                .total_cmp(&y.key)
                .then(x.turns.cmp(&y.turns))
                .then(x.cell.cmp(&y.cell))
        });
        if let Some(h) = self.hints.and_then(|h| h[a]) {
            if let Some(pos) = out.iter().position(|c| c.cell == h) {
                let c = out.remove(pos);
                out.insert(0, c);
            }
        }
        out
    }

    fn assign(&mut self, a: usize, target: VertexId, realized: VertexId, action: Action) {
        self.target[a] = Some(target);
        self.realized[a] = realized;
        self.action[a] = action;
    }

    fn occupant(&self, cell: VertexId, except: usize) -> Option<usize> {
        let k = self.now[cell];
        (k != NONE && k as usize != except).then_some(k as usize)
    }

    fn plan(&mut self, a: usize, parent: Option<usize>) -> bool {
        self.path.push(self.states[a].location);
        let ok = self.plan_from(a, parent);
        self.path.pop();
        ok
    }

    fn plan_from(&mut self, a: usize, parent: Option<usize>) -> bool {
        let s = self.states[a];
        let here = s.location;
        let mut fallback: Option<(VertexId, Orientation)> = None;
        for c in self.candidates(a) {
            let Some(dir) = c.dir else {
                if self.next[here] != NONE {
                    continue;
                }
                self.next[here] = a as u32;
                self.assign(a, here, here, Action::Wait);
                return true;
            };
            if self.next[c.cell] != NONE {
                continue;
            }
            if parent.is_some_and(|p| self.states[p].location == c.cell) {
                continue;
            }
            if self.fallback_depth > 0 && self.path.contains(&c.cell) {
                continue;
            }
            let first = match self.ctx.model {
                ActionModel::FourWay => Action::Move(dir),
                ActionModel::Rotation if s.orientation == dir => Action::Forward,
                ActionModel::Rotation => turn_toward(s.orientation, dir)[0],
            };
            if first.is_move() {
                // An assigned occupant moving into our cell would be a swap.
                if let Some(k) = self.occupant(c.cell, a) {
                    if self.target[k].is_some() && self.realized[k] == here {
                        continue;
                    }
                }
                self.next[c.cell] = a as u32;
                self.assign(a, c.cell, c.cell, first);
                if let Some(k) = self.occupant(c.cell, a) {
                    if self.target[k].is_none() && !self.plan(k, Some(a)) {
                        // k stays put and now owns c.cell.
                        continue;
                    }
                }
                return true;
            }
            // Rotating toward c: occupy `here`, and clear c for the next step.
            if self.next[here] != NONE {
                // Our pusher is entering `here`. We cannot make way this
                // step, but turning toward c (and pushing c's occupant) can.
                fallback.get_or_insert((c.cell, dir));
                continue;
            }
            self.next[here] = a as u32;
            self.next[c.cell] = a as u32;
            self.assign(a, c.cell, here, first);
            let pushed = match self.occupant(c.cell, a) {
                Some(k) if self.target[k].is_none() => self.plan(k, Some(a)),
                _ => true,
            };
            if self.next[c.cell] == a as u32 {
                self.next[c.cell] = NONE;
            }
            if pushed {
                return true;
            }
            if self.next[here] == a as u32 {
                self.next[here] = NONE;
            }
        }
        debug_assert!(parent.is_some(), "the root agent can always wait");
        self.next[here] = a as u32;
        match fallback {
            Some((cell, dir)) => {
                self.assign(a, cell, here, turn_toward(s.orientation, dir)[0]);
                let claimed = self.next[cell] == NONE;
                if claimed {
                    self.next[cell] = a as u32;
                }
                if let Some(k) = self.occupant(cell, a) {
                    if self.target[k].is_none() {
                        self.fallback_depth += 1;
                        self.plan(k, Some(a));
                        self.fallback_depth -= 1;
                    }
                }
                if claimed && self.next[cell] == a as u32 {
                    self.next[cell] = NONE;
                }
            }
            None => {
                // Turning costs no cell, so face the best way out (ignoring
                // the pusher's cell) to be able to leave next step.
                let action = match self.ctx.model {
                    ActionModel::FourWay => Action::Wait,
                    ActionModel::Rotation => self
                        .candidates(a)
                        .into_iter()
                        .filter(|c| c.dir.is_some() && !parent.is_some_and(|p| self.states[p].location == c.cell))
                        .find_map(|c| c.dir)
                        .and_then(|d| turn_toward(s.orientation, d).first().copied())
                        .unwrap_or(Action::Wait),
                };
                self.assign(a, here, here, action);
            }
        }
        false
    }
}

/// One PIBT step. `hints[i]`, when it names the current cell or a free
/// neighbor, is tried first for agent `i`.
pub fn pibt_step(
    ctx: PibtContext<'_>,
    states: &[AgentState],
    priorities: &PriorityState,
    hints: Option<&[Option<VertexId>]>,
) -> StepIntent {
    let n = states.len();
    assert_eq!(ctx.tables.len(), n);
    assert_eq!(priorities.len(), n);
    let mut solver = Solver {
        ctx,
        states,
        hints,
        now: vec![NONE; ctx.map.num_cells()],
        next: vec![NONE; ctx.map.num_cells()],
        target: vec![None; n],
        realized: states.iter().map(|s| s.location).collect(),
        action: vec![Action::Wait; n],
        path: Vec::new(),
        fallback_depth: 0,
    };
    for (i, s) in states.iter().enumerate() {
        assert_eq!(solver.now[s.location], NONE, "agents must occupy distinct cells");
        solver.now[s.location] = i as u32;
    }
    for a in priorities.order() {
        if solver.target[a].is_none() {
            let ok = solver.plan(a, None);
            assert!(ok, "root agent {a} found no cell to occupy");
        }
    }
    let next = states
        .iter()
        .zip(&solver.action)
        .map(|(&s, &act)| apply_action(ctx.map, s, act).expect("PIBT picks legal actions"))
        .collect();
    StepIntent {
        target: solver.target.into_iter().map(|t| t.expect("every agent assigned")).collect(),
        realized: solver.realized,
        first_action: solver.action,
        next,
    }
}

/// Previous-window tails used as PIBT hints. `tails[i][0]` is agent `i`'s
/// state at the start of the new window, `tails[i][j]` the state the reused
/// plan had `j` steps later.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hints {
    tails: Vec<Option<Vec<AgentState>>>,
}

impl Hints {
    pub fn none(n: usize) -> Self {
        Self { tails: vec![None; n] }
    }

    pub fn new(tails: Vec<Option<Vec<AgentState>>>) -> Self {
        Self { tails }
    }

    pub fn tail(&self, agent: usize) -> Option<&[AgentState]> {
        self.tails.get(agent).and_then(|t| t.as_deref())
    }

    pub fn drop_agent(&mut self, agent: usize) {
        self.tails[agent] = None;
    }

    pub fn is_empty(&self) -> bool {
        self.tails.iter().all(Option::is_none)
    }

    /// Hinted next location for the step arriving at `step`, provided the
    /// agent is still where the tail had it at `step - 1`. Rotations in the
    /// tail are skipped so the hint names the next cell the tail moves to.
    pub fn target_for(&self, agent: usize, step: usize, current: AgentState) -> Option<VertexId> {
        let tail = self.tail(agent)?;
        let here = tail.get(step.checked_sub(1)?)?;
        if here.location != current.location {
            return None;
        }
        tail.get(step..)?
            .iter()
            .map(|s| s.location)
            .find(|&l| l != here.location)
            .or(Some(here.location))
            .filter(|_| step < tail.len())
    }
}

/// Runs `window` PIBT steps from `states`. Goals stay fixed inside the
/// window; an agent that arrives holds its goal cell. Priorities evolve on a
/// local copy.
#[allow(clippy::too_many_arguments)]
pub fn pibt_rollout(
    guidance: &GuidanceGraph,
    model: ActionModel,
    tables: &[Arc<DistanceTable>],
    states: &[AgentState],
    goals: &[VertexId],
    priorities: &PriorityState,
    window: usize,
    hints: Option<&Hints>,
) -> WindowedPlan {
    assert!(window >= 1, "window must be at least 1");
    let ctx = PibtContext {
        map: guidance.map(),
        model,
        tables,
    };
    let n = states.len();
    let mut paths: Vec<Vec<AgentState>> = states
        .iter()
        .map(|&s| {
            let mut p = Vec::with_capacity(window + 1);
            p.push(s);
            p
        })
        .collect();
    let mut current = states.to_vec();
    let mut prio = priorities.clone();
    let mut step_hints = vec![None; n];
    for step in 1..=window {
        let hinted = match hints {
            Some(h) if !h.is_empty() => {
                for (a, slot) in step_hints.iter_mut().enumerate() {
                    *slot = h.target_for(a, step, current[a]);
                }
                Some(step_hints.as_slice())
            }
            _ => None,
        };
        let intent = pibt_step(ctx, &current, &prio, hinted);
        let reached: Vec<bool> = intent.next.iter().zip(goals).map(|(s, &g)| s.location == g).collect();
        prio.update(&reached);
        for (p, s) in paths.iter_mut().zip(&intent.next) {
            p.push(*s);
        }
        current = intent.next;
    }
    WindowedPlan::new(guidance, paths, goals.to_vec(), tables)
}

/// Fetches the table of each goal from the cache.
pub fn tables_for(cache: &HeuristicCache, goals: &[VertexId]) -> Vec<Arc<DistanceTable>> {
    goals.iter().map(|&g| cache.table(g)).collect()
}
