//! Space-time A* over `(location, orientation, step, arrived)` for one agent
//! against a reservation table.
//!
//! `g` accrues guidance costs until the agent first stands on its goal and
//! nothing afterwards. At the last step the remaining cost-to-go is added,
//! so `f = g + h` with `h = dist(state)` (0 once arrived) is exact there and
//! admissible everywhere else.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use crate::domain::{successors, ActionModel, AgentState, VertexId};
use crate::guidance::GuidanceGraph;
use crate::heuristic::DistanceTable;

use super::plan::step_cost;
use super::reservation::ReservationTable;

struct Node {
    state: AgentState,
    step: usize,
    arrived: bool,
    g: f64,
    parent: usize,
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    index: u64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // Max-heap, reversed: smallest f, then smallest h, then smallest index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total order key of a search state; deeper steps sort first.
fn state_index(s: AgentState, step: usize, arrived: bool, window: usize) -> u64 {
    let depth = (window - step) as u64;
    ((depth * 2 + u64::from(!arrived)) << 40) | ((s.location as u64) << 2) | s.orientation.index() as u64
}

pub struct SearchResult {
    pub path: Vec<AgentState>,
    pub cost: f64,
    pub expanded: usize,
}

/// Plans a conflict-free path of exactly `window + 1` states from `start`,
/// minimizing the windowed cost. `None` when no such path exists.
pub fn plan_agent(
    guidance: &GuidanceGraph,
    model: ActionModel,
    table: &DistanceTable,
    goal: VertexId,
    start: AgentState,
    window: usize,
    reservations: &ReservationTable<'_>,
) -> Option<SearchResult> {
    let map = guidance.map();
    let h_of = |s: AgentState, arrived: bool| if arrived { 0.0 } else { table.distance(s) };

    let mut nodes: Vec<Node> = Vec::new();
    let mut best: HashMap<u64, f64> = HashMap::new();
    let mut open = BinaryHeap::new();

    let arrived0 = start.location == goal;
    let h0 = h_of(start, arrived0);
    if !h0.is_finite() {
        return None;
    }
    nodes.push(Node {
        state: start,
        step: 0,
        arrived: arrived0,
        g: 0.0,
        parent: usize::MAX,
    });
    let idx0 = state_index(start, 0, arrived0, window);
    best.insert(idx0, 0.0);
    open.push(Open {
        f: h0,
        h: h0,
        index: idx0,
        node: 0,
    });

    let mut expanded = 0;
    while let Some(Open { node, f, .. }) = open.pop() {
        let (state, step, arrived, g) = {
            let n = &nodes[node];
            (n.state, n.step, n.arrived, n.g)
        };
        let index = state_index(state, step, arrived, window);
        if best.get(&index).is_some_and(|&b| b < g) {
            continue;
        }
        if step == window {
            let mut path = Vec::with_capacity(window + 1);
            let mut cur = node;
            while cur != usize::MAX {
                path.push(nodes[cur].state);
                cur = nodes[cur].parent;
            }
            path.reverse();
            return Some(SearchResult { path, cost: f, expanded });
        }
        expanded += 1;
        let t = step + 1;
        for (_, next) in successors(map, state, model) {
            if reservations.blocked(state.location, next.location, t) {
                continue;
            }
            let next_arrived = arrived || next.location == goal;
            let ng = if arrived { g } else { g + step_cost(guidance, state, next) };
            let nh = h_of(next, next_arrived);
            if !nh.is_finite() {
                continue;
            }
            let nindex = state_index(next, t, next_arrived, window);
            match best.entry(nindex) {
                Entry::Occupied(mut e) => {
                    if *e.get() <= ng {
                        continue;
                    }
                    e.insert(ng);
                }
                Entry::Vacant(e) => {
                    e.insert(ng);
                }
            }
            nodes.push(Node {
                state: next,
                step: t,
                arrived: next_arrived,
                g: ng,
                parent: node,
            });
            open.push(Open {
                f: ng + nh,
                h: nh,
                index: nindex,
                node: nodes.len() - 1,
            });
        }
    }
    None
}
