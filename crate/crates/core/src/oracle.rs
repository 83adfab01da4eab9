//! Slow reference implementations used only to check the real ones.
//! Nothing here shares code with the planners beyond the map and weight
//! accessors.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{ActionModel, AgentState, Cell, GridMap, Orientation, VertexId, FOUR_WAY_ORIENTATION};
use crate::guidance::GuidanceGraph;

fn all_states(map: &GridMap, model: ActionModel) -> Vec<AgentState> {
    let mut out = Vec::new();
    for v in map.free_vertices() {
        match model {
            ActionModel::Rotation => out.extend(Orientation::ALL.iter().map(|&o| AgentState::new(v, o))),
            ActionModel::FourWay => out.push(AgentState::new(v, FOUR_WAY_ORIENTATION)),
        }
    }
    out
}

/// Outgoing transitions with their cost, spelled out directly.
pub fn moves(g: &GuidanceGraph, s: AgentState, model: ActionModel) -> Vec<(AgentState, f64)> {
    let map = g.map();
    let (r, c) = map.coords(s.location);
    let step = |o: Orientation| -> Option<VertexId> {
        let (rr, cc) = match o {
            Orientation::East => (r as isize, c as isize + 1),
            Orientation::South => (r as isize + 1, c as isize),
            Orientation::West => (r as isize, c as isize - 1),
            Orientation::North => (r as isize - 1, c as isize),
        };
        if rr < 0 || cc < 0 || rr as usize >= map.height() || cc as usize >= map.width() {
            return None;
        }
        let v = map.vertex(rr as usize, cc as usize);
        map.is_free(v).then_some(v)
    };
    let stay = g.wait_weight(s.location);
    let mut out = vec![(s, stay)];
    match model {
        ActionModel::Rotation => {
            let turn = |k: usize| Orientation::ALL[(s.orientation.index() + k) % 4];
            out.push((AgentState::new(s.location, turn(1)), stay));
            out.push((AgentState::new(s.location, turn(3)), stay));
            if let Some(v) = step(s.orientation) {
                out.push((AgentState::new(v, s.orientation), g.move_cost(s.location, s.orientation)));
            }
        }
        ActionModel::FourWay => {
            for o in Orientation::ALL {
                if let Some(v) = step(o) {
                    out.push((AgentState::new(v, FOUR_WAY_ORIENTATION), g.move_cost(s.location, o)));
                }
            }
        }
    }
    out.retain(|(_, w)| w.is_finite());
    out
}

/// Bellman-Ford cost-to-go of every state to `goal` (any orientation).
pub fn bellman_ford(g: &GuidanceGraph, goal: VertexId, model: ActionModel) -> Vec<(AgentState, f64)> {
    let states = all_states(g.map(), model);
    let index: std::collections::HashMap<AgentState, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let key = |s: AgentState| index[&s];
    let mut dist: Vec<f64> = states
        .iter()
        .map(|s| if s.location == goal { 0.0 } else { f64::INFINITY })
        .collect();
    let edges: Vec<Vec<(usize, f64)>> = states
        .iter()
        .map(|&s| moves(g, s, model).into_iter().map(|(t, w)| (key(t), w)).collect())
        .collect();
    for _ in 0..states.len() {
        let mut changed = false;
        for i in 0..states.len() {
            if states[i].location == goal {
                continue;
            }
            for &(j, w) in &edges[i] {
                if dist[j] + w < dist[i] {
                    dist[i] = dist[j] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    states.into_iter().zip(dist).collect()
}

/// Windowed cost of a path, recomputed from scratch.
pub fn window_cost(g: &GuidanceGraph, path: &[AgentState], goal: VertexId, cost_to_go: impl Fn(AgentState) -> f64) -> f64 {
    let mut total = 0.0;
    for w in path.windows(2) {
        if w[0].location == goal {
            return total;
        }
        let (a, b) = (w[0], w[1]);
        total += if a.location == b.location {
            g.wait_weight(a.location)
        } else {
            let dir = Orientation::ALL
                .into_iter()
                .find(|&o| g.map().neighbor(a.location, o) == Some(b.location))
                .expect("adjacent");
            g.move_cost(a.location, dir)
        };
    }
    if path.last().map(|s| s.location) == Some(goal) {
        total
    } else {
        total + cost_to_go(*path.last().expect("non-empty"))
    }
}

/// Cheapest windowed cost over every path of exactly `window` steps from
/// `start` that avoids `blocked(from, to, t)`, by exhaustive enumeration.
pub fn brute_force_window(
    g: &GuidanceGraph,
    model: ActionModel,
    start: AgentState,
    goal: VertexId,
    window: usize,
    cost_to_go: &dyn Fn(AgentState) -> f64,
    blocked: &dyn Fn(VertexId, VertexId, usize) -> bool,
) -> Option<f64> {
    #[allow(clippy::too_many_arguments)]
    fn go(
        g: &GuidanceGraph,
        model: ActionModel,
        path: &mut Vec<AgentState>,
        goal: VertexId,
        window: usize,
        cost_to_go: &dyn Fn(AgentState) -> f64,
        blocked: &dyn Fn(VertexId, VertexId, usize) -> bool,
        best: &mut Option<f64>,
    ) {
        if path.len() == window + 1 {
            let c = window_cost(g, path, goal, cost_to_go);
            if best.is_none_or(|b| c < b) {
                *best = Some(c);
            }
            return;
        }
        let s = *path.last().expect("non-empty");
        let t = path.len();
        for (next, _) in moves(g, s, model) {
            if blocked(s.location, next.location, t) {
                continue;
            }
            path.push(next);
            go(g, model, path, goal, window, cost_to_go, blocked, best);
            path.pop();
        }
    }
    let mut best = None;
    go(g, model, &mut vec![start], goal, window, cost_to_go, blocked, &mut best);
    best.filter(|b| b.is_finite())
}

/// Pairwise conflict test straight from the definitions.
pub fn joint_step_ok(before: &[AgentState], after: &[AgentState]) -> bool {
    for i in 0..before.len() {
        for j in i + 1..before.len() {
            if after[i].location == after[j].location {
                return false;
            }
            if after[i].location == before[j].location
                && after[j].location == before[i].location
                && before[i].location != before[j].location
            {
                return false;
            }
        }
    }
    true
}

/// Maps for the heuristic check: every 3x3 obstacle mask with at least one
/// free cell, hand-made corridors, deadends and walls, and random maps up to
/// 10x10. Weights alternate between uniform, crisscross and random dyadic
/// values (exact in binary, so sums do not depend on order).
pub fn heuristic_suite() -> Vec<GuidanceGraph> {
    let mut maps: Vec<GridMap> = Vec::new();
    for mask in 0u32..512 {
        let cells = (0..9)
            .map(|i| if mask >> i & 1 == 1 { Cell::Obstacle } else { Cell::Free })
            .collect();
        if let Ok(m) = GridMap::new(3, 3, cells) {
            maps.push(m);
        }
    }
    let crafted: &[&[&str]] = &[
        &["."],
        &[".........."],
        &[".", ".", ".", "."],
        &["..@..", "..@..", ".....", "..@..", "..@.."],
        &[".@.@.@.", ".......", "@.@.@.@"],
        &["....@.....", ".@@.@.@@@.", ".@..@...@.", ".@.@@@@.@.", ".@.......@", ".@@@@.@@@.", ".....@....", "@@@@.@.@@.", "...@...@..", ".@...@...@"],
        &["..........", ".@@@@@@@@.", ".@......@.", ".@.@@@@.@.", ".@.@..@.@.", ".@.@..@.@.", ".@.@@.@.@.", ".@....@.@.", ".@@@@@@.@.", "........@."],
    ];
    for rows in crafted {
        maps.push(GridMap::from_rows(rows).expect("crafted map"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..40 {
        let h = rng.gen_range(1..=10);
        let w = rng.gen_range(1..=10);
        let ratio = rng.gen_range(0.0..0.45);
        let cells: Vec<Cell> = (0..h * w)
            .map(|_| if rng.gen_bool(ratio) { Cell::Obstacle } else { Cell::Free })
            .collect();
        if let Ok(m) = GridMap::new(h, w, cells) {
            maps.push(m);
        }
    }

    let mut out = Vec::new();
    for (i, m) in maps.into_iter().enumerate() {
        let m = Arc::new(m);
        let g = match i % 3 {
            0 => GuidanceGraph::uniform(m),
            1 => GuidanceGraph::crisscross(m, 0.5, 1.5).expect("valid weights"),
            _ => {
                let mut g = GuidanceGraph::uniform(m.clone());
                let choices = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0];
                for v in m.free_vertices().collect::<Vec<_>>() {
                    g.set_wait_weight(v, choices[rng.gen_range(0..choices.len())]).expect("positive");
                    for o in Orientation::ALL {
                        if m.neighbor(v, o).is_some() {
                            g.set_move_weight(v, o, choices[rng.gen_range(0..choices.len())]).expect("positive");
                        }
                    }
                }
                g
            }
        };
        out.push(g);
    }
    out
}
