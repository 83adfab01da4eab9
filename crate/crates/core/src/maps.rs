//! Generated benchmark maps and instances.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::domain::{ActionModel, AgentState, Cell, GridMap, Instance, Orientation, FOUR_WAY_ORIENTATION};
use crate::seed;

/// Random obstacles at `obstacle_ratio`, reduced to the largest connected
/// free component.
pub fn random_map(height: usize, width: usize, obstacle_ratio: f64, seed: u64) -> GridMap {
    let mut rng = seed::rng(seed, seed::INSTANCE);
    let n = height * width;
    let blocked = ((n as f64) * obstacle_ratio).round() as usize;
    let mut cells = vec![Cell::Free; n];
    for v in index::sample(&mut rng, n, blocked.min(n - 1)) {
        cells[v] = Cell::Obstacle;
    }
    largest_component(height, width, cells)
}

fn largest_component(height: usize, width: usize, mut cells: Vec<Cell>) -> GridMap {
    let n = height * width;
    let mut label = vec![usize::MAX; n];
    let mut best = (0, usize::MAX);
    let mut queue = VecDeque::new();
    for start in 0..n {
        if cells[start] != Cell::Free || label[start] != usize::MAX {
            continue;
        }
        label[start] = start;
        queue.push_back(start);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            let (r, c) = (v / width, v % width);
            let around = [
                (r, c + 1),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r.wrapping_sub(1), c),
            ];
            for (rr, cc) in around {
                if rr < height && cc < width {
                    let u = rr * width + cc;
                    if cells[u] == Cell::Free && label[u] == usize::MAX {
                        label[u] = start;
                        queue.push_back(u);
                    }
                }
            }
        }
        if size > best.0 {
            best = (size, start);
        }
    }
    for v in 0..n {
        if label[v] != best.1 {
            cells[v] = Cell::Obstacle;
        }
    }
    GridMap::new(height, width, cells).expect("largest component is non-empty")
}

/// 32x32 with 20% obstacles, about 819 free cells.
pub fn random_32(seed: u64) -> GridMap {
    random_map(32, 32, 0.2, seed)
}

/// Warehouse-like 33x57 floor: ten rows of shelf blocks, each row split into
/// segments of ten cells by cross aisles, with open margins around.
pub fn warehouse() -> GridMap {
    let (h, w) = (33, 57);
    let mut cells = vec![Cell::Free; h * w];
    for r in (2..h - 2).step_by(3) {
        for c in 3..w - 3 {
            if (c - 3) % 11 != 10 {
                cells[r * w + c] = Cell::Obstacle;
            }
        }
    }
    GridMap::new(h, w, cells).expect("warehouse layout is valid")
}

/// Two-wide horizontal corridors separated by two-thick walls, joined by
/// vertical corridors at both sides. Every `stub_every` columns a one-cell
/// notch is cut into a wall, alternating between the wall's two faces.
/// Notch cells are deadends.
pub fn stub_map(corridors: usize, width: usize, stub_every: usize) -> GridMap {
    assert!(corridors >= 1 && width >= 7 && stub_every >= 1);
    let h = 4 * corridors - 2;
    let mut cells = vec![Cell::Obstacle; h * width];
    for r in 0..h {
        cells[r * width] = Cell::Free;
        cells[r * width + width - 1] = Cell::Free;
        if r % 4 < 2 {
            for c in 0..width {
                cells[r * width + c] = Cell::Free;
            }
        }
    }
    for wall in (2..h).step_by(4) {
        for (k, c) in (3..width - 3).step_by(stub_every).enumerate() {
            let r = if k % 2 == 0 { wall } else { wall + 1 };
            cells[r * width + c] = Cell::Free;
        }
    }
    GridMap::new(h, width, cells).expect("stub layout is valid")
}

/// `n` agents on distinct random free cells with random orientations.
pub fn random_instance(map: Arc<GridMap>, n: usize, model: ActionModel, seed: u64) -> Instance {
    let mut rng = seed::rng(seed, seed::INSTANCE);
    let free: Vec<_> = map.free_vertices().collect();
    assert!(n <= free.len(), "{n} agents do not fit on {} free cells", free.len());
    let agents = index::sample(&mut rng, free.len(), n)
        .into_iter()
        .map(|i| {
            let o = match model {
                ActionModel::Rotation => Orientation::from_index(rng.gen_range(0..4)),
                ActionModel::FourWay => FOUR_WAY_ORIENTATION,
            };
            AgentState::new(free[i], o)
        })
        .collect();
    Instance::new(map, agents, model).expect("sampled starts are valid")
}

/// Agent count for a density over the map's free cells.
pub fn agents_for_density(map: &GridMap, density: f64) -> usize {
    ((map.free_count() as f64) * density).round() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn connected(map: &GridMap) -> bool {
        let start = map.free_vertices().next().unwrap();
        let mut seen = vec![false; map.num_cells()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 0;
        while let Some(v) = stack.pop() {
            count += 1;
            for (_, u) in map.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        count == map.free_count()
    }

    #[test]
    fn random_32_is_connected() {
        for s in 0..5 {
            let m = random_32(s);
            assert!(connected(&m));
            assert!(m.free_count() > 780 && m.free_count() <= 819, "{}", m.free_count());
        }
    }

    #[test]
    fn warehouse_shape() {
        let m = warehouse();
        assert_eq!((m.height(), m.width()), (33, 57));
        assert!(connected(&m));
    }

    #[test]
    fn stubs_are_deadends() {
        let m = stub_map(3, 15, 2);
        assert_eq!(m.height(), 10);
        assert!(connected(&m));
        assert!(m.is_deadend(m.vertex(2, 3)));
        assert!(m.is_deadend(m.vertex(3, 5)));
        assert!(!m.is_free(m.vertex(2, 4)));
        assert!(!m.is_deadend(m.vertex(1, 3)));
    }

    #[test]
    fn instance_is_reproducible() {
        let m = Arc::new(random_32(1));
        let a = random_instance(m.clone(), 200, ActionModel::Rotation, 4);
        let b = random_instance(m, 200, ActionModel::Rotation, 4);
        assert_eq!(a.agents, b.agents);
    }
}
