//! The grid world shared by every planner: maps, agent poses, the action
//! alphabet and the collision rules.
//!
//! Vertices are row-major cell indices. Coordinates are `(row, col)` with
//! East = +col and South = +row.

mod files;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use files::{parse_agents, parse_map, write_agents, write_map};

pub type VertexId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("illegal forward from ({row}, {col}) facing {orientation}")]
    IllegalForward {
        row: usize,
        col: usize,
        orientation: Orientation,
    },
    #[error("move action {0:?} is only defined for the four-way model")]
    MoveInRotationModel(Action),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Orientation {
    /// Clockwise order starting at East.
    pub const ALL: [Orientation; 4] = [
        Orientation::East,
        Orientation::South,
        Orientation::West,
        Orientation::North,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    #[inline]
    pub fn cw(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    #[inline]
    pub fn ccw(self) -> Self {
        Self::from_index(self.index() + 3)
    }

    #[inline]
    pub fn opposite(self) -> Self {
        Self::from_index(self.index() + 2)
    }

    /// `(d_row, d_col)` of one step in this direction.
    #[inline]
    pub fn delta(self) -> (isize, isize) {
        match self {
            Orientation::East => (0, 1),
            Orientation::South => (1, 0),
            Orientation::West => (0, -1),
            Orientation::North => (-1, 0),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Orientation::East => 'E',
            Orientation::South => 'S',
            Orientation::West => 'W',
            Orientation::North => 'N',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'E' => Some(Orientation::East),
            'S' => Some(Orientation::South),
            'W' => Some(Orientation::West),
            'N' => Some(Orientation::North),
            _ => None,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionModel {
    /// Forward / rotate / wait, agents carry a heading.
    #[default]
    Rotation,
    /// Classic moves to any 4-neighbor; orientation is a fixed placeholder.
    FourWay,
}

/// Placeholder heading carried by agents in the four-way model.
pub const FOUR_WAY_ORIENTATION: Orientation = Orientation::East;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Forward,
    RotateCw,
    RotateCcw,
    Wait,
    /// Four-way model only.
    Move(Orientation),
}

impl Action {
    /// Whether the action can change the agent's location.
    #[inline]
    pub fn is_move(self) -> bool {
        matches!(self, Action::Forward | Action::Move(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentState {
    pub location: VertexId,
    pub orientation: Orientation,
}

impl AgentState {
    pub fn new(location: VertexId, orientation: Orientation) -> Self {
        Self {
            location,
            orientation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    height: usize,
    width: usize,
    cells: Vec<Cell>,
    free_count: usize,
}

impl GridMap {
    pub fn new(height: usize, width: usize, cells: Vec<Cell>) -> Result<Self, DomainError> {
        if height == 0 || width == 0 {
            return Err(DomainError::InvalidMap("height and width must be positive".into()));
        }
        if cells.len() != height * width {
            return Err(DomainError::InvalidMap(format!(
                "expected {} cells, got {}",
                height * width,
                cells.len()
            )));
        }
        let free_count = cells.iter().filter(|c| **c == Cell::Free).count();
        if free_count == 0 {
            return Err(DomainError::InvalidMap("map has no free cell".into()));
        }
        Ok(Self {
            height,
            width,
            cells,
            free_count,
        })
    }

    /// Builds a map from rows of `.` (free) and `@`/`T` (obstacle).
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, DomainError> {
        let height = rows.len();
        let width = rows.first().map(|r| r.as_ref().chars().count()).unwrap_or(0);
        let mut cells = Vec::with_capacity(height * width);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(DomainError::InvalidMap(format!("row {r} has the wrong width")));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '.' => Cell::Free,
                    '@' | 'T' => Cell::Obstacle,
                    other => {
                        return Err(DomainError::InvalidMap(format!(
                            "unexpected character {other:?} in row {r}"
                        )))
                    }
                });
            }
        }
        Self::new(height, width, cells)
    }

    pub fn open(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![Cell::Free; height * width]).expect("non-empty open map")
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn free_count(&self) -> usize {
        self.free_count
    }

    #[inline]
    pub fn cell(&self, v: VertexId) -> Cell {
        self.cells[v]
    }

    #[inline]
    pub fn is_free(&self, v: VertexId) -> bool {
        v < self.cells.len() && self.cells[v] == Cell::Free
    }

    #[inline]
    pub fn vertex(&self, row: usize, col: usize) -> VertexId {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    #[inline]
    pub fn coords(&self, v: VertexId) -> (usize, usize) {
        (v / self.width, v % self.width)
    }

    /// The free cell one step from `v` in direction `dir`, if any.
    #[inline]
    pub fn neighbor(&self, v: VertexId, dir: Orientation) -> Option<VertexId> {
        let (row, col) = self.coords(v);
        let (dr, dc) = dir.delta();
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            return None;
        }
        let u = r as usize * self.width + c as usize;
        self.is_free(u).then_some(u)
    }

    /// Free 4-neighbors in E, S, W, N order.
    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = (Orientation, VertexId)> + '_ {
        Orientation::ALL
            .into_iter()
            .filter_map(move |d| self.neighbor(v, d).map(|u| (d, u)))
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.neighbors(v).count()
    }

    /// A free cell with exactly one free neighbor.
    pub fn is_deadend(&self, v: VertexId) -> bool {
        self.is_free(v) && self.degree(v) == 1
    }

    pub fn free_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.cells.len()).filter(|&v| self.cells[v] == Cell::Free)
    }

    /// Direction of the unit step `from -> to`, if the two cells are adjacent.
    pub fn direction_between(&self, from: VertexId, to: VertexId) -> Option<Orientation> {
        Orientation::ALL
            .into_iter()
            .find(|&d| self.neighbor(from, d) == Some(to))
    }
}

/// Applies one action. Rotations and waits never fail; a forward (or four-way
/// move) into an obstacle or off the map is rejected.
pub fn apply_action(map: &GridMap, s: AgentState, a: Action) -> Result<AgentState, DomainError> {
    let illegal = || {
        let (row, col) = map.coords(s.location);
        DomainError::IllegalForward {
            row,
            col,
            orientation: s.orientation,
        }
    };
    match a {
        Action::Forward => map
            .neighbor(s.location, s.orientation)
            .map(|u| AgentState::new(u, s.orientation))
            .ok_or_else(illegal),
        Action::Move(dir) => map
            .neighbor(s.location, dir)
            .map(|u| AgentState::new(u, s.orientation))
            .ok_or_else(|| {
                let (row, col) = map.coords(s.location);
                DomainError::IllegalForward {
                    row,
                    col,
                    orientation: dir,
                }
            }),
        Action::RotateCw => Ok(AgentState::new(s.location, s.orientation.cw())),
        Action::RotateCcw => Ok(AgentState::new(s.location, s.orientation.ccw())),
        Action::Wait => Ok(s),
    }
}

/// All one-step successors of `s` under `model`. Wait comes first.
pub fn successors(map: &GridMap, s: AgentState, model: ActionModel) -> ArrayVec<(Action, AgentState), 5> {
    let mut out = ArrayVec::new();
    out.push((Action::Wait, s));
    match model {
        ActionModel::Rotation => {
            if let Some(u) = map.neighbor(s.location, s.orientation) {
                out.push((Action::Forward, AgentState::new(u, s.orientation)));
            }
            out.push((Action::RotateCw, AgentState::new(s.location, s.orientation.cw())));
            out.push((Action::RotateCcw, AgentState::new(s.location, s.orientation.ccw())));
        }
        ActionModel::FourWay => {
            for (d, u) in map.neighbors(s.location) {
                out.push((Action::Move(d), AgentState::new(u, s.orientation)));
            }
        }
    }
    out
}

/// The action turning `before` into `after`, if a single legal one exists.
pub fn infer_action(
    map: &GridMap,
    before: AgentState,
    after: AgentState,
    model: ActionModel,
) -> Option<Action> {
    successors(map, before, model)
        .into_iter()
        .find(|(_, s)| *s == after)
        .map(|(a, _)| a)
}

/// Shortest rotation sequence from `from` to `to`. A half turn is two
/// clockwise rotations.
pub fn turn_toward(from: Orientation, to: Orientation) -> &'static [Action] {
    match (to.index() + 4 - from.index()) % 4 {
        0 => &[],
        1 => &[Action::RotateCw],
        2 => &[Action::RotateCw, Action::RotateCw],
        _ => &[Action::RotateCcw],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflictKind {
    Vertex { vertex: VertexId },
    /// `from -> to` is the move of the first agent; the second moved `to -> from`.
    Swap { from: VertexId, to: VertexId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub agents: (usize, usize),
    pub step: usize,
}

/// Every vertex and swap conflict of the joint step `before -> after`
/// arriving at `step`. Following into a cell vacated in the same step is
/// allowed.
pub fn check_joint_step(before: &[AgentState], after: &[AgentState], step: usize) -> Vec<Conflict> {
    assert_eq!(before.len(), after.len(), "joint step length mismatch");
    let mut conflicts = Vec::new();

    let mut by_target: Vec<usize> = (0..after.len()).collect();
    by_target.sort_by_key(|&i| (after[i].location, i));
    for group in by_target.chunk_by(|&a, &b| after[a].location == after[b].location) {
        for (k, &i) in group.iter().enumerate() {
            for &j in &group[k + 1..] {
                conflicts.push(Conflict {
                    kind: ConflictKind::Vertex {
                        vertex: after[i].location,
                    },
                    agents: (i, j),
                    step,
                });
            }
        }
    }

    let occupant: HashMap<VertexId, usize> = before
        .iter()
        .enumerate()
        .map(|(i, s)| (s.location, i))
        .collect();
    for i in 0..before.len() {
        let (from, to) = (before[i].location, after[i].location);
        if from == to {
            continue;
        }
        if let Some(&j) = occupant.get(&to) {
            if j > i && after[j].location == from {
                conflicts.push(Conflict {
                    kind: ConflictKind::Swap { from, to },
                    agents: (i, j),
                    step,
                });
            }
        }
    }
    conflicts
}

/// A start configuration: map, start poses and the action model.
#[derive(Debug, Clone)]
pub struct Instance {
    pub map: Arc<GridMap>,
    pub agents: Vec<AgentState>,
    pub action_model: ActionModel,
}

impl Instance {
    pub fn new(
        map: Arc<GridMap>,
        agents: Vec<AgentState>,
        action_model: ActionModel,
    ) -> Result<Self, DomainError> {
        if agents.is_empty() {
            return Err(DomainError::InvalidInstance("no agents".into()));
        }
        if agents.len() > map.free_count() {
            return Err(DomainError::InvalidInstance(format!(
                "{} agents exceed {} free cells",
                agents.len(),
                map.free_count()
            )));
        }
        let mut seen = vec![false; map.num_cells()];
        for (i, s) in agents.iter().enumerate() {
            if !map.is_free(s.location) {
                return Err(DomainError::InvalidInstance(format!(
                    "agent {i} starts on a blocked cell"
                )));
            }
            if std::mem::replace(&mut seen[s.location], true) {
                return Err(DomainError::InvalidInstance(format!(
                    "agent {i} shares its start cell"
                )));
            }
        }
        let agents = match action_model {
            ActionModel::Rotation => agents,
            ActionModel::FourWay => agents
                .into_iter()
                .map(|s| AgentState::new(s.location, FOUR_WAY_ORIENTATION))
                .collect(),
        };
        Ok(Self {
            map,
            agents,
            action_model,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Agents per free cell.
    pub fn density(&self) -> f64 {
        self.agents.len() as f64 / self.map.free_count() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row3() -> GridMap {
        GridMap::from_rows(&["..."]).unwrap()
    }

    #[test]
    fn rotate_cw_from_east_faces_south() {
        let map = row3();
        let s = AgentState::new(0, Orientation::East);
        let t = apply_action(&map, s, Action::RotateCw).unwrap();
        assert_eq!(t, AgentState::new(0, Orientation::South));
    }

    #[test]
    fn wait_is_identity() {
        let map = row3();
        let s = AgentState::new(0, Orientation::East);
        assert_eq!(apply_action(&map, s, Action::Wait).unwrap(), s);
    }

    #[test]
    fn forward_east_increases_column() {
        let map = row3();
        let s = AgentState::new(map.vertex(0, 0), Orientation::East);
        let t = apply_action(&map, s, Action::Forward).unwrap();
        assert_eq!(map.coords(t.location), (0, 1));
        assert_eq!(t.orientation, Orientation::East);
    }

    #[test]
    fn forward_off_the_map_is_illegal() {
        let map = row3();
        let s = AgentState::new(map.vertex(0, 2), Orientation::East);
        assert!(matches!(
            apply_action(&map, s, Action::Forward),
            Err(DomainError::IllegalForward { row: 0, col: 2, .. })
        ));
        let blocked = GridMap::from_rows(&[".@."]).unwrap();
        assert!(apply_action(&blocked, AgentState::new(0, Orientation::East), Action::Forward).is_err());
    }

    #[test]
    fn vertex_conflict_on_shared_target() {
        let b = [AgentState::new(0, Orientation::East), AgentState::new(2, Orientation::West)];
        let a = [AgentState::new(1, Orientation::East), AgentState::new(1, Orientation::West)];
        let c = check_joint_step(&b, &a, 4);
        assert_eq!(
            c,
            vec![Conflict {
                kind: ConflictKind::Vertex { vertex: 1 },
                agents: (0, 1),
                step: 4
            }]
        );
    }

    #[test]
    fn swap_conflict_on_exchange() {
        let b = [AgentState::new(0, Orientation::East), AgentState::new(1, Orientation::West)];
        let a = [AgentState::new(1, Orientation::East), AgentState::new(0, Orientation::West)];
        let c = check_joint_step(&b, &a, 1);
        assert_eq!(
            c,
            vec![Conflict {
                kind: ConflictKind::Swap { from: 0, to: 1 },
                agents: (0, 1),
                step: 1
            }]
        );
    }

    #[test]
    fn following_is_allowed() {
        let b = [AgentState::new(0, Orientation::East), AgentState::new(1, Orientation::East)];
        let a = [AgentState::new(1, Orientation::East), AgentState::new(2, Orientation::East)];
        assert!(check_joint_step(&b, &a, 1).is_empty());
    }

    #[test]
    fn three_agents_on_one_cell_report_every_pair() {
        let s = |v| AgentState::new(v, Orientation::East);
        let c = check_joint_step(&[s(0), s(2), s(4)], &[s(1), s(1), s(1)], 0);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn turn_toward_cases() {
        use Orientation::*;
        assert_eq!(turn_toward(East, South), &[Action::RotateCw]);
        assert!(turn_toward(East, East).is_empty());
        assert_eq!(turn_toward(East, West), &[Action::RotateCw, Action::RotateCw]);
        assert_eq!(turn_toward(East, North), &[Action::RotateCcw]);
    }

    #[test]
    fn four_way_successors_are_stay_plus_free_neighbors() {
        let map = GridMap::from_rows(&["...", ".@.", "..."]).unwrap();
        let s = AgentState::new(map.vertex(0, 1), FOUR_WAY_ORIENTATION);
        let locs: Vec<_> = successors(&map, s, ActionModel::FourWay)
            .iter()
            .map(|(_, t)| t.location)
            .collect();
        assert_eq!(locs, vec![1, 2, 0]);
    }

    #[test]
    fn instance_rejects_shared_starts_and_reports_density() {
        let map = Arc::new(GridMap::open(2, 2));
        let s = AgentState::new(0, Orientation::East);
        assert!(Instance::new(map.clone(), vec![s, s], ActionModel::Rotation).is_err());
        let inst = Instance::new(map, vec![s, AgentState::new(3, Orientation::North)], ActionModel::Rotation)
            .unwrap();
        assert_eq!(inst.density(), 0.5);
    }

    fn arb_map() -> impl Strategy<Value = GridMap> {
        (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
            proptest::collection::vec(prop::bool::weighted(0.75), h * w).prop_filter_map(
                "needs a free cell",
                move |free| {
                    let cells = free
                        .into_iter()
                        .map(|f| if f { Cell::Free } else { Cell::Obstacle })
                        .collect();
                    GridMap::new(h, w, cells).ok()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn legal_actions_stay_on_free_cells(map in arb_map(), pick in 0usize..1000, o in 0usize..4) {
            let frees: Vec<_> = map.free_vertices().collect();
            let s = AgentState::new(frees[pick % frees.len()], Orientation::from_index(o));
            for model in [ActionModel::Rotation, ActionModel::FourWay] {
                for (a, t) in successors(&map, s, model) {
                    prop_assert!(map.is_free(t.location));
                    prop_assert_eq!(apply_action(&map, s, a).unwrap(), t);
                }
            }
        }

        #[test]
        fn four_clockwise_turns_are_identity(loc in 0usize..9, o in 0usize..4) {
            let map = GridMap::open(3, 3);
            let s = AgentState::new(loc, Orientation::from_index(o));
            let mut t = s;
            for _ in 0..4 {
                t = apply_action(&map, t, Action::RotateCw).unwrap();
            }
            prop_assert_eq!(s, t);
        }

        #[test]
        fn rotation_successors_match_definition(map in arb_map(), pick in 0usize..1000, o in 0usize..4) {
            let frees: Vec<_> = map.free_vertices().collect();
            let s = AgentState::new(frees[pick % frees.len()], Orientation::from_index(o));
            let mut got: Vec<_> = successors(&map, s, ActionModel::Rotation).iter().map(|x| x.1).collect();
            let mut want = vec![
                s,
                AgentState::new(s.location, s.orientation.cw()),
                AgentState::new(s.location, s.orientation.ccw()),
            ];
            if let Some(u) = map.neighbor(s.location, s.orientation) {
                want.push(AgentState::new(u, s.orientation));
            }
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn conflict_check_is_symmetric_under_permutation(
            moves in proptest::collection::vec((0usize..16, 0usize..5), 2..7),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let map = GridMap::open(4, 4);
            let mut before = Vec::new();
            let mut used = std::collections::HashSet::new();
            for &(v, _) in &moves {
                if used.insert(v) {
                    before.push(AgentState::new(v, FOUR_WAY_ORIENTATION));
                }
            }
            let after: Vec<_> = before
                .iter()
                .zip(&moves)
                .map(|(s, &(_, k))| {
                    let succ = successors(&map, *s, ActionModel::FourWay);
                    succ[k % succ.len()].1
                })
                .collect();
            let n = before.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pb: Vec<_> = perm.iter().map(|&i| before[i]).collect();
            let pa: Vec<_> = perm.iter().map(|&i| after[i]).collect();

            let normalize = |c: &Conflict, ids: &dyn Fn(usize) -> usize| {
                let (a, b) = (ids(c.agents.0), ids(c.agents.1));
                let place = match c.kind {
                    ConflictKind::Vertex { vertex } => (0, vertex, vertex),
                    ConflictKind::Swap { from, to } => (1, from.min(to), from.max(to)),
                };
                (place, a.min(b), a.max(b))
            };
            let mut orig: Vec<_> = check_joint_step(&before, &after, 0).iter().map(|c| normalize(c, &|i| i)).collect();
            let mut permuted: Vec<_> = check_joint_step(&pb, &pa, 0).iter().map(|c| normalize(c, &|i| perm[i])).collect();
            orig.sort();
            permuted.sort();
            prop_assert_eq!(orig, permuted);
        }
    }
}
