use crate::domain::VertexId;

use super::WindowedPlan;

const FREE: u32 = u32::MAX;

/// Dense `(step, vertex) -> agent` occupancy of a whole windowed plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    cells: usize,
    steps: usize,
    occ: Vec<u32>,
}

impl Occupancy {
    pub fn from_plan(plan: &WindowedPlan, cells: usize) -> Self {
        let steps = plan.window() + 1;
        let mut occ = Self {
            cells,
            steps,
            occ: vec![FREE; cells * steps],
        };
        for a in 0..plan.num_agents() {
            occ.insert(a, plan.path(a));
        }
        occ
    }

    #[inline]
    pub fn get(&self, v: VertexId, t: usize) -> Option<usize> {
        let k = self.occ[t * self.cells + v];
        (k != FREE).then_some(k as usize)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn insert(&mut self, agent: usize, path: &[crate::domain::AgentState]) {
        for (t, s) in path.iter().enumerate() {
            self.occ[t * self.cells + s.location] = agent as u32;
        }
    }

    pub fn remove(&mut self, agent: usize, path: &[crate::domain::AgentState]) {
        for (t, s) in path.iter().enumerate() {
            let slot = &mut self.occ[t * self.cells + s.location];
            if *slot == agent as u32 {
                *slot = FREE;
            }
        }
    }
}

/// Space-time reservations of every agent outside a neighborhood, plus the
/// paths of members planned so far in this round.
///
/// Edge occupancy is derived from vertex occupancy: an agent traverses
/// `u -> v` into step `t` exactly when it holds `u` at `t - 1` and `v` at `t`.
pub struct ReservationTable<'a> {
    base: &'a Occupancy,
    excluded: &'a [usize],
    added: Vec<(usize, Vec<crate::domain::AgentState>)>,
}

impl<'a> ReservationTable<'a> {
    /// `excluded` are the neighborhood members whose current paths are ignored.
    pub fn new(base: &'a Occupancy, excluded: &'a [usize]) -> Self {
        Self {
            base,
            excluded,
            added: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.base.steps()
    }

    /// Agent reserving vertex `v` at step `t`, if any.
    #[inline]
    pub fn vertex_user(&self, v: VertexId, t: usize) -> Option<usize> {
        if let Some(k) = self.base.get(v, t) {
            if !self.excluded.contains(&k) {
                return Some(k);
            }
        }
        self.added
            .iter()
            .find(|(_, p)| p[t].location == v)
            .map(|(a, _)| *a)
    }

    /// Agent traversing `from -> to` into step `t`, if any.
    #[inline]
    pub fn edge_user(&self, from: VertexId, to: VertexId, t: usize) -> Option<usize> {
        debug_assert!(t >= 1);
        let k = self.vertex_user(from, t - 1)?;
        (self.vertex_user(to, t) == Some(k)).then_some(k)
    }

    /// Whether moving `from -> to` into step `t` collides with a reservation.
    #[inline]
    pub fn blocked(&self, from: VertexId, to: VertexId, t: usize) -> bool {
        if self.vertex_user(to, t).is_some() {
            return true;
        }
        from != to && self.edge_user(to, from, t).is_some()
    }

    pub fn add_path(&mut self, agent: usize, path: Vec<crate::domain::AgentState>) {
        self.added.push((agent, path));
    }

    pub fn added(&self) -> &[(usize, Vec<crate::domain::AgentState>)] {
        &self.added
    }
}
