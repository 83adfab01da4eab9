//! Guidance-weighted backward Dijkstra tables over (location, orientation)
//! states, one per goal, built lazily behind a bounded cache.
//!
//! Costs: a forward move pays the guidance weight of the source cell and
//! direction, rotations and waits pay the wait weight of the cell. A goal is
//! reached at any orientation.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::{Arc, OnceLock};

use parking_lot::Mutex;

use crate::domain::{ActionModel, AgentState, Orientation, VertexId};
use crate::guidance::GuidanceGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    goal: VertexId,
    model: ActionModel,
    stride: usize,
    dist: Vec<f64>,
}

impl DistanceTable {
    pub fn goal(&self) -> VertexId {
        self.goal
    }

    pub fn model(&self) -> ActionModel {
        self.model
    }

    /// Cost-to-go from `s`; infinite when the goal is unreachable.
    #[inline]
    pub fn distance(&self, s: AgentState) -> f64 {
        self.dist[self.state_index(s)]
    }

    #[inline]
    pub fn state_index(&self, s: AgentState) -> usize {
        match self.model {
            ActionModel::Rotation => s.location * 4 + s.orientation.index(),
            ActionModel::FourWay => s.location,
        }
    }

    /// Raw distances indexed by state (`loc * 4 + orientation` or `loc`).
    pub fn raw(&self) -> &[f64] {
        &self.dist
    }

    pub fn stride(&self) -> usize {
        self.stride
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    state: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // BinaryHeap is a max-heap: reverse so the cheapest, then lowest index pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact backward Dijkstra from every orientation of `goal`.
pub fn build_table(guidance: &GuidanceGraph, goal: VertexId, model: ActionModel) -> DistanceTable {
    let map = guidance.map();
    assert!(map.is_free(goal), "goal must be a free cell");
    let stride = match model {
        ActionModel::Rotation => 4,
        ActionModel::FourWay => 1,
    };
    let mut dist = vec![f64::INFINITY; map.num_cells() * stride];
    let mut heap = BinaryHeap::new();
    for k in 0..stride {
        dist[goal * stride + k] = 0.0;
        heap.push(Entry {
            cost: 0.0,
            state: goal * stride + k,
        });
    }

    while let Some(Entry { cost, state }) = heap.pop() {
        if cost > dist[state] {
            continue;
        }
        let loc = state / stride;
        let mut relax = |pred: usize, w: f64| {
            let c = cost + w;
            if c < dist[pred] {
                dist[pred] = c;
                heap.push(Entry { cost: c, state: pred });
            }
        };
        match model {
            ActionModel::Rotation => {
                let o = Orientation::from_index(state % 4);
                // Forward into `loc` facing `o` comes from the cell behind.
                if let Some(prev) = map.neighbor(loc, o.opposite()) {
                    relax(prev * 4 + o.index(), guidance.move_cost(prev, o));
                }
                let w = guidance.wait_weight(loc);
                relax(loc * 4 + o.ccw().index(), w);
                relax(loc * 4 + o.cw().index(), w);
            }
            ActionModel::FourWay => {
                for d in Orientation::ALL {
                    if let Some(prev) = map.neighbor(loc, d.opposite()) {
                        relax(prev, guidance.move_cost(prev, d));
                    }
                }
            }
        }
    }

    DistanceTable {
        goal,
        model,
        stride,
        dist,
    }
}

pub const DEFAULT_CACHE_BYTES: usize = 512 << 20;

type Slot = Arc<OnceLock<Arc<DistanceTable>>>;

struct CacheInner {
    slots: HashMap<VertexId, (Slot, u64)>,
    tick: u64,
}

/// Per-goal tables with get-or-build semantics: concurrent requests for one
/// goal build it once. Least recently used tables are dropped beyond the
/// capacity.
pub struct HeuristicCache {
    guidance: Arc<GuidanceGraph>,
    model: ActionModel,
    capacity: usize,
    inner: Mutex<CacheInner>,
    builds: AtomicUsize,
}

impl HeuristicCache {
    pub fn new(guidance: Arc<GuidanceGraph>, model: ActionModel) -> Self {
        Self::with_memory_budget(guidance, model, DEFAULT_CACHE_BYTES)
    }

    pub fn with_memory_budget(guidance: Arc<GuidanceGraph>, model: ActionModel, bytes: usize) -> Self {
        let stride = match model {
            ActionModel::Rotation => 4,
            ActionModel::FourWay => 1,
        };
        let per_table = guidance.map().num_cells() * stride * std::mem::size_of::<f64>();
        Self::with_capacity(guidance, model, (bytes / per_table.max(1)).max(1))
    }

    pub fn with_capacity(guidance: Arc<GuidanceGraph>, model: ActionModel, capacity: usize) -> Self {
        Self {
            guidance,
            model,
            capacity: capacity.max(1),
            inner: Mutex::new(CacheInner {
                slots: HashMap::new(),
                tick: 0,
            }),
            builds: AtomicUsize::new(0),
        }
    }

    pub fn guidance(&self) -> &Arc<GuidanceGraph> {
        &self.guidance
    }

    pub fn model(&self) -> ActionModel {
        self.model
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of tables built so far.
    pub fn builds(&self) -> usize {
        self.builds.load(AtomicOrdering::Relaxed)
    }

    pub fn table(&self, goal: VertexId) -> Arc<DistanceTable> {
        let slot = {
            let mut inner = self.inner.lock();
            inner.tick += 1;
            let tick = inner.tick;
            let slot = match inner.slots.get_mut(&goal) {
                Some((slot, used)) => {
                    *used = tick;
                    slot.clone()
                }
                None => {
                    let slot: Slot = Arc::default();
                    inner.slots.insert(goal, (slot.clone(), tick));
                    slot
                }
            };
            if inner.slots.len() > self.capacity {
                let oldest = inner
                    .slots
                    .iter()
                    .filter(|(g, _)| **g != goal)
                    .min_by_key(|(_, (_, used))| *used)
                    .map(|(g, _)| *g);
                if let Some(g) = oldest {
                    inner.slots.remove(&g);
                }
            }
            slot
        };
        slot.get_or_init(|| {
            self.builds.fetch_add(1, AtomicOrdering::Relaxed);
            Arc::new(build_table(&self.guidance, goal, self.model))
        })
        .clone()
    }

    /// Convenience lookup.
    pub fn distance(&self, goal: VertexId, s: AgentState) -> f64 {
        self.table(goal).distance(s)
    }
}
