//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use wppl_core::pibt::tables_for;
use wppl_core::seed::{self, PRIORITY};
use wppl_core::{maps, ActionModel, AgentState, DistanceTable, GuidanceGraph, HeuristicCache, PriorityState, TaskAssigner};

/// One planning moment: starts, goals, their tables and priorities.
pub struct Fixture {
    pub guidance: GuidanceGraph,
    pub model: ActionModel,
    pub states: Vec<AgentState>,
    pub goals: Vec<usize>,
    pub tables: Vec<Arc<DistanceTable>>,
    pub priorities: PriorityState,
}

pub fn warehouse(agents: usize, model: ActionModel, root: u64) -> Fixture {
    let map = Arc::new(maps::warehouse());
    let instance = maps::random_instance(map.clone(), agents, model, root);
    let guidance = GuidanceGraph::uniform(map.clone());
    let cache = HeuristicCache::new(Arc::new(guidance.clone()), model);
    let mut assigner = TaskAssigner::uniform(&map, root);
    let goals: Vec<usize> = instance
        .agents
        .iter()
        .enumerate()
        .map(|(a, s)| assigner.assign(a, s.location))
        .collect();
    let tables = tables_for(&cache, &goals);
    let priorities = PriorityState::new(agents, &mut seed::rng(root, PRIORITY));
    Fixture {
        guidance,
        model,
        states: instance.agents,
        goals,
        tables,
        priorities,
    }
}
