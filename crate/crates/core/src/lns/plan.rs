use std::sync::Arc;

use thiserror::Error;

use crate::domain::{check_joint_step, infer_action, ActionModel, AgentState, Conflict, GridMap, VertexId};
use crate::guidance::GuidanceGraph;
use crate::heuristic::DistanceTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("agent {agent} has {len} states, expected {expected}")]
    Length { agent: usize, len: usize, expected: usize },
    #[error("agent {agent} makes an illegal transition into step {step}")]
    IllegalTransition { agent: usize, step: usize },
    #[error("conflict {0:?}")]
    Conflict(Conflict),
}

/// Cost of the transition `from -> to`: the guidance weight of the move, or
/// the wait weight of the cell when the location is unchanged.
#[inline]
pub fn step_cost(guidance: &GuidanceGraph, from: AgentState, to: AgentState) -> f64 {
    if from.location == to.location {
        return guidance.wait_weight(from.location);
    }
    let map = guidance.map();
    let dir = map
        .direction_between(from.location, to.location)
        .expect("consecutive locations must be adjacent");
    guidance.move_cost(from.location, dir)
}

/// Approximate cost of one agent's windowed path: the in-window cost up to
/// the first goal arrival, or, without an arrival, the cost of all steps
/// plus the cost-to-go from the final state. Steps after arrival are free.
pub fn agent_cost(guidance: &GuidanceGraph, path: &[AgentState], goal: VertexId, table: &DistanceTable) -> f64 {
    let mut acc = 0.0;
    for t in 0..path.len() {
        if path[t].location == goal {
            return acc;
        }
        if t + 1 < path.len() {
            acc += step_cost(guidance, path[t], path[t + 1]);
        }
    }
    acc + table.distance(*path.last().expect("non-empty path"))
}

/// Sum of [`agent_cost`] over all agents, accumulated in agent order.
pub fn eval_objective(
    guidance: &GuidanceGraph,
    paths: &[Vec<AgentState>],
    goals: &[VertexId],
    tables: &[Arc<DistanceTable>],
) -> f64 {
    paths
        .iter()
        .zip(goals)
        .zip(tables)
        .map(|((p, &g), t)| agent_cost(guidance, p, g, t))
        .sum()
}

/// Per-agent state sequences of length `window + 1`; index 0 is the current
/// state. The objective and per-agent costs are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedPlan {
    window: usize,
    paths: Vec<Vec<AgentState>>,
    goals: Vec<VertexId>,
    costs: Vec<f64>,
    objective: f64,
}

impl WindowedPlan {
    pub fn new(
        guidance: &GuidanceGraph,
        paths: Vec<Vec<AgentState>>,
        goals: Vec<VertexId>,
        tables: &[Arc<DistanceTable>],
    ) -> Self {
        assert_eq!(paths.len(), goals.len());
        assert_eq!(paths.len(), tables.len());
        let window = paths.first().map(|p| p.len().saturating_sub(1)).unwrap_or(0);
        let costs: Vec<f64> = paths
            .iter()
            .zip(&goals)
            .zip(tables)
            .map(|((p, &g), t)| agent_cost(guidance, p, g, t))
            .collect();
        let objective = costs.iter().sum();
        Self {
            window,
            paths,
            goals,
            costs,
            objective,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn num_agents(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[Vec<AgentState>] {
        &self.paths
    }

    pub fn path(&self, agent: usize) -> &[AgentState] {
        &self.paths[agent]
    }

    pub fn goals(&self) -> &[VertexId] {
        &self.goals
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Joint state at `step`.
    pub fn states_at(&self, step: usize) -> Vec<AgentState> {
        self.paths.iter().map(|p| p[step]).collect()
    }

    /// Objective if `replacement` paths (with their costs) replaced the
    /// current ones, summed in agent order like [`eval_objective`].
    pub fn objective_with(&self, replacement: &[(usize, Vec<AgentState>, f64)]) -> f64 {
        let mut costs = self.costs.clone();
        for (a, _, c) in replacement {
            costs[*a] = *c;
        }
        costs.iter().sum()
    }

    /// Installs replacement paths and refreshes the cached objective.
    pub fn replace(&mut self, replacement: Vec<(usize, Vec<AgentState>, f64)>) {
        for (a, path, c) in replacement {
            debug_assert_eq!(path.len(), self.window + 1);
            self.paths[a] = path;
            self.costs[a] = c;
        }
        self.objective = self.costs.iter().sum();
    }

    /// Checks transition legality and conflict freedom at every step.
    pub fn validate(&self, map: &GridMap, model: ActionModel) -> Result<(), PlanError> {
        for (a, p) in self.paths.iter().enumerate() {
            if p.len() != self.window + 1 {
                return Err(PlanError::Length {
                    agent: a,
                    len: p.len(),
                    expected: self.window + 1,
                });
            }
            for t in 1..p.len() {
                if infer_action(map, p[t - 1], p[t], model).is_none() {
                    return Err(PlanError::IllegalTransition { agent: a, step: t });
                }
            }
        }
        for t in 1..=self.window {
            if let Some(c) = check_joint_step(&self.states_at(t - 1), &self.states_at(t), t).first() {
                return Err(PlanError::Conflict(*c));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Orientation::*;
    use crate::heuristic::build_table;

    fn setup(rows: &[&str], goal: VertexId) -> (GuidanceGraph, Arc<DistanceTable>) {
        let g = GuidanceGraph::uniform(Arc::new(GridMap::from_rows(rows).unwrap()));
        let t = Arc::new(build_table(&g, goal, ActionModel::Rotation));
        (g, t)
    }

    #[test]
    fn at_goal_waiting_costs_nothing() {
        let (g, t) = setup(&["...."], 0);
        let path = vec![AgentState::new(0, East); 6];
        assert_eq!(agent_cost(&g, &path, 0, &t), 0.0);
    }

    #[test]
    fn unfinished_window_adds_cost_to_go() {
        // 12 cells in a row; agent walks 5 steps and ends 7 away.
        let (g, t) = setup(&["............."], 12);
        let path: Vec<_> = (0..=5).map(|c| AgentState::new(c, East)).collect();
        assert_eq!(agent_cost(&g, &path, 12, &t), 5.0 + 7.0);
    }

    #[test]
    fn arrival_ends_accrual() {
        let (g, t) = setup(&["...."], 3);
        let path: Vec<_> = [0, 1, 2, 3, 3, 3].iter().map(|&c| AgentState::new(c, East)).collect();
        assert_eq!(agent_cost(&g, &path, 3, &t), 3.0);
    }

    #[test]
    fn replace_keeps_cache_coherent() {
        let (g, t) = setup(&["...."], 3);
        let p0: Vec<_> = [0, 0, 1].iter().map(|&c| AgentState::new(c, East)).collect();
        let mut plan = WindowedPlan::new(&g, vec![p0], vec![3], std::slice::from_ref(&t));
        assert_eq!(plan.objective(), 1.0 + 1.0 + 2.0);
        let better: Vec<_> = [0, 1, 2].iter().map(|&c| AgentState::new(c, East)).collect();
        let c = agent_cost(&g, &better, 3, &t);
        assert_eq!(plan.objective_with(&[(0, better.clone(), c)]), 3.0);
        plan.replace(vec![(0, better, c)]);
        assert_eq!(plan.objective(), eval_objective(&g, plan.paths(), plan.goals(), &[t]));
    }

    #[test]
    fn validate_catches_swaps() {
        let (g, t) = setup(&[".."], 1);
        let a = vec![AgentState::new(0, East), AgentState::new(1, East)];
        let b = vec![AgentState::new(1, West), AgentState::new(0, West)];
        let plan = WindowedPlan::new(&g, vec![a, b], vec![1, 0], &[t.clone(), t]);
        assert!(matches!(plan.validate(g.map(), ActionModel::Rotation), Err(PlanError::Conflict(_))));
    }
}
