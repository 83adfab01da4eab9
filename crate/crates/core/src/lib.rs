//! Lifelong multi-agent path finding on 4-connected grids with rotation
//! kinematics.
//!
//! The planner stack is windowed PIBT for fast initial plans, anytime
//! large-neighborhood search to refine them, and a parallel refinement
//! driver with a single committer. Guidance graphs bias every distance
//! computation, and a simulator runs the lifelong loop and collects
//! throughput and wait heatmaps.

pub mod domain;
pub mod error;
pub mod guidance;
pub mod heuristic;
pub mod lns;
pub mod maps;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod pibt;
pub mod seed;
pub mod simulator;
pub mod wppl;

pub use domain::{
    apply_action, check_joint_step, turn_toward, Action, ActionModel, AgentState, Conflict, ConflictKind,
    GridMap, Instance, Orientation, VertexId,
};
pub use error::ParseError;
pub use guidance::GuidanceGraph;
pub use heuristic::{build_table, DistanceTable, HeuristicCache};
pub use lns::{lns_refine, Budget, WindowedPlan};
pub use pibt::{pibt_rollout, pibt_step, PriorityState};
pub use simulator::{export_heatmap, simulate, Planner, RunMetrics, SimConfig, TaskAssigner, Trajectory};
pub use wppl::{parallel_refine, plan_window, CommitLog, DisablePolicy, PibtPlanner, WpplConfig, WpplPlanner};
