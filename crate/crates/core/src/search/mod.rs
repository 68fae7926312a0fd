//! Product-automaton planning: lazy A*/Dijkstra with an experience cache,
//! and the eager full-graph baseline.

mod astar;
mod cost;
mod full;
mod graph;
mod plan;

use thiserror::Error;

pub use astar::{heuristic_ba_distance, plan_astar, plan_dijkstra, search, BaDistance};
pub use cost::{motion_cost_geometric, CostProvider, ExperienceCache, GeometricCost, LatencyProvider};
pub use full::{action_between, full_graph_construct, plan_full, search_full, FullGraph, MAX_FULL_NODES};
pub use graph::{successors, Edge, Node, PartialGraph, ProductState, SearchProblem};
pub use plan::{Plan, PlanStats, PlanStep};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("no plan satisfies the specification from this state")]
    NoPlan,
    #[error("product graph has {nodes} nodes, above the limit of {limit}")]
    GraphTooLarge { nodes: u128, limit: u128 },
    #[error("start node {0} is not a planning state")]
    InvalidStart(String),
}
