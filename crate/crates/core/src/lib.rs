//! Demand-heterogeneous single-source multicast routing.
//!
//! Every destination asks for its own rate; an edge carries the largest rate
//! of the destinations below it, and the objective is the sum of
//! `cost × flow` over the tree. The crate provides instances and generators,
//! the flow-tree model with validation, exact solvers, classical heuristics
//! and a step-by-step routing environment for learned policies.

pub mod baselines;
pub mod env;
pub mod error;
pub mod exact;
pub mod generate;
pub mod graph;
pub mod instance;
pub mod paths;
pub mod tree;

pub use baselines::{
    attach_in_order, bee_colony, dijkstra_reuse, genetic_algorithm, sequential_greedy, Attacher, BcoConfig,
    GaConfig,
};
pub use env::{rollout, DecisionContext, EnvConfig, Mode, Policy, Rollout, RoutingEnv, StepRecord};
pub use error::{Error, Result};
pub use exact::{brute_force, dreyfus_wagner, Solution};
pub use generate::{assign_demands, generate_instance, DemandRule, GenConfig, Topology};
pub use graph::{Edge, NetworkGraph, NodeId, HUB_COST};
pub use instance::{DemandVector, ProblemInstance};
pub use tree::{compute_flows, level_decomposition_cost, tree_cost, validate, FlowAssignment, MulticastTree, ValidationReport};
