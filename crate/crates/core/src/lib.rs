//! Per-link throughput and collision probability of CSMA wireless networks
//! from their contention graphs.
//!
//! Three routes to the same quantities:
//!
//! * [`icn`]: the collision-free product-form model over independent sets;
//! * [`gicn`]: its collision-aware perturbation for slotted backoff, with an
//!   exact Markov-chain cross-check in [`ctmc`];
//! * [`sim`]: a seeded mini-slot CSMA simulator.
//!
//! [`topology`], [`report`] and [`cli`] wire these into the `csma-gicn`
//! command-line tool.

pub mod cli;
pub mod ctmc;
pub mod gicn;
pub mod graph;
pub mod icn;
pub mod report;
pub mod sim;
pub mod topology;

pub use ctmc::{build_rate_matrix, ctmc_metrics, solve_stationary, CtmcError, RateMatrix};
pub use gicn::{
    build_augmented_space, conditional_collision_prob, gicn_metrics, gicn_weights,
    linearized_collision_prob, solve_gicn, AugmentedSpace, AugmentedState, CollisionParams,
    GicnError, LinkMetrics,
};
pub use graph::{
    active_countdown_set, countdown_edges, enumerate_feasible_states, parse_graph, ContentionGraph,
    GraphError, LinkPair, LinkSet,
};
pub use icn::{
    icn_distribution, icn_throughput, AccessIntensities, IcnError, StationaryDistribution,
};
pub use sim::{run, run_replications, SimConfig, SimError, SimResult};

/// Mbps per unit of normalized airtime at the reference operating point.
pub const DEFAULT_RATE_MBPS: f64 = 7.229;
