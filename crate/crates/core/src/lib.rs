//! Day-ahead scheduling and cost sharing for a grid-connected microgrid.
//!
//! Users with storage and renewables cooperate to minimize the total energy
//! bill, either through a centralized LP or a distributed primal-dual scheme
//! that only exchanges messages between graph neighbours. The saving over
//! stand-alone operation is then split by Nash bargaining.

// Index loops read better than iterator chains in the dense linear algebra.
#![allow(clippy::needless_range_loop)]

pub mod codes;
pub mod fixtures;
pub mod graph;
pub mod harness;
pub mod lp;
pub mod nbs;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod selfish;

pub use codes::{run_codes, CodesConfig, CodesError, CodesRun, EnergyRule};
pub use graph::{metropolis_weights, run_consensus, CommGraph, GraphError};
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use nbs::{allocate_centralized, allocate_distributed, CostReport, NbsError};
pub use oracle::{solve_social, PowerSchedule, SocialSolution};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
pub use selfish::disagreement_point;
