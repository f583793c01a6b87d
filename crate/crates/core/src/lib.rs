//! LEO mega-constellation ISL simulation: Walker-delta geometry, link
//! budgets, ISL topologies, snapshot routing and in-flight content delivery
//! to aircraft.

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ifc;
pub mod link_budget;
pub mod orbital;
pub mod routing;
pub mod scenario;
pub mod topology;

pub use error::{ConfigError, LinkError};
pub use scenario::{load_scenario, Scenario, ScenarioError};
