//! Monte Carlo simulation of supercritical branching Markov processes with
//! constant branching rate and absorption.
//!
//! Particles move as independent copies of a [`motion::MotionModel`], branch
//! at rate r into a random number of offspring drawn from a
//! [`law::BranchingLaw`], and leave the population when absorbed. The crate
//! provides an event-driven engine ([`engine`]), one- and two-path spine
//! estimators ([`spine`]), martingale and quasi-stationary statistics
//! ([`stats`]) and extinction fixed points ([`fixed_point`]).

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod engine;
pub mod error;
pub mod fixed_point;
pub mod law;
pub mod motion;
pub mod quad;
pub mod rng;
pub mod spine;
pub mod state;
pub mod stats;
pub mod test_set;

pub use eigen::{martingale_weight, EigenData, Scaling};
pub use engine::{
    run_replica, run_replicas_map, survival_indicator, PopulationSnapshot, SimulationConfig,
};
pub use error::{Error, Result};
pub use law::BranchingLaw;
pub use motion::{step, MotionModel};
pub use rng::RandomStream;
pub use state::{canonicalize, LatticeConfig, State};
pub use stats::EstimateWithError;
pub use test_set::TestSet;
