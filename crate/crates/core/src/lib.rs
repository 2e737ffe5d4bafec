//! Simulation of a bridging-based crowd note scorer under synthetic rater
//! populations, network structure and adversarial raters.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod network;
pub mod population;
pub mod rng;
pub mod scorer;

pub use error::{Result, SimError};
