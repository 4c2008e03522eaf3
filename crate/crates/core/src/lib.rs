//! Evolutionary synthesis of reward programs.

pub mod dsl;
pub mod env;
pub mod evolution;
pub mod generate;
pub mod metrics;
pub mod policy;
pub mod reflection;
pub mod rng;
pub mod store;
