//! Simulated multi-venue execution with a runtime compliance shield, a
//! policy-gradient learner and a hash-chained compliance audit.

pub mod agents;
pub mod audit;
pub mod baselines;
pub mod book;
pub mod config;
pub mod env;
pub mod experiment;
pub mod kernel;
pub mod market;
pub mod ppo;
pub mod scalar;
pub mod shield;
pub mod stats;

pub use scalar::Real;

/// Double-precision instantiations used by the simulator and the CLI.
pub type Fundamental = agents::FundamentalOu<f64>;
pub type Policy = ppo::PolicyParams<f64>;
pub type Optimizer = ppo::adam::Adam<f64>;
pub type PairedTest = stats::PairedT<f64>;
