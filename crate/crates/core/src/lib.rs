//! Status-update control for energy-harvesting sensors whose battery level
//! is only partially known at the edge node.
//!
//! The crate contains the exact MDP solvers (noiseless partial-knowledge
//! and exact-knowledge baselines), the post-update block value iteration,
//! the current-next decision rule with its runtime battery tracker,
//! multi-sensor schedulers, a Monte-Carlo simulator and the `pbsi` CLI.

pub mod bound;
pub mod cli;
pub mod cn;
pub mod ebsi;
pub mod energy;
pub mod error;
pub mod format;
pub mod mdp;
pub mod noiseless;
pub mod params;
pub mod policy;
pub mod post_update;
pub mod rng;
pub mod scheduling;
pub mod sim;
pub mod tracker;

pub use energy::{clipped_mean, clipped_std, EnergyModel};
pub use error::{Error, Result};
pub use params::{SensorParams, SystemConfig};
