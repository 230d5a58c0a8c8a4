//! Data-efficient reinforcement learning for vehicle trajectory tracking.
//!
//! The crate bundles a surrogate trajectory-following environment, a split
//! prediction scheme that combines learned vehicle dynamics with exact
//! localization and trajectory matching, and four learners: SAC, REDQ,
//! PETS with an MPPI planner, and MBPO.

pub mod agent;
pub mod buffer;
pub mod env;
pub mod error;
pub mod harness;
pub mod kv;
pub mod mbpo;
pub mod model;
pub mod nn;
pub mod planner;

pub use error::{Error, Result};
