//! Configuration, artifact persistence, and seeded RNG services shared by
//! all trainers.

pub mod artifact;
pub mod cfgfmt;
pub mod config;
pub mod rng;

pub use config::ExperimentConfig;
pub use rng::{Rng, RngStream};
