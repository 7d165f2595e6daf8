//! Policy stitching toolkit for hierarchical continuous control.
//!
//! A complex task is solved by sequencing frozen subtask policies. Naive
//! hand-offs fail because each policy induces its own state distribution,
//! so this crate trains two extra components per hand-off:
//!
//! * a *transition policy*, trained adversarially (inverse-RL style) so that
//!   the states and actions it produces inside a declared transition
//!   interval match those of the next subtask policy, and
//! * a binary *switch Q-network* (stay / switch) trained with double
//!   Q-learning on terminal success/fail rewards to time the hand-off.
//!
//! Everything runs on deterministic desk-scale point-mass environments with
//! a seeded, portable RNG, so two runs of the full pipeline at the same seed
//! produce bitwise-identical artifacts and reports.

pub mod airl;
pub mod cli;
pub mod env;
pub mod executor;
pub mod nn;
pub mod ppo;
pub mod store;
pub mod switchq;

#[cfg(test)]
pub(crate) mod testutil;

use thiserror::Error;

/// Crate-wide error type. Variants map onto distinct CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}; update rejected")]
    NonFinite(&'static str),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unknown subtask id: {0}")]
    UnknownSubtask(String),
    #[error("data collection failed: {0}")]
    Collection(String),
    #[error("training budget exhausted: {0}")]
    Budget(String),
    #[error("missing artifact dependency: {0}")]
    MissingArtifact(String),
    #[error("corrupt or incompatible artifact: {0}")]
    Corrupt(String),
    #[error("output already exists: {0} (pass --force to overwrite)")]
    Exists(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
