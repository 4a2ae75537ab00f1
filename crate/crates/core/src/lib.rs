//! Backjumping search for sequence-before-specify task and motion planning.
//!
//! A plan skeleton fixes which object goes where at every step; the search
//! then picks a sampled placement per step so that every step stays
//! geometrically feasible. When a step runs out of feasible samples the search
//! has to decide how far back to revise. This crate provides exhaustive
//! backtracking, backjumping driven by a pluggable heuristic under two sampling
//! regimes, exact oracles for where to jump, learned heuristics trained from
//! those oracles, and an experiment harness around all of it.

pub mod domains;
pub mod error;
pub mod harness;
pub mod learn;
pub mod oracle;
pub mod problem;
pub mod sampling;
pub mod search;

pub use error::{Error, Result};
