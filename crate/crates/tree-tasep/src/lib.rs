//! Simulation and analysis of the totally asymmetric simple exclusion
//! process (TASEP) on rooted trees fed by a reservoir at the root.
//!
//! Particles enter the root at rate lambda whenever it is empty, and jump
//! away from the root along each edge at the edge's rate, provided the
//! target vertex is empty. This crate provides:
//!
//! - reproducible Galton-Watson tree growth ([`gw_tree`]),
//! - transition-rate families with flow classification ([`rate_field`]),
//! - computable disentanglement and current-window bounds ([`bounds`]),
//! - an exact-in-law stochastic simulator with observables ([`engine`]),
//! - monotone couplings and a slowed comparison process ([`couplings`]),
//! - last-passage percolation reductions ([`lpp`]),
//! - equilibrium measures on truncations ([`equilibrium`]).
//!
//! Everything is deterministic given explicit seeds: trees, simulations and
//! couplings are pure functions of their inputs.

#![warn(missing_docs)]
#![warn(rust_2018_idioms)]
#![forbid(unsafe_code)]

pub mod bounds;
pub mod couplings;
pub mod engine;
pub mod equilibrium;
pub mod gw_tree;
pub mod lpp;
pub mod numeric;
pub mod rate_field;
pub mod rng;
pub mod stats;

pub use engine::{simulate, EventLog, SimMode, SimOutcome, SimParams, StopRule};
pub use gw_tree::{OffspringLaw, Tree, TreeError, VertexId};
pub use rate_field::{RateError, RateFamily, RateTable, SlowingSequence};
