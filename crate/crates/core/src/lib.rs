//! Decentralized consensus optimization by edge-consensus primal-dual
//! splitting.
//!
//! The crate provides:
//!
//! * [`topology`]: communication graphs, the `±I` constraint sign convention
//!   and Metropolis–Hastings mixing weights.
//! * [`objective`]: per-node convex losses with exact and linearized
//!   w-update solvers, plus a centralized oracle for the consensus optimum.
//! * [`compression`]: the rand-k% masking operator with counter-derived masks
//!   shared by both endpoints of an edge, and the payload wire format.
//! * [`ecl`]: the node-local ECL / compressed-ECL state machine.
//! * [`gossip`]: the D-PSGD baseline.
//! * [`theory`]: contraction factors and admissibility conditions.
//! * [`simulator`]: a deterministic synchronous round loop with byte
//!   accounting and CSV output.
//! * [`config`] and [`cli`]: the flat `key=value` experiment format and the
//!   command-line driver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod compression;
pub mod config;
pub mod ecl;
pub mod error;
pub mod gossip;
pub mod linalg;
pub mod objective;
pub mod presets;
pub mod simulator;
pub mod theory;
pub mod topology;
pub mod transport;

pub use error::{Error, Result};
