//! Green-energy allocation for cellular base stations fed by a microgrid.
//!
//! The crate models a radial distribution feeder with a slack bus tied to the
//! main grid, load buses hosting base stations and green buses hosting solar
//! or wind generation. Base-station power draw is chosen to minimise the
//! brown energy imported at the slack bus while meeting a downlink capacity
//! demand and the feeder's voltage limits.
//!
//! Two allocators are provided:
//!
//! * [`optimizer::solve_one_shot`] solves the deterministic convex problem with
//!   a log-barrier interior-point method.
//! * [`online::run_online`] runs stochastic mirror descent (Euclidean mirror
//!   map) against noisy green-generation measurements.
//!
//! [`sim`] ties both to trace files and scenarios; the `greengrid` binary is a
//! thin wrapper over [`cli::run`].

pub mod cli;
pub mod comm_model;
pub mod error;
pub mod grid_model;
pub mod online;
pub mod optimizer;
pub mod power_flow;
pub mod sim;

pub use error::{Error, Result};
