//! Simulation and control optimization for a two-mass legged robot landing on
//! plastically yielding ground.
//!
//! The ground pushes back in proportion to foot depth while the foot intrudes
//! and not at all while it retracts. [`sim::simulate`] integrates one impact
//! through the flight, yielding and static phases; [`optimize`] searches for
//! open-loop bang-bang force profiles and impedance gains that minimize
//! penetration depth or relative energy loss.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod exec;
pub mod model;
pub mod optimize;
pub mod sim;

mod fmt;

pub use error::{Error, Result};
pub use fmt::float17;
pub use model::{Controller, Params, Phase, PhysicalParams, Scales, State};
pub use sim::{simulate, simulate_outcome, SimOptions, SimOutcome, Trajectory};
