//! Batch front end for the `softland` toolkit: configuration parsing and
//! artifact writing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{parse_config, resolve, ConfigError, Entries, Mode, Origin, RunConfig};
pub use run::{run, RunError};
