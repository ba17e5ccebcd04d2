//! Control design: open-loop bang-bang profiles and impedance gain sweeps.

pub mod bangbang;
pub mod simplex;
pub mod sweep;
pub mod tables;

pub use bangbang::{solve_bang_bang, solve_multi_switch, BangBangSolution, MultiSwitchOptions};
pub use sweep::{sweep_impedance, Axis, Cell, GridResult, GridSpec, Objective, SweepOptions};
pub use tables::{compare_policies, optimal_curves, CompareRow, Comparison, CurveRow};
