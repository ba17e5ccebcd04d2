//! Tables built from many sweeps: optimal-gain curves and the rigid /
//! impedance / bang-bang depth comparison.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::bangbang::solve_bang_bang;
use super::sweep::{sweep_from, sweep_impedance, GridSpec, SweepOptions};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::float17 as f;
use crate::model::{Controller, Params};
use crate::sim::simulate_outcome;

/// Impact velocity at which the force limit is read off the optimal impedance
/// controller when none is given.
pub const U_MAX_REFERENCE_V0: f64 = -10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub r_m: f64,
    pub s: f64,
    pub v0: f64,
    pub k_p_star: f64,
    pub k_d_star: f64,
    pub depth_star: f64,
    /// Dissipative CoT of the optimum; NaN if it did not settle.
    pub cot_star: f64,
    pub u_peak: f64,
    pub min_gap: f64,
    /// Why the row has no optimum.
    pub error: Option<String>,
}

impl CurveRow {
    fn failed(r_m: f64, s: f64, v0: f64, err: Error) -> Self {
        Self {
            r_m,
            s,
            v0,
            k_p_star: f64::NAN,
            k_d_star: f64::NAN,
            depth_star: f64::NAN,
            cot_star: f64::NAN,
            u_peak: f64::NAN,
            min_gap: f64::NAN,
            error: Some(err.to_string()),
        }
    }
}

/// Optimal gains for every `(r_m, s, v0)`.
///
/// Each `(r_m, s)` curve is traced in `v0_list` order, refining from the
/// previous velocity's optimum when that beats the grid's best cell. A failed
/// row is reported in place and does not stop the curve.
pub fn optimal_curves(
    v0_list: &[f64],
    r_m_list: &[f64],
    s_list: &[f64],
    base: &Params,
    grid: &GridSpec,
    opts: &SweepOptions,
) -> Result<Vec<CurveRow>> {
    if v0_list.is_empty() || r_m_list.is_empty() || s_list.is_empty() {
        return Err(invalid("v0", "velocity, mass-ratio and stroke lists must be nonempty"));
    }
    let combos: Vec<(f64, f64)> = r_m_list
        .iter()
        .flat_map(|&r| s_list.iter().map(move |&s| (r, s)))
        .collect();
    let curves = exec::map(opts.exec, &combos, |&(r_m, s)| trace_curve(v0_list, r_m, s, base, grid, opts));
    Ok(curves.into_iter().flatten().collect())
}

fn trace_curve(
    v0_list: &[f64],
    r_m: f64,
    s: f64,
    base: &Params,
    grid: &GridSpec,
    opts: &SweepOptions,
) -> Vec<CurveRow> {
    let params = match Params::new(r_m, s).and_then(|p| p.with_u_max(base.u_max)) {
        Ok(p) => p,
        Err(e) => return v0_list.iter().map(|&v0| CurveRow::failed(r_m, s, v0, e.clone())).collect(),
    };
    let mut warm = None;
    v0_list
        .iter()
        .map(|&v0| match sweep_from(v0, &params, grid, opts, warm) {
            Ok(g) => {
                let c = g.refined.cell;
                warm = Some((c.k_p, c.k_d));
                CurveRow {
                    r_m,
                    s,
                    v0,
                    k_p_star: c.k_p,
                    k_d_star: c.k_d,
                    depth_star: c.depth,
                    cot_star: c.cot.unwrap_or(f64::NAN),
                    u_peak: c.u_peak,
                    min_gap: c.min_gap,
                    error: None,
                }
            }
            Err(e) => CurveRow::failed(r_m, s, v0, e),
        })
        .collect()
}

/// Writes `r_m, s, v0, k_p_star, k_d_star, depth_star, cot_star`.
pub fn write_curves_csv<W: Write>(rows: &[CurveRow], mut out: W) -> io::Result<()> {
    writeln!(out, "r_m,s,v0,k_p_star,k_d_star,depth_star,cot_star")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f(r.r_m),
            f(r.s),
            f(r.v0),
            f(r.k_p_star),
            f(r.k_d_star),
            f(r.depth_star),
            f(r.cot_star)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub v0: f64,
    pub depth_rigid: f64,
    pub depth_imp: f64,
    pub k_p: f64,
    pub k_d: f64,
    pub depth_bb: f64,
    pub switch_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub u_max: f64,
    /// The force limit was read off the optimal impedance controller.
    pub u_max_derived: bool,
    pub rows: Vec<CompareRow>,
}

impl Comparison {
    /// Writes `v0, depth_rigid, depth_imp, depth_bb, u_max`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "v0,depth_rigid,depth_imp,depth_bb,u_max")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                f(r.v0),
                f(r.depth_rigid),
                f(r.depth_imp),
                f(r.depth_bb),
                f(self.u_max)
            )?;
        }
        Ok(())
    }
}

/// Peak force of the unsaturated depth-optimal impedance controller at
/// [`U_MAX_REFERENCE_V0`].
pub fn reference_force_limit(params: &Params, grid: &GridSpec, opts: &SweepOptions) -> Result<f64> {
    let unsaturated = SweepOptions {
        saturate: false,
        ..*opts
    };
    let g = sweep_impedance(U_MAX_REFERENCE_V0, params, grid, &unsaturated)?;
    Ok(g.refined.cell.u_peak)
}

/// Rigid, depth-optimal impedance and single-switch bang-bang depths at each
/// velocity.
///
/// With a finite `params.u_max` the impedance force is clamped to it;
/// otherwise the limit comes from [`reference_force_limit`] and the impedance
/// runs unclamped.
pub fn compare_policies(v0_list: &[f64], params: &Params, grid: &GridSpec, opts: &SweepOptions) -> Result<Comparison> {
    if v0_list.is_empty() {
        return Err(invalid("v0", "velocity list must be nonempty"));
    }
    let explicit = params.has_force_limit();
    let u_max = if explicit {
        params.u_max
    } else {
        reference_force_limit(params, grid, opts)?
    };
    let limited = params.with_u_max(u_max)?;
    let imp_opts = SweepOptions {
        saturate: explicit,
        objective: super::sweep::Objective::Depth,
        ..*opts
    };
    let rows = exec::map(opts.exec, v0_list, |&v0| -> Result<CompareRow> {
        let rigid = simulate_outcome(&Controller::Rigid, params, v0, &opts.sim)?;
        let imp = sweep_impedance(v0, &limited, grid, &imp_opts)?.refined.cell;
        // a resting touchdown is taken as the limit from below
        let bb = solve_bang_bang(v0.min(-f64::MIN_POSITIVE), &limited, &opts.sim)?;
        Ok(CompareRow {
            v0,
            depth_rigid: rigid.depth,
            depth_imp: imp.depth,
            k_p: imp.k_p,
            k_d: imp.k_d,
            depth_bb: bb.depth,
            switch_time: bb.switch_times.first().copied().unwrap_or(0.0),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        u_max,
        u_max_derived: !explicit,
        rows,
    })
}
