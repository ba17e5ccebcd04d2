//! Energy bookkeeping and cost of transport.
//!
//! Energies are in units of `u_s * x_s` with the gravitational datum at the
//! undisturbed ground surface. Over any interval the mechanical energy lost
//! splits exactly into what the actuator absorbs and what the ground
//! dissipates: `E(0) - E(T) = e_act + e_gnd`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::float17;
use crate::model::{Controller, Params, State};
use crate::optimize::sweep::{sweep_impedance, GridSpec, Objective, SweepOptions};
use crate::sim::{simulate_outcome, SimOutcome, Trajectory};

/// Tolerance of the conservation audit and the single-step ground-work check.
pub const AUDIT_TOL: f64 = 1e-6;

/// Total mechanical energy of body and foot.
pub fn mechanical_energy(state: &State, r_m: f64) -> f64 {
    let body = r_m / (1.0 + r_m);
    let foot = 1.0 / (1.0 + r_m);
    body * (0.5 * state.v_b * state.v_b + state.x_b) + foot * (0.5 * state.v_f * state.v_f + state.x_f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Rest time `T`: the last entry into the static phase.
    pub rest_time: f64,
    pub e0: f64,
    #[serde(rename = "eT")]
    pub e_t: f64,
    /// Energy absorbed by the actuator on `[0, T]`; negative when it injects.
    pub e_act: f64,
    /// Energy dissipated by the ground on `[0, T]`.
    pub e_gnd: f64,
    /// `(e_gnd + e_act) / e0`: the actuator's absorbed work is lost.
    pub cot_dissipative: f64,
    /// `e_gnd / e0`: the actuator's absorbed work is recovered.
    pub cot_lossless: f64,
    /// `|(e0 - eT) - (e_act + e_gnd)|`.
    pub audit_residual: f64,
    /// `|e_gnd - depth^2 / 2|` for single-step intrusions, `depth` being the
    /// deepest penetration.
    pub single_step_residual: Option<f64>,
}

impl EnergyReport {
    /// Net energy injected by the actuator; the dissipative CoT then falls
    /// below the lossless one.
    pub fn actuator_injects(&self) -> bool {
        self.e_act < 0.0
    }
}

/// Energy report at the rest time of a settled run, taking `E(0)` and `E(T)`
/// from the recorded samples.
pub fn energy_report(outcome: &SimOutcome, traj: &Trajectory, r_m: f64) -> Result<EnergyReport> {
    let rest = rest_of(outcome)?;
    let first = traj
        .samples
        .first()
        .ok_or_else(|| Error::NotSettled("trajectory has no samples".into()))?;
    let at_rest = traj
        .samples
        .iter()
        .find(|s| s.tau == rest.tau)
        .ok_or_else(|| Error::NotSettled(format!("no sample at rest time {}", rest.tau)))?;
    Ok(report(&first.state, &at_rest.state, outcome, r_m))
}

/// Same as [`energy_report`] using the states stored in the outcome.
pub fn outcome_energy(outcome: &SimOutcome, r_m: f64) -> Result<EnergyReport> {
    let rest = rest_of(outcome)?;
    Ok(report(&outcome.initial_state, &rest, outcome, r_m))
}

fn rest_of(outcome: &SimOutcome) -> Result<State> {
    if let Some(v) = outcome.stroke_violation {
        return Err(Error::NotSettled(format!("stroke violated at tau = {}", v.tau)));
    }
    if !outcome.settled {
        return Err(Error::NotSettled("run did not settle".into()));
    }
    outcome
        .rest_state
        .ok_or_else(|| Error::NotSettled("settled without a rest time".into()))
}

fn report(start: &State, rest: &State, outcome: &SimOutcome, r_m: f64) -> EnergyReport {
    let e0 = mechanical_energy(start, r_m);
    let e_t = mechanical_energy(rest, r_m);
    let e_act = -(rest.w_act - start.w_act);
    let e_gnd = rest.w_gnd - start.w_gnd;
    // the foot may lift and land higher, but the ground only worked on the way down
    let depth = outcome.depth;
    EnergyReport {
        rest_time: rest.tau,
        e0,
        e_t,
        e_act,
        e_gnd,
        cot_dissipative: (e_gnd + e_act) / e0,
        cot_lossless: e_gnd / e0,
        audit_residual: ((e0 - e_t) - (e_act + e_gnd)).abs(),
        single_step_residual: (outcome.steps == 1).then(|| (e_gnd - 0.5 * depth * depth).abs()),
    }
}

/// Closed-form energetics of the rigid impactor: `(e0, e_gnd)`.
pub fn rigid_energy(v0: f64, params: &Params) -> (f64, f64) {
    let d = crate::model::rigid_depth(v0);
    let e0 = mechanical_energy(&State::impact(params, v0), params.r_m);
    (e0, 0.5 * d * d)
}

/// Depth-optimal and CoT-optimal impedance next to the rigid impactor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotRow {
    pub v0: f64,
    pub kp_depth: f64,
    pub kd_depth: f64,
    pub depth_depthopt: f64,
    pub cot_depthopt_diss: f64,
    pub cot_depthopt_lossless: f64,
    pub kp_cot: f64,
    pub kd_cot: f64,
    pub depth_cotopt: f64,
    pub cot_cotopt_diss: f64,
    pub cot_cotopt_lossless: f64,
    pub depth_rigid: f64,
    /// The rigid leg does no actuator work, so both conventions agree.
    pub cot_rigid: f64,
    pub error: Option<String>,
}

impl CotRow {
    fn failed(v0: f64, err: &Error) -> Self {
        let nan = f64::NAN;
        Self {
            v0,
            kp_depth: nan,
            kd_depth: nan,
            depth_depthopt: nan,
            cot_depthopt_diss: nan,
            cot_depthopt_lossless: nan,
            kp_cot: nan,
            kd_cot: nan,
            depth_cotopt: nan,
            cot_cotopt_diss: nan,
            cot_cotopt_lossless: nan,
            depth_rigid: nan,
            cot_rigid: nan,
            error: Some(err.to_string()),
        }
    }
}

/// Sweeps each velocity once per objective. A failing velocity yields a row
/// carrying the error instead of aborting the table.
pub fn cot_vs_depth_comparison(
    v0_list: &[f64],
    params: &Params,
    grid: &GridSpec,
    opts: &SweepOptions,
) -> Result<Vec<CotRow>> {
    if v0_list.is_empty() {
        return Err(crate::error::invalid("v0", "velocity list must be nonempty"));
    }
    let row = |&v0: &f64| -> Result<CotRow> {
        let by_depth = sweep_impedance(v0, params, grid, &SweepOptions { objective: Objective::Depth, ..*opts })?
            .refined
            .cell;
        let by_cot = sweep_impedance(v0, params, grid, &SweepOptions { objective: Objective::Cot, ..*opts })?
            .refined
            .cell;
        let rigid = simulate_outcome(&Controller::Rigid, params, v0, &opts.sim)?;
        let rigid_energy = outcome_energy(&rigid, params.r_m)?;
        Ok(CotRow {
            v0,
            kp_depth: by_depth.k_p,
            kd_depth: by_depth.k_d,
            depth_depthopt: by_depth.depth,
            cot_depthopt_diss: by_depth.cot.unwrap_or(f64::NAN),
            cot_depthopt_lossless: by_depth.cot_lossless.unwrap_or(f64::NAN),
            kp_cot: by_cot.k_p,
            kd_cot: by_cot.k_d,
            depth_cotopt: by_cot.depth,
            cot_cotopt_diss: by_cot.cot.unwrap_or(f64::NAN),
            cot_cotopt_lossless: by_cot.cot_lossless.unwrap_or(f64::NAN),
            depth_rigid: rigid.depth,
            cot_rigid: rigid_energy.cot_lossless,
            error: None,
        })
    };
    Ok(exec::map(opts.exec, v0_list, |v0| row(v0).unwrap_or_else(|e| CotRow::failed(*v0, &e))))
}

/// Writes the `cot.csv` columns.
pub fn write_cot_csv<W: Write>(rows: &[CotRow], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "v0,kp_depth,kd_depth,depth_depthopt,cot_depthopt_diss,cot_depthopt_lossless,kp_cot,kd_cot,depth_cotopt,cot_cotopt_diss,depth_rigid,cot_rigid"
    )?;
    for r in rows {
        let cols = [
            r.v0,
            r.kp_depth,
            r.kd_depth,
            r.depth_depthopt,
            r.cot_depthopt_diss,
            r.cot_depthopt_lossless,
            r.kp_cot,
            r.kd_cot,
            r.depth_cotopt,
            r.cot_cotopt_diss,
            r.depth_rigid,
            r.cot_rigid,
        ];
        let line: Vec<String> = cols.iter().map(|&v| float17(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn datum_is_ground_surface() {
        assert_eq!(mechanical_energy(&State::default(), 5.0), 0.0);
    }

    #[test]
    fn body_height_only() {
        let s = State {
            x_b: 10.0,
            ..State::default()
        };
        assert_relative_eq!(mechanical_energy(&s, 5.0), 25.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn impact_energy() {
        let p = Params::new(5.0, 20.0).unwrap();
        for v0 in [0.0, -1.0, -4.5] {
            let e = mechanical_energy(&State::impact(&p, v0), p.r_m);
            assert_relative_eq!(e, v0 * v0 / 2.0 + 5.0 / 6.0 * p.l0, max_relative = 1e-14);
        }
    }

    #[test]
    fn rigid_closed_form() {
        let p = Params::new(5.0, 20.0).unwrap();
        let (e0, e_gnd) = rigid_energy(0.0, &p);
        assert_relative_eq!(e_gnd, 2.0);
        assert_relative_eq!(e0, 25.0 / 3.0);
    }
}
