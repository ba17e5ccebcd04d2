//! Open-loop bang-bang force profiles.
//!
//! The leg pushes with `+u_max` (driving the foot into the ground), then
//! alternates sign at each switch time. Once the foot stops, the body is
//! brought to rest with the constant force of [`body_arrest_force`]; the
//! profile is admissible when the depth reached can carry that force.

use serde::{Deserialize, Serialize};

use super::simplex::{self, SimplexOptions};
use crate::error::{invalid, Error, Result};
use crate::model::{body_arrest_force, terminal_residual, Controller, Params, State};
use crate::sim::{simulate_outcome, SimOptions, StopRule, Termination};

/// Residual magnitude accepted as satisfying the terminal constraint.
pub const RESIDUAL_TOL: f64 = 1e-8;
const SCAN_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BangBangSolution {
    pub switch_times: Vec<f64>,
    pub u_max: f64,
    /// Penetration depth when the foot stops.
    pub depth: f64,
    /// Terminal residual at foot rest (non-positive when supportable).
    pub residual: f64,
    pub feasible: bool,
    /// State when the foot stops.
    pub rest_state: Option<State>,
    /// Constant force that then stops the body.
    pub arrest_force: Option<f64>,
}

/// One bang-bang profile run until the foot first stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEval {
    pub depth: f64,
    /// `+inf` when the foot never stops or the body hits the foot.
    pub residual: f64,
    /// Stroke respected up to foot rest and during the body arrest, and the
    /// arrest force within the actuator limit.
    pub arrest_ok: bool,
    pub rest_state: Option<State>,
}

impl ProfileEval {
    pub fn is_feasible(&self) -> bool {
        self.arrest_ok && self.residual <= RESIDUAL_TOL
    }
}

fn profile_options(options: &SimOptions) -> SimOptions {
    SimOptions {
        stop: StopRule::FootRest,
        record_dt: 0.0,
        ..*options
    }
}

/// Drops coincident switch pairs, which cancel.
fn normalize(times: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(times.len());
    for &t in times {
        if out.last() == Some(&t) {
            out.pop();
        } else {
            out.push(t);
        }
    }
    out
}

/// Runs `+u_max` with sign flips at `switch_times` until the foot stops.
pub fn evaluate_profile(
    switch_times: &[f64],
    u_max: f64,
    v0: f64,
    params: &Params,
    options: &SimOptions,
) -> Result<ProfileEval> {
    let controller = Controller::BangBang {
        u_max,
        switch_times: normalize(switch_times),
    };
    let out = simulate_outcome(&controller, params, v0, &profile_options(options))?;
    if out.termination != Termination::FootRest {
        let residual = if out.stroke_violation.is_some() {
            f64::INFINITY
        } else {
            f64::NAN
        };
        return Ok(ProfileEval {
            depth: out.depth,
            residual,
            arrest_ok: false,
            rest_state: None,
        });
    }
    let rest = out.final_state;
    let residual = terminal_residual(&rest, params.r_m).unwrap_or(f64::INFINITY);
    Ok(ProfileEval {
        depth: out.depth,
        residual,
        arrest_ok: arrest_is_admissible(&rest, params),
        rest_state: Some(rest),
    })
}

/// The arrest force decelerates a descending body to rest exactly as the gap
/// closes. A rising body is pushed further up and leaves the stroke, and the
/// actuator cannot exceed its own limit.
fn arrest_is_admissible(rest: &State, params: &Params) -> bool {
    let gap = rest.gap();
    let in_stroke = gap > 0.0 && gap <= params.s && rest.v_b <= 0.0;
    in_stroke
        && body_arrest_force(rest.x_b, rest.v_b, rest.x_f, params.r_m).is_ok_and(|u_b| u_b <= params.u_max)
}

fn solution(mut switch_times: Vec<f64>, u_max: f64, eval: &ProfileEval, params: &Params) -> BangBangSolution {
    // switches after the foot stops never act
    if let Some(rest) = eval.rest_state {
        switch_times.retain(|&t| t < rest.tau);
    }
    let arrest_force = eval
        .rest_state
        .and_then(|s| body_arrest_force(s.x_b, s.v_b, s.x_f, params.r_m).ok());
    BangBangSolution {
        switch_times,
        u_max,
        depth: eval.depth,
        residual: eval.residual,
        feasible: eval.is_feasible(),
        rest_state: eval.rest_state,
        arrest_force,
    }
}

fn check_inputs(v0: f64, params: &Params) -> Result<f64> {
    params.validate()?;
    if !params.has_force_limit() {
        return Err(invalid("u_max", "bang-bang control needs a finite force limit"));
    }
    if !(v0.is_finite() && v0 < 0.0) {
        return Err(invalid("v0", format!("must be negative, got {v0}")));
    }
    Ok(params.u_max)
}

/// Single-switch profile whose foot stops exactly at the depth that supports
/// the body-arresting force.
///
/// Later switches stomp deeper and lower the residual. The switch time is
/// bracketed by a scan over `[0, T+]`, where `T+` is when the foot stops
/// under `+u_max` alone, then bisected onto the feasible side of the root.
pub fn solve_bang_bang(v0: f64, params: &Params, options: &SimOptions) -> Result<BangBangSolution> {
    let u_max = check_inputs(v0, params)?;
    let eval = |t: f64| evaluate_profile(&[t], u_max, v0, params, options);

    // Switching after the full-push foot rest changes nothing, and switching
    // after a full-push stroke violation is too late.
    let t_end = match first_stop(u_max, v0, params, options)? {
        FullPush::Rest(t, residual) => {
            if !(residual <= RESIDUAL_TOL) {
                return Err(Error::Infeasible(format!(
                    "terminal residual {residual} stays positive for every switch time; u_max or s too small"
                )));
            }
            t
        }
        FullPush::Violation(t) => t,
    };

    let mut lo = 0.0;
    let mut lo_eval = eval(lo)?;
    if lo_eval.is_feasible() {
        return Ok(solution(vec![0.0], u_max, &lo_eval, params));
    }
    let mut hi = None;
    for k in 1..=SCAN_POINTS {
        let t = t_end * k as f64 / SCAN_POINTS as f64;
        let e = eval(t)?;
        if e.residual <= RESIDUAL_TOL {
            if e.arrest_ok {
                hi = Some((t, e));
            }
            break;
        }
        lo = t;
        lo_eval = e;
    }
    let Some((mut hi, mut hi_eval)) = hi else {
        return Err(Error::Infeasible(
            "every supportable switch time violates the stroke or force limit during the body arrest".into(),
        ));
    };

    while hi - lo > options.event_tol && hi_eval.residual.abs() > 0.01 * RESIDUAL_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = eval(mid)?;
        if e.residual <= 0.0 && e.arrest_ok {
            hi = mid;
            hi_eval = e;
        } else {
            lo = mid;
            lo_eval = e;
        }
    }
    let _ = lo_eval;
    Ok(solution(vec![hi], u_max, &hi_eval, params))
}

enum FullPush {
    Rest(f64, f64),
    Violation(f64),
}

fn first_stop(u_max: f64, v0: f64, params: &Params, options: &SimOptions) -> Result<FullPush> {
    let controller = Controller::BangBang {
        u_max,
        switch_times: Vec::new(),
    };
    let out = simulate_outcome(&controller, params, v0, &profile_options(options))?;
    match (out.termination, out.stroke_violation) {
        (Termination::FootRest, _) => Ok(FullPush::Rest(
            out.final_state.tau,
            terminal_residual(&out.final_state, params.r_m).unwrap_or(f64::INFINITY),
        )),
        (_, Some(v)) => Ok(FullPush::Violation(v.tau)),
        _ => Err(Error::Infeasible(
            "the foot never stops under full push within the horizon".into(),
        )),
    }
}

/// Options for [`solve_multi_switch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiSwitchOptions {
    pub starts: usize,
    /// Weight on positive terminal residual.
    pub penalty: f64,
    pub simplex: SimplexOptions,
}

impl Default for MultiSwitchOptions {
    fn default() -> Self {
        Self {
            starts: 6,
            penalty: 100.0,
            simplex: SimplexOptions {
                max_evals: 600,
                x_tol: 1e-9,
                f_tol: 1e-11,
                initial_step: 0.05,
            },
        }
    }
}

/// Switch times from unconstrained coordinates: cumulative absolute values.
fn times_from(x: &[f64]) -> Vec<f64> {
    let mut t = 0.0;
    x.iter()
        .map(|v| {
            t += v.abs();
            t
        })
        .collect()
}

fn coords_from(times: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    times
        .iter()
        .map(|&t| {
            let d = t - prev;
            prev = t;
            d
        })
        .collect()
}

/// Depth-minimizing profile with `n_switches` switches, found by a penalized
/// simplex search from several starts around the single-switch solution.
///
/// The best candidate is polished by bisecting its last switch time onto the
/// terminal constraint.
pub fn solve_multi_switch(
    v0: f64,
    params: &Params,
    n_switches: usize,
    options: &SimOptions,
    multi: &MultiSwitchOptions,
) -> Result<BangBangSolution> {
    let u_max = check_inputs(v0, params)?;
    if n_switches == 0 {
        return Err(invalid("n_switches", "must be at least 1"));
    }
    let single = solve_bang_bang(v0, params, options).ok();

    let objective = |x: &[f64]| -> f64 {
        let times = times_from(x);
        match evaluate_profile(&times, u_max, v0, params, options) {
            Ok(e) if e.rest_state.is_some() => {
                let mut f = e.depth + multi.penalty * e.residual.max(0.0);
                if !e.arrest_ok {
                    f += 1e3;
                }
                if f.is_finite() {
                    f
                } else {
                    1e6
                }
            }
            _ => 1e6,
        }
    };

    let base = single.as_ref().map_or(0.5, |s| s.switch_times[0]);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..multi.starts.max(1) {
        let x0 = seed(base, n_switches, start);
        let r = simplex::minimize(objective, &x0, &multi.simplex);
        if best.as_ref().is_none_or(|(f, _)| r.f < *f) {
            best = Some((r.f, r.x));
        }
    }
    let (_, x) = best.expect("at least one start");
    let mut times = times_from(&x);
    let mut eval = evaluate_profile(&times, u_max, v0, params, options)?;
    if let Some(polished) = polish_last_switch(&times, u_max, v0, params, options)? {
        times = polished.0;
        eval = polished.1;
    }
    let sol = solution(normalize(&times), u_max, &eval, params);
    // a single switch is the n-switch profile with its extra switches coinciding
    match single {
        Some(s) if s.feasible && (n_switches == 1 || !sol.feasible || s.depth < sol.depth) => Ok(s),
        _ => Ok(sol),
    }
}

fn seed(base: f64, n: usize, start: usize) -> Vec<f64> {
    let spreads = [0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8];
    let spread = spreads[start % spreads.len()];
    let first = match start % 3 {
        0 => base,
        1 => base * 0.9,
        _ => base * 1.1,
    };
    let mut times = vec![first];
    for k in 1..n {
        times.push(first + spread * k as f64);
    }
    coords_from(&times)
}

/// Moves the last switch so the residual lands on zero from the feasible side.
fn polish_last_switch(
    times: &[f64],
    u_max: f64,
    v0: f64,
    params: &Params,
    options: &SimOptions,
) -> Result<Option<(Vec<f64>, ProfileEval)>> {
    let Some(&last) = times.last() else {
        return Ok(None);
    };
    let prev = if times.len() > 1 { times[times.len() - 2] } else { 0.0 };
    let with_last = |t: f64| {
        let mut v = times.to_vec();
        *v.last_mut().expect("non-empty") = t;
        v
    };
    let eval = |t: f64| evaluate_profile(&with_last(t), u_max, v0, params, options);
    let here = eval(last)?;
    // an even number of switches ends pushing, where later switches lower the residual
    let feasible_later = times.len() % 2 == 1;
    let (mut bad, mut good, mut good_eval) = if here.is_feasible() {
        let mut step = 1e-3;
        let mut good = last;
        let mut good_eval = here;
        let mut bad = None;
        for _ in 0..40 {
            let t = if feasible_later { good - step } else { good + step };
            let past_rest = good_eval.rest_state.is_some_and(|r| t >= r.tau);
            if t <= prev || past_rest {
                break;
            }
            let e = eval(t)?;
            if e.is_feasible() {
                good = t;
                good_eval = e;
                step *= 2.0;
            } else {
                bad = Some(t);
                break;
            }
        }
        match bad {
            Some(b) => (b, good, good_eval),
            None => return Ok(Some((with_last(good), good_eval))),
        }
    } else {
        let mut step = 1e-3;
        let mut bad = last;
        let mut found = None;
        for _ in 0..40 {
            let t = if feasible_later { bad + step } else { bad - step };
            if t <= prev {
                break;
            }
            let e = eval(t)?;
            if e.is_feasible() {
                found = Some((t, e));
                break;
            }
            bad = t;
            step *= 2.0;
        }
        match found {
            Some((g, e)) => (bad, g, e),
            None => return Ok(None),
        }
    };
    while (good - bad).abs() > options.event_tol && good_eval.residual.abs() > 0.01 * RESIDUAL_TOL {
        let mid = 0.5 * (good + bad);
        if mid == good || mid == bad {
            break;
        }
        let e = eval(mid)?;
        if e.is_feasible() && e.residual <= 0.0 {
            good = mid;
            good_eval = e;
        } else {
            bad = mid;
        }
    }
    Ok(Some((with_last(good), good_eval)))
}
