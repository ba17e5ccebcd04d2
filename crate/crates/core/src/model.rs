//! Dimensionless two-mass robot on a unidirectional ground spring.
//!
//! Lengths are in units of `x_s = m_t g / k_g`, time in `tau_s = sqrt(m_t / k_g)`
//! and force in `u_s = m_t g`. Positions are measured from the undisturbed
//! ground surface, so an intruding foot has `x_f < 0` and the reported
//! penetration depth is `-x_f`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Velocity threshold below which the foot counts as stopped.
pub const VEL_TOL: f64 = 1e-9;
/// Hysteresis on the static support cone.
pub const YIELD_EPS: f64 = 1e-9;
/// Default gravitational acceleration in m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Dimensionless model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Body mass over foot mass.
    pub r_m: f64,
    /// Actuator stroke limit.
    pub s: f64,
    /// Actuator force bound; `f64::INFINITY` when unbounded.
    pub u_max: f64,
    /// Rest length of the virtual spring.
    pub l0: f64,
}

impl Params {
    /// Unbounded force with the spring rest length at mid-stroke.
    pub fn new(r_m: f64, s: f64) -> Result<Self> {
        let p = Self {
            r_m,
            s,
            u_max: f64::INFINITY,
            l0: s / 2.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_u_max(mut self, u_max: f64) -> Result<Self> {
        self.u_max = u_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_l0(mut self, l0: f64) -> Result<Self> {
        self.l0 = l0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_m.is_finite() && self.r_m > 0.0) {
            return Err(invalid("r_m", format!("must be positive, got {}", self.r_m)));
        }
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(invalid("s", format!("must be positive, got {}", self.s)));
        }
        if self.u_max.is_nan() || self.u_max <= 0.0 {
            return Err(invalid("u_max", format!("must be positive, got {}", self.u_max)));
        }
        if !self.l0.is_finite() {
            return Err(invalid("l0", "must be finite"));
        }
        Ok(())
    }

    pub fn has_force_limit(&self) -> bool {
        self.u_max.is_finite()
    }

    /// Fraction of the total mass carried by the body, `r_m / (1 + r_m)`.
    pub fn body_fraction(&self) -> f64 {
        self.r_m / (1.0 + self.r_m)
    }

    /// Fraction of the total mass carried by the foot, `1 / (1 + r_m)`.
    pub fn foot_fraction(&self) -> f64 {
        1.0 / (1.0 + self.r_m)
    }
}

/// Physical parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub m_b: f64,
    pub m_f: f64,
    pub k_g: f64,
    pub g: f64,
    /// Actuator stroke in metres.
    pub stroke: f64,
    /// Actuator force limit in newtons; `f64::INFINITY` when unbounded.
    pub u_max: f64,
    /// Impact velocity in m/s (non-positive).
    pub v0: f64,
}

/// Unit length, time and force of the dimensionless system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub x_s: f64,
    pub tau_s: f64,
    pub u_s: f64,
}

impl Scales {
    pub fn from_masses(m_t: f64, k_g: f64, g: f64) -> Self {
        Self {
            x_s: m_t * g / k_g,
            tau_s: (m_t / k_g).sqrt(),
            u_s: m_t * g,
        }
    }

    /// Unit velocity `x_s / tau_s`.
    pub fn v_s(&self) -> f64 {
        self.x_s / self.tau_s
    }

    /// Unit energy `u_s * x_s`.
    pub fn e_s(&self) -> f64 {
        self.u_s * self.x_s
    }
}

/// Converts physical parameters to the dimensionless model.
///
/// Returns the dimensionless parameters, the dimensionless impact velocity and
/// the unit scales used.
pub fn to_dimensionless(p: &PhysicalParams) -> Result<(Params, f64, Scales)> {
    for (name, v) in [
        ("m_b", p.m_b),
        ("m_f", p.m_f),
        ("k_g", p.k_g),
        ("g", p.g),
        ("stroke", p.stroke),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    if p.u_max.is_nan() || p.u_max <= 0.0 {
        return Err(invalid("u_max", format!("must be positive, got {}", p.u_max)));
    }
    if !(p.v0.is_finite() && p.v0 <= 0.0) {
        return Err(invalid("v0", format!("must be non-positive, got {}", p.v0)));
    }
    let m_t = p.m_b + p.m_f;
    let scales = Scales::from_masses(m_t, p.k_g, p.g);
    let params = Params::new(p.m_b / p.m_f, p.stroke / scales.x_s)?.with_u_max(p.u_max / scales.u_s)?;
    let v0 = p.v0 * scales.tau_s / scales.x_s;
    Ok((params, v0, scales))
}

/// Inverse of [`to_dimensionless`].
pub fn from_dimensionless(params: &Params, v0: f64, scales: &Scales) -> PhysicalParams {
    let g = scales.x_s / (scales.tau_s * scales.tau_s);
    let m_t = scales.u_s / g;
    let k_g = scales.u_s / scales.x_s;
    PhysicalParams {
        m_b: m_t * params.body_fraction(),
        m_f: m_t * params.foot_fraction(),
        k_g,
        g,
        stroke: params.s * scales.x_s,
        u_max: params.u_max * scales.u_s,
        v0: v0 * scales.v_s(),
    }
}

/// Continuous state plus work accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x_b: f64,
    pub v_b: f64,
    pub x_f: f64,
    pub v_f: f64,
    /// Work done by the actuator on the masses, `∫ u (v_b - v_f) dτ`.
    pub w_act: f64,
    /// Work done by the masses on the ground, `∫ γ (-v_f) dτ`.
    pub w_gnd: f64,
    pub tau: f64,
}

impl State {
    /// Foot at the surface, leg at its rest length, both masses moving at `v0`.
    pub fn impact(params: &Params, v0: f64) -> Self {
        Self {
            x_b: params.l0,
            v_b: v0,
            x_f: 0.0,
            v_f: v0,
            ..Self::default()
        }
    }

    /// Body-foot separation.
    pub fn gap(&self) -> f64 {
        self.x_b - self.x_f
    }

    pub fn depth(&self) -> f64 {
        -self.x_f
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.tau.is_finite()
    }

    pub(crate) fn to_array(self) -> [f64; 6] {
        [self.x_b, self.v_b, self.x_f, self.v_f, self.w_act, self.w_gnd]
    }

    pub(crate) fn from_array(y: &[f64; 6], tau: f64) -> Self {
        Self {
            x_b: y[0],
            v_b: y[1],
            x_f: y[2],
            v_f: y[3],
            w_act: y[4],
            w_gnd: y[5],
            tau,
        }
    }
}

/// Discrete mode of the hybrid system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Flight,
    Yielding,
    Static,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Flight => "flight",
            Phase::Yielding => "yielding",
            Phase::Static => "static",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Leg force policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    /// Virtual spring-damper between body and foot.
    Impedance { k_p: f64, k_d: f64, saturate: bool },
    /// `+u_max` until the first switch, alternating sign at every switch after.
    BangBang { u_max: f64, switch_times: Vec<f64> },
    ConstantForce(f64),
    /// Body and foot locked at their initial separation.
    Rigid,
}

impl Controller {
    pub fn impedance(k_p: f64, k_d: f64) -> Self {
        Controller::Impedance {
            k_p,
            k_d,
            saturate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Controller::Impedance { k_p, k_d, .. } => {
                if !(k_p.is_finite() && *k_p >= 0.0) {
                    return Err(invalid("k_p", format!("must be non-negative, got {k_p}")));
                }
                if !(k_d.is_finite() && *k_d >= 0.0) {
                    return Err(invalid("k_d", format!("must be non-negative, got {k_d}")));
                }
            }
            Controller::BangBang { u_max, switch_times } => {
                if !(u_max.is_finite() && *u_max > 0.0) {
                    return Err(invalid("u_max", format!("bang-bang needs a finite positive bound, got {u_max}")));
                }
                if switch_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
                    return Err(invalid("switch_times", "must be finite and non-negative"));
                }
                if switch_times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("switch_times", "must be strictly ascending"));
                }
            }
            Controller::ConstantForce(u) => {
                if !u.is_finite() {
                    return Err(invalid("u", "must be finite"));
                }
            }
            Controller::Rigid => {}
        }
        Ok(())
    }

    pub fn is_rigid(&self) -> bool {
        matches!(self, Controller::Rigid)
    }

    /// Times at which the control law is discontinuous.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Controller::BangBang { switch_times, .. } => switch_times,
            _ => &[],
        }
    }
}

/// Ground reaction force for the given phase.
///
/// `required` is the force that would hold the foot still; it only matters in
/// the static phase, where the ground supplies whatever is needed up to its
/// yield capacity `-x_f`.
pub fn grf(x_f: f64, _v_f: f64, phase: Phase, required: f64) -> f64 {
    match phase {
        Phase::Flight => 0.0,
        Phase::Yielding => (-x_f).max(0.0),
        Phase::Static => required.clamp(0.0, (-x_f).max(0.0)),
    }
}

/// Actuator force commanded by `controller`. `None` for the rigid leg, whose
/// internal force is implied by the lumped dynamics.
pub fn control_force(controller: &Controller, state: &State, params: &Params) -> Option<f64> {
    match controller {
        Controller::Impedance { k_p, k_d, saturate } => {
            let u = -k_p * (state.gap() - params.l0) - k_d * (state.v_b - state.v_f);
            if *saturate && params.has_force_limit() {
                Some(u.clamp(-params.u_max, params.u_max))
            } else {
                Some(u)
            }
        }
        Controller::BangBang { u_max, switch_times } => {
            let flips = switch_times.partition_point(|&t| t <= state.tau);
            Some(if flips % 2 == 0 { *u_max } else { -*u_max })
        }
        Controller::ConstantForce(u) => Some(*u),
        Controller::Rigid => None,
    }
}

/// Ground force needed to keep the foot stationary under actuator force `u`.
pub fn required_support(u: f64, r_m: f64) -> f64 {
    u + 1.0 / (1.0 + r_m)
}

/// Time derivative of `[x_b, v_b, x_f, v_f, w_act, w_gnd]`.
pub fn dynamics(state: &State, u: f64, phase: Phase, r_m: f64) -> [f64; 6] {
    let mass_ratio = 1.0 + r_m;
    let a_b = -1.0 + mass_ratio / r_m * u;
    let gamma = grf(state.x_f, state.v_f, phase, required_support(u, r_m));
    let (v_f, a_f) = match phase {
        Phase::Static => (0.0, 0.0),
        _ => (state.v_f, -1.0 + mass_ratio * (gamma - u)),
    };
    [
        state.v_b,
        a_b,
        v_f,
        a_f,
        u * (state.v_b - v_f),
        -gamma * v_f,
    ]
}

/// Lumped one-mass dynamics of the locked leg. Body and foot share velocity
/// and acceleration; the actuator does no work.
pub fn rigid_dynamics(state: &State, phase: Phase) -> [f64; 6] {
    let (v, a, gamma) = match phase {
        Phase::Static => (0.0, 0.0, 1.0),
        Phase::Yielding => (state.v_f, -1.0 - state.x_f, -state.x_f),
        Phase::Flight => (state.v_f, -1.0, 0.0),
    };
    [v, a, v, a, 0.0, -gamma * v]
}

/// Internal leg force of the locked leg for a given ground force.
pub fn rigid_internal_force(gamma: f64, r_m: f64) -> f64 {
    r_m / (1.0 + r_m) * gamma
}

/// Phase the system enters at an event point.
///
/// The foot yields while moving down below the surface, flies while moving up
/// or above the surface, and otherwise stays put as long as the support it
/// needs lies inside `[0, -x_f]` (widened by [`YIELD_EPS`]).
pub fn phase_transition(state: &State, u: f64, _phase: Phase, r_m: f64) -> Phase {
    if state.v_f > VEL_TOL {
        return Phase::Flight;
    }
    if state.v_f < -VEL_TOL {
        return if state.x_f <= 0.0 {
            Phase::Yielding
        } else {
            Phase::Flight
        };
    }
    if state.x_f > 0.0 {
        return Phase::Flight;
    }
    let needed = required_support(u, r_m);
    if needed > -state.x_f + YIELD_EPS {
        Phase::Yielding
    } else if needed < -YIELD_EPS {
        Phase::Flight
    } else {
        Phase::Static
    }
}

/// Constant force that stops the body within the remaining stroke.
pub fn body_arrest_force(x_b: f64, v_b: f64, x_f: f64, r_m: f64) -> Result<f64> {
    let gap = x_b - x_f;
    if !(gap > 0.0) {
        return Err(Error::DegenerateGap { gap });
    }
    Ok(r_m / (1.0 + r_m) * (1.0 + v_b * v_b / (2.0 * gap)))
}

/// Support the ground still owes once the foot has stopped: non-positive when
/// the depth reached can carry the body-arresting force plus the foot weight.
pub fn terminal_residual(state: &State, r_m: f64) -> Result<f64> {
    let u_b = body_arrest_force(state.x_b, state.v_b, state.x_f, r_m)?;
    Ok(state.x_f + 1.0 / (1.0 + r_m) + u_b)
}

/// Peak penetration depth of a rigid impactor.
pub fn rigid_depth(v0: f64) -> f64 {
    1.0 + (1.0 + v0 * v0).sqrt()
}
