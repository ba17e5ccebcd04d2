//! Event-driven integration of a single impact.
//!
//! Within a phase the state is advanced by an adaptive Dormand-Prince 5(4)
//! stepper. Guard functions are sampled on the dense output of each accepted
//! step; the first sign change is bisected down to `event_tol` and the step is
//! truncated there before the phase switches.

pub mod rk45;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{
    control_force, dynamics, grf, phase_transition, required_support, rigid_dynamics, rigid_internal_force,
    Controller, Params, Phase, State, YIELD_EPS,
};
use rk45::{Dense, Vector};

pub use trajectory::{count_steps, count_steps_with_tol, Event, EventKind, Sample, Trajectory};

/// Guard sub-samples per accepted step.
const GUARD_SAMPLES: usize = 4;
const H_MAX: f64 = 0.1;
const MAX_STEPS: usize = 2_000_000;

/// When a run ends, besides stroke violations and the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum StopRule {
    /// Run until the robot is at rest.
    #[default]
    Settle,
    /// Stop the first time the foot stops intruding.
    FootRest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Width of the time bracket around each located event.
    pub event_tol: f64,
    pub tau_max: f64,
    pub settle_vel: f64,
    /// Trajectory sampling interval; `0` records event points only.
    pub record_dt: f64,
    pub stop: StopRule,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            event_tol: 1e-12,
            tau_max: 50.0,
            settle_vel: 1e-6,
            record_dt: 0.01,
            stop: StopRule::Settle,
        }
    }
}

impl SimOptions {
    /// Defaults without periodic samples, as used by the optimizers.
    pub fn events_only() -> Self {
        Self {
            record_dt: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("event_tol", self.event_tol),
            ("tau_max", self.tau_max),
            ("settle_vel", self.settle_vel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.record_dt.is_finite() && self.record_dt >= 0.0) {
            return Err(invalid("record_dt", "must be non-negative"));
        }
        Ok(())
    }

    /// Same options with integration and event tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            event_tol: self.event_tol / factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrokeSide {
    /// Body reached the foot, `x_b - x_f <= 0`.
    Compression,
    /// Leg extended past the stroke, `x_b - x_f >= s`.
    Extension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeViolation {
    pub tau: f64,
    pub side: StrokeSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Settled,
    StrokeViolation,
    Horizon,
    FootRest,
}

/// Summary of one simulated impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Maximum penetration, `-min x_f`.
    pub depth: f64,
    /// Time of the last entry into the static phase, if the foot is still static.
    pub rest_time: Option<f64>,
    /// State at `rest_time`.
    pub rest_state: Option<State>,
    /// Number of separate yielding episodes.
    pub steps: u32,
    pub stroke_violation: Option<StrokeViolation>,
    pub settled: bool,
    pub termination: Termination,
    pub initial_state: State,
    pub final_state: State,
    pub final_phase: Phase,
    /// Energy absorbed by the actuator over the whole run, `-w_act`.
    pub e_act: f64,
    /// Energy dissipated in the ground over the whole run.
    pub e_gnd: f64,
    /// Largest actuator force magnitude.
    pub u_peak: f64,
    pub min_gap: f64,
    pub max_gap: f64,
}

impl SimOutcome {
    /// Neither violated the stroke nor failed to come to rest.
    pub fn is_feasible(&self) -> bool {
        self.stroke_violation.is_none() && self.settled
    }
}

/// Simulates one impact from `x = [l0, v0, 0, v0]`.
pub fn simulate(
    controller: &Controller,
    params: &Params,
    v0: f64,
    options: &SimOptions,
) -> Result<(SimOutcome, Trajectory)> {
    run(controller, params, v0, options, true)
}

/// Like [`simulate`] but keeps no trajectory.
pub fn simulate_outcome(controller: &Controller, params: &Params, v0: f64, options: &SimOptions) -> Result<SimOutcome> {
    run(controller, params, v0, options, false).map(|(o, _)| o)
}

fn run(
    controller: &Controller,
    params: &Params,
    v0: f64,
    options: &SimOptions,
    record: bool,
) -> Result<(SimOutcome, Trajectory)> {
    params.validate()?;
    controller.validate()?;
    options.validate()?;
    if !(v0.is_finite() && v0 <= 0.0) {
        return Err(invalid("v0", format!("must be non-positive, got {v0}")));
    }
    let mut sim = Simulator::new(controller, params, options, State::impact(params, v0), record);
    sim.run()?;
    Ok(sim.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Guard {
    Compression,
    Extension,
    FootStops,
    Yields,
    Lifts,
    Lands,
}

struct Simulator<'a> {
    controller: &'a Controller,
    params: &'a Params,
    opts: &'a SimOptions,
    rigid: bool,

    phase: Phase,
    y: Vector,
    tau: f64,
    /// Time from which the control law is evaluated (piecewise-constant laws).
    seg_tau: f64,
    k1: Option<Vector>,
    h: f64,

    initial: State,
    min_x_f: f64,
    min_gap: f64,
    max_gap: f64,
    u_peak: f64,
    steps: u32,
    last_yield_exit: Option<f64>,
    rest: Option<State>,
    settled: bool,
    violation: Option<StrokeViolation>,
    termination: Option<Termination>,

    traj: Option<Trajectory>,
    next_record: f64,
}

impl<'a> Simulator<'a> {
    fn new(controller: &'a Controller, params: &'a Params, opts: &'a SimOptions, initial: State, record: bool) -> Self {
        let mut sim = Self {
            controller,
            params,
            opts,
            rigid: controller.is_rigid(),
            phase: Phase::Yielding,
            y: initial.to_array(),
            tau: initial.tau,
            seg_tau: initial.tau,
            k1: None,
            h: 0.0,
            initial,
            min_x_f: initial.x_f,
            min_gap: initial.gap(),
            max_gap: initial.gap(),
            u_peak: 0.0,
            steps: 0,
            last_yield_exit: None,
            rest: None,
            settled: false,
            violation: None,
            termination: None,
            traj: record.then(|| Trajectory::new(opts.event_tol)),
            next_record: initial.tau,
        };
        let u = sim.hold_force(&initial);
        sim.phase = phase_transition(&initial, u, Phase::Yielding, params.r_m);
        match sim.phase {
            Phase::Yielding => sim.steps = 1,
            Phase::Static => sim.rest = Some(initial),
            Phase::Flight => {}
        }
        sim.track(&initial);
        sim.record_point(&initial);
        sim
    }

    fn state(&self) -> State {
        State::from_array(&self.y, self.tau)
    }

    /// Actuator force in `phase` at `s`.
    fn force(&self, s: &State, phase: Phase) -> f64 {
        let at = State { tau: self.seg_tau, ..*s };
        match control_force(self.controller, &at, self.params) {
            Some(u) => u,
            None => {
                let gamma = match phase {
                    Phase::Static => 1.0,
                    Phase::Yielding => -s.x_f,
                    Phase::Flight => 0.0,
                };
                rigid_internal_force(gamma, self.params.r_m)
            }
        }
    }

    /// Actuator force assuming the foot is held still.
    fn hold_force(&self, s: &State) -> f64 {
        self.force(s, Phase::Static)
    }

    fn rhs(&self, phase: Phase, t: f64, y: &Vector) -> Vector {
        let s = State::from_array(y, t);
        if self.rigid {
            rigid_dynamics(&s, phase)
        } else {
            dynamics(&s, self.force(&s, phase), phase, self.params.r_m)
        }
    }

    fn guards(&self) -> &'static [Guard] {
        use Guard::*;
        match (self.phase, self.rigid) {
            (Phase::Yielding, true) => &[FootStops],
            (Phase::Yielding, false) => &[Compression, Extension, FootStops],
            (Phase::Static, true) => &[],
            (Phase::Static, false) => &[Compression, Extension, Yields, Lifts],
            (Phase::Flight, true) => &[Lands],
            (Phase::Flight, false) => &[Compression, Extension, Lands],
        }
    }

    /// Guard value; the guard fires when it goes from negative to non-negative.
    fn guard(&self, g: Guard, s: &State) -> f64 {
        match g {
            Guard::Compression => -s.gap(),
            Guard::Extension => s.gap() - self.params.s,
            Guard::FootStops => s.v_f,
            Guard::Yields => required_support(self.hold_force(s), self.params.r_m) + s.x_f - YIELD_EPS,
            Guard::Lifts => -(required_support(self.hold_force(s), self.params.r_m) + YIELD_EPS),
            Guard::Lands => (-s.v_f).min(-s.x_f),
        }
    }

    fn enter(&mut self, phase: Phase, tau: f64) {
        let from = self.phase;
        self.k1 = None;
        if from == phase {
            return;
        }
        if phase == Phase::Yielding {
            let merged = self
                .last_yield_exit
                .is_some_and(|t| tau - t < 10.0 * self.opts.event_tol);
            if !merged {
                self.steps += 1;
            }
        }
        if from == Phase::Yielding {
            self.last_yield_exit = Some(tau);
        }
        self.rest = (phase == Phase::Static).then(|| self.state_with_tau(tau));
        if let Some(t) = self.traj.as_mut() {
            t.events.push(Event {
                tau,
                kind: EventKind::PhaseChange { from, to: phase },
            });
        }
        self.phase = phase;
    }

    fn state_with_tau(&self, tau: f64) -> State {
        State::from_array(&self.y, tau)
    }

    fn track(&mut self, s: &State) {
        self.min_x_f = self.min_x_f.min(s.x_f);
        let gap = s.gap();
        self.min_gap = self.min_gap.min(gap);
        self.max_gap = self.max_gap.max(gap);
        self.u_peak = self.u_peak.max(self.force(s, self.phase).abs());
    }

    fn sample(&self, s: &State) -> Sample {
        let u = self.force(s, self.phase);
        let gamma = grf(s.x_f, s.v_f, self.phase, required_support(u, self.params.r_m));
        Sample {
            tau: s.tau,
            state: *s,
            phase: self.phase,
            u,
            gamma,
        }
    }

    fn record_point(&mut self, s: &State) {
        if self.traj.is_none() {
            return;
        }
        let sample = self.sample(s);
        if let Some(t) = self.traj.as_mut() {
            t.push(sample);
        }
    }

    fn record_span(&mut self, dense: &Dense, until: f64) {
        if self.traj.is_none() || self.opts.record_dt <= 0.0 {
            return;
        }
        while self.next_record <= until {
            let t = self.next_record;
            if t > dense.t0 {
                let s = State::from_array(&dense.eval(t), t);
                self.record_point(&s);
            }
            self.next_record += self.opts.record_dt;
        }
    }

    fn next_breakpoint(&self) -> f64 {
        self.controller
            .breakpoints()
            .iter()
            .copied()
            .find(|&t| t > self.tau)
            .unwrap_or(f64::INFINITY)
    }

    fn finish_with(&mut self, termination: Termination, kind: EventKind) {
        self.termination = Some(termination);
        let s = self.state();
        if let Some(t) = self.traj.as_mut() {
            t.events.push(Event { tau: s.tau, kind });
        }
        self.record_point(&s);
    }

    fn run(&mut self) -> Result<()> {
        let mut n_steps = 0usize;
        while self.termination.is_none() {
            if self.tau >= self.opts.tau_max {
                self.finish_with(Termination::Horizon, EventKind::Horizon);
                break;
            }
            n_steps += 1;
            if n_steps > MAX_STEPS {
                return Err(Error::StepFailure {
                    tau: self.tau,
                    reason: "step limit exceeded".into(),
                });
            }
            self.advance()?;
        }
        Ok(())
    }

    /// One accepted step, possibly truncated at an event or breakpoint.
    fn advance(&mut self) -> Result<()> {
        let phase = self.phase;
        let f = |t: f64, y: &Vector| self.rhs(phase, t, y);
        let k1 = match self.k1 {
            Some(k) => k,
            None => f(self.tau, &self.y),
        };
        let t_stop = self.next_breakpoint().min(self.opts.tau_max);
        let room = t_stop - self.tau;
        let mut h_next = if self.h > 0.0 {
            self.h
        } else {
            rk45::initial_step(&f, self.tau, &self.y, &k1, self.opts.rel_tol, self.opts.abs_tol, H_MAX)
        };
        let h_min = 1e-14 * self.tau.abs().max(1.0);
        let (attempt, h) = loop {
            let h = h_next.min(H_MAX).min(room);
            let a = rk45::attempt(&f, self.tau, &self.y, &k1, h, self.opts.rel_tol, self.opts.abs_tol);
            let ok = a.err <= 1.0 && a.y1.iter().all(|v| v.is_finite());
            let factor = if a.err.is_finite() { rk45::step_factor(a.err) } else { 0.2 };
            if ok {
                h_next = if h < h_next { h_next.max(h * factor) } else { h * factor };
                break (a, h);
            }
            h_next = h * factor.min(0.5);
            if h_next < h_min {
                return Err(Error::StepFailure {
                    tau: self.tau,
                    reason: format!("step size {h_next} below minimum"),
                });
            }
        };
        self.h = h_next;
        let dense = attempt.dense;

        if let Some((theta, guard)) = self.locate_event(&dense) {
            let t_e = if theta >= 1.0 { dense.t1() } else { dense.t0 + theta * h };
            self.record_span(&dense, t_e - 0.5 * self.opts.event_tol);
            self.y = if theta >= 1.0 { attempt.y1 } else { dense.eval_theta(theta) };
            self.tau = t_e;
            if !self.y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { tau: self.tau });
            }
            let s = self.state();
            self.track(&s);
            self.on_event(guard);
            return Ok(());
        }

        self.record_span(&dense, dense.t1());
        let start = self.state();
        self.y = attempt.y1;
        self.tau = dense.t1();
        self.k1 = Some(attempt.k7);
        if !self.y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { tau: self.tau });
        }
        if h >= room && self.tau >= t_stop && t_stop < self.opts.tau_max {
            // crossed a control switch; the law changes from here on
            self.seg_tau = self.tau;
            self.k1 = None;
            if let Some(t) = self.traj.as_mut() {
                t.events.push(Event {
                    tau: self.tau,
                    kind: EventKind::ControlSwitch,
                });
            }
            let s = self.state();
            self.record_point(&s);
        }
        let end = self.state();
        self.track(&end);
        if self.phase == Phase::Static && self.opts.stop == StopRule::Settle && self.is_settled(&start, &end) {
            self.settled = true;
            self.finish_with(Termination::Settled, EventKind::Settled);
        }
        Ok(())
    }

    /// Earliest guard crossing on this step as `(theta, guard)`.
    fn locate_event(&mut self, dense: &Dense) -> Option<(f64, Guard)> {
        let guards = self.guards();
        if guards.is_empty() {
            return None;
        }
        let at = |theta: f64| State::from_array(&dense.eval_theta(theta), dense.t0 + theta * dense.h);
        let mut prev: Vec<f64> = guards.iter().map(|&g| self.guard(g, &at(0.0))).collect();
        for k in 1..=GUARD_SAMPLES {
            let th = k as f64 / GUARD_SAMPLES as f64;
            let s = at(th);
            if k < GUARD_SAMPLES {
                self.track(&s);
            }
            let cur: Vec<f64> = guards.iter().map(|&g| self.guard(g, &s)).collect();
            let mut best: Option<(f64, Guard)> = None;
            for (i, &g) in guards.iter().enumerate() {
                if prev[i] < 0.0 && cur[i] >= 0.0 {
                    let theta = self.bisect(dense, g, th - 1.0 / GUARD_SAMPLES as f64, th);
                    if best.is_none_or(|(b, _)| theta < b) {
                        best = Some((theta, g));
                    }
                }
            }
            if best.is_some() {
                return best;
            }
            prev = cur;
        }
        None
    }

    fn bisect(&self, dense: &Dense, g: Guard, mut lo: f64, mut hi: f64) -> f64 {
        let tol = self.opts.event_tol / dense.h;
        let value = |theta: f64| self.guard(g, &State::from_array(&dense.eval_theta(theta), dense.t0 + theta * dense.h));
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if value(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    fn on_event(&mut self, guard: Guard) {
        let tau = self.tau;
        match guard {
            Guard::Compression | Guard::Extension => {
                let side = if guard == Guard::Compression {
                    StrokeSide::Compression
                } else {
                    StrokeSide::Extension
                };
                self.violation = Some(StrokeViolation { tau, side });
                self.finish_with(Termination::StrokeViolation, EventKind::StrokeViolation(side));
            }
            Guard::FootStops => {
                self.y[3] = 0.0;
                if self.rigid {
                    self.y[1] = 0.0;
                }
                if self.opts.stop == StopRule::FootRest {
                    self.finish_with(Termination::FootRest, EventKind::FootRest);
                    return;
                }
                let s = self.state();
                let next = phase_transition(&s, self.hold_force(&s), self.phase, self.params.r_m);
                self.enter(next, tau);
                self.record_point(&s);
            }
            Guard::Yields => {
                self.enter(Phase::Yielding, tau);
                let s = self.state();
                self.record_point(&s);
            }
            Guard::Lifts => {
                self.enter(Phase::Flight, tau);
                let s = self.state();
                self.record_point(&s);
            }
            Guard::Lands => {
                let s = self.state();
                let next = if s.v_f < -crate::model::VEL_TOL {
                    Phase::Yielding
                } else {
                    self.y[3] = 0.0;
                    let s = self.state();
                    phase_transition(&s, self.hold_force(&s), self.phase, self.params.r_m)
                };
                self.enter(next, tau);
                let s = self.state();
                self.record_point(&s);
            }
        }
    }

    fn is_settled(&self, start: &State, end: &State) -> bool {
        let balance = self.params.body_fraction();
        let quiet = |s: &State| {
            s.v_b.abs() < self.opts.settle_vel && (self.hold_force(s) - balance).abs() < self.opts.settle_vel
        };
        (quiet(start) && quiet(end)) || self.rest_is_certain(end)
    }

    /// With the foot held, an impedance leg is a damped linear oscillator whose
    /// energy never grows. If every state reachable at that energy keeps the
    /// foot inside its support cone and the leg inside its stroke, the foot
    /// never moves again.
    fn rest_is_certain(&self, s: &State) -> bool {
        let Controller::Impedance { k_p, k_d, saturate } = *self.controller else {
            return false;
        };
        if k_p <= 0.0 {
            return false;
        }
        let p = self.params;
        let c = (1.0 + p.r_m) / p.r_m;
        let gap_eq = p.l0 - 1.0 / (c * k_p);
        let dev = s.gap() - gap_eq;
        let energy = 0.5 * s.v_b * s.v_b + 0.5 * c * k_p * dev * dev;
        let amp = (2.0 * energy / (c * k_p)).sqrt();
        let du = k_p * amp + k_d * (2.0 * energy).sqrt();
        let u_eq = 1.0 / c;
        let support_hi = required_support(u_eq + du, p.r_m);
        let support_lo = required_support(u_eq - du, p.r_m);
        let in_cone = support_hi <= -s.x_f && support_lo >= 0.0;
        let in_stroke = gap_eq - amp > 0.0 && gap_eq + amp < p.s;
        let unsaturated = !(saturate && p.has_force_limit()) || u_eq + du < p.u_max;
        in_cone && in_stroke && unsaturated
    }

    fn finish(self) -> (SimOutcome, Trajectory) {
        let final_state = self.state();
        let outcome = SimOutcome {
            depth: (-self.min_x_f).max(0.0),
            rest_time: self.rest.map(|s| s.tau),
            rest_state: self.rest,
            steps: self.steps,
            stroke_violation: self.violation,
            settled: self.settled,
            termination: self.termination.unwrap_or(Termination::Horizon),
            initial_state: self.initial,
            final_state,
            final_phase: self.phase,
            e_act: -final_state.w_act,
            e_gnd: final_state.w_gnd,
            u_peak: self.u_peak,
            min_gap: self.min_gap,
            max_gap: self.max_gap,
        };
        let traj = self.traj.unwrap_or_else(|| Trajectory::new(self.opts.event_tol));
        (outcome, traj)
    }
}
