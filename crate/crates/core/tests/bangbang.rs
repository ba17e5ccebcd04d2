use softland::model::terminal_residual;
use softland::optimize::bangbang::{evaluate_profile, RESIDUAL_TOL};
use softland::optimize::{solve_bang_bang, solve_multi_switch, MultiSwitchOptions};
use softland::sim::{StopRule, Termination};
use softland::{simulate_outcome, Controller, Params, SimOptions};

fn limited() -> Params {
    Params::new(5.0, 20.0).unwrap().with_u_max(8.2).unwrap()
}

fn opts() -> SimOptions {
    SimOptions::events_only()
}

/// Latest useful switch: where full push stops the foot or leaves the stroke.
fn full_push_end(v0: f64, p: &Params) -> f64 {
    let o = SimOptions {
        stop: StopRule::FootRest,
        ..opts()
    };
    let c = Controller::BangBang {
        u_max: p.u_max,
        switch_times: vec![],
    };
    let out = simulate_outcome(&c, p, v0, &o).unwrap();
    match out.termination {
        Termination::FootRest => out.final_state.tau,
        _ => out.stroke_violation.unwrap().tau,
    }
}

fn scan(v0: f64, p: &Params, lo: f64, hi: f64, n: usize) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=n {
        let t = lo + (hi - lo) * k as f64 / n as f64;
        let e = evaluate_profile(&[t], p.u_max, v0, p, &opts()).unwrap();
        if e.is_feasible() && best.is_none_or(|(d, _)| e.depth < d) {
            best = Some((e.depth, t));
        }
    }
    best
}

#[test]
fn root_agrees_with_dense_scan() {
    let p = limited();
    let v0 = -3.0;
    let sol = solve_bang_bang(v0, &p, &opts()).unwrap();
    let end = full_push_end(v0, &p);
    let n = 10_000;
    let (coarse, t) = scan(v0, &p, 0.0, end, n).unwrap();
    // no sampled profile beats the root
    assert!(coarse >= sol.depth - 1e-9, "{coarse} < {}", sol.depth);
    // the scan resolves the minimum once it zooms into the winning cell
    let h = end / n as f64;
    let (fine, _) = scan(v0, &p, (t - h).max(0.0), t, n).unwrap();
    assert!((fine - sol.depth).abs() < 1e-4, "scan {fine} vs root {}", sol.depth);
}

#[test]
fn stomp_then_pull_at_moderate_speed() {
    let p = limited();
    let sol = solve_bang_bang(-3.0, &p, &opts()).unwrap();
    assert!(sol.feasible);
    assert_eq!(sol.switch_times.len(), 1);
    let rest = sol.rest_state.unwrap();
    assert!(sol.switch_times[0] < rest.tau && rest.tau < 1.0);
    assert!(rest.v_b < 0.0);
    assert!(sol.arrest_force.unwrap() > 0.0);
}

#[test]
fn residual_is_at_root() {
    let p = limited();
    for v0 in [-0.5, -3.0, -10.0] {
        let sol = solve_bang_bang(v0, &p, &opts()).unwrap();
        assert!(sol.residual.abs() <= RESIDUAL_TOL, "v0 {v0}: {}", sol.residual);
        let rest = sol.rest_state.unwrap();
        assert_eq!(terminal_residual(&rest, p.r_m).unwrap(), sol.residual);

        let t = sol.switch_times[0];
        let early = evaluate_profile(&[t - 1e-3], p.u_max, v0, &p, &opts()).unwrap();
        let late = evaluate_profile(&[t + 1e-3], p.u_max, v0, &p, &opts()).unwrap();
        assert!(early.residual > 0.0, "switching early cannot support the body");
        assert!(late.is_feasible() && late.depth > sol.depth);
    }
}

#[test]
fn slow_impact_approaches_static_depth() {
    let sol = solve_bang_bang(-0.1, &limited(), &opts()).unwrap();
    assert!((1.0..=1.1).contains(&sol.depth), "{}", sol.depth);
}

#[test]
fn at_least_halves_rigid_depth() {
    let p = limited();
    let mut last = 0.0;
    for i in 1..=20 {
        let v0 = -0.5 * i as f64;
        let sol = solve_bang_bang(v0, &p, &opts()).unwrap();
        assert!(sol.depth <= 0.5 * softland::model::rigid_depth(v0), "v0 {v0}");
        assert!(sol.depth >= last);
        last = sol.depth;
    }
}

#[test]
fn rejects_non_negative_velocity() {
    assert!(solve_bang_bang(0.0, &limited(), &opts()).is_err());
    assert!(solve_bang_bang(1.0, &limited(), &opts()).is_err());
}

#[test]
fn weak_actuator_is_infeasible() {
    let p = Params::new(5.0, 20.0).unwrap().with_u_max(0.5).unwrap();
    assert!(solve_bang_bang(-3.0, &p, &opts()).is_err());
}

#[test]
fn one_switch_reproduces_single_solution() {
    let p = limited();
    let single = solve_bang_bang(-3.0, &p, &opts()).unwrap();
    let multi = solve_multi_switch(-3.0, &p, 1, &opts(), &MultiSwitchOptions::default()).unwrap();
    assert!((single.depth - multi.depth).abs() < 1e-6);
}

#[test]
fn extra_switches_gain_little() {
    let p = limited();
    let single = solve_bang_bang(-3.0, &p, &opts()).unwrap();
    let multi = solve_multi_switch(-3.0, &p, 3, &opts(), &MultiSwitchOptions::default()).unwrap();
    assert!(multi.feasible);
    assert!(multi.depth <= single.depth + 1e-9);
    assert!((single.depth - multi.depth) / single.depth <= 0.01);
}

#[test]
fn tiny_stroke_flags_infeasible() {
    let p = Params::new(5.0, 0.1).unwrap().with_u_max(8.2).unwrap();
    let sol = solve_multi_switch(-3.0, &p, 2, &opts(), &MultiSwitchOptions::default()).unwrap();
    assert!(!sol.feasible);
}
