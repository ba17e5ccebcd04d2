//! End-to-end checks of the toolkit's headline properties. Runs as a plain
//! binary so every line is printed; exits nonzero if any check fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use softland::energy::{cot_vs_depth_comparison, outcome_energy, AUDIT_TOL};
use softland::exec::{self, Exec};
use softland::model::terminal_residual;
use softland::optimize::sweep::{sweep_impedance, Axis, GridSpec, SweepOptions};
use softland::optimize::tables::{compare_policies, optimal_curves};
use softland::optimize::{solve_bang_bang, solve_multi_switch, MultiSwitchOptions};
use softland::sim::count_steps;
use softland::{simulate, simulate_outcome, Controller, Params, SimOptions, State};

const U_MAX: f64 = 8.2;

type Check = std::result::Result<String, String>;

fn canonical() -> Params {
    Params::new(5.0, 20.0).unwrap()
}

fn limited() -> Params {
    canonical().with_u_max(U_MAX).unwrap()
}

fn full_grid() -> GridSpec {
    GridSpec {
        k_p: Axis::new(0.0, 1.0, 101),
        k_d: Axis::new(0.0, 1.0, 101),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// -0.5, -1.0, ..., -10.0
fn half_steps() -> Vec<f64> {
    (1..=20).map(|i| -0.5 * i as f64).collect()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rigid_oracle() -> Check {
    let opts = SimOptions::default();
    let mut worst: f64 = 0.0;
    for v0 in linspace(-10.0, 0.0, 21) {
        let out = simulate_outcome(&Controller::Rigid, &canonical(), v0, &opts).map_err(|e| e.to_string())?;
        worst = worst.max((out.depth - (1.0 + (1.0 + v0 * v0).sqrt())).abs());
    }
    let at_rest = simulate_outcome(&Controller::Rigid, &canonical(), 0.0, &opts).map_err(|e| e.to_string())?;
    let err0 = (at_rest.depth - 2.0).abs();
    ensure(
        worst <= 1e-6 && err0 <= 1e-6,
        format!("max |depth - 1 - sqrt(1 + v0^2)| = {worst:.2e} over 21 velocities; |depth(0) - 2| = {err0:.2e}"),
    )
}

fn minimum_depth_identity() -> Check {
    let mut worst: f64 = 0.0;
    for r_m in [0.5, 1.0, 5.0, 20.0] {
        let s = State {
            x_b: 9.0,
            v_b: 0.0,
            x_f: -1.0,
            v_f: 0.0,
            ..State::default()
        };
        let r = terminal_residual(&s, r_m).map_err(|e| e.to_string())?;
        worst = worst.max(r.abs());
    }
    ensure(worst <= 1e-12, format!("max |residual| = {worst:.2e} for r_m in {{0.5, 1, 5, 20}}"))
}

fn stepped_intrusion() -> Check {
    let mut got = Vec::new();
    for k_d in [0.0, 0.18, 0.4] {
        let (out, traj) = simulate(&Controller::impedance(0.2, k_d), &canonical(), -1.0, &SimOptions::default())
            .map_err(|e| e.to_string())?;
        if count_steps(&traj) != out.steps {
            return Err(format!("k_d = {k_d}: trajectory shows {} steps, outcome {}", count_steps(&traj), out.steps));
        }
        got.push(out.steps);
    }
    ensure(got == [3, 2, 1], format!("steps for k_d = 0, 0.18, 0.4: {got:?}"))
}

fn bang_bang_limit() -> Check {
    let opts = SimOptions::events_only();
    let p = limited();
    let low = solve_bang_bang(-0.1, &p, &opts).map_err(|e| e.to_string())?.depth;
    let mut prev = f64::NEG_INFINITY;
    let mut monotone = true;
    for v0 in half_steps() {
        let d = solve_bang_bang(v0, &p, &opts).map_err(|e| e.to_string())?.depth;
        monotone &= d >= prev;
        prev = d;
    }
    ensure(
        (1.0..=1.1).contains(&low) && monotone,
        format!("depth(-0.1) = {low:.6}; nondecreasing over 20 velocities: {monotone}; depth(-10) = {prev:.4}"),
    )
}

fn policy_ordering() -> Check {
    let cmp = compare_policies(&half_steps(), &limited(), &full_grid(), &SweepOptions::default())
        .map_err(|e| e.to_string())?;
    let mut worst_ratio: f64 = 0.0;
    let mut bad = Vec::new();
    for r in &cmp.rows {
        worst_ratio = worst_ratio.max(r.depth_bb / r.depth_rigid);
        if !(r.depth_bb <= r.depth_imp && r.depth_imp <= r.depth_rigid && r.depth_bb <= 0.5 * r.depth_rigid) {
            bad.push(r.v0);
        }
    }
    ensure(
        bad.is_empty() && cmp.rows.len() == 20,
        format!("bb <= imp <= rigid and bb <= rigid/2 at {} velocities; max bb/rigid = {worst_ratio:.3}; failing v0: {bad:?}", cmp.rows.len()),
    )
}

fn force_limit_convention() -> Check {
    let g = sweep_impedance(-10.0, &canonical(), &full_grid(), &SweepOptions::default()).map_err(|e| e.to_string())?;
    let best = g.refined.cell;
    // peak over a finely recorded trajectory as well as the event samples
    let fine = SimOptions {
        record_dt: 1e-3,
        ..SimOptions::default()
    };
    let (out, traj) =
        simulate(&Controller::impedance(best.k_p, best.k_d), &canonical(), -10.0, &fine).map_err(|e| e.to_string())?;
    let sampled = traj.samples.iter().map(|s| s.u.abs()).fold(0.0, f64::max);
    let peak = best.u_peak.max(out.u_peak).max(sampled);
    ensure(
        (peak - U_MAX).abs() <= 0.5,
        format!("optimum (k_p, k_d) = ({:.4}, {:.4}), peak |u| = {peak:.3}, expected 8.2 +/- 0.5", best.k_p, best.k_d),
    )
}

fn multi_switch() -> Check {
    let p = limited();
    let opts = SimOptions::events_only();
    let mut worst: f64 = 0.0;
    for v0 in [-1.0, -3.0, -6.0, -10.0] {
        let single = solve_bang_bang(v0, &p, &opts).map_err(|e| e.to_string())?;
        let multi = solve_multi_switch(v0, &p, 3, &opts, &MultiSwitchOptions::default()).map_err(|e| e.to_string())?;
        if !multi.feasible {
            return Err(format!("v0 = {v0}: 3-switch search found no feasible profile"));
        }
        worst = worst.max((single.depth - multi.depth) / single.depth);
    }
    ensure(worst <= 0.015, format!("max relative gain of 3 switches over 1 = {:.3}%", 100.0 * worst))
}

fn curves_properties() -> (Check, Check) {
    let v0s: Vec<f64> = (1..=10).map(|i| -(i as f64)).collect();
    let rows = match optimal_curves(&v0s, &[5.0], &[20.0], &canonical(), &full_grid(), &SweepOptions::default()) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    if let Some(r) = rows.iter().find(|r| r.error.is_some()) {
        let msg = format!("v0 = {}: {}", r.v0, r.error.as_deref().unwrap_or(""));
        return (Err(msg.clone()), Err(msg));
    }
    let kp: Vec<f64> = rows.iter().map(|r| r.k_p_star).collect();
    let kd: Vec<f64> = rows.iter().map(|r| r.k_d_star).collect();
    let kp_ok = kp.windows(2).all(|w| w[1] >= w[0] - 1e-3);
    let (i_min, kd_min) = kd
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
    let at = -v0s[i_min];
    let kd_ok = (2.0..=6.0).contains(&at) && kd[0] > kd_min && kd[kd.len() - 1] > kd_min;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    let c8 = ensure(
        kp_ok && kd_ok,
        format!("k_p* = [{}]; k_d* = [{}], minimum at |v0| = {at}", fmt(&kp), fmt(&kd)),
    );
    let worst_gap = rows.iter().map(|r| r.min_gap).fold(f64::NEG_INFINITY, f64::max);
    let c9 = ensure(
        worst_gap < 0.02 * 20.0,
        format!("largest optimal min gap = {worst_gap:.4} (limit 0.4)"),
    );
    (c8, c9)
}

fn energy_audit() -> Check {
    let p = limited();
    let grid = full_grid();
    let opts = SimOptions::events_only();
    let cells: Vec<(f64, f64, f64)> = half_steps()
        .into_iter()
        .flat_map(|v0| (0..grid.len()).map(move |i| (v0, i)))
        .map(|(v0, i)| {
            let (k_p, k_d) = grid.gains(i);
            (v0, k_p, k_d)
        })
        .collect();
    let audits = exec::map(Exec::Parallel, &cells, |&(v0, k_p, k_d)| {
        let c = Controller::Impedance { k_p, k_d, saturate: true };
        let out = simulate_outcome(&c, &p, v0, &opts).ok()?;
        let e = outcome_energy(&out, p.r_m).ok()?;
        Some((e.audit_residual, e.single_step_residual))
    });
    let settled: Vec<_> = audits.into_iter().flatten().collect();
    let worst = settled.iter().map(|a| a.0).fold(0.0, f64::max);
    let singles: Vec<f64> = settled.iter().filter_map(|a| a.1).collect();
    let worst_single = singles.iter().copied().fold(0.0, f64::max);
    ensure(
        !settled.is_empty() && worst <= AUDIT_TOL && worst_single <= AUDIT_TOL,
        format!(
            "{} settled runs, max audit residual {worst:.2e}; {} single-step runs, max |e_gnd - depth^2/2| {worst_single:.2e}",
            settled.len(),
            singles.len()
        ),
    )
}

fn cot_convergence() -> Check {
    let rows = cot_vs_depth_comparison(&[-10.0, -0.5], &canonical(), &full_grid(), &SweepOptions::default())
        .map_err(|e| e.to_string())?;
    if let Some(r) = rows.iter().find(|r| r.error.is_some()) {
        return Err(format!("v0 = {}: {}", r.v0, r.error.as_deref().unwrap_or("")));
    }
    let fast = &rows[0];
    let slow = &rows[1];
    let rel = (fast.depth_cotopt - fast.depth_depthopt).abs() / fast.depth_depthopt;
    let ratio = slow.depth_cotopt / slow.depth_depthopt;
    ensure(
        rel <= 0.05 && ratio >= 1.5,
        format!(
            "v0 = -10: CoT-optimal depth {:.4} vs {:.4} ({:.2}%, limit 5%); v0 = -0.5: ratio {ratio:.3} (need >= 1.5)",
            fast.depth_cotopt,
            fast.depth_depthopt,
            100.0 * rel
        ),
    )
}

fn determinism() -> Check {
    let base = SimOptions::default();
    let tight = base.tightened(0.5);
    let p = canonical();
    let mut drift: f64 = 0.0;

    for v0 in linspace(-10.0, 0.0, 21) {
        let a = simulate_outcome(&Controller::Rigid, &p, v0, &base).map_err(|e| e.to_string())?;
        let b = simulate_outcome(&Controller::Rigid, &p, v0, &base).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("rigid v0 = {v0}: repeated runs differ"));
        }
        let t = simulate_outcome(&Controller::Rigid, &p, v0, &tight).map_err(|e| e.to_string())?;
        drift = drift.max((a.depth - t.depth).abs());
    }
    for k_d in [0.0, 0.18, 0.4] {
        let c = Controller::impedance(0.2, k_d);
        let a = simulate(&c, &p, -1.0, &base).map_err(|e| e.to_string())?;
        let b = simulate(&c, &p, -1.0, &base).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("k_d = {k_d}: repeated trajectories differ"));
        }
        let t = simulate_outcome(&c, &p, -1.0, &tight).map_err(|e| e.to_string())?;
        if t.steps != a.0.steps {
            return Err(format!("k_d = {k_d}: {} steps at tight tolerance vs {}", t.steps, a.0.steps));
        }
    }
    let lp = limited();
    let bb_base = SimOptions::events_only();
    let bb_tight = bb_base.tightened(0.5);
    for v0 in std::iter::once(-0.1).chain(half_steps()) {
        let a = solve_bang_bang(v0, &lp, &bb_base).map_err(|e| e.to_string())?;
        let b = solve_bang_bang(v0, &lp, &bb_base).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("bang-bang v0 = {v0}: repeated solves differ"));
        }
        let t = solve_bang_bang(v0, &lp, &bb_tight).map_err(|e| e.to_string())?;
        drift = drift.max((a.depth - t.depth).abs());
    }
    let small = GridSpec {
        k_p: Axis::new(0.0, 1.0, 21),
        k_d: Axis::new(0.0, 1.0, 21),
    };
    let par = sweep_impedance(-3.0, &p, &small, &SweepOptions::default()).map_err(|e| e.to_string())?;
    let seq = sweep_impedance(
        -3.0,
        &p,
        &small,
        &SweepOptions {
            exec: Exec::Sequential,
            ..SweepOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    if format!("{par:?}") != format!("{seq:?}") {
        return Err("parallel and sequential sweeps differ".into());
    }
    ensure(drift < 1e-6, format!("repeats bit-identical; max change at halved tolerances = {drift:.2e}"))
}

fn run(results: &mut Vec<bool>, id: usize, name: &str, check: impl FnOnce() -> Check) {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} criterion {id:>2} {name} [{secs:.1}s]: {detail}");
    results.push(outcome.is_ok());
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    run(&mut results, 1, "rigid oracle", rigid_oracle);
    run(&mut results, 2, "minimum-depth identity", minimum_depth_identity);
    run(&mut results, 3, "stepped intrusion", stepped_intrusion);
    run(&mut results, 4, "bang-bang limit", bang_bang_limit);
    run(&mut results, 5, "policy ordering", policy_ordering);
    run(&mut results, 6, "force-limit convention", force_limit_convention);
    run(&mut results, 7, "multi-switch near-optimality", multi_switch);
    // both read the same optimal-gain curve
    let mut c9 = None;
    run(&mut results, 8, "monotone optimal stiffness", || {
        let (a, b) = curves_properties();
        c9 = Some(b);
        a
    });
    run(&mut results, 9, "stroke-boundary optimum", || {
        c9.unwrap_or_else(|| Err("optimal-gain curve unavailable".into()))
    });
    run(&mut results, 10, "energy audit", energy_audit);
    run(&mut results, 11, "CoT convergence", cot_convergence);
    run(&mut results, 12, "determinism and convergence", determinism);
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
