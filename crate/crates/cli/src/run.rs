//! Executes a [`RunConfig`] and writes its artifacts.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use thiserror::Error;

use softland::energy::{cot_vs_depth_comparison, outcome_energy, write_cot_csv};
use softland::exec::Exec;
use softland::optimize::sweep::{sweep_impedance, SweepOptions};
use softland::optimize::tables::{compare_policies, optimal_curves, write_curves_csv};
use softland::optimize::{solve_bang_bang, solve_multi_switch, BangBangSolution, MultiSwitchOptions};
use softland::sim::StopRule;
use softland::{float17, simulate, Controller, SimOptions};

use crate::config::{ConfigError, Mode, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Solver(#[from] softland::Error),
}

impl RunError {
    pub fn record(&self) -> Value {
        match self {
            RunError::Config(e) => e.record(),
            RunError::Io { path, .. } => json!({
                "kind": "io",
                "path": path.display().to_string(),
                "message": self.to_string(),
            }),
            RunError::Solver(e) => json!({
                "kind": "solver",
                "variant": solver_kind(e),
                "message": e.to_string(),
            }),
        }
    }
}

fn solver_kind(e: &softland::Error) -> &'static str {
    use softland::Error::*;
    match e {
        InvalidParameter { .. } => "invalid_parameter",
        DegenerateGap { .. } => "degenerate_gap",
        StepFailure { .. } => "step_failure",
        NonFinite { .. } => "non_finite",
        Infeasible(_) => "infeasible",
        NotSettled(_) => "not_settled",
    }
}

type RunResult<T> = Result<T, RunError>;

struct Output<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Output<'_> {
    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> RunResult<()> {
        let path = self.dir.join(name);
        let io_err = |source| RunError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn single_v0(cfg: &RunConfig) -> RunResult<f64> {
    match cfg.v0.as_slice() {
        [v] => Ok(*v),
        _ => {
            let key = if cfg.physical.is_some() { "V0" } else { "v0" };
            let reason = format!("{} takes a single impact velocity, got {}", cfg.mode, cfg.v0.len());
            Err(cfg.entries.invalid(key, reason).into())
        }
    }
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    SweepOptions {
        objective: cfg.objective,
        saturate: cfg.saturate,
        stroke_safety: cfg.stroke_safety,
        min_step: cfg.min_step,
        sim: cfg.sim,
        exec: Exec::from_workers(cfg.workers),
    }
}

/// Runs the configured mode, writes its CSV files and `summary.json` into
/// the output directory, and returns the summary.
pub fn run(cfg: &RunConfig) -> RunResult<Value> {
    let start = Instant::now();
    fs::create_dir_all(&cfg.out).map_err(|source| RunError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    let mut out = Output {
        dir: &cfg.out,
        written: Vec::new(),
    };
    let headline = match cfg.mode {
        Mode::Simulate => run_simulate(cfg, &mut out)?,
        Mode::Sweep => run_sweep(cfg, &mut out)?,
        Mode::Curves => run_curves(cfg, &mut out)?,
        Mode::Bangbang => run_bangbang(cfg, &mut out)?,
        Mode::Compare => run_compare(cfg, &mut out)?,
        Mode::Cot => run_cot(cfg, &mut out)?,
    };
    let mut summary = json!({
        "version": VERSION,
        "mode": cfg.mode,
        "inputs": cfg.entries.echo(),
        "resolved": {
            "params": cfg.params,
            "v0": cfg.v0,
            "physical": cfg.physical,
            "grid": cfg.grid,
            "sim": cfg.sim,
            "workers": cfg.workers,
        },
        "scales": cfg.scales,
        "headline": headline,
        "outputs": out.written,
    });
    summary["wall_time_s"] = json!(start.elapsed().as_secs_f64());
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    out.write("summary.json", |w| writeln!(w, "{text}"))?;
    Ok(summary)
}

fn run_simulate(cfg: &RunConfig, out: &mut Output) -> RunResult<Value> {
    let v0 = single_v0(cfg)?;
    let (outcome, traj) = simulate(&cfg.controller, &cfg.params, v0, &cfg.sim)?;
    out.write("trajectory.csv", |w| traj.write_csv(w))?;
    let energy = outcome_energy(&outcome, cfg.params.r_m).ok();
    Ok(json!({
        "depth": outcome.depth,
        "steps": outcome.steps,
        "rest_time": outcome.rest_time,
        "settled": outcome.settled,
        "termination": outcome.termination,
        "stroke_violation": outcome.stroke_violation,
        "u_peak": outcome.u_peak,
        "min_gap": outcome.min_gap,
        "max_gap": outcome.max_gap,
        "e_act": outcome.e_act,
        "e_gnd": outcome.e_gnd,
        "energy": energy,
        "actuator_injects": energy.map(|e| e.actuator_injects()),
    }))
}

fn run_sweep(cfg: &RunConfig, out: &mut Output) -> RunResult<Value> {
    let v0 = single_v0(cfg)?;
    let g = sweep_impedance(v0, &cfg.params, &cfg.grid, &sweep_options(cfg))?;
    out.write("grid.csv", |w| g.write_csv(w))?;
    let best = g.refined.cell;
    let coarse = g.coarse();
    Ok(json!({
        "objective": cfg.objective,
        "k_p_star": best.k_p,
        "k_d_star": best.k_d,
        "depth_star": best.depth,
        "cot_star": best.cot,
        "steps": best.steps,
        "u_peak": best.u_peak,
        "min_gap": best.min_gap,
        "grid_best": {"k_p": coarse.k_p, "k_d": coarse.k_d, "depth": coarse.depth},
        "feasible_cells": g.cells.iter().filter(|c| c.feasible).count(),
        "cells": g.cells.len(),
        "refinement_evals": g.refined.evals,
        "final_step": [g.refined.final_step.0, g.refined.final_step.1],
    }))
}

fn run_curves(cfg: &RunConfig, out: &mut Output) -> RunResult<Value> {
    let rows = optimal_curves(&cfg.v0, &cfg.r_m_list, &cfg.s_list, &cfg.params, &cfg.grid, &sweep_options(cfg))?;
    out.write("curves.csv", |w| write_curves_csv(&rows, w))?;
    let failed: Vec<Value> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| json!({"r_m": r.r_m, "s": r.s, "v0": r.v0, "error": e})))
        .collect();
    Ok(json!({
        "rows": rows.len(),
        "failed": failed,
    }))
}

fn bang_bang(cfg: &RunConfig, v0: f64) -> softland::Result<BangBangSolution> {
    let opts = SimOptions {
        record_dt: 0.0,
        ..cfg.sim
    };
    if cfg.switches == 1 {
        solve_bang_bang(v0, &cfg.params, &opts)
    } else {
        solve_multi_switch(v0, &cfg.params, cfg.switches, &opts, &MultiSwitchOptions::default())
    }
}

fn run_bangbang(cfg: &RunConfig, out: &mut Output) -> RunResult<Value> {
    let sols = softland::exec::map(Exec::from_workers(cfg.workers), &cfg.v0, |&v0| bang_bang(cfg, v0))
        .into_iter()
        .collect::<softland::Result<Vec<_>>>()?;
    out.write("bangbang.csv", |w| {
        writeln!(w, "v0,depth,residual,feasible,arrest_force,switch_times")?;
        for (v0, s) in cfg.v0.iter().zip(&sols) {
            let times: Vec<String> = s.switch_times.iter().map(|&t| float17(t)).collect();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                float17(*v0),
                float17(s.depth),
                float17(s.residual),
                s.feasible,
                float17(s.arrest_force.unwrap_or(f64::NAN)),
                times.join(";")
            )?;
        }
        Ok(())
    })?;
    if let [sol] = sols.as_slice() {
        // profile up to the first foot stop, where the body arrest takes over
        let c = Controller::BangBang {
            u_max: sol.u_max,
            switch_times: sol.switch_times.clone(),
        };
        let opts = SimOptions {
            stop: StopRule::FootRest,
            ..cfg.sim
        };
        let (_, traj) = simulate(&c, &cfg.params, cfg.v0[0], &opts)?;
        out.write("trajectory.csv", |w| traj.write_csv(w))?;
    }
    Ok(json!({
        "u_max": cfg.params.u_max,
        "switches": cfg.switches,
        "solutions": cfg.v0.iter().zip(&sols).map(|(v0, s)| json!({
            "v0": v0,
            "depth": s.depth,
            "switch_times": s.switch_times,
            "feasible": s.feasible,
            "residual": s.residual,
            "arrest_force": s.arrest_force,
        })).collect::<Vec<_>>(),
    }))
}

fn run_compare(cfg: &RunConfig, out: &mut Output) -> RunResult<Value> {
    let cmp = compare_policies(&cfg.v0, &cfg.params, &cfg.grid, &sweep_options(cfg))?;
    out.write("compare.csv", |w| cmp.write_csv(w))?;
    let ordered = cmp
        .rows
        .iter()
        .all(|r| r.depth_bb <= r.depth_imp && r.depth_imp <= r.depth_rigid);
    let worst_ratio = cmp.rows.iter().map(|r| r.depth_bb / r.depth_rigid).fold(0.0, f64::max);
    Ok(json!({
        "u_max": cmp.u_max,
        "u_max_derived": cmp.u_max_derived,
        "ordered": ordered,
        "max_bb_over_rigid": worst_ratio,
        "rows": cmp.rows,
    }))
}

fn run_cot(cfg: &RunConfig, out: &mut Output) -> RunResult<Value> {
    let rows = cot_vs_depth_comparison(&cfg.v0, &cfg.params, &cfg.grid, &sweep_options(cfg))?;
    out.write("cot.csv", |w| write_cot_csv(&rows, w))?;
    // dissipative below lossless means the actuator put energy in
    let injecting: Vec<f64> = rows
        .iter()
        .filter(|r| r.cot_depthopt_diss < r.cot_depthopt_lossless || r.cot_cotopt_diss < r.cot_cotopt_lossless)
        .map(|r| r.v0)
        .collect();
    Ok(json!({
        "rows": rows,
        "actuator_injects_at": injecting,
    }))
}
