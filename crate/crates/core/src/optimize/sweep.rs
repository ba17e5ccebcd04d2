//! Impedance gain sweeps: a feasibility-masked grid followed by a pattern
//! search from the best cell.

use serde::{Deserialize, Serialize};

use crate::energy::outcome_energy;
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Exec};
use crate::model::{Controller, Params};
use crate::sim::{simulate_outcome, SimOptions, SimOutcome, StrokeSide};

/// Inclusive, evenly spaced gain values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn pitch(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min >= 0.0 && self.max > self.min) {
            return Err(invalid(name, format!("range [{}, {}] must be nonempty and non-negative", self.min, self.max)));
        }
        if self.count < 2 {
            return Err(invalid(name, format!("count must be at least 2, got {}", self.count)));
        }
        Ok(())
    }

    fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

impl Default for Axis {
    fn default() -> Self {
        Self::new(0.0, 1.0, 101)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSpec {
    pub k_p: Axis,
    pub k_d: Axis,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.k_p.validate("k_p")?;
        self.k_d.validate("k_d")
    }

    pub fn len(&self) -> usize {
        self.k_p.count * self.k_d.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gains of cell `idx` in `k_p`-major order.
    pub fn gains(&self, idx: usize) -> (f64, f64) {
        (self.k_p.value(idx / self.k_d.count), self.k_d.value(idx % self.k_d.count))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Maximum foot penetration.
    #[default]
    Depth,
    /// Dissipative cost of transport at the rest time.
    Cot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub objective: Objective,
    /// Clamp the impedance force to `params.u_max`.
    pub saturate: bool,
    /// Fraction of the stroke usable by the optimizer, centred on the
    /// mid-stroke; `1.0` uses all of it.
    pub stroke_safety: f64,
    /// Refinement stops once the pattern step falls below this.
    pub min_step: f64,
    pub sim: SimOptions,
    pub exec: Exec,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            objective: Objective::Depth,
            saturate: false,
            stroke_safety: 1.0,
            min_step: 1e-4,
            sim: SimOptions::events_only(),
            exec: Exec::Parallel,
        }
    }
}

impl SweepOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.stroke_safety > 0.0 && self.stroke_safety <= 1.0) {
            return Err(invalid("stroke_safety", format!("must lie in (0, 1], got {}", self.stroke_safety)));
        }
        if !(self.min_step > 0.0) {
            return Err(invalid("min_step", "must be positive"));
        }
        self.sim.validate()
    }
}

/// Why a gain pair was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    Compression,
    Extension,
    /// Inside the stroke but closer to an end than the safety margin allows.
    SafetyMargin,
    Unsettled,
}

impl Rejection {
    fn describe(self) -> &'static str {
        match self {
            Rejection::Compression => "the body hits the foot (stroke compression limit)",
            Rejection::Extension => "the leg over-extends (stroke extension limit)",
            Rejection::SafetyMargin => "the trajectory enters the stroke safety margin",
            Rejection::Unsettled => "the robot does not settle within tau_max",
        }
    }
}

/// One evaluated gain pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub k_p: f64,
    pub k_d: f64,
    pub depth: f64,
    pub steps: u32,
    pub feasible: bool,
    pub rejection: Option<Rejection>,
    /// Dissipative and lossless CoT when the run settled.
    pub cot: Option<f64>,
    pub cot_lossless: Option<f64>,
    pub u_peak: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    /// Objective value; `+inf` when infeasible.
    pub value: f64,
}

fn classify(out: &SimOutcome, params: &Params, opts: &SweepOptions) -> Option<Rejection> {
    if let Some(v) = out.stroke_violation {
        return Some(match v.side {
            StrokeSide::Compression => Rejection::Compression,
            StrokeSide::Extension => Rejection::Extension,
        });
    }
    if !out.settled {
        return Some(Rejection::Unsettled);
    }
    let margin = 0.5 * (1.0 - opts.stroke_safety) * params.s;
    if out.min_gap < margin || out.max_gap > params.s - margin {
        return Some(Rejection::SafetyMargin);
    }
    None
}

/// Simulates one impact with impedance gains `(k_p, k_d)`.
pub fn evaluate_gains(k_p: f64, k_d: f64, v0: f64, params: &Params, opts: &SweepOptions) -> Result<Cell> {
    let controller = Controller::Impedance {
        k_p,
        k_d,
        saturate: opts.saturate,
    };
    let out = simulate_outcome(&controller, params, v0, &opts.sim)?;
    let rejection = classify(&out, params, opts);
    let energy = outcome_energy(&out, params.r_m).ok();
    let feasible = rejection.is_none();
    let value = match (feasible, opts.objective) {
        (false, _) => f64::INFINITY,
        (true, Objective::Depth) => out.depth,
        (true, Objective::Cot) => energy.map_or(f64::INFINITY, |e| e.cot_dissipative),
    };
    Ok(Cell {
        k_p,
        k_d,
        depth: out.depth,
        steps: out.steps,
        feasible,
        rejection,
        cot: energy.map(|e| e.cot_dissipative),
        cot_lossless: energy.map(|e| e.cot_lossless),
        u_peak: out.u_peak,
        min_gap: out.min_gap,
        max_gap: out.max_gap,
        value,
    })
}

/// Result of the pattern search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refined {
    pub cell: Cell,
    /// Last `(k_p, k_d)` step sizes polled without improvement.
    pub final_step: (f64, f64),
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub v0: f64,
    pub spec: GridSpec,
    pub objective: Objective,
    /// Cells in `k_p`-major order.
    pub cells: Vec<Cell>,
    /// Index of the best feasible cell.
    pub argmin: usize,
    pub refined: Refined,
}

impl GridResult {
    pub fn cell(&self, i_p: usize, i_d: usize) -> &Cell {
        &self.cells[i_p * self.spec.k_d.count + i_d]
    }

    pub fn coarse(&self) -> &Cell {
        &self.cells[self.argmin]
    }

    /// Writes `k_p, k_d, depth, steps, feasible`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        use crate::float17 as f;
        writeln!(out, "k_p,k_d,depth,steps,feasible")?;
        for c in &self.cells {
            writeln!(out, "{},{},{},{},{}", f(c.k_p), f(c.k_d), f(c.depth), c.steps, c.feasible)?;
        }
        Ok(())
    }
}

/// Strictly better, ties broken toward smaller `k_p`, then smaller `k_d`.
fn better(a: &Cell, b: &Cell) -> bool {
    (a.value, a.k_p, a.k_d) < (b.value, b.k_p, b.k_d)
}

fn argmin(cells: &[Cell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if c.feasible && c.value.is_finite() && best.is_none_or(|b| better(c, &cells[b])) {
            best = Some(i);
        }
    }
    best
}

fn all_infeasible(cells: &[Cell]) -> Error {
    let reasons = [
        Rejection::Compression,
        Rejection::Extension,
        Rejection::SafetyMargin,
        Rejection::Unsettled,
    ];
    let counts: Vec<(Rejection, usize)> = reasons
        .iter()
        .map(|&r| (r, cells.iter().filter(|c| c.rejection == Some(r)).count()))
        .collect();
    let (main, n) = counts.iter().copied().max_by_key(|&(_, n)| n).unwrap_or((Rejection::Unsettled, 0));
    let detail: Vec<String> = counts
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|(r, n)| format!("{n} {r:?}"))
        .collect();
    Error::Infeasible(format!(
        "all {} cells infeasible; in {n} of them {} [{}]",
        cells.len(),
        main.describe(),
        detail.join(", ")
    ))
}

/// Sweeps the gain grid at impact velocity `v0` and refines the best cell.
pub fn sweep_impedance(v0: f64, params: &Params, grid: &GridSpec, opts: &SweepOptions) -> Result<GridResult> {
    sweep_from(v0, params, grid, opts, None)
}

/// Like [`sweep_impedance`], but the refinement starts from `warm` instead of
/// the grid's best cell when `warm` is feasible and better.
pub fn sweep_from(
    v0: f64,
    params: &Params,
    grid: &GridSpec,
    opts: &SweepOptions,
    warm: Option<(f64, f64)>,
) -> Result<GridResult> {
    params.validate()?;
    grid.validate()?;
    opts.validate()?;
    let idx: Vec<usize> = (0..grid.len()).collect();
    let cells = exec::map(opts.exec, &idx, |&i| {
        let (k_p, k_d) = grid.gains(i);
        evaluate_gains(k_p, k_d, v0, params, opts)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let best = argmin(&cells).ok_or_else(|| all_infeasible(&cells))?;

    let mut start = cells[best];
    if let Some((k_p, k_d)) = warm {
        if grid.k_p.contains(k_p) && grid.k_d.contains(k_d) {
            let w = evaluate_gains(k_p, k_d, v0, params, opts)?;
            if w.feasible && better(&w, &start) {
                start = w;
            }
        }
    }
    let refined = pattern_search(start, (grid.k_p.pitch(), grid.k_d.pitch()), grid, v0, params, opts)?;
    Ok(GridResult {
        v0,
        spec: *grid,
        objective: opts.objective,
        cells,
        argmin: best,
        refined,
    })
}

const MAX_MOVES: usize = 10_000;

/// Compass search over the feasible part of the grid box: poll the four axis
/// neighbours, move to the best improving one, otherwise halve the step.
pub fn pattern_search(
    start: Cell,
    step: (f64, f64),
    grid: &GridSpec,
    v0: f64,
    params: &Params,
    opts: &SweepOptions,
) -> Result<Refined> {
    let mut here = start;
    let (mut dp, mut dd) = step;
    let mut evals = 0;
    for _ in 0..MAX_MOVES {
        let polls: Vec<(f64, f64)> = [(dp, 0.0), (-dp, 0.0), (0.0, dd), (0.0, -dd)]
            .iter()
            .map(|&(a, b)| (here.k_p + a, here.k_d + b))
            .filter(|&(p, d)| grid.k_p.contains(p) && grid.k_d.contains(d))
            .collect();
        evals += polls.len();
        let found = exec::map(opts.exec, &polls, |&(p, d)| evaluate_gains(p, d, v0, params, opts))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut moved = false;
        for c in found {
            if c.feasible && c.value < here.value {
                if !moved || better(&c, &here) {
                    here = c;
                }
                moved = true;
            }
        }
        if !moved {
            if dp.max(dd) * 0.5 < opts.min_step {
                return Ok(Refined {
                    cell: here,
                    final_step: (dp, dd),
                    evals,
                });
            }
            dp *= 0.5;
            dd *= 0.5;
        }
    }
    Ok(Refined {
        cell: here,
        final_step: (dp, dd),
        evals,
    })
}
