//! Flat `key=value` run configuration.
//!
//! One entry per line, `#` starts a comment. Later entries replace earlier
//! ones, and command-line `--set` entries are applied after the file. Values
//! that take several numbers accept a scalar, a comma list, or an inclusive
//! range `start:stop:count`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use softland::model::{to_dimensionless, STANDARD_GRAVITY};
use softland::optimize::sweep::{Axis, GridSpec, Objective};
use softland::{Controller, Params, PhysicalParams, Scales, SimOptions};

pub const DEFAULT_R_M: f64 = 5.0;
pub const DEFAULT_STROKE: f64 = 20.0;
pub const DEFAULT_OUT: &str = "softland-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Sweep,
    Curves,
    Bangbang,
    Compare,
    Cot,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Simulate,
        Mode::Sweep,
        Mode::Curves,
        Mode::Bangbang,
        Mode::Compare,
        Mode::Cot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Curves => "curves",
            Mode::Bangbang => "bangbang",
            Mode::Compare => "compare",
            Mode::Cot => "cot",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Impact velocities used when none are configured.
    fn default_v0(self) -> Vec<f64> {
        match self {
            Mode::Simulate | Mode::Sweep | Mode::Bangbang => vec![-1.0],
            Mode::Curves => range(-1.0, -10.0, 10),
            Mode::Compare | Mode::Cot => range(-0.5, -10.0, 20),
        }
    }

    /// Only single-impact modes record trajectories by default.
    fn records(self) -> bool {
        matches!(self, Mode::Simulate | Mode::Bangbang)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a configuration entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { key: String, origin: Origin },
    #[error("{origin}: `{key}` expects {expected}, got `{value}`")]
    Type {
        key: String,
        expected: &'static str,
        value: String,
        origin: Origin,
    },
    #[error("{origin}: invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String, origin: Origin },
    #[error("`{key}` is required: {reason}")]
    Missing { key: String, reason: String },
    #[error("{origin}: `{key}` conflicts with `{other}` ({other_origin}); give either dimensionless or physical parameters")]
    Conflict {
        key: String,
        origin: Origin,
        other: String,
        other_origin: Origin,
    },
}

impl ConfigError {
    /// Machine-readable form for error reports.
    pub fn record(&self) -> Value {
        let (kind, key, origin) = match self {
            ConfigError::Syntax { line, .. } => ("syntax", None, Some(Origin::Line(*line))),
            ConfigError::UnknownKey { key, origin } => ("unknown_key", Some(key), Some(*origin)),
            ConfigError::Type { key, origin, .. } => ("type_mismatch", Some(key), Some(*origin)),
            ConfigError::Invalid { key, origin, .. } => ("invalid_value", Some(key), Some(*origin)),
            ConfigError::Missing { key, .. } => ("missing_key", Some(key), None),
            ConfigError::Conflict { key, origin, .. } => ("conflicting_keys", Some(key), Some(*origin)),
        };
        let mut rec = json!({ "kind": kind, "message": self.to_string() });
        if let Some(k) = key {
            rec["key"] = json!(k);
        }
        match origin {
            Some(Origin::Line(n)) => rec["line"] = json!(n),
            Some(Origin::Flag) => rec["flag"] = json!("--set"),
            None => {}
        }
        rec
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

const DIMENSIONLESS_KEYS: [&str; 5] = ["r_m", "s", "u_max", "l0", "v0"];
const PHYSICAL_KEYS: [&str; 7] = ["m_b", "m_f", "k_g", "g", "S", "U_max", "V0"];
const OTHER_KEYS: [&str; 23] = [
    "mode",
    "out",
    "workers",
    "controller",
    "k_p",
    "k_d",
    "saturate",
    "switch_times",
    "u",
    "grid_kp",
    "grid_kd",
    "objective",
    "stroke_safety",
    "min_step",
    "r_m_list",
    "s_list",
    "switches",
    "rel_tol",
    "abs_tol",
    "event_tol",
    "tau_max",
    "settle_vel",
    "record_dt",
];

fn known(key: &str) -> bool {
    DIMENSIONLESS_KEYS.contains(&key) || PHYSICAL_KEYS.contains(&key) || OTHER_KEYS.contains(&key)
}

/// Raw entries in the order they take effect.
#[derive(Debug, Clone, Default)]
pub struct Entries {
    map: BTreeMap<String, (String, Origin)>,
}

// where an entry came from does not change what it configures
impl PartialEq for Entries {
    fn eq(&self, other: &Self) -> bool {
        self.echo() == other.echo()
    }
}

impl Entries {
    /// Reads `key=value` lines.
    pub fn from_text(text: &str) -> ConfigResult<Self> {
        let mut entries = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.trim().to_string(),
            })?;
            entries.set(k.trim(), v.trim(), Origin::Line(i + 1))?;
        }
        Ok(entries)
    }

    /// Applies one `key=value` override.
    pub fn set_flag(&mut self, assignment: &str) -> ConfigResult<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Type {
            key: assignment.to_string(),
            expected: "`key=value`",
            value: assignment.to_string(),
            origin: Origin::Flag,
        })?;
        self.set(k.trim(), v.trim(), Origin::Flag)
    }

    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> ConfigResult<()> {
        if !known(key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                origin,
            });
        }
        self.map.insert(key.to_string(), (value.to_string(), origin));
        Ok(())
    }

    fn get(&self, key: &str) -> Option<(&str, Origin)> {
        self.map.get(key).map(|(v, o)| (v.as_str(), *o))
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn f64(&self, key: &str) -> ConfigResult<Option<f64>> {
        self.get(key).map(|(v, o)| number(key, v, o)).transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> ConfigResult<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> ConfigResult<Option<Vec<f64>>> {
        self.get(key).map(|(v, o)| values(key, v, o)).transpose()
    }

    fn usize(&self, key: &str) -> ConfigResult<Option<usize>> {
        self.get(key)
            .map(|(v, o)| {
                v.parse::<usize>().map_err(|_| ConfigError::Type {
                    key: key.to_string(),
                    expected: "a non-negative integer",
                    value: v.to_string(),
                    origin: o,
                })
            })
            .transpose()
    }

    fn bool(&self, key: &str) -> ConfigResult<Option<bool>> {
        self.get(key)
            .map(|(v, o)| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(ConfigError::Type {
                    key: key.to_string(),
                    expected: "a boolean",
                    value: v.to_string(),
                    origin: o,
                }),
            })
            .transpose()
    }

    pub(crate) fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        match self.get(key) {
            Some((_, origin)) => ConfigError::Invalid {
                key: key.to_string(),
                reason: reason.into(),
                origin,
            },
            None => ConfigError::Missing {
                key: key.to_string(),
                reason: reason.into(),
            },
        }
    }

    /// Entries as a plain key/value map, which parses back to the same config.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.map.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect()
    }

    pub fn to_text(&self) -> String {
        self.map.iter().map(|(k, (v, _))| format!("{k}={v}\n")).collect()
    }
}

fn number(key: &str, v: &str, origin: Origin) -> ConfigResult<f64> {
    let x = match v {
        "inf" | "none" => Ok(f64::INFINITY),
        _ => v.parse::<f64>(),
    };
    x.ok()
        .filter(|x| !x.is_nan())
        .ok_or_else(|| ConfigError::Type {
            key: key.to_string(),
            expected: "a number",
            value: v.to_string(),
            origin,
        })
}

fn range(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    (0..count)
        .map(|i| {
            if i + 1 == count {
                stop
            } else {
                start + (stop - start) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// Scalar, comma list, or inclusive range `start:stop:count`.
fn values(key: &str, v: &str, origin: Origin) -> ConfigResult<Vec<f64>> {
    let type_err = || ConfigError::Type {
        key: key.to_string(),
        expected: "a number, a comma list or `start:stop:count`",
        value: v.to_string(),
        origin,
    };
    if v.contains(':') {
        let parts: Vec<&str> = v.split(':').map(str::trim).collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(type_err());
        };
        let a: f64 = a.parse().map_err(|_| type_err())?;
        let b: f64 = b.parse().map_err(|_| type_err())?;
        let n: usize = n.parse().map_err(|_| type_err())?;
        if n == 0 {
            return Err(ConfigError::Invalid {
                key: key.to_string(),
                reason: "range must be nonempty".into(),
                origin,
            });
        }
        if !(a.is_finite() && b.is_finite()) || (n == 1 && a != b) {
            return Err(ConfigError::Invalid {
                key: key.to_string(),
                reason: "range endpoints must be finite and equal when count is 1".into(),
                origin,
            });
        }
        return Ok(range(a, b, n));
    }
    v.split(',')
        .map(|x| x.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(type_err))
        .collect()
}

fn axis(entries: &Entries, key: &str) -> ConfigResult<Axis> {
    let Some((v, origin)) = entries.get(key) else {
        return Ok(Axis::default());
    };
    let err = |reason: &str| ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.to_string(),
        origin,
    };
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(ConfigError::Type {
            key: key.to_string(),
            expected: "`min:max:count`",
            value: v.to_string(),
            origin,
        });
    };
    let (Ok(a), Ok(b), Ok(n)) = (a.parse::<f64>(), b.parse::<f64>(), n.parse::<usize>()) else {
        return Err(ConfigError::Type {
            key: key.to_string(),
            expected: "`min:max:count`",
            value: v.to_string(),
            origin,
        });
    };
    if !(a.is_finite() && b.is_finite() && a >= 0.0 && b > a) {
        return Err(err("gain bounds must satisfy 0 <= min < max"));
    }
    if n < 2 {
        return Err(err("count must be at least 2"));
    }
    Ok(Axis::new(a, b, n))
}

/// Physical inputs as given.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicalInputs {
    pub m_b: f64,
    pub m_f: f64,
    pub k_g: f64,
    pub g: f64,
    #[serde(rename = "S")]
    pub stroke: Option<f64>,
    #[serde(rename = "U_max")]
    pub u_max: f64,
    #[serde(rename = "V0")]
    pub v0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: Params,
    /// Dimensionless impact velocities.
    pub v0: Vec<f64>,
    pub physical: Option<PhysicalInputs>,
    pub scales: Option<Scales>,
    pub controller: Controller,
    pub grid: GridSpec,
    pub objective: Objective,
    pub saturate: bool,
    pub stroke_safety: f64,
    pub min_step: f64,
    pub r_m_list: Vec<f64>,
    pub s_list: Vec<f64>,
    pub switches: usize,
    pub sim: SimOptions,
    pub out: PathBuf,
    /// `0` picks automatically.
    pub workers: usize,
    pub entries: Entries,
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> ConfigResult<RunConfig> {
    resolve(Entries::from_text(text)?)
}

/// Builds a validated config from collected entries, filling defaults.
pub fn resolve(entries: Entries) -> ConfigResult<RunConfig> {
    let mode = match entries.get("mode") {
        Some((v, origin)) => Mode::parse(v).ok_or_else(|| ConfigError::Type {
            key: "mode".into(),
            expected: "one of simulate, sweep, curves, bangbang, compare, cot",
            value: v.to_string(),
            origin,
        })?,
        None => {
            return Err(ConfigError::Missing {
                key: "mode".into(),
                reason: "no run mode given".into(),
            })
        }
    };

    if let Some(phys) = PHYSICAL_KEYS.iter().find(|k| entries.has(k)) {
        if let Some(dim) = DIMENSIONLESS_KEYS.iter().find(|k| entries.has(k)) {
            let (_, origin) = entries.get(dim).unwrap();
            let (_, other_origin) = entries.get(phys).unwrap();
            return Err(ConfigError::Conflict {
                key: dim.to_string(),
                origin,
                other: phys.to_string(),
                other_origin,
            });
        }
    }
    let (params, v0, physical, scales) = if PHYSICAL_KEYS.iter().any(|k| entries.has(k)) {
        physical_block(&entries)?
    } else {
        dimensionless_block(&entries, mode)?
    };
    if let Some(bad) = v0.iter().find(|v| **v > 0.0) {
        let key = if physical.is_some() { "V0" } else { "v0" };
        return Err(entries.invalid(key, format!("impact velocity must be non-positive, got {bad}")));
    }

    let controller = controller(&entries, &params)?;
    let grid = GridSpec {
        k_p: axis(&entries, "grid_kp")?,
        k_d: axis(&entries, "grid_kd")?,
    };
    let objective = match entries.get("objective") {
        None | Some(("depth", _)) => Objective::Depth,
        Some(("cot", _)) => Objective::Cot,
        Some((v, origin)) => {
            return Err(ConfigError::Type {
                key: "objective".into(),
                expected: "`depth` or `cot`",
                value: v.to_string(),
                origin,
            })
        }
    };
    let stroke_safety = entries.f64_or("stroke_safety", 1.0)?;
    if !(stroke_safety > 0.0 && stroke_safety <= 1.0) {
        return Err(entries.invalid("stroke_safety", "must lie in (0, 1]"));
    }
    let min_step = entries.f64_or("min_step", 1e-4)?;
    if !(min_step.is_finite() && min_step > 0.0) {
        return Err(entries.invalid("min_step", "must be positive"));
    }

    let r_m_list = entries.list("r_m_list")?.unwrap_or_else(|| vec![params.r_m]);
    let s_list = entries.list("s_list")?.unwrap_or_else(|| vec![params.s]);
    for (key, list) in [("r_m_list", &r_m_list), ("s_list", &s_list)] {
        if list.iter().any(|x| !(*x > 0.0)) {
            return Err(entries.invalid(key, "entries must be positive"));
        }
    }
    let switches = entries.usize("switches")?.unwrap_or(1);
    if switches == 0 {
        return Err(entries.invalid("switches", "must be at least 1"));
    }

    let base = SimOptions::default();
    let sim = SimOptions {
        rel_tol: entries.f64_or("rel_tol", base.rel_tol)?,
        abs_tol: entries.f64_or("abs_tol", base.abs_tol)?,
        event_tol: entries.f64_or("event_tol", base.event_tol)?,
        tau_max: entries.f64_or("tau_max", base.tau_max)?,
        settle_vel: entries.f64_or("settle_vel", base.settle_vel)?,
        record_dt: entries.f64_or("record_dt", if mode.records() { base.record_dt } else { 0.0 })?,
        ..base
    };
    sim.validate().map_err(|e| core_error(&entries, e))?;

    let out = entries
        .get("out")
        .map(|(v, _)| PathBuf::from(v))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let workers = entries.usize("workers")?.unwrap_or(0);

    Ok(RunConfig {
        mode,
        params,
        v0,
        physical,
        scales,
        controller,
        grid,
        objective,
        saturate: entries.bool("saturate")?.unwrap_or(false),
        stroke_safety,
        min_step,
        r_m_list,
        s_list,
        switches,
        sim,
        out,
        workers,
        entries,
    })
}

type Block = (Params, Vec<f64>, Option<PhysicalInputs>, Option<Scales>);

fn dimensionless_block(entries: &Entries, mode: Mode) -> ConfigResult<Block> {
    let r_m = entries.f64_or("r_m", DEFAULT_R_M)?;
    let s = entries.f64_or("s", DEFAULT_STROKE)?;
    let mut params = Params::new(r_m, s).map_err(|e| core_error(entries, e))?;
    if let Some(u) = entries.f64("u_max")? {
        params = params.with_u_max(u).map_err(|e| core_error(entries, e))?;
    }
    if let Some(l0) = entries.f64("l0")? {
        params = params.with_l0(l0).map_err(|e| core_error(entries, e))?;
    }
    let v0 = entries.list("v0")?.unwrap_or_else(|| mode.default_v0());
    Ok((params, v0, None, None))
}

fn physical_block(entries: &Entries) -> ConfigResult<Block> {
    let required = |key: &str| -> ConfigResult<f64> {
        entries.f64(key)?.ok_or_else(|| ConfigError::Missing {
            key: key.to_string(),
            reason: "needed with physical parameters".into(),
        })
    };
    let v0 = entries.list("V0")?.ok_or_else(|| ConfigError::Missing {
        key: "V0".into(),
        reason: "needed with physical parameters".into(),
    })?;
    let inputs = PhysicalInputs {
        m_b: required("m_b")?,
        m_f: required("m_f")?,
        k_g: required("k_g")?,
        g: entries.f64_or("g", STANDARD_GRAVITY)?,
        stroke: entries.f64("S")?,
        u_max: entries.f64_or("U_max", f64::INFINITY)?,
        v0,
    };
    let probe = |stroke: f64| PhysicalParams {
        m_b: inputs.m_b,
        m_f: inputs.m_f,
        k_g: inputs.k_g,
        g: inputs.g,
        stroke,
        u_max: inputs.u_max,
        v0: 0.0,
    };
    // without S the stroke stays at its dimensionless default
    let (mut params, _, scales) = match inputs.stroke {
        Some(stroke) => to_dimensionless(&probe(stroke)),
        None => to_dimensionless(&probe(1.0)),
    }
    .map_err(|e| physical_error(entries, e))?;
    if inputs.stroke.is_none() {
        params = Params::new(params.r_m, DEFAULT_STROKE)
            .and_then(|p| p.with_u_max(params.u_max))
            .map_err(|e| physical_error(entries, e))?;
    }
    let v0 = inputs.v0.iter().map(|v| v / scales.v_s()).collect();
    Ok((params, v0, Some(inputs), Some(scales)))
}

fn physical_key(name: &str) -> &str {
    match name {
        "stroke" => "S",
        "u_max" => "U_max",
        "v0" => "V0",
        other => other,
    }
}

fn physical_error(entries: &Entries, e: softland::Error) -> ConfigError {
    match e {
        softland::Error::InvalidParameter { name, reason } => entries.invalid(physical_key(name), reason),
        other => ConfigError::Missing {
            key: "physical".into(),
            reason: other.to_string(),
        },
    }
}

/// Maps a core validation error onto the configuration key it names.
fn core_error(entries: &Entries, e: softland::Error) -> ConfigError {
    match e {
        softland::Error::InvalidParameter { name, reason } => entries.invalid(name, reason),
        other => ConfigError::Missing {
            key: "config".into(),
            reason: other.to_string(),
        },
    }
}

fn controller(entries: &Entries, params: &Params) -> ConfigResult<Controller> {
    let kind = entries.get("controller").map(|(v, _)| v).unwrap_or("rigid");
    let need = |key: &str| -> ConfigResult<f64> {
        entries.f64(key)?.ok_or_else(|| ConfigError::Missing {
            key: key.to_string(),
            reason: format!("needed by the {kind} controller"),
        })
    };
    let c = match kind {
        "rigid" => Controller::Rigid,
        "impedance" => Controller::Impedance {
            k_p: need("k_p")?,
            k_d: need("k_d")?,
            saturate: entries.bool("saturate")?.unwrap_or(false),
        },
        "bangbang" => Controller::BangBang {
            u_max: params.u_max,
            switch_times: entries.list("switch_times")?.unwrap_or_default(),
        },
        "constant" => Controller::ConstantForce(need("u")?),
        other => {
            let (_, origin) = entries.get("controller").unwrap();
            return Err(ConfigError::Type {
                key: "controller".into(),
                expected: "one of rigid, impedance, bangbang, constant",
                value: other.to_string(),
                origin,
            });
        }
    };
    // gains are checked even when the mode does not simulate this controller
    for key in ["k_p", "k_d"] {
        if let Some(v) = entries.f64(key)? {
            if !(v.is_finite() && v >= 0.0) {
                return Err(entries.invalid(key, format!("must be non-negative, got {v}")));
            }
        }
    }
    c.validate().map_err(|e| core_error(entries, e))?;
    Ok(c)
}
