//! Experiment specs, sweep execution and CSV output.
//!
//! A spec file is line oriented:
//!
//! ```text
//! # comment
//! world.food_spawn_rate = 2.0
//! p0 = 0.4
//! controller = fixed_ratio
//! ratio = 0.5
//! runs = 10
//! sweep world.num_robots = 10,20,50
//! ```
//!
//! World fields take a `world.` prefix, controller parameters are bare and
//! activity multipliers are `activity.<level>.<speed|sense|cost>`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::controller::{validate_params, Controller, ControllerKind, ControllerParams, StimulusScope};
use crate::engine::{run, EngineError, StepSample};
use crate::metrics::{RunResult, SampleStats};
use crate::world::{derive_seed, validate_config, WorldConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError {
    pub line: Option<usize>,
    pub message: String,
}

impl SpecError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecError { line: Some(n), message } => write!(f, "line {n}: {message}"),
            SpecError { line: None, message } => f.write_str(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub world: WorldConfig,
    pub params: ControllerParams,
    pub controller: ControllerKind,
    pub master_seed: u64,
    pub runs: u64,
    pub sweeps: Vec<SweepAxis>,
    pub output_dir: Option<PathBuf>,
    /// Adds a `net_per_robot` column to the summary.
    pub per_robot_column: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            params: ControllerParams::default(),
            controller: ControllerKind::Adaptive,
            master_seed: 0,
            runs: 1,
            sweeps: Vec::new(),
            output_dir: None,
            per_robot_column: false,
        }
    }
}

/// One configuration of the sweep cross-product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// Values in axis order.
    pub values: Vec<f64>,
    pub world: WorldConfig,
    pub controller: Controller,
}

impl ExperimentSpec {
    /// Cross-product of the sweep axes; the last axis varies fastest.
    /// No axes gives the single base point.
    pub fn points(&self) -> Result<Vec<SweepPoint>, String> {
        let count: usize = self.sweeps.iter().map(|a| a.values.len()).product();
        let mut out = Vec::with_capacity(count);
        for index in 0..count {
            let mut rem = index;
            let mut values = vec![0.0; self.sweeps.len()];
            for (k, axis) in self.sweeps.iter().enumerate().rev() {
                values[k] = axis.values[rem % axis.values.len()];
                rem /= axis.values.len();
            }
            let mut world = self.world.clone();
            let mut params = self.params.clone();
            let mut kind = self.controller;
            for (axis, &v) in self.sweeps.iter().zip(&values) {
                set_numeric(&mut world, &mut params, &mut kind, &axis.path, v)?;
            }
            out.push(SweepPoint {
                index,
                values,
                world,
                controller: Controller::new(kind, params),
            });
        }
        Ok(out)
    }

    pub fn run_seed(&self, point: usize, run: u64) -> u64 {
        derive_seed(self.master_seed, &[point as u64, run])
    }
}

fn count(v: f64) -> Result<u64, String> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("expected a nonnegative integer, got {v}"))
    }
}

/// Sets the numeric field named by `path`.
fn set_numeric(
    w: &mut WorldConfig,
    p: &mut ControllerParams,
    kind: &mut ControllerKind,
    path: &str,
    v: f64,
) -> Result<(), String> {
    if let Some(rest) = path.strip_prefix("world.") {
        match rest {
            "arena_width" => w.arena_width = v,
            "arena_height" => w.arena_height = v,
            "home_x" => w.home_center.x = v,
            "home_y" => w.home_center.y = v,
            "home_radius" => w.home_radius = v,
            "forage_min_x" => w.forage_area.min.x = v,
            "forage_min_y" => w.forage_area.min.y = v,
            "forage_max_x" => w.forage_area.max.x = v,
            "forage_max_y" => w.forage_area.max.y = v,
            "food_spawn_rate" => w.food_spawn_rate = v,
            "alt_spawn_rate" => w.alt_spawn_rate = v,
            "regime_period" => w.regime_period = count(v)?,
            "food_lifetime" => w.food_lifetime = count(v)?,
            "initial_food" => w.initial_food = count(v)? as usize,
            "food_energy" => w.food_energy = v,
            "move_cost" => w.move_cost = v,
            "comm_cost" => w.comm_cost = v,
            "idle_cost" => w.idle_cost = v,
            "encounter_radius" => w.encounter_radius = v,
            "sense_radius" => w.sense_radius = v,
            "robot_speed" => w.robot_speed = v,
            "turn_max_deg" => w.turn_max_deg = v,
            "giveup_steps" => w.giveup_steps = count(v)?,
            "max_steps" => w.max_steps = count(v)?,
            "num_robots" => w.num_robots = count(v)? as usize,
            _ => return Err(format!("unknown key '{path}'")),
        }
        return Ok(());
    }
    if let Some(rest) = path.strip_prefix("activity.") {
        let (level, field) = rest.split_once('.').ok_or_else(|| format!("unknown key '{path}'"))?;
        let m = match level {
            "low" => &mut p.profile.low,
            "normal" => &mut p.profile.normal,
            "high" => &mut p.profile.high,
            _ => return Err(format!("unknown key '{path}'")),
        };
        match field {
            "speed" => m.speed = v,
            "sense" => m.sense = v,
            "cost" => m.cost = v,
            _ => return Err(format!("unknown key '{path}'")),
        }
        return Ok(());
    }
    match path {
        "delta1" => p.delta1 = v,
        "delta2" => p.delta2 = v,
        "phi1" => p.phi1 = v,
        "phi2" => p.phi2 = v,
        "p0" => p.p0 = v,
        "th_init" => p.th_init = v,
        "s_init" => p.s_init = v,
        "th_min" => p.th_min = v,
        "th_max" => p.th_max = v,
        "s_min" => p.s_min = v,
        "s_max" => p.s_max = v,
        "s_low" => p.s_low = v,
        "s_high" => p.s_high = v,
        "target" => match kind {
            ControllerKind::FixedNumber { target } => *target = count(v)? as usize,
            _ => return Err("'target' applies only to controller = fixed_number".into()),
        },
        "ratio" => match kind {
            ControllerKind::FixedRatio { ratio } => *ratio = v,
            _ => return Err("'ratio' applies only to controller = fixed_ratio".into()),
        },
        _ => return Err(format!("unknown key '{path}'")),
    }
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("expected a number, got '{s}'"))
}

/// Parses a spec file. Every problem found is reported, each with its line
/// when it has one.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec, Vec<SpecError>> {
    let mut errors = Vec::new();
    let mut spec = ExperimentSpec::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut numeric: Vec<(usize, String, f64)> = Vec::new();
    let mut sweeps: Vec<(usize, String, Vec<f64>)> = Vec::new();
    let mut kind_name: Option<(usize, String)> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((lhs, rhs)) = content.split_once('=') else {
            errors.push(SpecError::at(line, format!("syntax error: expected 'key = value', got '{content}'")));
            continue;
        };
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        if rhs.is_empty() {
            errors.push(SpecError::at(line, format!("syntax error: missing value for '{lhs}'")));
            continue;
        }
        let (is_sweep, key) = match lhs.strip_prefix("sweep") {
            Some(rest) if rest.starts_with(char::is_whitespace) => (true, rest.trim()),
            _ => (false, lhs),
        };
        if key.is_empty() || key.contains(char::is_whitespace) {
            errors.push(SpecError::at(line, format!("syntax error: bad key '{lhs}'")));
            continue;
        }
        let seen_key = if is_sweep { format!("sweep {key}") } else { key.to_string() };
        if let Some(first) = seen.insert(seen_key, line) {
            errors.push(SpecError::at(line, format!("duplicate key '{lhs}' (first set on line {first})")));
            continue;
        }
        if is_sweep {
            let parsed: Result<Vec<f64>, String> = rhs.split(',').map(|v| parse_f64(v.trim())).collect();
            match parsed {
                Ok(values) => sweeps.push((line, key.to_string(), values)),
                Err(e) => errors.push(SpecError::at(line, format!("type mismatch in sweep '{key}': {e}"))),
            }
            continue;
        }
        match key {
            "controller" => kind_name = Some((line, rhs.to_string())),
            "stimulus_scope" => match rhs {
                "blackboard" => spec.params.stimulus_scope = StimulusScope::Blackboard,
                "local" => spec.params.stimulus_scope = StimulusScope::Local,
                _ => errors.push(SpecError::at(line, format!("stimulus_scope must be 'blackboard' or 'local', got '{rhs}'"))),
            },
            "master_seed" => match rhs.parse::<u64>() {
                Ok(v) => spec.master_seed = v,
                Err(_) => errors.push(SpecError::at(line, format!("type mismatch: master_seed must be an unsigned 64-bit integer, got '{rhs}'"))),
            },
            "runs" => match rhs.parse::<u64>() {
                Ok(v) => spec.runs = v,
                Err(_) => errors.push(SpecError::at(line, format!("type mismatch: runs must be an integer, got '{rhs}'"))),
            },
            "output_dir" => spec.output_dir = Some(PathBuf::from(rhs)),
            "per_robot_column" => match rhs {
                "true" => spec.per_robot_column = true,
                "false" => spec.per_robot_column = false,
                _ => errors.push(SpecError::at(line, format!("type mismatch: per_robot_column must be true or false, got '{rhs}'"))),
            },
            _ => match parse_f64(rhs) {
                Ok(v) => numeric.push((line, key.to_string(), v)),
                Err(e) => errors.push(SpecError::at(line, format!("type mismatch for '{key}': {e}"))),
            },
        }
    }

    if let Some((line, name)) = &kind_name {
        spec.controller = match name.as_str() {
            "adaptive" => ControllerKind::Adaptive,
            "adaptive_multilevel" => ControllerKind::AdaptiveMultilevel,
            "fixed_number" => ControllerKind::FixedNumber { target: 0 },
            "fixed_ratio" => ControllerKind::FixedRatio { ratio: 0.0 },
            other => {
                errors.push(SpecError::at(*line, format!("unknown controller '{other}'")));
                ControllerKind::Adaptive
            }
        };
    }
    for (line, key, v) in &numeric {
        if let Err(e) = set_numeric(&mut spec.world, &mut spec.params, &mut spec.controller, key, *v) {
            errors.push(SpecError::at(*line, e));
        }
    }
    for (line, key, values) in sweeps {
        let mut ok = true;
        for &v in &values {
            let (mut w, mut p, mut k) = (spec.world.clone(), spec.params.clone(), spec.controller);
            if let Err(e) = set_numeric(&mut w, &mut p, &mut k, &key, v) {
                errors.push(SpecError::at(line, format!("sweep '{key}': {e}")));
                ok = false;
                break;
            }
        }
        if ok {
            spec.sweeps.push(SweepAxis { path: key, values });
        }
    }
    if spec.runs == 0 {
        let line = seen.get("runs").copied();
        errors.push(SpecError { line, message: "runs must be >= 1".into() });
    }

    // range checks on every configuration that will actually run
    let line_of = |field: &str| -> Option<usize> {
        let key = if field.starts_with("activity.") || !is_world_field(field) {
            field.to_string()
        } else {
            format!("world.{field}")
        };
        seen.get(&key).copied()
    };
    match spec.points() {
        Ok(points) => {
            let mut reported = std::collections::BTreeSet::new();
            for pt in &points {
                let mut found: Vec<(String, String)> = validate_config(&pt.world)
                    .into_iter()
                    .chain(validate_params(&pt.controller.params))
                    .map(|v| (v.field, v.message))
                    .collect();
                if let ControllerKind::FixedRatio { ratio } = pt.controller.kind {
                    if !(0.0..=1.0).contains(&ratio) {
                        found.push(("ratio".into(), "must lie in [0, 1]".into()));
                    }
                }
                for (field, message) in found {
                    let where_ = if spec.sweeps.is_empty() {
                        String::new()
                    } else {
                        format!(" (sweep point {})", pt.index)
                    };
                    if reported.insert((field.clone(), message.clone())) {
                        errors.push(SpecError {
                            line: line_of(&field),
                            message: format!("{field} {message}{where_}"),
                        });
                    }
                }
            }
        }
        Err(e) => errors.push(SpecError::general(e)),
    }

    if errors.is_empty() {
        Ok(spec)
    } else {
        errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(errors)
    }
}

fn is_world_field(field: &str) -> bool {
    let mut w = WorldConfig::default();
    let mut p = ControllerParams::default();
    let mut k = ControllerKind::Adaptive;
    set_numeric(&mut w, &mut p, &mut k, &format!("world.{field}"), 1.0).is_ok()
}

/// Formats `x` with 12 significant digits in plain decimal notation.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000000000".into();
    }
    let sci = format!("{:.11e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let sign = if x < 0.0 { "-" } else { "" };
    let body = if exp >= 11 {
        format!("{digits}{}", "0".repeat((exp - 11) as usize))
    } else if exp >= 0 {
        let split = exp as usize + 1;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    format!("{sign}{body}")
}

pub const TIMESERIES_HEADER: [&str; 10] = [
    "step",
    "active_foragers",
    "stimulus",
    "mean_threshold",
    "food_available",
    "cum_collected",
    "cum_move",
    "cum_comm",
    "cum_idle",
    "cum_net",
];

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_timeseries<W: Write>(out: W, samples: &[StepSample]) -> io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(TIMESERIES_HEADER)?;
    for s in samples {
        let c = &s.cumulative;
        w.write_record([
            s.step.to_string(),
            s.active_foragers.to_string(),
            format_float(s.stimulus),
            format_float(s.mean_threshold),
            s.food_available.to_string(),
            format_float(c.collected.units()),
            format_float(c.move_spent.units()),
            format_float(c.comm_spent.units()),
            format_float(c.idle_spent.units()),
            format_float(s.cum_net().units()),
        ])?;
    }
    w.flush()
}

pub fn summary_header(spec: &ExperimentSpec) -> Vec<String> {
    let mut h: Vec<String> = ["run_id", "seed", "controller"].map(String::from).to_vec();
    h.extend(spec.sweeps.iter().map(|a| a.path.clone()));
    h.extend(
        ["trips", "successes", "failures", "collected", "spent_total", "net_energy", "efficiency"]
            .map(String::from),
    );
    if spec.per_robot_column {
        h.push("net_per_robot".into());
    }
    h
}

fn summary_row(spec: &ExperimentSpec, point: &SweepPoint, r: &RunResult) -> Vec<String> {
    let mut row = vec![r.run_id.clone(), r.seed.to_string(), r.controller.to_string()];
    row.extend(point.values.iter().map(|&v| format_float(v)));
    row.extend([
        r.trips.to_string(),
        r.successes.to_string(),
        r.failures.to_string(),
        format_float(r.collected.units()),
        format_float(r.spent_total().units()),
        format_float(r.net_energy.units()),
        format_float(r.efficiency),
    ]);
    if spec.per_robot_column {
        row.push(format_float(r.net_per_robot()));
    }
    row
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error("run {run_id} failed: {source}")]
    Run { run_id: String, source: EngineError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExecError + '_ {
    move |source| ExecError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn timeseries_name(point: usize, run: u64) -> String {
    format!("timeseries_{point}_{run}.csv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecReport {
    pub points: usize,
    pub runs: u64,
    pub files: Vec<PathBuf>,
}

/// Runs every (point, run) pair on `workers` threads. Each run writes its
/// own time series; summary rows are committed in (point, run) order, up to
/// the first failed run.
pub fn execute(spec: &ExperimentSpec, out_dir: &Path, workers: usize) -> Result<ExecReport, ExecError> {
    let points = spec.points().map_err(ExecError::Spec)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (0..spec.runs).map(move |r| (p, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExecError::Pool(e.to_string()))?;

    let outcomes: Vec<Result<(RunResult, PathBuf), ExecError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, r)| {
                let pt = &points[p];
                let seed = spec.run_seed(p, r);
                let run_id = format!("p{p}_r{r}");
                let out = run(&pt.world, &pt.controller, seed, pt.world.max_steps).map_err(|source| {
                    ExecError::Run {
                        run_id: run_id.clone(),
                        source,
                    }
                })?;
                let path = out_dir.join(timeseries_name(p, r));
                let file = fs::File::create(&path).map_err(io_err(&path))?;
                write_timeseries(io::BufWriter::new(file), &out.samples).map_err(io_err(&path))?;
                let mut result = out.result;
                result.run_id = run_id;
                Ok((result, path))
            })
            .collect()
    });

    let summary_path = out_dir.join("summary.csv");
    let file = fs::File::create(&summary_path).map_err(io_err(&summary_path))?;
    let mut w = csv_writer(io::BufWriter::new(file));
    let to_io = |e: csv::Error| ExecError::Io {
        path: summary_path.clone(),
        source: e.into(),
    };
    w.write_record(summary_header(spec)).map_err(to_io)?;
    let mut files = Vec::with_capacity(jobs.len() + 1);
    let mut failure = None;
    for ((p, _), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok((result, path)) => {
                w.write_record(summary_row(spec, &points[*p], &result)).map_err(to_io)?;
                files.push(path);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    w.flush().map_err(io_err(&summary_path))?;
    files.push(summary_path.clone());
    match failure {
        Some(e) => Err(e),
        None => Ok(ExecReport {
            points: points.len(),
            runs: spec.runs,
            files,
        }),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlotError {
    #[error("unknown field '{0}'")]
    UnknownField(String),
    #[error("row {row}: field '{field}' is not numeric: '{value}'")]
    NotNumeric { row: usize, field: String, value: String },
    #[error("malformed summary: {0}")]
    Malformed(String),
}

/// Groups summary rows by `axis` and reports the mean and sample standard
/// deviation of `value` per group, ascending by axis.
pub fn emit_plot_data(summary_csv: &str, axis: &str, value: &str) -> Result<String, PlotError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(summary_csv.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| PlotError::Malformed(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PlotError::UnknownField(name.to_string()))
    };
    let (ai, vi) = (col(axis)?, col(value)?);
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| PlotError::Malformed(e.to_string()))?;
        let num = |i: usize, field: &str| {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>().map_err(|_| PlotError::NotNumeric {
                row: row + 1,
                field: field.to_string(),
                value: s.to_string(),
            })
        };
        let (a, v) = (num(ai, axis)?, num(vi, value)?);
        match groups.iter_mut().find(|(k, _)| k.to_bits() == a.to_bits()) {
            Some((_, vs)) => vs.push(v),
            None => groups.push((a, vec![v])),
        }
    }
    groups.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        let io = |e: csv::Error| PlotError::Malformed(e.to_string());
        w.write_record([axis.to_string(), format!("{value}_mean"), format!("{value}_std")])
            .map_err(io)?;
        for (a, mut vs) in groups {
            vs.sort_by(f64::total_cmp);
            let s = SampleStats::from_values(&vs).expect("groups are nonempty");
            w.write_record([format_float(a), format_float(s.mean), format_float(s.std)])
                .map_err(io)?;
        }
        w.flush().map_err(|e| PlotError::Malformed(e.to_string()))?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
