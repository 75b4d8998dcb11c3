//! Run configuration: a TOML file (or an emitted JSON manifest) describing
//! the problem, its data, the regularization, solver and optimizer options.
//!
//! Function-valued data may be a constant, an expression over `x`, an array
//! or a CSV file. State data (`f`, `xi`) is sampled at the interior nodes,
//! control data (`lower`, `upper`, `kappa`) at the pair offsets `d_k = k*h`.

use std::fs;
use std::path::{Path, PathBuf};

use fasteval::{Compiler, Evaler, Parser, Slab};
use serde::{Deserialize, Serialize};

use crate::control::{ControlProblem, OptimizerOptions};
use crate::error::{Error, Result};
use crate::forms::{ControlField, Discretization};
use crate::grid::{build_grid, FracParams, Variant};
use crate::harness::{default_t, Schedule, SweepOptions};
use crate::regularizer::RegParams;
use crate::solver::SolveOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemBlock {
    pub a: f64,
    pub b: f64,
    pub m: usize,
    pub s: f64,
    pub p: f64,
    pub variant: Variant,
    pub r_trunc: Option<f64>,
    pub c_norm: f64,
    /// Kernel value beyond the truncation radius (full variant); defaults to
    /// the value on the longest offset.
    pub kappa_far: Option<f64>,
}

impl Default for ProblemBlock {
    fn default() -> Self {
        ProblemBlock { a: 0.0, b: 1.0, m: 8, s: 0.75, p: 3.0, variant: Variant::Regional, r_trunc: None, c_norm: 1.0, kappa_far: None }
    }
}

/// A sampled function: constant, expression over `x`, explicit values or a
/// CSV file (last column of every numeric row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Constant(f64),
    Values(Vec<f64>),
    Csv { csv: PathBuf },
    Expression(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataBlock {
    pub f: DataSpec,
    pub xi: DataSpec,
    pub lower: DataSpec,
    pub upper: DataSpec,
    pub alpha: f64,
    /// Control used by `solve-state`; the midpoint of the bounds if absent.
    pub kappa: Option<DataSpec>,
}

impl Default for DataBlock {
    fn default() -> Self {
        DataBlock {
            f: DataSpec::Constant(1.0),
            xi: DataSpec::Constant(0.0),
            lower: DataSpec::Constant(0.5),
            upper: DataSpec::Constant(2.0),
            alpha: 0.5,
            kappa: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationBlock {
    pub epsilon: f64,
    pub n: u64,
    /// Explicit `[eps, n]` schedule for sweeps; geometric otherwise.
    pub schedule: Option<Vec<(f64, u64)>>,
    /// Length of the geometric schedule `eps_k = 4^-k`, `n_k = 2^k`.
    pub count: usize,
    /// Exponent of the state distance in sweeps.
    pub t: Option<f64>,
    /// Whether `solve-state` solves the regularized equation.
    pub regularize_state: bool,
}

impl Default for RegularizationBlock {
    fn default() -> Self {
        RegularizationBlock { epsilon: 1e-3, n: 100, schedule: None, count: 6, t: None, regularize_state: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverBlock {
    #[serde(flatten)]
    pub options: SolveOptions,
    pub seed: u64,
    /// Minty probes per certified solve.
    pub probes: usize,
    /// Adds the force-scaling check to `solve-state` certificates.
    pub scaling_check: bool,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock { options: SolveOptions::default(), seed: 0, probes: 200, scaling_check: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: None, formats: vec!["csv".into(), "json".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemBlock,
    pub data: DataBlock,
    pub regularization: RegularizationBlock,
    pub solver: SolverBlock,
    pub optimizer: OptimizerOptions,
    pub sweep: SweepOptions,
    pub output: OutputBlock,
    /// Directory against which relative CSV paths resolve.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub n: Option<u64>,
    pub p: Option<f64>,
    pub s: Option<f64>,
    pub m: Option<usize>,
    pub variant: Option<Variant>,
    pub regularize_state: bool,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.output.dir = Some(v.clone());
        }
        if let Some(v) = o.seed {
            self.solver.seed = v;
        }
        if let Some(v) = o.epsilon {
            self.regularization.epsilon = v;
        }
        if let Some(v) = o.n {
            self.regularization.n = v;
        }
        if o.regularize_state {
            self.regularization.regularize_state = true;
        }
        if let Some(v) = o.p {
            self.problem.p = v;
        }
        if let Some(v) = o.s {
            self.problem.s = v;
        }
        if let Some(v) = o.m {
            self.problem.m = v;
        }
        if let Some(v) = o.variant {
            self.problem.variant = v;
        }
    }

    /// Every problem with the configuration, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let pb = &self.problem;
        let fp = FracParams { s: pb.s, p: pb.p, c_norm: pb.c_norm, variant: pb.variant };
        out.extend(fp.violations());
        if let Err(e) = build_grid(pb.a, pb.b, pb.m) {
            out.push(e.to_string());
        }
        match (pb.variant, pb.r_trunc) {
            (Variant::Full, None) => out.push("full variant: truncation radius required (problem.r_trunc)".into()),
            (Variant::Full, Some(r)) if !(r > pb.b - pb.a) => {
                out.push(format!("problem.r_trunc must exceed b - a = {} (got {r})", pb.b - pb.a))
            }
            (Variant::Regional, Some(_)) => out.push("problem.r_trunc only applies to the full variant".into()),
            _ => {}
        }
        if let Some(kf) = pb.kappa_far {
            if !(kf > 0.0) {
                out.push(format!("problem.kappa_far must be positive (got {kf})"));
            }
        }
        if out.is_empty() {
            match self.sample() {
                Ok(data) => out.extend(data_violations(&data, self.data.alpha)),
                Err(Error::Validation(v)) => out.extend(v),
                Err(e) => out.push(e.to_string()),
            }
        }
        let rb = &self.regularization;
        if let Err(e) = RegParams::new(rb.epsilon, rb.n) {
            out.push(format!("regularization: {e}"));
        }
        if let Err(e) = self.schedule() {
            match e {
                Error::Validation(v) => out.extend(v.into_iter().map(|m| format!("regularization: {m}"))),
                e => out.push(format!("regularization: {e}")),
            }
        }
        if let Err(e) = self.solver.options.validate() {
            out.push(format!("solver: {e}"));
        }
        if self.solver.probes == 0 {
            out.push("solver.probes must be ≥ 1".into());
        }
        let op = &self.optimizer;
        for (name, v) in [("step", op.step), ("max_step", op.max_step), ("prox_weight", op.prox_weight), ("fd_step", op.fd_step), ("tol", op.tol), ("min_step", op.min_step)] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(format!("optimizer.{name} must be positive (got {v})"));
            }
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                out.push(format!("output.formats: unknown format {f:?} (csv, json)"));
            }
        }
        out
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let rb = &self.regularization;
        let t = rb.t.unwrap_or_else(|| default_t(self.problem.s, self.problem.p));
        let mut schedule = match &rb.schedule {
            Some(points) => Schedule { points: points.clone(), t },
            None => Schedule::geometric(rb.count, self.problem.s, self.problem.p).unwrap_or(Schedule { points: Vec::new(), t }),
        };
        schedule.t = t;
        schedule.validate(self.problem.s)?;
        Ok(schedule)
    }

    pub fn reg_params(&self) -> Result<RegParams> {
        RegParams::new(self.regularization.epsilon, self.regularization.n)
    }

    pub fn discretization(&self) -> Result<Discretization> {
        let pb = &self.problem;
        let grid = build_grid(pb.a, pb.b, pb.m)?;
        let fp = FracParams::new(pb.s, pb.p, pb.c_norm, pb.variant)?;
        let mut disc = Discretization::new(grid, fp, pb.r_trunc)?;
        disc.set_kappa_far(pb.kappa_far);
        Ok(disc)
    }

    /// All data sampled on the grid.
    pub fn sample(&self) -> Result<SampledData> {
        let disc = self.discretization()?;
        let nodes = disc.grid.interior_nodes();
        let offsets = disc.diff.offsets();
        let mut errors = Vec::new();
        let mut take = |name: &str, spec: &DataSpec, at: &[f64]| match sample(spec, at, &self.base_dir) {
            Ok(v) => v,
            Err(e) => {
                errors.push(format!("data.{name}: {e}"));
                Vec::new()
            }
        };
        let f = take("f", &self.data.f, &nodes);
        let xi = take("xi", &self.data.xi, &nodes);
        let lower = take("lower", &self.data.lower, &offsets);
        let upper = take("upper", &self.data.upper, &offsets);
        let kappa = self.data.kappa.as_ref().map(|k| take("kappa", k, &offsets));
        if errors.is_empty() {
            Ok(SampledData { f, xi, lower, upper, kappa })
        } else {
            Err(Error::Validation(errors))
        }
    }

    /// Configuration with every data block replaced by its sampled values,
    /// independent of the working directory and of the output location.
    pub fn resolved(&self) -> Result<RunConfig> {
        let data = self.sample()?;
        let mut out = self.clone();
        out.data.f = DataSpec::Values(data.f);
        out.data.xi = DataSpec::Values(data.xi);
        out.data.lower = DataSpec::Values(data.lower);
        out.data.upper = DataSpec::Values(data.upper);
        out.data.kappa = data.kappa.map(DataSpec::Values);
        out.output.dir = None;
        Ok(out)
    }

    pub fn control_problem(&self, regularized: bool) -> Result<ControlProblem> {
        let data = self.sample()?;
        let problem = ControlProblem {
            disc: self.discretization()?,
            f: data.f,
            xi: data.xi,
            lower: data.lower,
            upper: data.upper,
            alpha: self.data.alpha,
            regularization: if regularized { Some(self.reg_params()?) } else { None },
            optimizer: self.optimizer.clone(),
            solver: self.solver.options.clone(),
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Control for state solves: configured values or the midpoint of the bounds.
    pub fn state_control(&self) -> Result<ControlField> {
        let data = self.sample()?;
        match data.kappa {
            Some(values) => ControlField::new(values, data.lower, data.upper, self.data.alpha),
            None => ControlField::midpoint(data.lower, data.upper, self.data.alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledData {
    pub f: Vec<f64>,
    pub xi: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kappa: Option<Vec<f64>>,
}

fn data_violations(d: &SampledData, alpha: f64) -> Vec<String> {
    let mut out = Vec::new();
    if !(alpha > 0.0) {
        out.push(format!("data.alpha must be positive (got {alpha})"));
    }
    for (k, (&lo, &hi)) in d.lower.iter().zip(&d.upper).enumerate() {
        if !(alpha <= lo && lo <= hi) {
            out.push(format!("offset {}: need alpha ≤ lower ≤ upper (alpha={alpha}, lower={lo}, upper={hi})", k + 1));
        }
    }
    if let Some(kappa) = &d.kappa {
        for (k, ((&v, &lo), &hi)) in kappa.iter().zip(&d.lower).zip(&d.upper).enumerate() {
            if !(lo <= v && v <= hi) {
                out.push(format!("data.kappa at offset {}: {v} outside [{lo}, {hi}]", k + 1));
            }
        }
    }
    out
}

/// Samples `spec` at `at`.
pub fn sample(spec: &DataSpec, at: &[f64], base: &Path) -> Result<Vec<f64>> {
    let values = match spec {
        DataSpec::Constant(c) => vec![*c; at.len()],
        DataSpec::Values(v) => v.clone(),
        DataSpec::Csv { csv } => read_column(&base.join(csv))?,
        DataSpec::Expression(e) => evaluate(e, at)?,
    };
    if values.len() != at.len() {
        return Err(Error::DimensionMismatch { expected: at.len(), got: values.len() });
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite value {bad}")));
    }
    Ok(values)
}

/// Last column of every row whose last field parses as a number; a header
/// row is skipped.
pub fn read_column(path: &Path) -> Result<Vec<f64>> {
    if !path.is_file() {
        return Err(Error::Config(format!("file not found: {}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let Some(last) = record.iter().next_back() else { continue };
        match last.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if row == 0 => {}
            Err(_) => return Err(Error::Config(format!("{}: row {} is not numeric", path.display(), row + 1))),
        }
    }
    Ok(out)
}

/// Evaluates an expression in `x` at every point. Besides the arithmetic
/// operators and `sin`, `cos`, `abs`, `min`, `max`, `pi()`, `e()` it knows
/// `exp`, `sqrt`, `ln` and the unit step `step(t)` (1 for `t ≥ 0`).
pub fn evaluate(expression: &str, at: &[f64]) -> Result<Vec<f64>> {
    let mut slab = Slab::new();
    let compiled = Parser::new()
        .parse(expression, &mut slab.ps)
        .map_err(|e| Error::Config(format!("cannot parse {expression:?}: {e}")))?
        .from(&slab.ps)
        .compile(&slab.ps, &mut slab.cs);
    at.iter()
        .map(|&x| {
            let mut names = |name: &str, args: Vec<f64>| -> Option<f64> {
                match (name, args.as_slice()) {
                    ("x", []) => Some(x),
                    ("exp", [t]) => Some(t.exp()),
                    ("sqrt", [t]) => Some(t.sqrt()),
                    ("ln", [t]) => Some(t.ln()),
                    ("step", [t]) => Some(if *t >= 0.0 { 1.0 } else { 0.0 }),
                    _ => None,
                }
            };
            compiled
                .eval(&slab, &mut names)
                .map_err(|e| Error::Config(format!("cannot evaluate {expression:?} at x={x}: {e}")))
        })
        .collect()
}

/// Reads a TOML configuration, or a JSON manifest whose `config` entry is
/// reused, and validates it after applying `overrides`.
pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse_str(&text, path.extension().is_some_and(|e| e == "json"))?;
    config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    finish(config, overrides)
}

pub fn parse_str(text: &str, json: bool) -> Result<RunConfig> {
    if json || text.trim_start().starts_with('{') {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let config = value.get("config").cloned().unwrap_or(value);
        serde_json::from_value(config).map_err(|e| Error::Config(format!("manifest config: {e}")))
    } else {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Applies overrides and validates.
pub fn finish(mut config: RunConfig, overrides: &Overrides) -> Result<RunConfig> {
    config.apply(overrides);
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(Error::Validation(violations))
    }
}
