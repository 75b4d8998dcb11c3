//! Subcommand orchestration: run a configured computation, write CSV
//! tables and a JSON manifest (resolved configuration, versions, seed,
//! results) that can itself be used as configuration for a rerun.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::control::{solve_ocp_reference, solve_rocp, OptimizeReport};
use crate::error::{Error, Result};
use crate::harness::{emit_convergence_report, fmt, run_sweep};
use crate::invariants::check_all;
use crate::regularizer::BLEND_DELTA;
use crate::solver::{certify, solve_state, solve_state_regularized};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    SolveState,
    SolveRocp,
    SolveOcp,
    Sweep,
    CheckInvariants,
}

impl Subcommand {
    pub const ALL: [Subcommand; 5] =
        [Subcommand::SolveState, Subcommand::SolveRocp, Subcommand::SolveOcp, Subcommand::Sweep, Subcommand::CheckInvariants];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::SolveState => "solve-state",
            Subcommand::SolveRocp => "solve-rocp",
            Subcommand::SolveOcp => "solve-ocp",
            Subcommand::Sweep => "sweep",
            Subcommand::CheckInvariants => "check-invariants",
        }
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown subcommand {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// False when a check-invariants suite or a sweep verdict failed.
    pub success: bool,
    pub files: Vec<PathBuf>,
    pub manifest: Value,
}

/// Output directory of a run (`out` when unset).
pub fn output_dir(config: &RunConfig) -> PathBuf {
    config.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

pub fn run(command: Subcommand, config: &RunConfig) -> Result<RunOutcome> {
    let dir = output_dir(config);
    fs::create_dir_all(&dir)?;
    let csv = config.output.formats.iter().any(|f| f == "csv");
    let json_out = config.output.formats.iter().any(|f| f == "json");
    let mut files = Vec::new();
    let (success, results) = match command {
        Subcommand::SolveState => {
            let disc = config.discretization()?;
            let data = config.sample()?;
            let kappa = config.state_control()?;
            let opts = &config.solver.options;
            let report = if config.regularization.regularize_state {
                solve_state_regularized(&disc, &data.f, &kappa, &config.reg_params()?, opts, None)?
            } else {
                solve_state(&disc, &data.f, &kappa, opts, None)?
            };
            let report =
                certify(&disc, report, &data.f, &kappa, opts, config.solver.probes, config.solver.seed, config.solver.scaling_check)?;
            if csv {
                let nodes = disc.grid.interior_nodes();
                files.push(write_table(
                    &dir.join("state.csv"),
                    &["j", "x", "u"],
                    nodes.iter().zip(report.u.iter()).enumerate().map(|(j, (x, u))| vec![(j + 1).to_string(), fmt(*x), fmt(*u)]),
                )?);
                files.push(write_table(
                    &dir.join("history.csv"),
                    &["iteration", "residual", "energy"],
                    report.history.iter().map(|r| vec![r.iteration.to_string(), fmt(r.residual), fmt(r.energy)]),
                )?);
            }
            let passed = report.apriori_flags.as_ref().is_none_or(|f| f.all_passed());
            (true, json!({ "state": report, "kappa": kappa.values, "apriori_passed": passed }))
        }
        Subcommand::SolveRocp | Subcommand::SolveOcp => {
            let regularized = command == Subcommand::SolveRocp;
            let problem = config.control_problem(regularized)?;
            let report = if regularized { solve_rocp(&problem, None)? } else { solve_ocp_reference(&problem, None)? };
            if csv {
                files.extend(write_control_tables(&dir, config, &report)?);
            }
            (true, json!({ "optimization": report }))
        }
        Subcommand::Sweep => {
            let problem = config.control_problem(false)?;
            let sweep = run_sweep(&problem, &config.schedule()?, &config.sweep)?;
            if csv || json_out {
                files.extend(emit_convergence_report(&sweep, &dir)?);
            }
            (sweep.passed, json!({ "sweep": sweep }))
        }
        Subcommand::CheckInvariants => {
            let problem = config.control_problem(true)?;
            let checks = check_all(&problem, config.solver.probes, config.solver.seed)?;
            if csv {
                files.push(write_table(
                    &dir.join("invariants.csv"),
                    &["name", "passed", "detail"],
                    checks.iter().map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()]),
                )?);
            }
            let passed = checks.iter().all(|c| c.passed);
            (passed, json!({ "invariants": checks, "all_passed": passed }))
        }
    };
    let file_names: Vec<String> =
        files.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": command.name(),
        "seed": config.solver.seed,
        "blend_delta": BLEND_DELTA,
        "success": success,
        "config": config.resolved()?,
        "results": results,
        "files": file_names,
    });
    if json_out {
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        files.push(path);
    }
    Ok(RunOutcome { success, files, manifest })
}

fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(path.to_path_buf())
}

fn write_control_tables(dir: &Path, config: &RunConfig, report: &OptimizeReport) -> Result<Vec<PathBuf>> {
    let disc = config.discretization()?;
    let kappa = &report.kappa_star;
    let offsets = disc.diff.offsets();
    let nodes = disc.grid.interior_nodes();
    Ok(vec![
        write_table(
            &dir.join("control.csv"),
            &["k", "offset", "kappa", "lower", "upper"],
            (0..kappa.len()).map(|k| {
                vec![(k + 1).to_string(), fmt(offsets[k]), fmt(kappa.values[k]), fmt(kappa.lower[k]), fmt(kappa.upper[k])]
            }),
        )?,
        write_table(
            &dir.join("state.csv"),
            &["j", "x", "u"],
            nodes.iter().zip(report.u_star.iter()).enumerate().map(|(j, (x, u))| vec![(j + 1).to_string(), fmt(*x), fmt(*u)]),
        )?,
        write_table(
            &dir.join("objective_history.csv"),
            &["iteration", "objective", "tracking", "tv", "step"],
            report.history.iter().map(|r| vec![r.iteration.to_string(), fmt(r.objective), fmt(r.tracking), fmt(r.tv), fmt(r.step)]),
        )?,
    ])
}

/// Machine-readable description of a failed run.
pub fn error_json(error: &Error) -> Value {
    let (kind, details) = match error {
        Error::Config(_) => ("config", Vec::new()),
        Error::InvalidArgument(_) => ("invalid-argument", Vec::new()),
        Error::DimensionMismatch { .. } => ("dimension-mismatch", Vec::new()),
        Error::NonConvergence { .. } => ("non-convergence", Vec::new()),
        Error::Validation(v) => ("validation", v.clone()),
        Error::Io(_) => ("io", Vec::new()),
        Error::Json(_) => ("json", Vec::new()),
        Error::Csv(_) => ("csv", Vec::new()),
    };
    json!({ "error": { "kind": kind, "message": error.to_string(), "details": details } })
}

/// Process exit code for a failed run.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Validation(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => 2,
        Error::NonConvergence { .. } => 3,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => 4,
    }
}
