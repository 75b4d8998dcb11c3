//! Sweeps of the regularized control problem along an `(eps, n)` schedule,
//! trend verdicts against the unregularized reference, and report files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{solve_ocp_reference, solve_rocp, tv_seminorm, ControlProblem, OptimizeReport};
use crate::error::{Error, Result};
use crate::forms::{ControlField, LevelThreshold};
use crate::regularizer::RegParams;

/// `(eps_k, n_k)` pairs with eps strictly decreasing and n strictly
/// increasing, plus the exponent `t` of the state distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub points: Vec<(f64, u64)>,
    pub t: f64,
}

impl Schedule {
    pub fn new(points: Vec<(f64, u64)>, t: f64, s: f64) -> Result<Self> {
        let schedule = Schedule { points, t };
        schedule.validate(s)?;
        Ok(schedule)
    }

    /// `eps_k = 4^-k`, `n_k = 2^k` for `k = 1..=count`.
    pub fn geometric(count: usize, s: f64, p: f64) -> Result<Self> {
        let points = (1..=count as i32).map(|k| (4f64.powi(-k), 1u64 << k)).collect();
        Self::new(points, default_t(s, p), s)
    }

    pub fn standard(s: f64, p: f64) -> Result<Self> {
        Self::geometric(6, s, p)
    }

    pub fn validate(&self, s: f64) -> Result<()> {
        let mut problems = Vec::new();
        if self.points.is_empty() {
            problems.push("schedule is empty".to_string());
        }
        for &(eps, n) in &self.points {
            if let Err(e) = RegParams::new(eps, n) {
                problems.push(e.to_string());
            }
        }
        for w in self.points.windows(2) {
            if !(w[1].0 < w[0].0) {
                problems.push(format!("eps must decrease strictly ({} then {})", w[0].0, w[1].0));
            }
            if !(w[1].1 > w[0].1) {
                problems.push(format!("n must increase strictly ({} then {})", w[0].1, w[1].1));
            }
        }
        let lower = if s > 0.5 { 0.5 } else { 0.0 };
        if !(self.t > lower && self.t <= s) {
            problems.push(format!("t must satisfy {lower} < t ≤ s = {s} (got {})", self.t));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Short hex digest identifying the schedule in file names.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for &(eps, n) in &self.points {
            hasher.update(eps.to_bits().to_le_bytes());
            hasher.update(n.to_le_bytes());
        }
        hasher.update(self.t.to_bits().to_le_bytes());
        let digest = hasher.finalize();
        digest[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Midpoint of `(1/2, s]` when `p > 2`, `s` itself when `p = 2` or `s ≤ 1/2`.
pub fn default_t(s: f64, p: f64) -> f64 {
    if p == 2.0 || s <= 0.5 {
        s
    } else {
        0.5 * (0.5 + s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub k: usize,
    pub epsilon: f64,
    pub n: u64,
    pub kappa: Vec<f64>,
    pub u: Vec<f64>,
    pub objective: f64,
    pub tracking: f64,
    pub tv: f64,
    /// Regularized energy `‖u‖^p_{eps,n,κ,s,p}`.
    pub quasi_norm_energy: f64,
    /// Unweighted `|u|^p_{W^{s,p}}`.
    pub gagliardo_energy: f64,
    pub l1_kappa_gap: f64,
    pub wt2_state_gap: f64,
    pub tv_gap: f64,
    pub energy_gap: f64,
    pub objective_gap: f64,
    pub level_set_measure: f64,
    pub level_set_energy: f64,
    pub outer_iterations: usize,
    pub inner_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub k: usize,
    pub epsilon: f64,
    pub n: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    /// `ocp` (unregularized optimization) or `first-point` (p = 2).
    pub source: String,
    pub kappa: Vec<f64>,
    pub u: Vec<f64>,
    pub objective: f64,
    pub tv: f64,
    /// κ-weighted p-energy of the reference state.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    /// Whether the verdict counts towards the overall result.
    pub enforced: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    /// Bound on the final objective gap.
    pub objective_tol: f64,
    /// Bound on the final level-set measure and energy.
    pub level_set_tol: f64,
    /// Absolute rise tolerated between consecutive gaps in a trend.
    pub trend_slack: f64,
    pub level_threshold: LevelThreshold,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { objective_tol: 1e-3, level_set_tol: 1e-6, trend_slack: 1e-10, level_threshold: LevelThreshold::Saturation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub p: f64,
    pub s: f64,
    pub m: usize,
    pub schedule: Schedule,
    pub options: SweepOptions,
    pub reference: Reference,
    pub records: Vec<SweepRecord>,
    pub failures: Vec<SweepFailure>,
    pub verdicts: Vec<Verdict>,
    pub passed: bool,
}

impl Sweep {
    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn gaps(&self, select: impl Fn(&SweepRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(select).collect()
    }
}

/// Solves the regularized problem at every schedule point, warm-starting the
/// control from the previous point, and compares with the reference.
pub fn run_sweep(problem: &ControlProblem, schedule: &Schedule, options: &SweepOptions) -> Result<Sweep> {
    problem.validate()?;
    let fp = problem.disc.params;
    schedule.validate(fp.s)?;
    let collapse = fp.p == 2.0;
    let pinned = problem.lower == problem.upper;
    let mut runs: Vec<(usize, RegParams, OptimizeReport)> = Vec::new();
    let mut failures = Vec::new();
    let mut warm: Option<ControlField> = None;
    for (k, &(eps, n)) in schedule.points.iter().enumerate() {
        let rp = RegParams::new(eps, n)?;
        let regularized = problem.with_regularization(Some(rp));
        // at p = 2 every point is the same problem; a common start keeps them identical
        let start = if collapse { None } else { warm.as_ref() };
        match solve_rocp(&regularized, start) {
            Ok(report) => {
                warm = Some(report.kappa_star.clone());
                runs.push((k, rp, report));
            }
            Err(e) => failures.push(SweepFailure { k, epsilon: eps, n, message: e.to_string() }),
        }
    }
    if runs.is_empty() {
        return Err(Error::NonConvergence { iterations: schedule.points.len(), residual: f64::NAN });
    }

    let reference = if collapse {
        let (_, _, first) = &runs[0];
        reference_from(problem, "first-point", first)?
    } else {
        let report = solve_ocp_reference(problem, None)?;
        reference_from(problem, "ocp", &report)?
    };
    let ref_kappa = problem.initial_control()?.with_values(reference.kappa.clone());

    let h = problem.disc.h();
    let mut records = Vec::with_capacity(runs.len());
    for (k, rp, report) in &runs {
        let u = &report.u_star.0;
        let kappa = &report.kappa_star;
        let diff: Vec<f64> = u.iter().zip(&reference.u).map(|(a, b)| a - b).collect();
        let quasi = problem.disc.quasi_norm_power(u, kappa, rp)?;
        let level = problem.disc.level_set(u, rp.n, fp.s, options.level_threshold)?;
        records.push(SweepRecord {
            k: *k,
            epsilon: rp.epsilon,
            n: rp.n,
            kappa: kappa.values.clone(),
            u: u.clone(),
            objective: report.objective_value,
            tracking: report.tracking_value,
            tv: report.tv_value,
            quasi_norm_energy: quasi,
            gagliardo_energy: problem.disc.gagliardo_seminorm(u, fp.s, fp.p)?.powf(fp.p),
            l1_kappa_gap: kappa.values.iter().zip(&ref_kappa.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * h,
            wt2_state_gap: problem.disc.gagliardo_seminorm(&diff, schedule.t, 2.0)?,
            tv_gap: (report.tv_value - reference.tv).abs(),
            energy_gap: (quasi - reference.energy).abs(),
            objective_gap: (report.objective_value - reference.objective).abs(),
            level_set_measure: level.measure,
            level_set_energy: problem.disc.level_set_energy(u, kappa, rp, options.level_threshold)?,
            outer_iterations: report.outer_iterations,
            inner_solves: report.inner_solves,
        });
    }

    let mut sweep = Sweep {
        p: fp.p,
        s: fp.s,
        m: problem.disc.m(),
        schedule: schedule.clone(),
        options: options.clone(),
        reference,
        records,
        failures,
        verdicts: Vec::new(),
        passed: false,
    };
    let enough = 2 * sweep.records.len() >= schedule.points.len();
    let slack = options.trend_slack;
    let mut verdicts = vec![Verdict {
        name: "points".into(),
        passed: enough,
        enforced: true,
        detail: format!("{} of {} schedule points solved", sweep.records.len(), schedule.points.len()),
    }];
    verdicts.push(trend_verdict("kappa_l1", &sweep.gaps(|r| r.l1_kappa_gap), slack, None, false));
    verdicts.push(trend_verdict("state_wt2", &sweep.gaps(|r| r.wt2_state_gap), slack, None, pinned));
    verdicts.push(trend_verdict("tv", &sweep.gaps(|r| r.tv_gap), slack, None, false));
    verdicts.push(trend_verdict("energy", &sweep.gaps(|r| r.energy_gap), slack, None, false));
    verdicts.push(trend_verdict("objective", &sweep.gaps(|r| r.objective_gap), slack, Some(options.objective_tol), true));
    verdicts.push(check_level_set_vanishing(&sweep));
    sweep.passed = verdicts.iter().filter(|v| v.enforced).all(|v| v.passed);
    sweep.verdicts = verdicts;
    Ok(sweep)
}

fn reference_from(problem: &ControlProblem, source: &str, report: &OptimizeReport) -> Result<Reference> {
    Ok(Reference {
        source: source.into(),
        kappa: report.kappa_star.values.clone(),
        u: report.u_star.0.clone(),
        objective: report.objective_value,
        tv: tv_seminorm(&report.kappa_star),
        energy: problem.disc.kappa_energy(&report.u_star, &report.kappa_star)?,
    })
}

/// Last half of a sequence (at least its final two entries).
fn tail(gaps: &[f64]) -> &[f64] {
    let len = gaps.len();
    let keep = (len - len / 2).max(2).min(len);
    &gaps[len - keep..]
}

fn nonincreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn trend_verdict(name: &str, gaps: &[f64], slack: f64, bound: Option<f64>, enforced: bool) -> Verdict {
    let recent = tail(gaps);
    let trend = nonincreasing(recent, slack);
    let last = gaps.last().copied().unwrap_or(f64::NAN);
    let within = bound.is_none_or(|b| last <= b);
    let mut detail = format!("gaps over last half {}", list(recent));
    if let Some(b) = bound {
        detail.push_str(&format!(", final {last:.3e} (bound {b:.1e})"));
    }
    Verdict { name: name.into(), passed: trend && within && last.is_finite(), enforced, detail }
}

/// Level-set measure and level-set energy nonincreasing over the last half
/// of the sweep and below the configured bound at its end.
pub fn check_level_set_vanishing(sweep: &Sweep) -> Verdict {
    let slack = sweep.options.trend_slack;
    let bound = sweep.options.level_set_tol;
    let measure = sweep.gaps(|r| r.level_set_measure);
    let energy = sweep.gaps(|r| r.level_set_energy);
    let ok = |g: &[f64]| !g.is_empty() && nonincreasing(tail(g), slack) && g[g.len() - 1] <= bound;
    // at p = 2 the level-set energy carries no degenerate weight; only the measure matters
    let passed = ok(&measure) && (sweep.p == 2.0 || ok(&energy));
    Verdict {
        name: "level_sets".into(),
        passed,
        enforced: true,
        detail: format!("measure {}, energy {} (bound {bound:.1e})", list(tail(&measure)), list(tail(&energy))),
    }
}

/// Writes the sweep table, plot data and verdict summary into `dir`.
pub fn emit_convergence_report(sweep: &Sweep, dir: &Path) -> Result<Vec<PathBuf>> {
    if sweep.records.is_empty() {
        return Err(Error::InvalidArgument("sweep has no records".into()));
    }
    fs::create_dir_all(dir)?;
    let stem = format!("sweep_p{}_s{}_m{}_{}", sweep.p, sweep.s, sweep.m, sweep.schedule.hash());
    let csv_path = dir.join(format!("{stem}.csv"));
    let plot_path = dir.join(format!("{stem}_gaps.dat"));
    let json_path = dir.join(format!("{stem}_verdicts.json"));

    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&csv_path)?;
    let kdim = sweep.records[0].kappa.len();
    let mdim = sweep.records[0].u.len();
    let mut header: Vec<String> = [
        "k", "epsilon", "n", "objective", "tracking", "tv", "quasi_norm_energy", "gagliardo_energy", "l1_kappa_gap",
        "wt2_state_gap", "tv_gap", "energy_gap", "objective_gap", "level_set_measure", "level_set_energy",
        "outer_iterations", "inner_solves",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=kdim).map(|j| format!("kappa_{j}")));
    header.extend((1..=mdim).map(|j| format!("u_{j}")));
    writer.write_record(&header)?;
    for r in &sweep.records {
        let mut row = vec![r.k.to_string(), fmt(r.epsilon), r.n.to_string()];
        row.extend(
            [
                r.objective, r.tracking, r.tv, r.quasi_norm_energy, r.gagliardo_energy, r.l1_kappa_gap, r.wt2_state_gap,
                r.tv_gap, r.energy_gap, r.objective_gap, r.level_set_measure, r.level_set_energy,
            ]
            .iter()
            .map(|&v| fmt(v)),
        );
        row.push(r.outer_iterations.to_string());
        row.push(r.inner_solves.to_string());
        row.extend(r.kappa.iter().map(|&v| fmt(v)));
        row.extend(r.u.iter().map(|&v| fmt(v)));
        writer.write_record(&row)?;
    }
    writer.flush()?;

    let mut plot = String::new();
    type Series = (&'static str, fn(&SweepRecord) -> f64);
    let series: [Series; 5] = [
        ("objective_gap", |r| r.objective_gap),
        ("wt2_state_gap", |r| r.wt2_state_gap),
        ("l1_kappa_gap", |r| r.l1_kappa_gap),
        ("tv_gap", |r| r.tv_gap),
        ("energy_gap", |r| r.energy_gap),
    ];
    for (index, (name, get)) in series.iter().enumerate() {
        if index > 0 {
            plot.push_str("\n\n");
        }
        plot.push_str(&format!("# {name}\n# k gap\n"));
        for r in &sweep.records {
            plot.push_str(&format!("{} {}\n", r.k + 1, fmt(get(r))));
        }
    }
    fs::write(&plot_path, plot)?;

    let summary = serde_json::json!({
        "p": sweep.p,
        "s": sweep.s,
        "m": sweep.m,
        "schedule": sweep.schedule,
        "schedule_hash": sweep.schedule.hash(),
        "reference": sweep.reference,
        "failures": sweep.failures,
        "verdicts": sweep.verdicts,
        "passed": sweep.passed,
    });
    fs::write(&json_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(vec![csv_path, plot_path, json_path])
}

fn list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

/// 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}
