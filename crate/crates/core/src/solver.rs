//! Solvers for the regularized and the plain state equation.
//!
//! Both equations are Euler–Lagrange equations of strictly convex
//! potentials (see [`Discretization::potential`]), so a solve is a damped
//! Newton minimization with an Armijo backtracking line search. The
//! residual vector returned by [`residual`] is the potential's gradient.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::forms::{ControlField, Discretization, StateField};
use crate::regularizer::RegParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_steps: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch { shrink: 0.5, sufficient_decrease: 1e-4, max_steps: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Max-norm of the weak-form residual accepted as converged.
    pub tol_residual: f64,
    pub max_iter: usize,
    pub line_search: LineSearch,
    /// Decreasing eps values visited before the unregularized polish (p > 2).
    pub continuation: Vec<f64>,
    /// Cutoff level used during continuation; large enough that `F_n` is the identity.
    pub continuation_n: u64,
    /// Added to the Hessian diagonal before factorization.
    pub hessian_floor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_residual: 1e-10,
            max_iter: 500,
            line_search: LineSearch::default(),
            continuation: vec![1e-2, 1e-4, 1e-6],
            continuation_n: 1_000_000,
            hessian_floor: 1e-14,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidArgument("tol_residual must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
}

impl Check {
    fn le(lhs: f64, rhs: f64) -> Self {
        Check { passed: lhs <= rhs, lhs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub passed: bool,
    pub factors: Vec<f64>,
    pub seminorms: Vec<f64>,
    pub slope: f64,
    pub bound: f64,
}

/// Discrete a-priori identities of a computed solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriFlags {
    /// `|form(u,u) − Σ f u h|` against `1e-9 (1 + |Σ f u h|)`.
    pub energy_identity: Check,
    /// `(c/2) · energy` against `Σ f u h + 1e-9`.
    pub energy_bound: Check,
    pub scaling: Option<ScalingCheck>,
}

impl AprioriFlags {
    pub fn all_passed(&self) -> bool {
        self.energy_identity.passed
            && self.energy_bound.passed
            && self.scaling.as_ref().is_none_or(|s| s.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub u: StateField,
    pub iterations: usize,
    pub final_residual: f64,
    pub energy_value: f64,
    /// Quasi-norm for regularized solves, `(Σ κ|Δu|^p w)^(1/p)` otherwise.
    pub quasi_norm_value: f64,
    pub minty_margin: Option<f64>,
    pub apriori_flags: Option<AprioriFlags>,
    pub regularization: Option<RegParams>,
    pub hessian_floor: f64,
    pub gradient_steps: usize,
    pub history: Vec<IterateRecord>,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Component `k` is `form(u, e_k) − Σ f e_k h`.
pub fn residual(
    disc: &Discretization,
    u: &[f64],
    f: &[f64],
    kappa: &ControlField,
    rp: Option<&RegParams>,
) -> Result<Vec<f64>> {
    disc.residual(u, f, kappa, rp)
}

struct Minimizer<'a> {
    disc: &'a Discretization,
    f: &'a [f64],
    kappa: &'a ControlField,
    rp: Option<&'a RegParams>,
    opts: &'a SolveOptions,
}

struct Outcome {
    u: Vec<f64>,
    iterations: usize,
    residual: f64,
    gradient_steps: usize,
}

impl Minimizer<'_> {
    fn energy(&self, u: &[f64]) -> Result<f64> {
        self.disc.potential(u, self.f, self.kappa, self.rp)
    }

    fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.disc.residual(u, self.f, self.kappa, self.rp)
    }

    fn newton_direction(&self, u: &[f64], grad: &[f64]) -> Result<Option<Vec<f64>>> {
        let mut hess: DMatrix<f64> = self.disc.hessian(u, self.kappa, self.rp)?;
        for i in 0..hess.nrows() {
            hess[(i, i)] += self.opts.hessian_floor;
        }
        let Some(chol) = hess.cholesky() else {
            return Ok(None);
        };
        let step = chol.solve(&DVector::from_iterator(grad.len(), grad.iter().map(|g| -g)));
        let step: Vec<f64> = step.iter().copied().collect();
        if step.iter().all(|x| x.is_finite()) && dot(&step, grad) < 0.0 {
            Ok(Some(step))
        } else {
            Ok(None)
        }
    }

    /// Backtracking along `dir`; returns the accepted point.
    fn line_search(
        &self,
        u: &[f64],
        energy: f64,
        grad: &[f64],
        res_norm: f64,
        dir: &[f64],
    ) -> Result<Option<(Vec<f64>, f64)>> {
        let ls = &self.opts.line_search;
        let slope = dot(grad, dir);
        let mut alpha = 1.0;
        for _ in 0..ls.max_steps {
            let cand: Vec<f64> = u.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
            let e = self.energy(&cand)?;
            if e <= energy + ls.sufficient_decrease * alpha * slope {
                return Ok(Some((cand, e)));
            }
            // energy differences below rounding cannot certify progress; the
            // residual can
            if (e - energy).abs() <= 1e-13 * (1.0 + energy.abs())
                && max_norm(&self.gradient(&cand)?) < res_norm
            {
                return Ok(Some((cand, e)));
            }
            alpha *= ls.shrink;
        }
        Ok(None)
    }

    fn run(&self, mut u: Vec<f64>, history: &mut Vec<IterateRecord>, offset: usize) -> Result<Outcome> {
        let mut gradient_steps = 0;
        let mut energy = self.energy(&u)?;
        let mut grad = self.gradient(&u)?;
        let mut res = max_norm(&grad);
        for it in 0..self.opts.max_iter {
            history.push(IterateRecord { iteration: offset + it, residual: res, energy });
            if res <= self.opts.tol_residual {
                return Ok(Outcome { u, iterations: it, residual: res, gradient_steps });
            }
            let newton = self.newton_direction(&u, &grad)?;
            let mut accepted = None;
            if let Some(dir) = &newton {
                accepted = self.line_search(&u, energy, &grad, res, dir)?;
            }
            if accepted.is_none() {
                let dir: Vec<f64> = grad.iter().map(|g| -g / self.disc.h()).collect();
                accepted = self.line_search(&u, energy, &grad, res, &dir)?;
                gradient_steps += 1;
            }
            let Some((next, e)) = accepted else {
                return Err(Error::NonConvergence { iterations: offset + it, residual: res });
            };
            u = next;
            energy = e;
            grad = self.gradient(&u)?;
            res = max_norm(&grad);
        }
        if res <= self.opts.tol_residual {
            history.push(IterateRecord { iteration: offset + self.opts.max_iter, residual: res, energy });
            return Ok(Outcome { u, iterations: self.opts.max_iter, residual: res, gradient_steps });
        }
        Err(Error::NonConvergence { iterations: offset + self.opts.max_iter, residual: res })
    }
}

fn initial_state(disc: &Discretization, initial: Option<&[f64]>) -> Result<Vec<f64>> {
    match initial {
        Some(u0) => {
            check_len(disc.m(), u0.len())?;
            Ok(u0.to_vec())
        }
        None => Ok(vec![0.0; disc.m()]),
    }
}

fn report(
    disc: &Discretization,
    f: &[f64],
    kappa: &ControlField,
    rp: Option<&RegParams>,
    opts: &SolveOptions,
    outcome: Outcome,
    history: Vec<IterateRecord>,
) -> Result<SolveReport> {
    let energy_value = disc.potential(&outcome.u, f, kappa, rp)?;
    let quasi_norm_value = disc.nonlinear_energy(&outcome.u, kappa, rp)?.powf(1.0 / disc.params.p);
    Ok(SolveReport {
        u: StateField(outcome.u),
        iterations: outcome.iterations,
        final_residual: outcome.residual,
        energy_value,
        quasi_norm_value,
        minty_margin: None,
        apriori_flags: None,
        regularization: rp.copied(),
        hessian_floor: opts.hessian_floor,
        gradient_steps: outcome.gradient_steps,
        history,
    })
}

/// Unique solution of the regularized state equation.
pub fn solve_state_regularized(
    disc: &Discretization,
    f: &[f64],
    kappa: &ControlField,
    rp: &RegParams,
    opts: &SolveOptions,
    initial: Option<&[f64]>,
) -> Result<SolveReport> {
    opts.validate()?;
    check_len(disc.m(), f.len())?;
    let u0 = initial_state(disc, initial)?;
    let mut history = Vec::new();
    let minimizer = Minimizer { disc, f, kappa, rp: Some(rp), opts };
    let outcome = minimizer.run(u0, &mut history, 0)?;
    report(disc, f, kappa, Some(rp), opts, outcome, history)
}

/// Unique solution of the plain state equation. For `p > 2` the solve walks
/// down the eps-continuation path and polishes on the exact potential.
pub fn solve_state(
    disc: &Discretization,
    f: &[f64],
    kappa: &ControlField,
    opts: &SolveOptions,
    initial: Option<&[f64]>,
) -> Result<SolveReport> {
    opts.validate()?;
    check_len(disc.m(), f.len())?;
    let mut u = initial_state(disc, initial)?;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut gradient_steps = 0;
    if disc.params.p > 2.0 {
        for &eps in &opts.continuation {
            let rp = RegParams::new(eps, opts.continuation_n)?;
            let stage = Minimizer { disc, f, kappa, rp: Some(&rp), opts }.run(u, &mut history, iterations)?;
            iterations += stage.iterations;
            gradient_steps += stage.gradient_steps;
            u = stage.u;
        }
    }
    let polish = Minimizer { disc, f, kappa, rp: None, opts }.run(u, &mut history, iterations)?;
    let outcome = Outcome {
        iterations: iterations + polish.iterations,
        gradient_steps: gradient_steps + polish.gradient_steps,
        ..polish
    };
    report(disc, f, kappa, None, opts, outcome, history)
}

/// Smallest value of `form(φ, φ−u) − Σ f (φ−u) h` over a deterministic set of
/// probes: Gaussian fields, scaled unit fields, and `u ± t e_k`.
#[allow(clippy::too_many_arguments)]
pub fn minty_margin(
    disc: &Discretization,
    u: &[f64],
    f: &[f64],
    kappa: &ControlField,
    rp: Option<&RegParams>,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidArgument("probes must be ≥ 1".into()));
    }
    check_len(disc.m(), u.len())?;
    check_len(disc.m(), f.len())?;
    let m = disc.m();
    let h = disc.h();
    let norm = l2(u);
    let scale = if norm > 0.0 { norm } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for t in 0..probes {
        let level = [0.1, 1.0, 10.0][(t / 3) % 3];
        let phi: Vec<f64> = match t % 3 {
            0 => {
                let g: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
                let gn = l2(&g).max(f64::MIN_POSITIVE);
                g.iter().map(|x| x * level * scale / gn).collect()
            }
            1 => {
                let sign = if (t / 9) % 2 == 0 { 1.0 } else { -1.0 };
                let mut e = vec![0.0; m];
                e[(t / 3) % m] = sign * level * scale;
                e
            }
            _ => {
                let sign = if (t / 9) % 2 == 0 { 1.0 } else { -1.0 };
                let mut phi = u.to_vec();
                phi[(t / 3) % m] += sign * 1e-2 * level * scale;
                phi
            }
        };
        let diff: Vec<f64> = phi.iter().zip(u).map(|(a, b)| a - b).collect();
        let value = disc.form(&phi, &diff, kappa, rp)? - h * dot(f, &diff);
        worst = worst.min(value);
    }
    Ok(worst)
}

/// Scaling factors used by the discrete a-priori growth check.
pub const SCALING_FACTORS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Checks the energy identity, the energy bound and (optionally, by
/// re-solving with `λ f`) the growth of the `W^{s,p}` seminorm.
pub fn apriori_report(
    disc: &Discretization,
    report: &SolveReport,
    f: &[f64],
    kappa: &ControlField,
    rp: Option<&RegParams>,
    opts: &SolveOptions,
    with_scaling: bool,
) -> Result<AprioriFlags> {
    let u = &report.u;
    let work = disc.h() * dot(f, u);
    let form_uu = disc.form(u, u, kappa, rp)?;
    let energy_identity = Check::le((form_uu - work).abs(), 1e-9 * (1.0 + work.abs()));
    let nonlocal = 0.5 * disc.params.c_norm * disc.nonlinear_energy(u, kappa, rp)?;
    let energy_bound = Check::le(nonlocal, work + 1e-9);
    let scaling = if with_scaling {
        let p = disc.params.p;
        let s = disc.params.s;
        let mut seminorms = Vec::with_capacity(SCALING_FACTORS.len());
        let mut warm = u.to_vec();
        for &lambda in &SCALING_FACTORS {
            let fl: Vec<f64> = f.iter().map(|x| lambda * x).collect();
            let sol = match rp {
                Some(rp) => solve_state_regularized(disc, &fl, kappa, rp, opts, Some(&warm))?,
                None => solve_state(disc, &fl, kappa, opts, Some(&warm))?,
            };
            seminorms.push(disc.gagliardo_seminorm(&sol.u, s, p)?);
            warm = sol.u.0;
        }
        let bound = 1.0 / (p - 1.0) + 0.05;
        let slope = if seminorms.iter().all(|&v| v > 0.0) {
            log_log_slope(&SCALING_FACTORS, &seminorms)
        } else {
            0.0
        };
        Some(ScalingCheck { passed: slope <= bound, factors: SCALING_FACTORS.to_vec(), seminorms, slope, bound })
    } else {
        None
    };
    Ok(AprioriFlags { energy_identity, energy_bound, scaling })
}

/// Solve followed by the Minty and a-priori certificates.
#[allow(clippy::too_many_arguments)]
pub fn certify(
    disc: &Discretization,
    mut report: SolveReport,
    f: &[f64],
    kappa: &ControlField,
    opts: &SolveOptions,
    probes: usize,
    seed: u64,
    with_scaling: bool,
) -> Result<SolveReport> {
    let rp = report.regularization;
    report.minty_margin = Some(minty_margin(disc, &report.u, f, kappa, rp.as_ref(), probes, seed)?);
    report.apriori_flags = Some(apriori_report(disc, &report, f, kappa, rp.as_ref(), opts, with_scaling)?);
    Ok(report)
}
