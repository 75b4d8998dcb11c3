//! Seeded property checks over a configured problem, run by the
//! `check-invariants` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{objective, project_admissible, solve_rocp, total_variation, tv_prox, ControlProblem, OptimizerOptions};
use crate::error::Result;
use crate::forms::{ControlField, LevelThreshold};
use crate::regularizer::{f_n, f_n_prime, RegParams, BLEND_DELTA};
use crate::solver::{certify, residual, solve_state, solve_state_regularized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &str, passed: bool, detail: String) -> InvariantResult {
    InvariantResult { name: name.into(), passed, detail }
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_control(rng: &mut ChaCha8Rng, problem: &ControlProblem) -> ControlField {
    let values = problem.lower.iter().zip(&problem.upper).map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect();
    ControlField { values, lower: problem.lower.clone(), upper: problem.upper.clone(), alpha: problem.alpha }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs every suite; the problem carries the configured regularization.
pub fn check_all(problem: &ControlProblem, probes: usize, seed: u64) -> Result<Vec<InvariantResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rp = problem.regularization.unwrap_or(RegParams::new(1e-3, 100)?);
    let mut out = vec![cutoff_conditions()];
    out.extend(form_properties(problem, &rp, &mut rng)?);
    out.extend(monotonicity(problem, &rp, &mut rng)?);
    out.extend(solution_certificates(problem, &rp, probes, seed)?);
    out.extend(control_properties(problem, &rp, &mut rng)?);
    Ok(out)
}

/// Identity below `n²`, constant above `n² + 1`, `τ ≤ F_n ≤ τ + δ` between,
/// `C¹` junctions, on a fixed sample of `τ` for `n = 1, 2, 4, 8`.
pub fn cutoff_conditions() -> InvariantResult {
    let mut failures = Vec::new();
    for n in [1u64, 2, 4, 8] {
        let n2 = (n * n) as f64;
        for i in 0..=10_000 {
            let tau = (n2 + 2.0) * i as f64 / 10_000.0;
            let v = f_n(tau, n).unwrap();
            let ok = if tau <= n2 {
                v == tau
            } else if tau > n2 + 1.0 {
                v == n2 + 1.0
            } else {
                tau <= v && v <= tau + BLEND_DELTA
            };
            if !ok {
                failures.push(format!("n={n} tau={tau}: {v}"));
            }
        }
        for junction in [n2, n2 + 1.0] {
            let step = 1e-6;
            let left = (f_n(junction, n).unwrap() - f_n(junction - step, n).unwrap()) / step;
            let right = (f_n(junction + step, n).unwrap() - f_n(junction, n).unwrap()) / step;
            let slope = f_n_prime(junction, n).unwrap();
            if (left - slope).abs() > 1e-5 || (right - slope).abs() > 1e-5 {
                failures.push(format!("n={n}: slope mismatch at {junction}"));
            }
        }
    }
    result("cutoff_conditions", failures.is_empty(), format!("{} violations {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()))
}

fn form_properties(problem: &ControlProblem, rp: &RegParams, rng: &mut ChaCha8Rng) -> Result<Vec<InvariantResult>> {
    let disc = &problem.disc;
    let m = disc.m();
    let mut reflection = 0.0f64;
    let mut zero = 0.0f64;
    let mut collapse = 0.0f64;
    let mut linear = 0.0f64;
    let mut p2 = disc.clone();
    p2.params.p = 2.0;
    let p2 = crate::forms::Discretization::new(p2.grid.clone(), p2.params, p2.diff.r_trunc)?;
    for _ in 0..20 {
        let kappa = random_control(rng, problem);
        let u = random_vec(rng, m, 2.0);
        let v = random_vec(rng, m, 2.0);
        let rev: Vec<f64> = u.iter().rev().copied().collect();
        let e = disc.form(&u, &u, &kappa, Some(rp))?;
        let er = disc.form(&rev, &rev, &kappa, Some(rp))?;
        reflection = reflection.max((e - er).abs() / (1.0 + e.abs()));
        zero = zero.max(disc.form(&vec![0.0; m], &v, &kappa, Some(rp))?.abs());
        let plain = p2.energy_form(&u, &v, &kappa)?;
        let reg = p2.regularized_form(&u, &v, &kappa, rp)?;
        collapse = collapse.max((plain - reg).abs());
        let w = random_vec(rng, m, 2.0);
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + 2.5 * b).collect();
        let lhs = disc.form(&u, &sum, &kappa, Some(rp))?;
        let rhs = disc.form(&u, &v, &kappa, Some(rp))? + 2.5 * disc.form(&u, &w, &kappa, Some(rp))?;
        linear = linear.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    Ok(vec![
        result("form_reflection", reflection <= 1e-12, format!("max relative deviation {reflection:.3e}")),
        result("form_zero_state", zero == 0.0, format!("max |form(0, v)| {zero:.3e}")),
        result("p2_collapse", collapse == 0.0, format!("max |plain − regularized| {collapse:.3e}")),
        result("form_linear_in_test", linear <= 1e-12, format!("max relative deviation {linear:.3e}")),
    ])
}

fn monotonicity(problem: &ControlProblem, rp: &RegParams, rng: &mut ChaCha8Rng) -> Result<Vec<InvariantResult>> {
    let disc = &problem.disc;
    let m = disc.m();
    let mut worst_plain = f64::INFINITY;
    let mut worst_reg = f64::INFINITY;
    for _ in 0..200 {
        let kappa = random_control(rng, problem);
        let u = random_vec(rng, m, 3.0);
        let v = random_vec(rng, m, 3.0);
        let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        for (rpo, worst) in [(None, &mut worst_plain), (Some(rp), &mut worst_reg)] {
            let ru = residual(disc, &u, &problem.f, &kappa, rpo)?;
            let rv = residual(disc, &v, &problem.f, &kappa, rpo)?;
            let d: Vec<f64> = ru.iter().zip(&rv).map(|(a, b)| a - b).collect();
            *worst = worst.min(dot(&d, &diff));
        }
    }
    Ok(vec![
        result("monotone_residual", worst_plain > 0.0, format!("min (R(u) − R(v))·(u − v) = {worst_plain:.3e}")),
        result("monotone_regularized_residual", worst_reg > 0.0, format!("min (R(u) − R(v))·(u − v) = {worst_reg:.3e}")),
    ])
}

fn solution_certificates(problem: &ControlProblem, rp: &RegParams, probes: usize, seed: u64) -> Result<Vec<InvariantResult>> {
    let disc = &problem.disc;
    let kappa = problem.initial_control()?;
    let f = &problem.f;
    let fnorm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = Vec::new();
    for (label, regularized) in [("state", false), ("regularized_state", true)] {
        let report = if regularized {
            solve_state_regularized(disc, f, &kappa, rp, &problem.solver, None)?
        } else {
            solve_state(disc, f, &kappa, &problem.solver, None)?
        };
        let report = certify(disc, report, f, &kappa, &problem.solver, probes, seed, false)?;
        let flags = report.apriori_flags.clone().expect("certified");
        let margin = report.minty_margin.unwrap_or(f64::NEG_INFINITY);
        out.push(result(
            &format!("{label}_energy_identity"),
            flags.energy_identity.passed,
            format!("|form(u,u) − work| = {:.3e} vs {:.3e}", flags.energy_identity.lhs, flags.energy_identity.rhs),
        ));
        out.push(result(
            &format!("{label}_energy_bound"),
            flags.energy_bound.passed,
            format!("{:.6e} ≤ {:.6e}", flags.energy_bound.lhs, flags.energy_bound.rhs),
        ));
        out.push(result(
            &format!("{label}_minty"),
            margin >= -1e-8 * (1.0 + fnorm),
            format!("margin {margin:.3e} over {probes} probes"),
        ));
        if regularized {
            // saturated pairs can only shrink as the cutoff level grows
            let mut previous = f64::INFINITY;
            let mut ok = true;
            for n in [1u64, 2, 4, 8, 16, 32, 64] {
                let level = disc.level_set(&report.u, n, disc.params.s, LevelThreshold::Saturation)?;
                ok &= level.measure <= previous;
                previous = level.measure;
            }
            out.push(result("level_sets_shrink", ok, format!("final measure {previous:.3e}")));
        }
    }
    Ok(out)
}

fn control_properties(problem: &ControlProblem, rp: &RegParams, rng: &mut ChaCha8Rng) -> Result<Vec<InvariantResult>> {
    let k = problem.lower.len();
    let mut prox_ok = true;
    let mut projection_ok = true;
    for _ in 0..50 {
        let y = random_vec(rng, k, 2.0);
        let lambda = rng.random_range(0.01..1.0);
        let z = tv_prox(&y, lambda)?;
        let value = |z: &[f64]| 0.5 * z.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + lambda * total_variation(z);
        let base = value(&z);
        for _ in 0..10 {
            let dir = random_vec(rng, k, 1.0);
            let moved: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + 1e-3 * d).collect();
            prox_ok &= value(&moved) >= base - 1e-12;
        }
        let p = project_admissible(&y, &problem.lower, &problem.upper);
        projection_ok &= p.iter().zip(problem.lower.iter().zip(&problem.upper)).all(|(v, (lo, hi))| lo <= v && v <= hi);
        projection_ok &= project_admissible(&p, &problem.lower, &problem.upper) == p;
    }
    let mut short = problem.with_regularization(Some(*rp));
    short.optimizer = OptimizerOptions { max_outer: 5, ..problem.optimizer.clone() };
    let report = solve_rocp(&short, None)?;
    let monotone = report.objective_history.windows(2).all(|w| w[1] <= w[0]);
    let feasible = report.kappa_star.values.iter().zip(problem.lower.iter().zip(&problem.upper)).all(|(v, (lo, hi))| lo <= v && v <= hi);
    let recomputed = objective(&report.kappa_star, &report.u_star, &problem.xi, problem.disc.h());
    Ok(vec![
        result("tv_prox_optimality", prox_ok, "50 random vectors, 10 perturbations each".into()),
        result("projection_feasible_idempotent", projection_ok, "50 random vectors".into()),
        result("objective_monotone", monotone, format!("{} accepted iterates", report.objective_history.len())),
        result("iterates_feasible", feasible, format!("kappa {:?}", report.kappa_star.values)),
        result(
            "objective_consistent",
            (recomputed - report.objective_value).abs() <= 1e-12 * (1.0 + recomputed.abs()),
            format!("{recomputed:.16e} vs {:.16e}", report.objective_value),
        ),
    ])
}
