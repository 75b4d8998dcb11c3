//! Admissible controls, the tracking objective and the outer proximal
//! projected-gradient loop shared by the regularized and the reference
//! control problem.

mod tv;

pub use tv::{total_variation, tv_prox, tv_prox_box};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::forms::{ControlField, Discretization, StateField};
use crate::regularizer::RegParams;
use crate::solver::{solve_state, solve_state_regularized, SolveOptions};

pub fn tv_seminorm(kappa: &ControlField) -> f64 {
    total_variation(&kappa.values)
}

/// Componentwise clamp onto `[lower, upper]`.
pub fn project_admissible(values: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
        .collect()
}

/// `½ Σ (u_i − ξ_i)² h`.
pub fn tracking(u: &[f64], xi: &[f64], h: f64) -> f64 {
    0.5 * u.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * h
}

/// `½ Σ (u_i − ξ_i)² h + TV(κ)`.
pub fn objective(kappa: &ControlField, u: &[f64], xi: &[f64], h: f64) -> f64 {
    tracking(u, xi, h) + tv_seminorm(kappa)
}

/// How the TV prox and the box constraint are combined in a descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProxMode {
    /// Exact prox of `TV + indicator(box)`.
    #[default]
    Joint,
    /// Clamp of the unconstrained TV prox; exact only for uniform bounds.
    Composed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Initial gradient step.
    pub step: f64,
    /// Accepted steps double up to this value.
    pub max_step: f64,
    /// Multiplier of the TV term handed to the prox (1 reproduces the objective).
    pub prox_weight: f64,
    pub fd_step: f64,
    /// Relative objective change that ends the outer loop.
    pub tol: f64,
    pub max_outer: usize,
    pub min_step: f64,
    pub prox: ProxMode,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions { step: 1.0, max_step: 1e4, prox_weight: 1.0, fd_step: 1e-6, tol: 1e-8, max_outer: 300, min_step: 1e-12, prox: ProxMode::Joint }
    }
}

/// Data of the coefficient control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProblem {
    pub disc: Discretization,
    pub f: Vec<f64>,
    pub xi: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    /// `None` selects the unregularized state equation.
    pub regularization: Option<RegParams>,
    pub optimizer: OptimizerOptions,
    pub solver: SolveOptions,
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        let m = self.disc.m();
        let k = self.disc.offset_count();
        check_len(m, self.f.len())?;
        check_len(m, self.xi.len())?;
        check_len(k, self.lower.len())?;
        check_len(k, self.upper.len())?;
        ControlField::midpoint(self.lower.clone(), self.upper.clone(), self.alpha)?;
        Ok(())
    }

    pub fn initial_control(&self) -> Result<ControlField> {
        ControlField::midpoint(self.lower.clone(), self.upper.clone(), self.alpha)
    }

    pub fn with_regularization(&self, rp: Option<RegParams>) -> Self {
        ControlProblem { regularization: rp, ..self.clone() }
    }

    /// State for control `kappa`, warm-started from `warm`.
    pub fn state(&self, kappa: &ControlField, warm: Option<&[f64]>) -> Result<StateField> {
        let report = match &self.regularization {
            Some(rp) => solve_state_regularized(&self.disc, &self.f, kappa, rp, &self.solver, warm)?,
            None => solve_state(&self.disc, &self.f, kappa, &self.solver, warm)?,
        };
        Ok(report.u)
    }

    fn is_free(&self, k: usize) -> bool {
        self.upper[k] > self.lower[k]
    }
}

/// Forward differences of `½‖u(κ) − ξ‖²_h` in every free offset; one-sided
/// backwards where the forward perturbation would leave the box.
pub fn reduced_tracking_gradient_fd(
    kappa: &ControlField,
    problem: &ControlProblem,
    state: &[f64],
) -> Result<Vec<f64>> {
    let h = problem.disc.h();
    let base = tracking(state, &problem.xi, h);
    let step = problem.optimizer.fd_step;
    let mut grad = vec![0.0; kappa.len()];
    for k in 0..kappa.len() {
        if !problem.is_free(k) {
            continue;
        }
        let mut values = kappa.values.clone();
        let forward = values[k] + step <= problem.upper[k];
        let delta = if forward { step } else { -step };
        values[k] = (values[k] + delta).clamp(problem.lower[k], problem.upper[k]);
        let actual = values[k] - kappa.values[k];
        if actual == 0.0 {
            continue;
        }
        let u = problem.state(&kappa.with_values(values), Some(state))?;
        grad[k] = (tracking(&u, &problem.xi, h) - base) / actual;
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub tracking: f64,
    pub tv: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub kappa_star: ControlField,
    pub u_star: StateField,
    pub objective_value: f64,
    pub tracking_value: f64,
    pub tv_value: f64,
    /// Objective of every accepted iterate, starting with the initial control.
    pub objective_history: Vec<f64>,
    pub history: Vec<OuterRecord>,
    pub outer_iterations: usize,
    pub inner_solves: usize,
    pub converged: bool,
}

/// Regularized control problem: requires `problem.regularization`.
pub fn solve_rocp(problem: &ControlProblem, start: Option<&ControlField>) -> Result<OptimizeReport> {
    if problem.regularization.is_none() {
        return Err(Error::InvalidArgument("the regularized problem needs (eps, n)".into()));
    }
    optimize(problem, start)
}

/// Reference control problem with the unregularized state equation.
pub fn solve_ocp_reference(problem: &ControlProblem, start: Option<&ControlField>) -> Result<OptimizeReport> {
    optimize(&problem.with_regularization(None), start)
}

/// Proximal projected descent: `κ ← P(prox_{t TV}(κ − t ∇T(κ)))`, accepted
/// when the objective strictly decreases, otherwise the step is halved.
fn optimize(problem: &ControlProblem, start: Option<&ControlField>) -> Result<OptimizeReport> {
    problem.validate()?;
    let opts = &problem.optimizer;
    let h = problem.disc.h();
    let mut kappa = match start {
        Some(k) => {
            let values = project_admissible(&k.values, &problem.lower, &problem.upper);
            ControlField::new(values, problem.lower.clone(), problem.upper.clone(), problem.alpha)?
        }
        None => problem.initial_control()?,
    };
    let mut u = problem.state(&kappa, None)?;
    let mut inner_solves = 1;
    let mut track = tracking(&u, &problem.xi, h);
    let mut tv = tv_seminorm(&kappa);
    let mut obj = track + tv;
    let mut step = opts.step;
    let mut objective_history = vec![obj];
    let mut history = vec![OuterRecord { iteration: 0, objective: obj, tracking: track, tv, step }];
    let free = (0..kappa.len()).filter(|&k| problem.is_free(k)).count();
    let mut converged = free == 0;
    let mut outer = 0;
    while !converged && outer < opts.max_outer {
        outer += 1;
        let grad = reduced_tracking_gradient_fd(&kappa, problem, &u)?;
        inner_solves += free;
        let mut accepted = false;
        while step >= opts.min_step {
            let trial: Vec<f64> = kappa.values.iter().zip(&grad).map(|(k, g)| k - step * g).collect();
            let lambda = step * opts.prox_weight;
            let trial = match opts.prox {
                ProxMode::Joint => tv_prox_box(&trial, lambda, &problem.lower, &problem.upper)?,
                ProxMode::Composed => tv_prox(&trial, lambda)?,
            };
            // the joint prox lands in the box up to rounding; clamp either way
            let trial = project_admissible(&trial, &problem.lower, &problem.upper);
            if trial == kappa.values {
                // fixed point of the prox-gradient map
                converged = true;
                break;
            }
            let candidate = kappa.with_values(trial);
            let u_new = problem.state(&candidate, Some(&u))?;
            inner_solves += 1;
            let track_new = tracking(&u_new, &problem.xi, h);
            let tv_new = tv_seminorm(&candidate);
            let obj_new = track_new + tv_new;
            if obj_new < obj {
                let rel = (obj - obj_new) / obj.abs().max(f64::MIN_POSITIVE);
                kappa = candidate;
                u = u_new;
                track = track_new;
                tv = tv_new;
                obj = obj_new;
                objective_history.push(obj);
                history.push(OuterRecord { iteration: outer, objective: obj, tracking: track, tv, step });
                accepted = true;
                if rel < opts.tol {
                    converged = true;
                }
                step = (2.0 * step).min(opts.max_step.max(opts.step));
                break;
            }
            step *= 0.5;
        }
        if !accepted && !converged {
            // step fell below the floor: no decrease available at this resolution
            converged = true;
        }
    }
    Ok(OptimizeReport {
        kappa_star: kappa,
        u_star: u,
        objective_value: obj,
        tracking_value: track,
        tv_value: tv,
        objective_history,
        history,
        outer_iterations: outer,
        inner_solves,
        converged,
    })
}
