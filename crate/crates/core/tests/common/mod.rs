//! Independent reference implementations used as test oracles.
//!
//! Everything here is written from the defining double sums over the full
//! lattice node set, without the library's pair bookkeeping.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nonlocal_ocp::control::{ControlProblem, OptimizerOptions};
use nonlocal_ocp::solver::SolveOptions;
use nonlocal_ocp::{build_grid, ControlField, Discretization, FracParams, RegParams, Variant};

#[derive(Debug, Clone, Copy)]
pub struct Naive {
    pub a: f64,
    pub b: f64,
    pub m: usize,
    pub s: f64,
    pub p: f64,
    pub c: f64,
    pub r_trunc: Option<f64>,
}

impl Naive {
    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.m as f64 + 1.0)
    }

    /// Largest index difference with an interaction.
    pub fn reach(&self) -> i64 {
        match self.r_trunc {
            None => self.m as i64 + 1,
            Some(r) => (r / self.h() + 1e-9).floor() as i64,
        }
    }

    pub fn node_range(&self) -> std::ops::RangeInclusive<i64> {
        match self.r_trunc {
            None => 0..=self.m as i64 + 1,
            Some(_) => 1 - self.reach()..=self.m as i64 + self.reach(),
        }
    }

    pub fn value(&self, u: &[f64], j: i64) -> f64 {
        if j >= 1 && j <= self.m as i64 {
            u[(j - 1) as usize]
        } else {
            0.0
        }
    }

    pub fn x(&self, j: i64) -> f64 {
        self.a + j as f64 * self.h()
    }

    /// Ordered pairs `(j, l, k)` with `1 ≤ k = |j − l| ≤ reach`.
    pub fn ordered_pairs(&self) -> Vec<(i64, i64, usize)> {
        let mut out = Vec::new();
        for j in self.node_range() {
            for l in self.node_range() {
                let k = (j - l).abs();
                if k >= 1 && k <= self.reach() {
                    out.push((j, l, k as usize));
                }
            }
        }
        out
    }

    pub fn r_eff(&self) -> f64 {
        (self.reach() as f64 + 0.5) * self.h()
    }

    /// `∫_{|r|>R} |r|^{-1-σ} dr`.
    pub fn tail_integral(&self, sigma: f64) -> f64 {
        let r = self.r_eff();
        2.0 * r.powf(-sigma) / sigma
    }

    pub fn discretization(&self) -> Discretization {
        let variant = if self.r_trunc.is_some() { Variant::Full } else { Variant::Regional };
        let g = build_grid(self.a, self.b, self.m).unwrap();
        let fp = FracParams::new(self.s, self.p, self.c, variant).unwrap();
        Discretization::new(g, fp, self.r_trunc).unwrap()
    }

    fn dist(&self, j: i64, l: i64) -> f64 {
        (self.x(j) - self.x(l)).abs()
    }

    pub fn energy_form(&self, u: &[f64], v: &[f64], kappa: &[f64]) -> f64 {
        let h = self.h();
        let mut total: f64 = u.iter().zip(v).map(|(a, b)| a * b * h).sum();
        for (j, l, k) in self.ordered_pairs() {
            let du = self.value(u, j) - self.value(u, l);
            let dv = self.value(v, j) - self.value(v, l);
            let d = self.dist(j, l);
            total += 0.5 * self.c * kappa[k - 1] * du.abs().powf(self.p - 2.0) * du * dv * h * h
                / d.powf(1.0 + self.s * self.p);
        }
        if self.r_trunc.is_some() {
            let kf = *kappa.last().unwrap();
            let t = self.tail_integral(self.s * self.p);
            for i in 0..self.m {
                total += self.c * h * kf * u[i].abs().powf(self.p - 2.0) * u[i] * v[i] * t;
            }
        }
        total
    }

    pub fn regularized_form(&self, u: &[f64], v: &[f64], kappa: &[f64], eps: f64, n: u64) -> f64 {
        let h = self.h();
        let q = 0.5 * (self.p - 2.0);
        let mut total: f64 = u.iter().zip(v).map(|(a, b)| a * b * h).sum();
        for (j, l, k) in self.ordered_pairs() {
            let du = self.value(u, j) - self.value(u, l);
            let dv = self.value(v, j) - self.value(v, l);
            let d = self.dist(j, l);
            let g = (eps + cutoff(du * du / d.powf(2.0 * self.s), n)).powf(q);
            total += 0.5 * self.c * kappa[k - 1] * g * du * dv * h * h / d.powf(1.0 + 2.0 * self.s);
        }
        if self.r_trunc.is_some() {
            let kf = *kappa.last().unwrap();
            for i in 0..self.m {
                total += self.c * h * kf * self.regularized_tail_integral(u[i], eps, n) * u[i] * v[i];
            }
        }
        total
    }

    /// `∫_{|r|>R} [eps + F_n(u²/|r|^{2s})]^q |r|^{-1-2s} dr`, by composite
    /// Simpson after the substitution `r = R t^{-1/(2s)}`, which turns it into
    /// `2 R^{-2s}/(2s) ∫_0^1 g(u² t / R^{2s}) dt`.
    pub fn regularized_tail_integral(&self, ui: f64, eps: f64, n: u64) -> f64 {
        let q = 0.5 * (self.p - 2.0);
        let r2s = self.r_eff().powf(2.0 * self.s);
        let integrand = |t: f64| (eps + cutoff(ui * ui * t / r2s, n)).powf(q);
        2.0 / (2.0 * self.s * r2s) * simpson(integrand, 0.0, 1.0, 20_000)
    }

    /// `Σ_{i≠j} κ |Δu|^p w` plus far field.
    pub fn kappa_energy(&self, u: &[f64], kappa: &[f64]) -> f64 {
        let h = self.h();
        let mut total = 0.0;
        for (j, l, k) in self.ordered_pairs() {
            let du = self.value(u, j) - self.value(u, l);
            total += kappa[k - 1] * du.abs().powf(self.p) * h * h / self.dist(j, l).powf(1.0 + self.s * self.p);
        }
        if self.r_trunc.is_some() {
            let kf = *kappa.last().unwrap();
            let t = self.tail_integral(self.s * self.p);
            total += 2.0 * h * kf * t * u.iter().map(|x| x.abs().powf(self.p)).sum::<f64>();
        }
        total
    }

    pub fn quasi_norm_power(&self, u: &[f64], kappa: &[f64], eps: f64, n: u64) -> f64 {
        let h = self.h();
        let q = 0.5 * (self.p - 2.0);
        let mut total = 0.0;
        for (j, l, k) in self.ordered_pairs() {
            let du = self.value(u, j) - self.value(u, l);
            let d = self.dist(j, l);
            let g = (eps + cutoff(du * du / d.powf(2.0 * self.s), n)).powf(q);
            total += kappa[k - 1] * g * du * du * h * h / d.powf(1.0 + 2.0 * self.s);
        }
        if self.r_trunc.is_some() {
            let kf = *kappa.last().unwrap();
            for &ui in u {
                total += 2.0 * h * kf * self.regularized_tail_integral(ui, eps, n) * ui * ui;
            }
        }
        total
    }

    pub fn gagliardo(&self, u: &[f64], s: f64, p: f64) -> f64 {
        let h = self.h();
        let mut total = 0.0;
        for (j, l, _) in self.ordered_pairs() {
            let du = self.value(u, j) - self.value(u, l);
            total += du.abs().powf(p) * h * h / self.dist(j, l).powf(1.0 + s * p);
        }
        if self.r_trunc.is_some() {
            let t = self.tail_integral(s * p);
            total += 2.0 * h * t * u.iter().map(|x| x.abs().powf(p)).sum::<f64>();
        }
        total.powf(1.0 / p)
    }

    /// Gradient of the potential: `form(u, e_k) − f_k h`.
    pub fn residual(&self, u: &[f64], f: &[f64], kappa: &[f64], reg: Option<(f64, u64)>) -> Vec<f64> {
        (0..self.m)
            .map(|k| {
                let mut e = vec![0.0; self.m];
                e[k] = 1.0;
                let form = match reg {
                    None => self.energy_form(u, &e, kappa),
                    Some((eps, n)) => self.regularized_form(u, &e, kappa, eps, n),
                };
                form - f[k] * self.h()
            })
            .collect()
    }

    /// Matrix of the p = 2 form, `A[k][l] = form(e_l, e_k)`.
    pub fn linear_matrix(&self, kappa: &[f64]) -> DMatrix<f64> {
        let h = self.h();
        let m = self.m;
        let mut a = DMatrix::from_diagonal_element(m, m, h);
        let interior = |j: i64| (j >= 1 && j <= m as i64).then(|| (j - 1) as usize);
        for (j, l, k) in self.ordered_pairs() {
            let w = 0.5 * self.c * kappa[k - 1] * h * h / self.dist(j, l).powf(1.0 + 2.0 * self.s);
            if let Some(x) = interior(j) {
                a[(x, x)] += w;
                if let Some(y) = interior(l) {
                    a[(x, y)] -= w;
                }
            }
            if let Some(y) = interior(l) {
                a[(y, y)] += w;
                if let Some(x) = interior(j) {
                    a[(y, x)] -= w;
                }
            }
        }
        if self.r_trunc.is_some() {
            let t = self.tail_integral(2.0 * self.s);
            for i in 0..m {
                a[(i, i)] += self.c * h * kappa.last().unwrap() * t;
            }
        }
        a
    }

    /// Dense solve of the p = 2 state equation.
    pub fn linear_solve(&self, f: &[f64], kappa: &[f64]) -> Vec<f64> {
        let a = self.linear_matrix(kappa);
        let rhs = DVector::from_iterator(self.m, f.iter().map(|x| x * self.h()));
        a.lu().solve(&rhs).unwrap().iter().copied().collect()
    }

    /// Cyclic coordinate descent on the convex potential: each coordinate
    /// update is the root of the (monotone) partial derivative, found by
    /// bisection. Stops when a sweep moves no coordinate by more than `tol`.
    pub fn coordinate_descent(&self, f: &[f64], kappa: &[f64], reg: Option<(f64, u64)>, tol: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.m];
        for _sweep in 0..200_000 {
            let mut change: f64 = 0.0;
            for k in 0..self.m {
                let partial = |z: f64, u: &mut Vec<f64>| {
                    u[k] = z;
                    let mut e = vec![0.0; self.m];
                    e[k] = 1.0;
                    let form = match reg {
                        None => self.energy_form(u, &e, kappa),
                        Some((eps, n)) => self.regularized_form(u, &e, kappa, eps, n),
                    };
                    form - f[k] * self.h()
                };
                let old: f64 = u[k];
                let mut width = 1.0 + old.abs();
                let (mut lo, mut hi) = (old - width, old + width);
                while partial(lo, &mut u) > 0.0 {
                    width *= 2.0;
                    lo = old - width;
                }
                while partial(hi, &mut u) < 0.0 {
                    width *= 2.0;
                    hi = old + width;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    if partial(mid, &mut u) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let new = 0.5 * (lo + hi);
                u[k] = new;
                change = change.max((new - old).abs());
            }
            if change < tol {
                break;
            }
        }
        u
    }
}

/// `F_n` written independently: identity, Hermite blend, constant.
pub fn cutoff(tau: f64, n: u64) -> f64 {
    let n2 = (n * n) as f64;
    if tau <= n2 {
        tau
    } else if tau <= n2 + 1.0 {
        let t = tau - n2;
        n2 + t + t * t - t * t * t
    } else {
        n2 + 1.0
    }
}

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = 2 * panels;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random admissible control with bounds `[0.5, 2]`.
pub fn random_control(rng: &mut ChaCha8Rng, len: usize) -> ControlField {
    let values = random_vec(rng, len, 0.5, 2.0);
    ControlField::new(values, vec![0.5; len], vec![2.0; len], 0.5).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn regional(m: usize, s: f64, p: f64) -> Naive {
    Naive { a: 0.0, b: 1.0, m, s, p, c: 1.0, r_trunc: None }
}

pub fn full(m: usize, s: f64, p: f64, r_trunc: f64) -> Naive {
    Naive { a: 0.0, b: 1.0, m, s, p, c: 1.0, r_trunc: Some(r_trunc) }
}

/// Tiny control problem: m = 3 regional, s = 0.75, four offsets of which
/// the two longest are pinned at 1, leaving two free offsets in
/// `[0.5, 1.5]`. The target is the state of an inadmissible control and the
/// force is scaled so the state has magnitude ≈ 3 for either p, making the
/// tracking term compete with TV.
pub fn tiny_ocp(p: f64, regularization: Option<RegParams>) -> ControlProblem {
    let (scale, target) = if p == 2.0 { (30.0, [0.3, 1.5]) } else { (300.0, [2.0, 0.5]) };
    let grid = build_grid(0.0, 1.0, 3).unwrap();
    let fp = FracParams::new(0.75, p, 1.0, Variant::Regional).unwrap();
    let disc = Discretization::new(grid, fp, None).unwrap();
    let lower = vec![0.5, 0.5, 1.0, 1.0];
    let upper = vec![1.5, 1.5, 1.0, 1.0];
    let target = ControlField::new(vec![target[0], target[1], 1.0, 1.0], vec![0.1; 4], vec![9.0; 4], 0.1).unwrap();
    let mut problem = ControlProblem {
        disc,
        f: vec![scale; 3],
        xi: vec![0.0; 3],
        lower,
        upper,
        alpha: 0.5,
        regularization: None,
        optimizer: OptimizerOptions::default(),
        solver: SolveOptions::default(),
    };
    problem.xi = problem.state(&target, None).unwrap().0;
    problem.regularization = regularization;
    problem
}

/// Minimum of the objective over the 0.02 lattice of the free offsets;
/// ties go to the lexicographically smallest control.
pub fn exhaustive_search(problem: &ControlProblem) -> (f64, Vec<f64>) {
    let free: Vec<usize> = (0..problem.lower.len()).filter(|&k| problem.upper[k] > problem.lower[k]).collect();
    let axes: Vec<Vec<f64>> = free
        .iter()
        .map(|&k| {
            let count = ((problem.upper[k] - problem.lower[k]) / 0.02).round() as usize;
            (0..=count).map(|i| problem.lower[k] + 0.02 * i as f64).collect()
        })
        .collect();
    let start = problem.initial_control().unwrap();
    let mut best = (f64::INFINITY, Vec::new());
    let mut index = vec![0usize; free.len()];
    loop {
        let mut values = start.values.clone();
        for (slot, &k) in free.iter().enumerate() {
            values[k] = axes[slot][index[slot]];
        }
        let kappa = start.with_values(values.clone());
        let u = problem.state(&kappa, None).unwrap();
        let track: f64 = 0.5 * u.iter().zip(&problem.xi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * problem.disc.h();
        let tv: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        if track + tv < best.0 {
            best = (track + tv, values);
        }
        // odometer over the free axes, last axis fastest
        let mut slot = free.len();
        loop {
            if slot == 0 {
                return best;
            }
            slot -= 1;
            index[slot] += 1;
            if index[slot] < axes[slot].len() {
                break;
            }
            index[slot] = 0;
        }
    }
}

/// Exact minimum of `½‖z − y‖² + λ TV(z)` over `z_i ∈ lattices[i]`, by
/// dynamic programming along the chain (every lattice sequence is covered).
pub fn lattice_prox_minimum(y: &[f64], lambda: f64, lattices: &[Vec<f64>]) -> f64 {
    let mut cost: Vec<f64> = lattices[0].iter().map(|z| 0.5 * (z - y[0]) * (z - y[0])).collect();
    for i in 1..y.len() {
        let next: Vec<f64> = lattices[i]
            .iter()
            .map(|z| {
                let best = lattices[i - 1]
                    .iter()
                    .zip(&cost)
                    .map(|(w, c)| c + lambda * (z - w).abs())
                    .fold(f64::INFINITY, f64::min);
                best + 0.5 * (z - y[i]) * (z - y[i])
            })
            .collect();
        cost = next;
    }
    cost.into_iter().fold(f64::INFINITY, f64::min)
}

/// Points `lo, lo + step, …` up to and including `hi`.
pub fn lattice(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(|i| lo + step * i as f64).collect()
}

pub fn prox_objective(z: &[f64], y: &[f64], lambda: f64) -> f64 {
    0.5 * z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        + lambda * z.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
}
