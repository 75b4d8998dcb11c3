//! Discrete nonlocal forms, convex potentials, seminorms and level sets.
//!
//! Every double integral over `Ω×Ω` (or `R×R` for the full variant) is a
//! nodal double sum with the diagonal excluded and weight `h²` per pair.
//! Interior values are the unknowns; all other lattice nodes carry zero, so
//! pairs with no interior endpoint vanish and are never visited. Sums over
//! ordered pairs are evaluated as twice the sum over unordered pairs.

use std::ops::{Deref, DerefMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::far_field::{assemble_full_variant_tail, two_sided_tail_integral, FarField};
use crate::grid::{build_difference_grid, DifferenceGrid, FracParams, Grid, Variant};
use crate::regularizer::{RegParams, RegWeight};

/// Kernel coefficient sampled on the stored offsets. Evenness is structural:
/// lookups go through `|x_i - x_j|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
}

impl ControlField {
    pub fn new(values: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, alpha: f64) -> Result<Self> {
        check_len(values.len(), lower.len())?;
        check_len(values.len(), upper.len())?;
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive (got {alpha})")));
        }
        for (k, ((&v, &lo), &hi)) in values.iter().zip(&lower).zip(&upper).enumerate() {
            if !(alpha <= lo && lo <= v && v <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "offset {k}: need 0 < alpha ≤ lower ≤ value ≤ upper (alpha={alpha}, lower={lo}, value={v}, upper={hi})"
                )));
            }
        }
        Ok(ControlField { values, lower, upper, alpha })
    }

    /// Control pinned to `value` on `count` offsets.
    pub fn constant(count: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; count], vec![value; count], vec![value; count], value)
    }

    /// Midpoint of the bounds, the default starting control.
    pub fn midpoint(lower: Vec<f64>, upper: Vec<f64>, alpha: f64) -> Result<Self> {
        let values = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
        Self::new(values, lower, upper, alpha)
    }

    /// Same bounds, new values (assumed already admissible).
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        ControlField { values, ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Interior nodal values; boundary and exterior values are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateField(pub Vec<f64>);

impl StateField {
    pub fn zeros(m: usize) -> Self {
        StateField(vec![0.0; m])
    }
}

impl Deref for StateField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateField {
    fn from(v: Vec<f64>) -> Self {
        StateField(v)
    }
}

/// Per-offset pair weights: `h²/d^(1+sp)` and `h²/d^(1+2s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairWeights {
    pub power: Vec<f64>,
    pub regularized: Vec<f64>,
}

impl PairWeights {
    fn assemble(diff: &DifferenceGrid, fp: &FracParams) -> Self {
        let h2 = diff.h * diff.h;
        let power = (1..=diff.count)
            .map(|k| h2 / diff.offset(k).powf(1.0 + fp.s * fp.p))
            .collect();
        let regularized = (1..=diff.count)
            .map(|k| h2 / diff.offset(k).powf(1.0 + 2.0 * fp.s))
            .collect();
        PairWeights { power, regularized }
    }
}

/// Which threshold defines the level set of large difference quotients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelThreshold {
    /// `|Δu|/d^s > sqrt(n² + 1)`: where `F_n` saturates.
    Saturation,
    /// `|Δu|/d^s > n`.
    Cutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    /// Ordered node pairs (lattice indices).
    pub pairs: Vec<(i64, i64)>,
    /// `h² · #pairs`.
    pub measure: f64,
    /// `Σ h² / d^(2s-1)` over the set.
    pub weighted_measure: f64,
}

/// Interaction law of a pair: the plain p-power or its regularization.
#[derive(Debug, Clone, Copy)]
enum Law {
    Power { p: f64 },
    Regularized { weight: RegWeight, two_s: f64 },
}

/// A grid, its offsets and parameters with every geometric weight assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub grid: Grid,
    pub diff: DifferenceGrid,
    pub params: FracParams,
    pub weights: PairWeights,
    pub far_field: Option<FarField>,
    /// For each interior node, `(slot, lattice index)` of its zero-valued partners.
    zero_partners: Vec<Vec<(usize, i64)>>,
}

impl Discretization {
    pub fn new(grid: Grid, params: FracParams, r_trunc: Option<f64>) -> Result<Self> {
        let violations = params.violations();
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let diff = build_difference_grid(&grid, params.variant, r_trunc)?;
        let far_field = match params.variant {
            Variant::Regional => None,
            Variant::Full => Some(assemble_full_variant_tail(
                &grid,
                &params,
                r_trunc.expect("checked by build_difference_grid"),
            )?),
        };
        let m = grid.m;
        let kmax = diff.count;
        let zero_partners = (1..=m)
            .map(|node| {
                let (left_max, right_max) = match params.variant {
                    Variant::Regional => (node, m + 1 - node),
                    Variant::Full => (kmax, kmax),
                };
                let node = node as i64;
                let left = (node as usize..=left_max).map(move |k| (k - 1, node - k as i64));
                let right = (m + 1 - node as usize..=right_max).map(move |k| (k - 1, node + k as i64));
                left.chain(right).collect()
            })
            .collect();
        let weights = PairWeights::assemble(&diff, &params);
        Ok(Discretization { grid, diff, params, weights, far_field, zero_partners })
    }

    pub fn m(&self) -> usize {
        self.grid.m
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn offset_count(&self) -> usize {
        self.diff.count
    }

    /// Overrides the far-field kernel value of the full variant.
    pub fn set_kappa_far(&mut self, value: Option<f64>) {
        if let Some(ff) = self.far_field.as_mut() {
            ff.kappa_far = value;
        }
    }

    fn check_state(&self, u: &[f64]) -> Result<()> {
        check_len(self.m(), u.len())
    }

    fn check_control(&self, kappa: &ControlField) -> Result<()> {
        check_len(self.offset_count(), kappa.values.len())
    }

    /// Visits unordered pairs `(i, j, slot)`; `j = None` is a zero node.
    fn for_each_pair(&self, mut visit: impl FnMut(usize, Option<usize>, usize)) {
        self.for_each_pair_indexed(|i, j, slot, _| visit(i, j, slot));
    }

    /// As [`Self::for_each_pair`], also passing the partner's lattice index.
    fn for_each_pair_indexed(&self, mut visit: impl FnMut(usize, Option<usize>, usize, i64)) {
        let m = self.m();
        for i in 0..m {
            for j in i + 1..m {
                visit(i, Some(j), j - i - 1, j as i64 + 1);
            }
            for &(slot, node) in &self.zero_partners[i] {
                visit(i, None, slot, node);
            }
        }
    }

    fn kappa_far(&self, kappa: &ControlField) -> f64 {
        self.far_field
            .as_ref()
            .and_then(|ff| ff.kappa_far)
            .unwrap_or_else(|| *kappa.values.last().expect("nonempty control"))
    }

    fn law(&self, rp: Option<&RegParams>) -> Law {
        match rp {
            None => Law::Power { p: self.params.p },
            Some(rp) => Law::Regularized { weight: rp.weight(self.params.p), two_s: 2.0 * self.params.s },
        }
    }

    fn offset_power(&self, slot: usize, exponent: f64) -> f64 {
        self.diff.offset(slot + 1).powf(exponent)
    }

    /// `φ` with pair term `κ φ(Δu) Δu Δv w`.
    fn pair_factor(&self, law: Law, du: f64, slot: usize) -> (f64, f64) {
        match law {
            Law::Power { p } => (du.abs().powf(p - 2.0), self.weights.power[slot]),
            Law::Regularized { weight, two_s } => {
                let tau = du * du / self.offset_power(slot, two_s);
                (weight.value(tau), self.weights.regularized[slot])
            }
        }
    }

    /// Potential of one unordered pair, without `c κ`.
    fn pair_potential(&self, law: Law, du: f64, slot: usize) -> f64 {
        match law {
            Law::Power { p } => du.abs().powf(p) * self.weights.power[slot] / p,
            Law::Regularized { weight, two_s } => {
                let w2 = self.weights.regularized[slot];
                if weight.is_trivial() {
                    return 0.5 * du * du * w2;
                }
                let d2s = self.offset_power(slot, two_s);
                0.5 * weight.primitive(du * du / d2s) * d2s * w2
            }
        }
    }

    /// Second derivative in `Δu` of one unordered pair, without `c κ`.
    fn pair_curvature(&self, law: Law, du: f64, slot: usize) -> f64 {
        match law {
            Law::Power { p } => (p - 1.0) * du.abs().powf(p - 2.0) * self.weights.power[slot],
            Law::Regularized { weight, two_s } => {
                let tau = du * du / self.offset_power(slot, two_s);
                (weight.value(tau) + 2.0 * tau * weight.derivative(tau)) * self.weights.regularized[slot]
            }
        }
    }

    /// Far-field factor `t` with tail term `c h κ_far t u_i v_i`.
    fn tail_factor(&self, law: Law, ui: f64, coeff: f64, r_eff: f64) -> f64 {
        match law {
            Law::Power { p } => coeff * ui.abs().powf(p - 2.0),
            Law::Regularized { weight, two_s } => {
                if weight.is_trivial() {
                    return coeff;
                }
                let r2s = r_eff.powf(two_s);
                weight.primitive_ratio(ui * ui / r2s) / (0.5 * two_s * r2s)
            }
        }
    }

    fn tail_potential(&self, law: Law, ui: f64, coeff: f64, r_eff: f64) -> f64 {
        match law {
            Law::Power { p } => coeff * ui.abs().powf(p) / p,
            Law::Regularized { weight, two_s } => {
                if weight.is_trivial() {
                    return 0.5 * coeff * ui * ui;
                }
                let tau = ui * ui / r_eff.powf(two_s);
                weight.primitive_ratio_integral(tau) / two_s
            }
        }
    }

    fn tail_curvature(&self, law: Law, ui: f64, coeff: f64, r_eff: f64) -> f64 {
        match law {
            Law::Power { p } => (p - 1.0) * coeff * ui.abs().powf(p - 2.0),
            Law::Regularized { weight, two_s } => {
                if weight.is_trivial() {
                    return coeff;
                }
                let r2s = r_eff.powf(two_s);
                let tau = ui * ui / r2s;
                (2.0 * weight.value(tau) - weight.primitive_ratio(tau)) / (0.5 * two_s * r2s)
            }
        }
    }

    /// Σ over interior nodes of `t_i(u_i) · g(u_i)`, zero for the regional variant.
    fn tail_sum(&self, mut term: impl FnMut(usize, f64, f64) -> f64) -> f64 {
        match &self.far_field {
            None => 0.0,
            Some(ff) => ff
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, &c)| term(i, c, ff.r_eff))
                .sum(),
        }
    }

    fn form_with(&self, law: Law, u: &[f64], v: &[f64], kappa: &ControlField) -> Result<f64> {
        self.check_state(u)?;
        self.check_state(v)?;
        self.check_control(kappa)?;
        let h = self.h();
        let c = self.params.c_norm;
        let mass: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * h;
        let mut pairs = 0.0;
        self.for_each_pair(|i, j, slot| {
            let du = u[i] - j.map_or(0.0, |j| u[j]);
            let dv = v[i] - j.map_or(0.0, |j| v[j]);
            let (factor, w) = self.pair_factor(law, du, slot);
            pairs += kappa.values[slot] * factor * du * dv * w;
        });
        let kf = self.far_field.as_ref().map_or(0.0, |_| self.kappa_far(kappa));
        let tail = self.tail_sum(|i, coeff, r| self.tail_factor(law, u[i], coeff, r) * u[i] * v[i]);
        Ok(mass + c * pairs + c * h * kf * tail)
    }

    /// `Σ u v h + (c/2) Σ_{i≠j} κ |Δu|^(p-2) Δu Δv h²/d^(1+sp)`.
    pub fn energy_form(&self, u: &[f64], v: &[f64], kappa: &ControlField) -> Result<f64> {
        self.form_with(self.law(None), u, v, kappa)
    }

    /// `Σ u v h + (c/2) Σ_{i≠j} κ [eps + F_n(Δu²/d^(2s))]^((p-2)/2) Δu Δv h²/d^(1+2s)`.
    pub fn regularized_form(
        &self,
        u: &[f64],
        v: &[f64],
        kappa: &ControlField,
        rp: &RegParams,
    ) -> Result<f64> {
        self.form_with(self.law(Some(rp)), u, v, kappa)
    }

    /// Regularized form when `rp` is given, the plain one otherwise.
    pub fn form(&self, u: &[f64], v: &[f64], kappa: &ControlField, rp: Option<&RegParams>) -> Result<f64> {
        self.form_with(self.law(rp), u, v, kappa)
    }

    /// Convex potential whose gradient is the weak-form residual.
    pub fn potential(
        &self,
        u: &[f64],
        f: &[f64],
        kappa: &ControlField,
        rp: Option<&RegParams>,
    ) -> Result<f64> {
        self.check_state(u)?;
        self.check_state(f)?;
        self.check_control(kappa)?;
        let law = self.law(rp);
        let h = self.h();
        let c = self.params.c_norm;
        let mut pairs = 0.0;
        self.for_each_pair(|i, j, slot| {
            let du = u[i] - j.map_or(0.0, |j| u[j]);
            pairs += kappa.values[slot] * self.pair_potential(law, du, slot);
        });
        let kf = self.far_field.as_ref().map_or(0.0, |_| self.kappa_far(kappa));
        let tail = self.tail_sum(|i, coeff, r| self.tail_potential(law, u[i], coeff, r));
        let quadratic: f64 = u.iter().zip(f).map(|(&a, &b)| 0.5 * a * a - b * a).sum::<f64>() * h;
        Ok(c * pairs + c * h * kf * tail + quadratic)
    }

    /// `(c/2p) Σ_{i≠j} κ |Δu|^p w + ½ Σ u² h − Σ f u h`.
    pub fn energy_functional(&self, u: &[f64], f: &[f64], kappa: &ControlField) -> Result<f64> {
        self.potential(u, f, kappa, None)
    }

    pub fn regularized_potential(
        &self,
        u: &[f64],
        f: &[f64],
        kappa: &ControlField,
        rp: &RegParams,
    ) -> Result<f64> {
        self.potential(u, f, kappa, Some(rp))
    }

    /// Component `k` is `form(u, e_k) − f_k h`.
    pub fn residual(
        &self,
        u: &[f64],
        f: &[f64],
        kappa: &ControlField,
        rp: Option<&RegParams>,
    ) -> Result<Vec<f64>> {
        self.check_state(u)?;
        self.check_state(f)?;
        self.check_control(kappa)?;
        let law = self.law(rp);
        let h = self.h();
        let c = self.params.c_norm;
        let mut r: Vec<f64> = u.iter().zip(f).map(|(a, b)| (a - b) * h).collect();
        self.for_each_pair(|i, j, slot| {
            let du = u[i] - j.map_or(0.0, |j| u[j]);
            let (factor, w) = self.pair_factor(law, du, slot);
            let flux = c * kappa.values[slot] * factor * du * w;
            r[i] += flux;
            if let Some(j) = j {
                r[j] -= flux;
            }
        });
        if let Some(ff) = &self.far_field {
            let kf = self.kappa_far(kappa);
            for (i, (&coeff, ri)) in ff.coefficients.iter().zip(r.iter_mut()).enumerate() {
                *ri += c * h * kf * self.tail_factor(law, u[i], coeff, ff.r_eff) * u[i];
            }
        }
        Ok(r)
    }

    /// Analytic Hessian of [`Self::potential`].
    pub fn hessian(&self, u: &[f64], kappa: &ControlField, rp: Option<&RegParams>) -> Result<DMatrix<f64>> {
        self.check_state(u)?;
        self.check_control(kappa)?;
        let law = self.law(rp);
        let m = self.m();
        let h = self.h();
        let c = self.params.c_norm;
        let mut hess = DMatrix::from_diagonal_element(m, m, h);
        self.for_each_pair(|i, j, slot| {
            let du = u[i] - j.map_or(0.0, |j| u[j]);
            let k = c * kappa.values[slot] * self.pair_curvature(law, du, slot);
            hess[(i, i)] += k;
            if let Some(j) = j {
                hess[(j, j)] += k;
                hess[(i, j)] -= k;
                hess[(j, i)] -= k;
            }
        });
        if let Some(ff) = &self.far_field {
            let kf = self.kappa_far(kappa);
            for (i, &coeff) in ff.coefficients.iter().enumerate() {
                hess[(i, i)] += c * h * kf * self.tail_curvature(law, u[i], coeff, ff.r_eff);
            }
        }
        Ok(hess)
    }

    /// `Σ_{i≠j} κ [eps + G_n]^((p-2)/2) Δu² w2` including the far field.
    pub fn quasi_norm_power(&self, u: &[f64], kappa: &ControlField, rp: &RegParams) -> Result<f64> {
        self.nonlinear_energy(u, kappa, Some(rp))
    }

    pub fn quasi_norm(&self, u: &[f64], kappa: &ControlField, rp: &RegParams) -> Result<f64> {
        Ok(self.quasi_norm_power(u, kappa, rp)?.powf(1.0 / self.params.p))
    }

    /// `Σ_{i≠j} κ |Δu|^p w` including the far field.
    pub fn kappa_energy(&self, u: &[f64], kappa: &ControlField) -> Result<f64> {
        self.nonlinear_energy(u, kappa, None)
    }

    /// The nonlocal part of `form(u, u)` divided by `c/2`.
    pub fn nonlinear_energy(&self, u: &[f64], kappa: &ControlField, rp: Option<&RegParams>) -> Result<f64> {
        self.check_state(u)?;
        self.check_control(kappa)?;
        let law = self.law(rp);
        let h = self.h();
        let mut pairs = 0.0;
        self.for_each_pair(|i, j, slot| {
            let du = u[i] - j.map_or(0.0, |j| u[j]);
            let (factor, w) = self.pair_factor(law, du, slot);
            pairs += kappa.values[slot] * factor * du * du * w;
        });
        let kf = self.far_field.as_ref().map_or(0.0, |_| self.kappa_far(kappa));
        let tail = self.tail_sum(|i, coeff, r| self.tail_factor(law, u[i], coeff, r) * u[i] * u[i]);
        Ok(2.0 * pairs + 2.0 * h * kf * tail)
    }

    /// Discrete `W^{s,p}` seminorm `(Σ_{i≠j} |Δu|^p h²/d^(1+sp))^(1/p)` on this
    /// discretization's pair set, for any `s` and `p`.
    pub fn gagliardo_seminorm(&self, u: &[f64], s: f64, p: f64) -> Result<f64> {
        self.check_state(u)?;
        let h = self.h();
        let h2 = h * h;
        let sp = s * p;
        let mut pairs = 0.0;
        self.for_each_pair(|i, j, slot| {
            let du = u[i] - j.map_or(0.0, |j| u[j]);
            pairs += du.abs().powf(p) * h2 / self.diff.offset(slot + 1).powf(1.0 + sp);
        });
        let tail = match &self.far_field {
            None => 0.0,
            Some(ff) => {
                let t = two_sided_tail_integral(ff.r_eff, sp);
                u.iter().map(|x| x.abs().powf(p) * t).sum::<f64>()
            }
        };
        Ok((2.0 * pairs + 2.0 * h * tail).powf(1.0 / p))
    }

    /// Ordered pairs whose difference quotient `|Δu|/d^s` exceeds the threshold.
    pub fn level_set(&self, u: &[f64], n: u64, s: f64, threshold: LevelThreshold) -> Result<LevelSet> {
        self.check_state(u)?;
        let cut = level_cut(n, threshold);
        let h2 = self.h() * self.h();
        let mut pairs = Vec::new();
        let mut weighted = 0.0;
        self.for_each_pair_indexed(|i, j, slot, b| {
            let du = u[i] - j.map_or(0.0, |j| u[j]);
            let d = self.diff.offset(slot + 1);
            if du.abs() / d.powf(s) > cut {
                let a = i as i64 + 1;
                pairs.push((a, b));
                pairs.push((b, a));
                weighted += 2.0 * h2 / d.powf(2.0 * s - 1.0);
            }
        });
        let measure = h2 * pairs.len() as f64;
        Ok(LevelSet { pairs, measure, weighted_measure: weighted })
    }

    /// Portion of the quasi-norm energy carried by the level set.
    pub fn level_set_energy(
        &self,
        u: &[f64],
        kappa: &ControlField,
        rp: &RegParams,
        threshold: LevelThreshold,
    ) -> Result<f64> {
        self.check_state(u)?;
        self.check_control(kappa)?;
        let law = self.law(Some(rp));
        let s = self.params.s;
        let cut = level_cut(rp.n, threshold);
        let mut total = 0.0;
        self.for_each_pair(|i, j, slot| {
            let du = u[i] - j.map_or(0.0, |j| u[j]);
            if du.abs() / self.diff.offset(slot + 1).powf(s) > cut {
                let (factor, w) = self.pair_factor(law, du, slot);
                total += 2.0 * kappa.values[slot] * factor * du * du * w;
            }
        });
        Ok(total)
    }
}

fn level_cut(n: u64, threshold: LevelThreshold) -> f64 {
    let nf = n as f64;
    match threshold {
        LevelThreshold::Saturation => (nf * nf + 1.0).sqrt(),
        LevelThreshold::Cutoff => nf,
    }
}
