//! The C¹ cutoff family `F_n` and the regularized interaction weight
//! `[eps + F_n(tau)]^((p-2)/2)` together with its primitives.
//!
//! `F_n` is the identity below `n²`, the constant `n² + 1` above `n² + 1`,
//! and on the blend interval `n² + t`, `t ∈ [0, 1]`, it equals `n² + b(t)`
//! with the cubic Hermite blend `b(t) = -t³ + t² + t`. The blend matches
//! value and slope at both junctions and overshoots the identity by
//! `b(t) - t = t²(1 - t) ≤ 4/27`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Maximal overshoot `max_t t²(1-t)` of the Hermite blend, attained at `t = 2/3`.
pub const BLEND_DELTA: f64 = 4.0 / 27.0;

fn n_squared(n: u64) -> f64 {
    let nf = n as f64;
    nf * nf
}

fn blend(t: f64) -> f64 {
    ((-t + 1.0) * t + 1.0) * t
}

fn blend_prime(t: f64) -> f64 {
    (-3.0 * t + 2.0) * t + 1.0
}

pub(crate) fn cutoff(tau: f64, n: u64) -> f64 {
    let n2 = n_squared(n);
    if tau <= n2 {
        tau
    } else if tau > n2 + 1.0 {
        n2 + 1.0
    } else {
        n2 + blend(tau - n2)
    }
}

pub(crate) fn cutoff_prime(tau: f64, n: u64) -> f64 {
    let n2 = n_squared(n);
    if tau < n2 {
        1.0
    } else if tau > n2 + 1.0 {
        0.0
    } else {
        blend_prime(tau - n2)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau must be nonnegative (got {tau})")))
    }
}

fn check_n(n: u64) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidArgument("n must be ≥ 1".into()))
    }
}

pub fn f_n(tau: f64, n: u64) -> Result<f64> {
    check_tau(tau)?;
    check_n(n)?;
    Ok(cutoff(tau, n))
}

pub fn f_n_prime(tau: f64, n: u64) -> Result<f64> {
    check_tau(tau)?;
    check_n(n)?;
    Ok(cutoff_prime(tau, n))
}

/// `F_n(du² / dx^(2s))` for one node pair.
pub fn g_n(du: f64, dx: f64, s: f64, n: u64) -> Result<f64> {
    if !(dx > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pair distance must be positive (got {dx})"
        )));
    }
    check_n(n)?;
    Ok(cutoff(du * du / dx.powf(2.0 * s), n))
}

/// The regularization pair `(eps, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub epsilon: f64,
    pub n: u64,
    pub delta: f64,
}

impl RegParams {
    pub fn new(epsilon: f64, n: u64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0 (got {epsilon})")));
        }
        check_n(n)?;
        Ok(RegParams { epsilon, n, delta: BLEND_DELTA })
    }

    /// Interaction weight for exponent `p`.
    pub fn weight(&self, p: f64) -> RegWeight {
        RegWeight { epsilon: self.epsilon, n: self.n, q: 0.5 * (p - 2.0) }
    }
}

/// `g(tau) = [eps + F_n(tau)]^q` with `q = (p-2)/2`, plus the primitives the
/// convex potentials need.
#[derive(Debug, Clone, Copy)]
pub struct RegWeight {
    pub epsilon: f64,
    pub n: u64,
    pub q: f64,
}

const QUAD_TOL: f64 = 1e-15;

impl RegWeight {
    pub fn is_trivial(&self) -> bool {
        self.q == 0.0
    }

    pub fn value(&self, tau: f64) -> f64 {
        (self.epsilon + cutoff(tau, self.n)).powf(self.q)
    }

    pub fn derivative(&self, tau: f64) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        let fp = cutoff_prime(tau, self.n);
        if fp == 0.0 {
            return 0.0;
        }
        self.q * (self.epsilon + cutoff(tau, self.n)).powf(self.q - 1.0) * fp
    }

    /// `Φ(tau) = ∫_0^tau g(σ) dσ`: closed form off the blend interval,
    /// adaptive quadrature on it.
    pub fn primitive(&self, tau: f64) -> f64 {
        if self.is_trivial() {
            return tau;
        }
        let n2 = n_squared(self.n);
        let below = self.identity_primitive(tau.min(n2));
        if tau <= n2 {
            return below;
        }
        let t_hi = (tau - n2).min(1.0);
        let base = self.epsilon + n2;
        let q = self.q;
        let on_blend = adaptive_simpson(
            &|t: f64| (base + blend(t)).powf(q),
            0.0,
            t_hi,
            QUAD_TOL * base.powf(q),
        );
        if tau <= n2 + 1.0 {
            return below + on_blend;
        }
        below + on_blend + (base + 1.0).powf(q) * (tau - n2 - 1.0)
    }

    /// `((eps + tau)^(q+1) - eps^(q+1)) / (q+1)` without cancellation.
    fn identity_primitive(&self, tau: f64) -> f64 {
        let r = self.q + 1.0;
        self.epsilon.powf(r) * (r * (tau / self.epsilon).ln_1p()).exp_m1() / r
    }

    /// `Φ(tau) / tau`, continuous at zero where it equals `g(0)`.
    pub fn primitive_ratio(&self, tau: f64) -> f64 {
        if self.is_trivial() {
            return 1.0;
        }
        if tau <= 0.0 {
            return self.epsilon.powf(self.q);
        }
        self.primitive(tau) / tau
    }

    /// `∫_0^tau Φ(σ)/σ dσ`, the far-field potential of the full variant.
    pub fn primitive_ratio_integral(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        if self.is_trivial() {
            return tau;
        }
        let n2 = n_squared(self.n);
        let scale = (self.epsilon + n2 + 1.0).powf(self.q);
        let lo_end = tau.min(n2);
        let mut total = adaptive_simpson(
            &|s: f64| self.primitive_ratio(s),
            0.0,
            lo_end,
            QUAD_TOL * scale * lo_end.max(1.0),
        );
        if tau > n2 {
            let mid_end = tau.min(n2 + 1.0);
            total += adaptive_simpson(
                &|s: f64| self.primitive_ratio(s),
                n2,
                mid_end,
                QUAD_TOL * scale,
            );
        }
        if tau > n2 + 1.0 {
            // Φ is affine past the blend: Φ(σ) = A + g∞ σ
            let s1 = n2 + 1.0;
            let g_inf = (self.epsilon + s1).powf(self.q);
            let a = self.primitive(s1) - g_inf * s1;
            total += g_inf * (tau - s1) + a * (tau / s1).ln();
        }
        total
    }
}
