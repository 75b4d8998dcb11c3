//! Uniform 1D discretization of the interval and the offset grid on which
//! the kernel coefficient lives.
//!
//! Nodes sit on the lattice `x_j = a + j*h`. Indices `1..=m` are interior,
//! every other lattice node carries the homogeneous value zero. Pair offsets
//! are always computed from integer index differences, so `|x_i - x_j|` maps
//! onto exactly one stored offset `k*h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which nonlocal operator is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Interactions restricted to the closed interval.
    Regional,
    /// Interactions over the whole line with zero exterior data.
    Full,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Regional => write!(f, "regional"),
            Variant::Full => write!(f, "full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub m: usize,
    pub h: f64,
}

impl Grid {
    /// Lattice coordinate of (possibly exterior) node index `j`.
    pub fn x(&self, j: i64) -> f64 {
        self.a + j as f64 * self.h
    }

    /// All nodes of the closed interval, `x_0 = a` through `x_{m+1} = b`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.m as i64 + 1).map(|j| self.x(j)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..=self.m as i64).map(|j| self.x(j)).collect()
    }

    pub fn is_interior(&self, j: i64) -> bool {
        j >= 1 && j <= self.m as i64
    }
}

pub fn build_grid(a: f64, b: f64, m: usize) -> Result<Grid> {
    if m == 0 {
        return Err(Error::Config("m must be ≥ 1".into()));
    }
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(Error::Config(format!("interval requires b > a (got a={a}, b={b})")));
    }
    let h = (b - a) / (m as f64 + 1.0);
    Ok(Grid { a, b, m, h })
}

/// Strictly positive pair offsets `d_k = k*h`, `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceGrid {
    pub variant: Variant,
    pub h: f64,
    pub count: usize,
    /// Interaction radius of the full variant.
    pub r_trunc: Option<f64>,
}

impl DifferenceGrid {
    /// Offset for index difference `k >= 1`.
    pub fn offset(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn offsets(&self) -> Vec<f64> {
        (1..=self.count).map(|k| self.offset(k)).collect()
    }

    /// Position (0-based) of the stored offset matching nodes `i` and `j`.
    pub fn slot(&self, i: i64, j: i64) -> Option<usize> {
        let k = (i - j).unsigned_abs() as usize;
        (k >= 1 && k <= self.count).then(|| k - 1)
    }
}

pub fn build_difference_grid(
    grid: &Grid,
    variant: Variant,
    r_trunc: Option<f64>,
) -> Result<DifferenceGrid> {
    let count = match variant {
        Variant::Regional => grid.m + 1,
        Variant::Full => {
            let r = r_trunc.ok_or_else(|| Error::Config("truncation radius required".into()))?;
            if !(r > grid.b - grid.a) {
                return Err(Error::Config(format!(
                    "truncation radius must exceed b - a = {} (got {r})",
                    grid.b - grid.a
                )));
            }
            // guard against r/h landing a hair below an integer
            ((r / grid.h) * (1.0 + 1e-12)).floor() as usize
        }
    };
    Ok(DifferenceGrid {
        variant,
        h: grid.h,
        count,
        r_trunc: match variant {
            Variant::Regional => None,
            Variant::Full => r_trunc,
        },
    })
}

/// Fractional order, nonlinearity exponent and normalization constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub s: f64,
    pub p: f64,
    pub c_norm: f64,
    pub variant: Variant,
}

impl FracParams {
    pub fn new(s: f64, p: f64, c_norm: f64, variant: Variant) -> Result<Self> {
        let fp = FracParams { s, p, c_norm, variant };
        let violations = fp.violations();
        if violations.is_empty() {
            Ok(fp)
        } else {
            Err(Error::Validation(violations))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.variant {
            Variant::Regional if !(self.s > 0.5 && self.s < 1.0) => {
                out.push(format!("regional variant requires 1/2<s<1 (got s={})", self.s))
            }
            Variant::Full if !(self.s > 0.0 && self.s < 1.0) => {
                out.push(format!("full variant requires 0<s<1 (got s={})", self.s))
            }
            _ => {}
        }
        if !(self.p >= 2.0) || !self.p.is_finite() {
            out.push(format!("p must satisfy p ≥ 2 (got p={})", self.p));
        }
        if !(self.c_norm > 0.0) || !self.c_norm.is_finite() {
            out.push(format!("c_norm must be positive (got {})", self.c_norm));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_three_nodes() {
        let g = build_grid(0.0, 1.0, 3).unwrap();
        assert_eq!(g.h, 0.25);
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.interior_nodes(), vec![0.25, 0.5, 0.75]);
        assert_eq!(build_grid(0.0, 2.0, 3).unwrap().h, 0.5);
    }

    #[test]
    fn rejects_bad_grids() {
        let err = build_grid(0.0, 1.0, 0).unwrap_err();
        assert!(err.to_string().contains("m must be ≥ 1"));
        assert!(build_grid(1.0, 1.0, 4).is_err());
        assert!(build_grid(2.0, 1.0, 4).is_err());
    }

    #[test]
    fn regional_offsets() {
        let g = build_grid(0.0, 1.0, 3).unwrap();
        let d = build_difference_grid(&g, Variant::Regional, None).unwrap();
        assert_eq!(d.offsets(), vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn full_offsets() {
        let g = build_grid(0.0, 1.0, 3).unwrap();
        let d = build_difference_grid(&g, Variant::Full, Some(2.0)).unwrap();
        assert_eq!(d.count, 8);
        assert_eq!(d.offsets().first(), Some(&0.25));
        assert_eq!(d.offsets().last(), Some(&2.0));
        let err = build_difference_grid(&g, Variant::Full, None).unwrap_err();
        assert!(err.to_string().contains("truncation radius required"));
        assert!(build_difference_grid(&g, Variant::Full, Some(1.0)).is_err());
    }

    #[test]
    fn every_pair_maps_to_one_offset() {
        let g = build_grid(-0.3, 1.7, 9).unwrap();
        let d = build_difference_grid(&g, Variant::Regional, None).unwrap();
        let n = g.m as i64 + 1;
        for i in 0..=n {
            for j in 0..=n {
                if i == j {
                    assert!(d.slot(i, j).is_none());
                    continue;
                }
                let k = d.slot(i, j).unwrap();
                assert_eq!(d.offset(k + 1), (i - j).abs() as f64 * g.h);
                assert!(((g.x(i) - g.x(j)).abs() - d.offset(k + 1)).abs() < 1e-14);
                let hits = d
                    .offsets()
                    .iter()
                    .filter(|&&o| o == (i - j).abs() as f64 * g.h)
                    .count();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn parameter_ranges() {
        assert!(FracParams::new(0.75, 2.0, 1.0, Variant::Regional).is_ok());
        let err = FracParams::new(0.4, 2.0, 1.0, Variant::Regional).unwrap_err();
        assert!(err.to_string().contains("regional variant requires 1/2<s<1"));
        assert!(FracParams::new(0.4, 2.0, 1.0, Variant::Full).is_ok());
        assert!(FracParams::new(0.75, 1.5, 1.0, Variant::Regional).is_err());
        assert!(FracParams::new(0.75, 3.0, 0.0, Variant::Full).is_err());
    }
}
