//! Exterior interactions of the full variant beyond the truncation radius.
//!
//! Interior node `x_i` interacts with lattice nodes up to `K*h` away; each
//! lattice node stands for a cell of width `h`, so the discrete sum covers
//! `|r| < (K + 1/2) h` and the analytic tail starts at `R_eff = (K + 1/2) h`.
//! Outside the domain `u = 0`, hence the tail of the unregularized operator
//! at `x_i` is `κ_far |u_i|^(p-2) u_i ∫_{|r|>R_eff} |r|^(-1-sp) dr` with
//! `∫_{|r|>R} |r|^(-1-sp) dr = 2 R^(-sp) / (sp)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_difference_grid, FracParams, Grid, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    /// Distance from each interior node to the truncation edge.
    pub r_eff: f64,
    /// Per interior node: `2 R_eff^(-sp) / (sp)`.
    pub coefficients: Vec<f64>,
    /// Far-field kernel value; `None` uses κ at the largest stored offset.
    pub kappa_far: Option<f64>,
}

/// `∫_{|r| > r} |r|^(-1-sp) dr` on the real line.
pub fn two_sided_tail_integral(r: f64, sp: f64) -> f64 {
    2.0 * r.powf(-sp) / sp
}

pub fn assemble_full_variant_tail(grid: &Grid, fp: &FracParams, r_trunc: f64) -> Result<FarField> {
    if fp.variant != Variant::Full {
        return Err(Error::InvalidArgument(
            "far-field tail only exists for the full variant".into(),
        ));
    }
    let diff = build_difference_grid(grid, Variant::Full, Some(r_trunc))?;
    let r_eff = (diff.count as f64 + 0.5) * grid.h;
    let c = two_sided_tail_integral(r_eff, fp.s * fp.p);
    Ok(FarField { r_eff, coefficients: vec![c; grid.m], kappa_far: None })
}
