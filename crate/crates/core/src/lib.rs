//! Regional and full fractional p-Laplace state equations in one space
//! dimension with a kernel coefficient acting as control, their
//! `(eps, n)` regularization, and the TV-regularized coefficient control
//! problem together with a harness that follows the regularization path.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod control;
pub mod error;
pub mod far_field;
pub mod forms;
pub mod grid;
pub mod harness;
pub mod invariants;
pub mod quadrature;
pub mod regularizer;
pub mod solver;

pub use error::{Error, Result};
pub use far_field::{assemble_full_variant_tail, FarField};
pub use forms::{ControlField, Discretization, LevelSet, LevelThreshold, PairWeights, StateField};
pub use grid::{build_difference_grid, build_grid, DifferenceGrid, FracParams, Grid, Variant};
pub use regularizer::{f_n, f_n_prime, g_n, RegParams, RegWeight, BLEND_DELTA};
