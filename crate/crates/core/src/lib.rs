//! Homogenisation engine for free-discontinuity energies with linear growth.
//!
//! The pipeline goes from evaluable energy densities with declared growth
//! constants ([`integrands`], [`families`]) over rotated lattice domains
//! ([`geometry`]) and discrete fields with per-face jump indicators
//! ([`fields`]) to minimum-value solvers ([`cell_solver`]), the asymptotic
//! cell formulas for the effective densities ([`homogenize`]), seeded
//! stationary random ensembles with their subadditive processes
//! ([`stochastic`]), and the configuration-driven experiment runner
//! ([`config`], [`experiments`]).

// `!(x > 0.0)`-style guards are used on purpose: unlike `x <= 0.0` they also
// reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The cell-formula entry points mirror the formulas' parameter lists.
#![allow(clippy::too_many_arguments)]
#![allow(clippy::type_complexity)]

pub mod error;
pub(crate) mod vecmath;
pub mod integrands;
pub mod families;
pub mod geometry;
pub mod fields;
pub mod cell_solver;
pub mod homogenize;
pub mod stochastic;
pub mod config;
pub mod experiments;

pub use error::{Error, Result};
