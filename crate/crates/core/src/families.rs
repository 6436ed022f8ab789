//! Builtin integrand families constructible from the experiment config.
//!
//! Coefficient fields are functions of the spatial point only; the argument
//! dependence is always through the Euclidean norm, which keeps every family
//! inside the admissible classes for suitable declared constants.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrands::{IntegrandConstants, SurfaceIntegrand, VolumeIntegrand};
use crate::vecmath::norm;

/// Piecewise-constant periodic coefficient along the first coordinate:
/// `values[j]` on `[j*w, (j+1)*w)` with `w = period / values.len()`.
fn laminate_coefficient(values: Arc<Vec<f64>>, period: f64) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| {
        let w = period / values.len() as f64;
        let mut j = (x[0] / w).floor() as i64 % values.len() as i64;
        if j < 0 {
            j += values.len() as i64;
        }
        values[j as usize]
    }
}

/// Coefficient constant on unit lattice cells, alternating through `values`
/// by the parity sum of the cell index.
fn checkerboard_coefficient(values: Arc<Vec<f64>>) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| {
        let s: i64 = x.iter().map(|&c| c.floor() as i64).sum();
        let mut j = s % values.len() as i64;
        if j < 0 {
            j += values.len() as i64;
        }
        values[j as usize]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum VolumeFamily {
    /// `c * |xi|`
    IsoNorm { coefficient: f64 },
    /// `sqrt(1 + |xi|^2) - 1`
    SmoothedNorm,
    /// `a(x_1) * |xi|` with a periodic piecewise-constant coefficient
    Laminate { values: Vec<f64>, period: f64 },
    /// unit-cell checkerboard coefficient times `|xi|`
    CheckerboardCellwise { values: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceFamily {
    /// `b * |zeta|`
    IsoNorm { coefficient: f64 },
    /// `b(x_1) * |zeta|`
    Laminate { values: Vec<f64>, period: f64 },
    /// unit-cell checkerboard coefficient times `|zeta|`
    CheckerboardCellwise { values: Vec<f64> },
    /// `|zeta| * (2 - exp(-|zeta|))`
    SaturatingExp,
}

fn positive_values(path: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() || values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::config(path, "coefficient values must be positive"));
    }
    Ok(())
}

impl VolumeFamily {
    /// Declared constants under which the family is admissible.
    pub fn constants(&self) -> Result<IntegrandConstants> {
        Ok(match self {
            VolumeFamily::IsoNorm { coefficient } => {
                positive_values("volume.coefficient", &[*coefficient])?;
                IntegrandConstants::norm_like(*coefficient, *coefficient)
            }
            VolumeFamily::SmoothedNorm => {
                let mut c = IntegrandConstants::norm_like(0.5, 1.0);
                c.c5 = 1.0;
                c
            }
            VolumeFamily::Laminate { values, .. }
            | VolumeFamily::CheckerboardCellwise { values } => {
                positive_values("volume.values", values)?;
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(0.0_f64, f64::max);
                IntegrandConstants::norm_like(lo, hi)
            }
        })
    }

    pub fn build(&self, dims: (usize, usize)) -> Result<VolumeIntegrand> {
        let constants = self.constants()?;
        Ok(match self {
            VolumeFamily::IsoNorm { coefficient } => {
                let c = *coefficient;
                VolumeIntegrand::new(
                    dims,
                    constants,
                    true,
                    true,
                    Arc::new(move |_x, xi| c * norm(xi)),
                )
            }
            VolumeFamily::SmoothedNorm => VolumeIntegrand::new(
                dims,
                constants,
                false,
                true,
                Arc::new(|_x, xi| (1.0 + norm(xi).powi(2)).sqrt() - 1.0),
            ),
            VolumeFamily::Laminate { values, period } => {
                if !(*period > 0.0) {
                    return Err(Error::config("volume.period", "period must be positive"));
                }
                let coef = laminate_coefficient(Arc::new(values.clone()), *period);
                VolumeIntegrand::new(
                    dims,
                    constants,
                    true,
                    false,
                    Arc::new(move |x, xi| coef(x) * norm(xi)),
                )
            }
            VolumeFamily::CheckerboardCellwise { values } => {
                let coef = checkerboard_coefficient(Arc::new(values.clone()));
                VolumeIntegrand::new(
                    dims,
                    constants,
                    true,
                    false,
                    Arc::new(move |x, xi| coef(x) * norm(xi)),
                )
            }
        })
    }
}

impl SurfaceFamily {
    pub fn constants(&self) -> Result<IntegrandConstants> {
        Ok(match self {
            SurfaceFamily::IsoNorm { coefficient } => {
                positive_values("surface.coefficient", &[*coefficient])?;
                IntegrandConstants::norm_like(*coefficient, *coefficient)
            }
            SurfaceFamily::Laminate { values, .. }
            | SurfaceFamily::CheckerboardCellwise { values } => {
                positive_values("surface.values", values)?;
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(0.0_f64, f64::max);
                IntegrandConstants::norm_like(lo, hi)
            }
            SurfaceFamily::SaturatingExp => IntegrandConstants::norm_like(1.0, 2.0),
        })
    }

    pub fn build(&self, dims: (usize, usize)) -> Result<SurfaceIntegrand> {
        let constants = self.constants()?;
        Ok(match self {
            SurfaceFamily::IsoNorm { coefficient } => {
                let c = *coefficient;
                SurfaceIntegrand::new(
                    dims,
                    constants,
                    true,
                    true,
                    Arc::new(move |_x, z, _nu| c * norm(z)),
                )
            }
            SurfaceFamily::Laminate { values, period } => {
                if !(*period > 0.0) {
                    return Err(Error::config("surface.period", "period must be positive"));
                }
                let coef = laminate_coefficient(Arc::new(values.clone()), *period);
                SurfaceIntegrand::new(
                    dims,
                    constants,
                    true,
                    false,
                    Arc::new(move |x, z, _nu| coef(x) * norm(z)),
                )
            }
            SurfaceFamily::CheckerboardCellwise { values } => {
                let coef = checkerboard_coefficient(Arc::new(values.clone()));
                SurfaceIntegrand::new(
                    dims,
                    constants,
                    true,
                    false,
                    Arc::new(move |x, z, _nu| coef(x) * norm(z)),
                )
            }
            SurfaceFamily::SaturatingExp => SurfaceIntegrand::new(
                dims,
                constants,
                false,
                true,
                Arc::new(|_x, z, _nu| {
                    let n = norm(z);
                    n * (2.0 - (-n).exp())
                }),
            ),
        })
    }
}
