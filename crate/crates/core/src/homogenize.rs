//! Asymptotic cell formulas: the effective volume, surface and
//! recession-at-infinity densities obtained by solving minimum-value
//! problems along a growing domain schedule and extrapolating, plus
//! independence diagnostics and the homogenised-energy evaluator.

use rayon::prelude::*;

use crate::cell_solver::{
    aligned_quantization, solve_exact_1d, solve_heuristic, BcMode, CellProblem, Datum,
    HeuristicSchedule, PairKind,
};
use crate::error::{Error, Result};
use crate::fields::BVTestFunction1D;
use crate::geometry::rotated_rectangle;
use crate::integrands::{SurfaceIntegrand, VolumeIntegrand};
use crate::vecmath::{dist, norm, outer, scale};

/// Normalized cell values along the schedule and the tail-window estimate of
/// their limit.
#[derive(Clone, Debug)]
pub struct ExtrapolationResult {
    /// (r, normalized value), strictly increasing in r.
    pub samples: Vec<(f64, f64)>,
    /// Mean of the last `tail_window` samples.
    pub limit: f64,
    /// max - min over the tail window.
    pub spread: f64,
    pub tail_window: usize,
}

fn extrapolate(samples: Vec<(f64, f64)>, tail_window: usize) -> Result<ExtrapolationResult> {
    if samples.is_empty() {
        return Err(Error::Precondition("empty schedule".into()));
    }
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Precondition("schedule must be strictly increasing".into()));
    }
    let w = tail_window.max(1).min(samples.len());
    let tail = &samples[samples.len() - w..];
    let limit = tail.iter().map(|p| p.1).sum::<f64>() / w as f64;
    let lo = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = tail.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(ExtrapolationResult {
        samples,
        limit,
        spread: hi - lo,
        tail_window: w,
    })
}

/// How the growing-domain limit is realised numerically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingMode {
    /// Fixed spacing, domain of size r (the cell formulas read literally).
    DomainGrowth,
    /// Fixed unit domain with oscillation scale 1/r; an exact change of
    /// variables of the former, so the normalized values agree to rounding.
    EpsilonScaling,
}

#[derive(Clone, Debug)]
pub struct CellFormulaCfg {
    pub h: f64,
    pub bc_width: f64,
    pub tail_window: usize,
    pub span_factor: f64,
    pub levels_cap: usize,
    pub scaling: ScalingMode,
    pub heuristic: HeuristicSchedule,
}

impl Default for CellFormulaCfg {
    fn default() -> Self {
        Self {
            h: 0.25,
            bc_width: 0.5,
            tail_window: 3,
            span_factor: 1.2,
            levels_cap: 2001,
            scaling: ScalingMode::DomainGrowth,
            heuristic: HeuristicSchedule::default(),
        }
    }
}

impl CellFormulaCfg {
    pub fn default_2d() -> Self {
        Self {
            h: 0.125,
            bc_width: 0.25,
            tail_window: 2,
            ..Default::default()
        }
    }
}

fn solve_value(p: &CellProblem, quant_unit: f64, cfg: &CellFormulaCfg) -> Result<f64> {
    match p.domain.dim() {
        1 => {
            let datum = p.datum_values();
            let quant =
                aligned_quantization(&datum, quant_unit, cfg.span_factor, cfg.levels_cap);
            Ok(solve_exact_1d(p, &quant)?.value)
        }
        2 => Ok(solve_heuristic(p, &cfg.heuristic)?.value),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Raw (unnormalized) minimum value `m(datum, Q^{nu,k}_r(rx))`.
fn cell_value_raw(
    kind: PairKind,
    volume: &VolumeIntegrand,
    surface: &SurfaceIntegrand,
    datum: &Datum,
    x: &[f64],
    nu: &[f64],
    k: u32,
    r: f64,
    bc: BcMode,
    cfg: &CellFormulaCfg,
) -> Result<f64> {
    let n = nu.len();
    match cfg.scaling {
        ScalingMode::DomainGrowth => {
            let center: Vec<f64> = x.iter().map(|c| c * r).collect();
            let domain = std::sync::Arc::new(rotated_rectangle(
                &center,
                r,
                k,
                nu,
                cfg.h,
                cfg.bc_width,
            )?);
            let unit = match datum {
                Datum::Linear { xi } => norm(xi) * cfg.h,
                Datum::Step { zeta, .. } => norm(zeta) / 4.0,
            };
            let p = CellProblem::new(
                kind,
                volume.clone(),
                surface.clone(),
                domain,
                datum.clone(),
                bc,
            )?;
            solve_value(&p, unit, cfg)
        }
        ScalingMode::EpsilonScaling => {
            // Change of variables y = r x', u = v/r: same discrete problem on
            // the unit domain with oscillating densities, values scaled by r^n.
            let domain = std::sync::Arc::new(rotated_rectangle(
                x,
                1.0,
                k,
                nu,
                cfg.h / r,
                cfg.bc_width / r,
            )?);
            let vol_eps = volume.with_spatial_scale(r);
            let sur_eps = surface.with_epsilon_scale(r);
            let datum_eps = match datum {
                Datum::Linear { xi } => Datum::Linear { xi: xi.clone() },
                Datum::Step { zeta, nu: dnu, .. } => Datum::Step {
                    x0: x.to_vec(),
                    zeta: scale(zeta, 1.0 / r),
                    nu: dnu.clone(),
                },
            };
            let unit = match &datum_eps {
                Datum::Linear { xi } => norm(xi) * cfg.h / r,
                Datum::Step { zeta, .. } => norm(zeta) / 4.0,
            };
            let p = CellProblem::new(kind, vol_eps, sur_eps, domain, datum_eps, bc)?;
            Ok(solve_value(&p, unit, cfg)? * r.powi(n as i32))
        }
    }
}

fn validate_schedule(r_schedule: &[f64]) -> Result<()> {
    if r_schedule.len() < 3 {
        return Err(Error::Precondition("schedule needs >= 3 entries".into()));
    }
    if r_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("schedule must increase".into()));
    }
    Ok(())
}

/// Effective volume density: normalized limit of the minimum values with the
/// linear datum and the small-jump surface density.
pub fn volume_limit(
    f: &VolumeIntegrand,
    g0: &SurfaceIntegrand,
    xi: &[f64],
    x: &[f64],
    nu: &[f64],
    k: u32,
    r_schedule: &[f64],
    cfg: &CellFormulaCfg,
) -> Result<ExtrapolationResult> {
    validate_schedule(r_schedule)?;
    let n = nu.len() as i32;
    let samples: Result<Vec<(f64, f64)>> = r_schedule
        .par_iter()
        .map(|&r| {
            let raw = cell_value_raw(
                PairKind::FG0,
                f,
                g0,
                &Datum::Linear { xi: xi.to_vec() },
                x,
                nu,
                k,
                r,
                BcMode::Full,
                cfg,
            )?;
            Ok((r, raw / ((k as f64).powi(n - 1) * r.powi(n))))
        })
        .collect();
    extrapolate(samples?, cfg.tail_window)
}

/// Effective surface density: normalized limit of the minimum values with the
/// elementary jump datum and the recession volume density.
pub fn surface_limit(
    f_inf: &VolumeIntegrand,
    g: &SurfaceIntegrand,
    zeta: &[f64],
    nu: &[f64],
    x: &[f64],
    r_schedule: &[f64],
    cfg: &CellFormulaCfg,
) -> Result<ExtrapolationResult> {
    validate_schedule(r_schedule)?;
    let n = nu.len() as i32;
    let samples: Result<Vec<(f64, f64)>> = r_schedule
        .par_iter()
        .map(|&r| {
            let center: Vec<f64> = x.iter().map(|c| c * r).collect();
            let raw = cell_value_raw(
                PairKind::FinfG,
                f_inf,
                g,
                &Datum::Step {
                    x0: center,
                    zeta: zeta.to_vec(),
                    nu: nu.to_vec(),
                },
                x,
                nu,
                1,
                r,
                BcMode::Full,
                cfg,
            )?;
            Ok((r, raw / r.powi(n - 1)))
        })
        .collect();
    extrapolate(samples?, cfg.tail_window)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfinityRoute {
    /// Cell formula with both scaling limits materialised.
    Cell,
    /// Recession of the effective volume density, evaluated at the recession
    /// schedule's arguments through fresh cell solves (a fixed small-argument
    /// tabulation cannot see the recession of non-homogeneous families).
    Recession,
}

/// Recession at infinity of the effective volume density, by either route.
/// The two routes must agree; their gap is part of the acceptance suite.
#[allow(clippy::too_many_arguments)]
pub fn volume_infinity_limit(
    f: &VolumeIntegrand,
    f_inf: &VolumeIntegrand,
    g0: &SurfaceIntegrand,
    xi: &[f64],
    x: &[f64],
    nu: &[f64],
    k: u32,
    r_schedule: &[f64],
    recession_t: &[f64],
    route: InfinityRoute,
    cfg: &CellFormulaCfg,
) -> Result<ExtrapolationResult> {
    match route {
        InfinityRoute::Cell => {
            validate_schedule(r_schedule)?;
            let n = nu.len() as i32;
            let samples: Result<Vec<(f64, f64)>> = r_schedule
                .par_iter()
                .map(|&r| {
                    let raw = cell_value_raw(
                        PairKind::FinfG0,
                        f_inf,
                        g0,
                        &Datum::Linear { xi: xi.to_vec() },
                        x,
                        nu,
                        k,
                        r,
                        BcMode::Full,
                        cfg,
                    )?;
                    Ok((r, raw / ((k as f64).powi(n - 1) * r.powi(n))))
                })
                .collect();
            extrapolate(samples?, cfg.tail_window)
        }
        InfinityRoute::Recession => {
            if recession_t.len() < 3 || recession_t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Precondition(
                    "recession schedule must be increasing with >= 3 entries".into(),
                ));
            }
            let tail = &recession_t[recession_t.len().saturating_sub(3)..];
            let samples: Result<Vec<(f64, f64)>> = tail
                .par_iter()
                .map(|&t| {
                    let scaled = scale(xi, t);
                    let fh = volume_limit(f, g0, &scaled, x, nu, k, r_schedule, cfg)?;
                    Ok((t, fh.limit / t))
                })
                .collect();
            let samples = samples?;
            extrapolate(samples, 3)
        }
    }
}

/// The partial-boundary minimum value (datum pinned near the faces orthogonal
/// to nu only), normalized as volume-type. As the elongation k grows this
/// approaches the full-boundary recession value.
pub fn volume_infinity_partial(
    f_inf: &VolumeIntegrand,
    g0: &SurfaceIntegrand,
    a: &[f64],
    nu: &[f64],
    x: &[f64],
    k: u32,
    r_schedule: &[f64],
    cfg: &CellFormulaCfg,
) -> Result<ExtrapolationResult> {
    validate_schedule(r_schedule)?;
    let n = nu.len() as i32;
    let xi = outer(a, nu);
    let samples: Result<Vec<(f64, f64)>> = r_schedule
        .par_iter()
        .map(|&r| {
            let raw = cell_value_raw(
                PairKind::FinfG0,
                f_inf,
                g0,
                &Datum::Linear { xi: xi.clone() },
                x,
                nu,
                k,
                r,
                BcMode::PerpendicularOnly,
                cfg,
            )?;
            Ok((r, raw / ((k as f64).powi(n - 1) * r.powi(n))))
        })
        .collect();
    extrapolate(samples?, cfg.tail_window)
}

#[derive(Clone, Debug)]
pub struct TabEntry {
    pub magnitude: f64,
    pub value: f64,
    pub extrap: ExtrapolationResult,
}

#[derive(Clone, Debug)]
pub struct VolumeRay {
    /// Unit direction in argument space (m×n, flattened).
    pub direction: Vec<f64>,
    pub entries: Vec<TabEntry>,
}

/// Tabulated effective volume density: piecewise linear in the magnitude
/// along each tabulated direction, with 1-homogeneous extension where
/// flagged.
#[derive(Clone, Debug)]
pub struct HomogenizedVolume {
    pub dims: (usize, usize),
    pub one_homogeneous: bool,
    pub rays: Vec<VolumeRay>,
}

fn interp_entries(
    entries: &[TabEntry],
    mag: f64,
    one_homogeneous: bool,
    what: &str,
) -> Result<f64> {
    let first = entries.first().expect("nonempty tabulation");
    let last = entries.last().expect("nonempty tabulation");
    if mag < first.magnitude {
        return if one_homogeneous {
            Ok(first.value * mag / first.magnitude)
        } else {
            Err(Error::OutsideTabulation(format!(
                "{what}: magnitude {mag} below tabulated {}",
                first.magnitude
            )))
        };
    }
    if mag > last.magnitude {
        return if one_homogeneous {
            Ok(last.value * mag / last.magnitude)
        } else {
            Err(Error::OutsideTabulation(format!(
                "{what}: magnitude {mag} above tabulated {}",
                last.magnitude
            )))
        };
    }
    if entries.len() == 1 {
        return Ok(first.value);
    }
    let idx = entries
        .windows(2)
        .position(|w| mag <= w[1].magnitude)
        .unwrap_or(entries.len() - 2);
    let (a, b) = (&entries[idx], &entries[idx + 1]);
    let t = (mag - a.magnitude) / (b.magnitude - a.magnitude);
    Ok(a.value + t * (b.value - a.value))
}

impl HomogenizedVolume {
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        let mag = norm(xi);
        if mag == 0.0 {
            return if self.one_homogeneous {
                Ok(0.0)
            } else {
                Err(Error::OutsideTabulation(
                    "volume tabulation queried at 0 without homogeneous extension".into(),
                ))
            };
        }
        let dir = scale(xi, 1.0 / mag);
        let ray = self
            .rays
            .iter()
            .find(|r| dist(&r.direction, &dir) < 1e-9)
            .ok_or_else(|| {
                Error::OutsideTabulation(format!("no tabulated direction matches {dir:?}"))
            })?;
        interp_entries(&ray.entries, mag, self.one_homogeneous, "volume")
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceRay {
    pub zeta_direction: Vec<f64>,
    pub normal: Vec<f64>,
    pub entries: Vec<TabEntry>,
}

#[derive(Clone, Debug)]
pub struct HomogenizedSurface {
    pub dims: (usize, usize),
    pub one_homogeneous: bool,
    pub rays: Vec<SurfaceRay>,
}

impl HomogenizedSurface {
    pub fn eval(&self, zeta: &[f64], nu: &[f64]) -> Result<f64> {
        let mag = norm(zeta);
        if mag == 0.0 {
            return Ok(0.0);
        }
        let dir = scale(zeta, 1.0 / mag);
        let ray = self
            .rays
            .iter()
            .find(|r| dist(&r.zeta_direction, &dir) < 1e-9 && dist(&r.normal, nu) < 1e-9)
            .ok_or_else(|| {
                Error::OutsideTabulation(format!(
                    "no tabulated (zeta, nu) ray matches ({dir:?}, {nu:?})"
                ))
            })?;
        interp_entries(&ray.entries, mag, self.one_homogeneous, "surface")
    }
}

/// Tabulate the effective volume density on `directions × magnitudes`.
pub fn tabulate_volume(
    f: &VolumeIntegrand,
    g0: &SurfaceIntegrand,
    directions: &[Vec<f64>],
    magnitudes: &[f64],
    x: &[f64],
    nu: &[f64],
    k: u32,
    r_schedule: &[f64],
    cfg: &CellFormulaCfg,
) -> Result<HomogenizedVolume> {
    let tasks: Vec<(usize, f64)> = (0..directions.len())
        .flat_map(|d| magnitudes.iter().map(move |&m| (d, m)))
        .collect();
    let results: Result<Vec<(usize, TabEntry)>> = tasks
        .par_iter()
        .map(|&(d, m)| {
            let xi = scale(&directions[d], m);
            let ex = volume_limit(f, g0, &xi, x, nu, k, r_schedule, cfg)?;
            Ok((
                d,
                TabEntry {
                    magnitude: m,
                    value: ex.limit,
                    extrap: ex,
                },
            ))
        })
        .collect();
    let mut rays: Vec<VolumeRay> = directions
        .iter()
        .map(|dir| VolumeRay {
            direction: dir.clone(),
            entries: Vec::new(),
        })
        .collect();
    for (d, e) in results? {
        rays[d].entries.push(e);
    }
    for ray in &mut rays {
        ray.entries
            .sort_by(|a, b| a.magnitude.partial_cmp(&b.magnitude).expect("finite"));
    }
    Ok(HomogenizedVolume {
        dims: f.dims,
        one_homogeneous: f.one_homogeneous && g0.one_homogeneous,
        rays,
    })
}

/// Tabulate the effective surface density on `(zeta directions × magnitudes) × normals`.
pub fn tabulate_surface(
    f_inf: &VolumeIntegrand,
    g: &SurfaceIntegrand,
    zeta_directions: &[Vec<f64>],
    magnitudes: &[f64],
    normals: &[Vec<f64>],
    x: &[f64],
    r_schedule: &[f64],
    cfg: &CellFormulaCfg,
) -> Result<HomogenizedSurface> {
    let tasks: Vec<(usize, usize, f64)> = (0..zeta_directions.len())
        .flat_map(|d| {
            (0..normals.len()).flat_map(move |n| magnitudes.iter().map(move |&m| (d, n, m)))
        })
        .collect();
    let results: Result<Vec<((usize, usize), TabEntry)>> = tasks
        .par_iter()
        .map(|&(d, n, m)| {
            let zeta = scale(&zeta_directions[d], m);
            let ex = surface_limit(f_inf, g, &zeta, &normals[n], x, r_schedule, cfg)?;
            Ok((
                (d, n),
                TabEntry {
                    magnitude: m,
                    value: ex.limit,
                    extrap: ex,
                },
            ))
        })
        .collect();
    let mut rays: Vec<SurfaceRay> = zeta_directions
        .iter()
        .flat_map(|zd| {
            normals.iter().map(move |nr| SurfaceRay {
                zeta_direction: zd.clone(),
                normal: nr.clone(),
                entries: Vec::new(),
            })
        })
        .collect();
    let n_normals = normals.len();
    for ((d, n), e) in results? {
        rays[d * n_normals + n].entries.push(e);
    }
    for ray in &mut rays {
        ray.entries
            .sort_by(|a, b| a.magnitude.partial_cmp(&b.magnitude).expect("finite"));
    }
    Ok(HomogenizedSurface {
        dims: g.dims,
        one_homogeneous: g.one_homogeneous && f_inf.one_homogeneous,
        rays,
    })
}

#[derive(Clone, Debug)]
pub struct AxisSpread {
    pub axis: String,
    pub max_rel_spread: f64,
}

/// Limits recomputed over a cartesian grid of (x, nu, k) with per-axis
/// relative spreads; the cell-formula hypotheses promise independence, this
/// quantifies how well a family satisfies them.
#[derive(Clone, Debug)]
pub struct SpreadReport {
    pub axes: Vec<AxisSpread>,
    /// ((x index, nu index, k index), limit)
    pub limits: Vec<((usize, usize, usize), f64)>,
}

fn rel_spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = values.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        (hi - lo) / scale
    }
}

fn spread_axes(limits: &[((usize, usize, usize), f64)]) -> Vec<AxisSpread> {
    let names = ["x", "nu", "k"];
    let mut axes = Vec::new();
    for (axis, name) in names.iter().enumerate() {
        let mut worst = 0.0_f64;
        // Group by the other two coordinates.
        let mut groups: std::collections::BTreeMap<(usize, usize), Vec<f64>> =
            std::collections::BTreeMap::new();
        for &((i, j, l), v) in limits {
            let key = match axis {
                0 => (j, l),
                1 => (i, l),
                _ => (i, j),
            };
            groups.entry(key).or_default().push(v);
        }
        for vals in groups.values() {
            if vals.len() > 1 {
                worst = worst.max(rel_spread(vals));
            }
        }
        axes.push(AxisSpread {
            axis: names[axis].to_string(),
            max_rel_spread: worst,
        });
        let _ = name;
    }
    axes
}

/// Independence diagnostics for the volume formula over (x, nu, k).
pub fn invariance_volume(
    f: &VolumeIntegrand,
    g0: &SurfaceIntegrand,
    xi: &[f64],
    xs: &[Vec<f64>],
    nus: &[Vec<f64>],
    ks: &[u32],
    r_schedule: &[f64],
    cfg: &CellFormulaCfg,
) -> Result<SpreadReport> {
    let mut tasks = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        for (j, nu) in nus.iter().enumerate() {
            for (l, &k) in ks.iter().enumerate() {
                tasks.push((i, j, l, x.clone(), nu.clone(), k));
            }
        }
    }
    let limits: Result<Vec<((usize, usize, usize), f64)>> = tasks
        .par_iter()
        .map(|(i, j, l, x, nu, k)| {
            let ex = volume_limit(f, g0, xi, x, nu, *k, r_schedule, cfg)?;
            Ok(((*i, *j, *l), ex.limit))
        })
        .collect();
    let limits = limits?;
    Ok(SpreadReport {
        axes: spread_axes(&limits),
        limits,
    })
}

/// Independence diagnostics for the surface formula over x (the normal is a
/// genuine argument of the limit, so only x is varied).
pub fn invariance_surface(
    f_inf: &VolumeIntegrand,
    g: &SurfaceIntegrand,
    zeta: &[f64],
    nu: &[f64],
    xs: &[Vec<f64>],
    r_schedule: &[f64],
    cfg: &CellFormulaCfg,
) -> Result<SpreadReport> {
    let limits: Result<Vec<((usize, usize, usize), f64)>> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let ex = surface_limit(f_inf, g, zeta, nu, x, r_schedule, cfg)?;
            Ok(((i, 0, 0), ex.limit))
        })
        .collect();
    let limits = limits?;
    Ok(SpreadReport {
        axes: spread_axes(&limits),
        limits,
    })
}

/// Homogenised energy of a 1D test function: effective volume density on the
/// absolutely continuous part, effective surface density on the jumps, and
/// the recession density on the diffuse singular mass (1D normals are +1,
/// polars are the sign of the staircase coefficient).
pub fn homogenized_energy(
    fh: &HomogenizedVolume,
    gh: &HomogenizedSurface,
    fh_inf: &HomogenizedVolume,
    u: &BVTestFunction1D,
) -> Result<f64> {
    let mut total = 0.0;
    for (w, &s) in u.breakpoints.windows(2).zip(&u.slopes) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            return Err(Error::Precondition("breakpoints must increase".into()));
        }
        if s != 0.0 {
            total += fh.eval(&[s])? * len;
        } else if !fh.one_homogeneous {
            total += fh.eval(&[0.0])? * len;
        }
    }
    for &(_, amp) in &u.jumps {
        if amp != 0.0 {
            total += gh.eval(&[amp], &[1.0])?;
        }
    }
    if u.cantor_weight != 0.0 {
        total += fh_inf.eval(&[u.cantor_polar()])? * u.cantor_mass();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{SurfaceFamily, VolumeFamily};
    use crate::fields::cantor_test_function;
    use approx::assert_abs_diff_eq;

    fn iso_pair(cf: f64, cg: f64) -> (VolumeIntegrand, SurfaceIntegrand) {
        (
            VolumeFamily::IsoNorm { coefficient: cf }.build((1, 1)).unwrap(),
            SurfaceFamily::IsoNorm { coefficient: cg }.build((1, 1)).unwrap(),
        )
    }

    fn short_schedule() -> Vec<f64> {
        vec![4.0, 8.0, 16.0]
    }

    #[test]
    fn homogeneous_volume_limit_is_exact() {
        let (f, g) = iso_pair(1.0, 1.0);
        let cfg = CellFormulaCfg::default();
        for xi in [0.5, -1.0, 2.0] {
            let ex = volume_limit(&f, &g, &[xi], &[0.0], &[1.0], 1, &short_schedule(), &cfg)
                .unwrap();
            assert_abs_diff_eq!(ex.limit, xi.abs(), epsilon = 1e-10);
            assert!(ex.spread < 1e-10);
        }
    }

    #[test]
    fn homogeneous_surface_limit_is_exact() {
        let (f, g) = iso_pair(1.0, 1.0);
        let cfg = CellFormulaCfg::default();
        let ex = surface_limit(&f, &g, &[1.0], &[1.0], &[0.0], &short_schedule(), &cfg).unwrap();
        assert_abs_diff_eq!(ex.limit, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn interaction_pair_couples_volume_and_surface() {
        // f = 3|xi|, g = 2|zeta|: dense jumps cap the volume limit at 2|xi|,
        // and the single jump caps the surface limit at 2|zeta|.
        let (f, g) = iso_pair(3.0, 2.0);
        let cfg = CellFormulaCfg::default();
        let fx = volume_limit(&f, &g, &[1.0], &[0.0], &[1.0], 1, &short_schedule(), &cfg)
            .unwrap();
        assert_abs_diff_eq!(fx.limit, 2.0, epsilon = 0.05 * 2.0);
        let gx = surface_limit(&f, &g, &[1.0], &[1.0], &[0.0], &short_schedule(), &cfg).unwrap();
        assert_abs_diff_eq!(gx.limit, 2.0, epsilon = 0.05 * 2.0);
    }

    #[test]
    fn laminate_volume_limit_concentrates_in_cheap_cells() {
        let f = VolumeFamily::Laminate {
            values: vec![1.0, 3.0],
            period: 2.0,
        }
        .build((1, 1))
        .unwrap();
        let g = SurfaceFamily::IsoNorm { coefficient: 2.0 }.build((1, 1)).unwrap();
        let cfg = CellFormulaCfg::default();
        let ex = volume_limit(&f, &g, &[1.0], &[0.0], &[1.0], 1, &[4.0, 8.0, 16.0, 32.0], &cfg)
            .unwrap();
        assert_abs_diff_eq!(ex.limit, 1.0, epsilon = 0.05);
    }

    #[test]
    fn epsilon_scaling_matches_domain_growth() {
        let f = VolumeFamily::Laminate {
            values: vec![1.0, 3.0],
            period: 2.0,
        }
        .build((1, 1))
        .unwrap();
        let g = SurfaceFamily::IsoNorm { coefficient: 2.0 }.build((1, 1)).unwrap();
        let grow = CellFormulaCfg::default();
        let eps = CellFormulaCfg {
            scaling: ScalingMode::EpsilonScaling,
            ..Default::default()
        };
        for xi in [0.5, 1.0] {
            let a = volume_limit(&f, &g, &[xi], &[0.0], &[1.0], 1, &short_schedule(), &grow)
                .unwrap();
            let b = volume_limit(&f, &g, &[xi], &[0.0], &[1.0], 1, &short_schedule(), &eps)
                .unwrap();
            for (pa, pb) in a.samples.iter().zip(&b.samples) {
                assert_abs_diff_eq!(pa.1, pb.1, epsilon = 1e-12 * pa.1.abs().max(1.0));
            }
        }
        // Surface-type too.
        let a = surface_limit(&f, &g, &[1.0], &[1.0], &[0.0], &short_schedule(), &grow).unwrap();
        let b = surface_limit(&f, &g, &[1.0], &[1.0], &[0.0], &short_schedule(), &eps).unwrap();
        for (pa, pb) in a.samples.iter().zip(&b.samples) {
            assert_abs_diff_eq!(pa.1, pb.1, epsilon = 1e-12 * pa.1.abs().max(1.0));
        }
    }

    #[test]
    fn recession_routes_agree_for_one_homogeneous() {
        let (f, g) = iso_pair(1.0, 1.0);
        let cfg = CellFormulaCfg::default();
        let ts = [10.0, 100.0, 1000.0];
        let cell = volume_infinity_limit(
            &f,
            &f,
            &g,
            &[1.0],
            &[0.0],
            &[1.0],
            1,
            &short_schedule(),
            &ts,
            InfinityRoute::Cell,
            &cfg,
        )
        .unwrap();
        let rec = volume_infinity_limit(
            &f,
            &f,
            &g,
            &[1.0],
            &[0.0],
            &[1.0],
            1,
            &short_schedule(),
            &ts,
            InfinityRoute::Recession,
            &cfg,
        )
        .unwrap();
        assert_abs_diff_eq!(cell.limit, rec.limit, epsilon = 1e-9);
        assert_abs_diff_eq!(cell.limit, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn normalized_values_respect_growth_bound() {
        let (f, g) = iso_pair(1.0, 1.0);
        let cfg = CellFormulaCfg::default();
        let c = &f.constants;
        for xi in [0.5, 2.0] {
            let ex = volume_limit(&f, &g, &[xi], &[0.0], &[1.0], 1, &short_schedule(), &cfg)
                .unwrap();
            for (_, v) in &ex.samples {
                assert!(*v <= c.c3 * xi.abs() + c.c4 + 1e-10);
                assert!(*v >= c.c2 * xi.abs() - 1e-10);
            }
        }
        let ex = surface_limit(&f, &g, &[1.5], &[1.0], &[0.0], &short_schedule(), &cfg).unwrap();
        for (_, v) in &ex.samples {
            assert!(*v <= c.c3 * 1.5 + 1e-10);
        }
    }

    #[test]
    fn tail_spread_shrinks_with_one_more_doubling() {
        let f = VolumeFamily::Laminate {
            values: vec![1.0, 3.0],
            period: 2.0,
        }
        .build((1, 1))
        .unwrap();
        let g = SurfaceFamily::IsoNorm { coefficient: 2.0 }.build((1, 1)).unwrap();
        let cfg = CellFormulaCfg::default();
        let short = volume_limit(&f, &g, &[1.0], &[0.0], &[1.0], 1, &[4.0, 8.0, 16.0], &cfg)
            .unwrap();
        let long = volume_limit(&f, &g, &[1.0], &[0.0], &[1.0], 1, &[4.0, 8.0, 16.0, 32.0], &cfg)
            .unwrap();
        assert!(long.spread <= short.spread + 1e-12);
    }

    #[test]
    fn invariance_diagnostics_flag_small_spreads() {
        let (f, g) = iso_pair(1.0, 1.0);
        let cfg = CellFormulaCfg::default();
        let rep = invariance_volume(
            &f,
            &g,
            &[1.0],
            &[vec![0.0], vec![0.3]],
            &[vec![1.0], vec![-1.0]],
            &[1, 2, 3],
            &short_schedule(),
            &cfg,
        )
        .unwrap();
        for ax in &rep.axes {
            assert!(
                ax.max_rel_spread <= 1e-9,
                "axis {} spread {}",
                ax.axis,
                ax.max_rel_spread
            );
        }
        // Laminate: translation shifts which cells are cheap but not the limit.
        let f = VolumeFamily::Laminate {
            values: vec![1.0, 3.0],
            period: 2.0,
        }
        .build((1, 1))
        .unwrap();
        let rep = invariance_volume(
            &f,
            &g,
            &[1.0],
            &[vec![0.0], vec![1.0 / 3.0]],
            &[vec![1.0]],
            &[1],
            &[8.0, 16.0, 32.0],
            &cfg,
        )
        .unwrap();
        assert!(rep.axes[0].max_rel_spread <= 0.05);
    }

    #[test]
    fn tabulation_interpolates_and_extends() {
        let (f, g) = iso_pair(1.0, 1.0);
        let cfg = CellFormulaCfg::default();
        let fh = tabulate_volume(
            &f,
            &g,
            &[vec![1.0], vec![-1.0]],
            &[0.5, 1.0, 2.0],
            &[0.0],
            &[1.0],
            1,
            &short_schedule(),
            &cfg,
        )
        .unwrap();
        assert!(fh.one_homogeneous);
        assert_abs_diff_eq!(fh.eval(&[1.5]).unwrap(), 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fh.eval(&[-4.0]).unwrap(), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fh.eval(&[0.1]).unwrap(), 0.1, epsilon = 1e-9);
        assert_eq!(fh.eval(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn homogenized_energy_examples() {
        let (f, g) = iso_pair(1.0, 1.0);
        let cfg = CellFormulaCfg::default();
        let dirs = vec![vec![1.0], vec![-1.0]];
        let mags = vec![0.5, 1.0, 2.0, 4.0];
        let fh = tabulate_volume(&f, &g, &dirs, &mags, &[0.0], &[1.0], 1, &short_schedule(), &cfg)
            .unwrap();
        let gh = tabulate_surface(
            &f,
            &g,
            &dirs.clone(),
            &[0.5, 1.0, 2.0],
            &[vec![1.0], vec![-1.0]],
            &[0.0],
            &short_schedule(),
            &cfg,
        )
        .unwrap();
        // u = linear with slope 2 on (0, 1): energy = fh(2) = 2.
        let u = BVTestFunction1D::linear(2.0, (0.0, 1.0));
        assert_abs_diff_eq!(
            homogenized_energy(&fh, &gh, &fh, &u).unwrap(),
            2.0,
            epsilon = 1e-9
        );
        // u = unit step at 1/2: energy = gh(1, +1) = 1.
        let u = BVTestFunction1D::step(0.5, 1.0, (0.0, 1.0));
        assert_abs_diff_eq!(
            homogenized_energy(&fh, &gh, &fh, &u).unwrap(),
            1.0,
            epsilon = 1e-9
        );
        // u = staircase with unit mass: energy = fh_inf(1) * 1 = 1.
        let u = cantor_test_function(1.0, 8).unwrap();
        assert_abs_diff_eq!(
            homogenized_energy(&fh, &gh, &fh, &u).unwrap(),
            1.0,
            epsilon = 1e-9
        );
        // Symmetry of the tabulated surface density.
        assert_abs_diff_eq!(
            gh.eval(&[1.0], &[1.0]).unwrap(),
            gh.eval(&[-1.0], &[-1.0]).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn partial_boundary_gap_shrinks_in_k_2d() {
        // Homogeneous 2D: the partial-boundary value approaches the
        // full-boundary one as the elongation grows.
        let f = VolumeFamily::IsoNorm { coefficient: 1.0 }.build((1, 2)).unwrap();
        let g = SurfaceFamily::IsoNorm { coefficient: 1.0 }.build((1, 2)).unwrap();
        let cfg = CellFormulaCfg {
            heuristic: HeuristicSchedule {
                sweeps: 25,
                restarts: 2,
                ..Default::default()
            },
            ..CellFormulaCfg::default_2d()
        };
        let sched = [2.0, 4.0, 6.0];
        let nu = [0.0, 1.0];
        let full = volume_infinity_limit(
            &f,
            &f,
            &g,
            &outer(&[1.0], &nu),
            &[0.0, 0.0],
            &nu,
            1,
            &sched,
            &[10.0, 100.0, 1000.0],
            InfinityRoute::Cell,
            &cfg,
        )
        .unwrap();
        let mut gaps = Vec::new();
        for k in [1u32, 2, 4] {
            let part =
                volume_infinity_partial(&f, &g, &[1.0], &nu, &[0.0, 0.0], k, &sched, &cfg)
                    .unwrap();
            gaps.push((part.limit - full.limit).abs() / full.limit.abs().max(1e-12));
        }
        assert!(
            gaps[2] <= gaps[0] + 0.05,
            "partial-boundary gaps did not shrink: {gaps:?}"
        );
    }
}
