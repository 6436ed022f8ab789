//! Stationary random integrand ensembles, the set-indexed subadditive
//! processes built from the minimum values, and the Monte-Carlo estimator of
//! their normalized limits.
//!
//! A realization is never stored: it is a deterministic function of
//! (ensemble seed, sample sub-seed, shift offset), with lattice shifts acting
//! by index translation. Covariance and the shift group laws therefore hold
//! bit-exactly.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cell_solver::{
    aligned_quantization, solve_exact_1d, solve_heuristic, BcMode, CellProblem, Datum,
    HeuristicSchedule, PairKind,
};
use crate::error::{Error, Result};
use crate::geometry::{rational_scale, rotation_matrix, GridDomain, RotationMap};
use crate::integrands::{
    derivative_at_zero, recession, IntegrandConstants, SampleSpec, SurfaceIntegrand,
    VolumeIntegrand,
};
use crate::vecmath::{norm, splitmix64};

/// Finite-support coefficient law.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientLaw {
    pub atoms: Vec<(f64, f64)>,
}

impl CoefficientLaw {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::config("law", "needs at least one atom"));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.iter().any(|a| a.1 < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "law",
                format!("probabilities must be nonnegative and sum to 1, got {total}"),
            ));
        }
        Ok(Self { atoms })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            atoms: vec![(value, 1.0)],
        }
    }

    /// Inverse CDF at a uniform variate in [0, 1).
    fn sample(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(v, p) in &self.atoms {
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.atoms.last().expect("nonempty").0
    }

    pub fn min_value(&self) -> f64 {
        self.atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleKind {
    /// Deterministic alternation of the atom values with a random global
    /// phase (a random-offset laminate on the unit lattice).
    Checkerboard,
    /// Independent coefficient per unit lattice cell.
    IidCell,
    /// Independent seed points per cell; a cell takes the inclusion value
    /// when a seed point lies within Chebyshev radius `radius`.
    PoissonInclusion { radius: i64 },
}

pub type CoefficientVolumeFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type CoefficientSurfaceFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync>;

/// A seeded random-integrand family, covariant under lattice shifts.
#[derive(Clone)]
pub struct StationaryEnsemble {
    pub seed: u64,
    pub kind: EnsembleKind,
    pub dim: usize,
    pub volume_law: CoefficientLaw,
    pub surface_law: CoefficientLaw,
    pub constants: IntegrandConstants,
    volume_template: CoefficientVolumeFn,
    surface_template: CoefficientSurfaceFn,
}

impl std::fmt::Debug for StationaryEnsemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StationaryEnsemble")
            .field("seed", &self.seed)
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .finish()
    }
}

/// A realization handle: (sample sub-seed, lattice shift). Shifting acts on
/// the offset only, so the group laws are exact index arithmetic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OmegaIndex {
    pub sample_seed: u64,
    pub shift: Vec<i64>,
}

#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub dim: usize,
    pub volume_law: CoefficientLaw,
    pub surface_law: CoefficientLaw,
}

/// Build an ensemble whose default templates are coefficient-scaled norms
/// `a |xi|` and `b |zeta|`; the declared constants span both laws.
pub fn make_ensemble(spec: &EnsembleSpec, seed: u64) -> Result<StationaryEnsemble> {
    let c2 = spec.volume_law.min_value().min(spec.surface_law.min_value());
    let c3 = spec.volume_law.max_value().max(spec.surface_law.max_value());
    if !(c2 > 0.0) {
        return Err(Error::config("law", "coefficient values must be positive"));
    }
    Ok(StationaryEnsemble {
        seed,
        kind: spec.kind.clone(),
        dim: spec.dim,
        volume_law: spec.volume_law.clone(),
        surface_law: spec.surface_law.clone(),
        constants: IntegrandConstants::norm_like(c2, c3),
        volume_template: Arc::new(|coeff, _x, xi| coeff * norm(xi)),
        surface_template: Arc::new(|coeff, _x, zeta, _nu| coeff * norm(zeta)),
    })
}

const VOLUME_SALT: u64 = 0x76_6f_6c;
const SURFACE_SALT: u64 = 0x73_75_72;

impl StationaryEnsemble {
    pub fn omega(&self, sample: u64) -> OmegaIndex {
        OmegaIndex {
            sample_seed: splitmix64(self.seed ^ splitmix64(sample.wrapping_add(1))),
            shift: vec![0; self.dim],
        }
    }

    /// Uniform variate attached to a lattice cell of a realization.
    fn cell_uniform(&self, omega: &OmegaIndex, cell: &[i64], salt: u64) -> f64 {
        let mut state = omega.sample_seed ^ splitmix64(salt);
        for (c, s) in cell.iter().zip(&omega.shift) {
            state = splitmix64(state ^ (c.wrapping_add(*s) as u64));
        }
        (splitmix64(state) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn coefficient(&self, omega: &OmegaIndex, cell: &[i64], law: &CoefficientLaw, salt: u64) -> f64 {
        match &self.kind {
            EnsembleKind::Checkerboard => {
                let len = law.atoms.len() as i64;
                let phase =
                    (splitmix64(omega.sample_seed ^ splitmix64(salt)) % len as u64) as i64;
                let s: i64 = cell.iter().zip(&omega.shift).map(|(c, s)| c + s).sum();
                let idx = (s + phase).rem_euclid(len);
                law.atoms[idx as usize].0
            }
            EnsembleKind::IidCell => law.sample(self.cell_uniform(omega, cell, salt)),
            EnsembleKind::PoissonInclusion { radius } => {
                // The last atom is the inclusion (value, probability).
                let (incl_value, p) = *law.atoms.last().expect("nonempty");
                let matrix_value = law.atoms[0].0;
                let r = *radius;
                let mut present = false;
                let mut probe = vec![0i64; cell.len()];
                let scan = |probe: &[i64]| {
                    self.cell_uniform(omega, probe, salt.wrapping_add(0x9e51)) < p
                };
                match cell.len() {
                    1 => {
                        for dz in -r..=r {
                            probe[0] = cell[0] + dz;
                            if scan(&probe) {
                                present = true;
                                break;
                            }
                        }
                    }
                    _ => {
                        'outer: for dz0 in -r..=r {
                            for dz1 in -r..=r {
                                probe[0] = cell[0] + dz0;
                                probe[1] = cell[1] + dz1;
                                if scan(&probe) {
                                    present = true;
                                    break 'outer;
                                }
                            }
                        }
                    }
                }
                if present {
                    incl_value
                } else {
                    matrix_value
                }
            }
        }
    }

    pub fn volume_coefficient(&self, omega: &OmegaIndex, cell: &[i64]) -> f64 {
        self.coefficient(omega, cell, &self.volume_law, VOLUME_SALT)
    }

    pub fn surface_coefficient(&self, omega: &OmegaIndex, cell: &[i64]) -> f64 {
        self.coefficient(omega, cell, &self.surface_law, SURFACE_SALT)
    }

    /// Materialise the realization's integrand pair.
    pub fn realize(&self, omega: &OmegaIndex) -> (VolumeIntegrand, SurfaceIntegrand) {
        let ens = self.clone();
        let om = omega.clone();
        let vt = self.volume_template.clone();
        let dims = (1, self.dim);
        let vol = VolumeIntegrand::new(
            dims,
            self.constants.clone(),
            true,
            false,
            Arc::new(move |x: &[f64], xi: &[f64]| {
                let cell: Vec<i64> = x.iter().map(|&c| c.floor() as i64).collect();
                vt(ens.volume_coefficient(&om, &cell), x, xi)
            }),
        );
        let ens = self.clone();
        let om = omega.clone();
        let st = self.surface_template.clone();
        let sur = SurfaceIntegrand::new(
            dims,
            self.constants.clone(),
            true,
            false,
            Arc::new(move |x: &[f64], zeta: &[f64], nu: &[f64]| {
                let cell: Vec<i64> = x.iter().map(|&c| c.floor() as i64).collect();
                st(ens.surface_coefficient(&om, &cell), x, zeta, nu)
            }),
        );
        (vol, sur)
    }
}

/// Lattice shift of a realization handle; exact group laws.
pub fn shift(omega: &OmegaIndex, z: &[i64]) -> OmegaIndex {
    OmegaIndex {
        sample_seed: omega.sample_seed,
        shift: omega.shift.iter().zip(z).map(|(s, dz)| s + dz).collect(),
    }
}

/// Solver settings shared by the process evaluations.
#[derive(Clone, Debug)]
pub struct ProcessCfg {
    pub h: f64,
    pub bc_width: f64,
    pub span_factor: f64,
    pub levels_cap: usize,
    /// Extra value-grid resolution per datum increment (coarse is exact for
    /// the coefficient-scaled norm templates).
    pub quant_steps: usize,
    pub heuristic: HeuristicSchedule,
    pub derivative_t: Vec<f64>,
    pub recession_t: Vec<f64>,
}

impl Default for ProcessCfg {
    fn default() -> Self {
        Self {
            h: 0.5,
            bc_width: 1.0,
            span_factor: 1.2,
            levels_cap: 201,
            quant_steps: 16,
            heuristic: HeuristicSchedule::default(),
            derivative_t: vec![1e-1, 1e-2, 1e-3, 1e-4],
            recession_t: vec![1e1, 1e2, 1e3, 1e4],
        }
    }
}

fn solve_process_problem(p: &CellProblem, cfg: &ProcessCfg) -> Result<f64> {
    match p.domain.dim() {
        1 => {
            let datum = p.datum_values();
            let lo = datum.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = datum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let unit = ((hi - lo) / cfg.quant_steps as f64).max(1e-12);
            let quant = aligned_quantization(&datum, unit, cfg.span_factor, cfg.levels_cap);
            Ok(solve_exact_1d(p, &quant)?.value)
        }
        2 => Ok(solve_heuristic(p, &cfg.heuristic)?.value),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Half-open box `[lo, hi)` in the process index space.
#[derive(Clone, Debug)]
pub struct LatticeBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LatticeBox {
    pub fn centered_cube(r: f64, d: usize) -> Self {
        Self {
            lo: vec![-r / 2.0; d],
            hi: vec![r / 2.0; d],
        }
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| b - a)
            .product()
    }
}

/// The n-dimensional process: normalized minimum values of the volume-type
/// problem on the rotated, integer-scaled image of a box.
pub struct VolumeProcess {
    pub ensemble: Arc<StationaryEnsemble>,
    pub xi: Vec<f64>,
    pub nu: Vec<f64>,
    pub m_nu: u32,
    rotation: RotationMap,
    pub cfg: ProcessCfg,
}

/// The (n-1)-dimensional process: normalized minimum values of the
/// surface-type problem on the slab over a box in the interface plane.
pub struct SurfaceProcess {
    pub ensemble: Arc<StationaryEnsemble>,
    pub zeta: Vec<f64>,
    pub nu: Vec<f64>,
    pub m_nu: u32,
    rotation: RotationMap,
    pub cfg: ProcessCfg,
}

fn require_rational(nu: &[f64]) -> Result<(RotationMap, u32)> {
    let rot = rotation_matrix(nu)?;
    let m = rational_scale(&rot, 1000).ok_or_else(|| {
        Error::InvalidDirection(format!(
            "process construction needs a rational direction, got {nu:?}"
        ))
    })?;
    Ok((rot, m))
}

pub fn process_volume(
    ensemble: Arc<StationaryEnsemble>,
    xi: Vec<f64>,
    nu: Vec<f64>,
    cfg: ProcessCfg,
) -> Result<VolumeProcess> {
    let (rotation, m_nu) = require_rational(&nu)?;
    Ok(VolumeProcess {
        ensemble,
        xi,
        nu,
        m_nu,
        rotation,
        cfg,
    })
}

pub fn process_surface(
    ensemble: Arc<StationaryEnsemble>,
    zeta: Vec<f64>,
    nu: Vec<f64>,
    cfg: ProcessCfg,
) -> Result<SurfaceProcess> {
    if nu.len() < 2 {
        return Err(Error::UnsupportedDimension(nu.len()));
    }
    let (rotation, m_nu) = require_rational(&nu)?;
    Ok(SurfaceProcess {
        ensemble,
        zeta,
        nu,
        m_nu,
        rotation,
        cfg,
    })
}

/// Common interface for the ergodic estimator.
pub trait BoxProcess: Sync {
    /// Process index dimension (n for volume, n-1 for surface).
    fn index_dim(&self) -> usize;
    fn evaluate(&self, omega: &OmegaIndex, bx: &LatticeBox) -> Result<f64>;
    fn ensemble(&self) -> &StationaryEnsemble;
}

impl VolumeProcess {
    fn domain_for(&self, bx: &LatticeBox) -> Result<GridDomain> {
        let m = self.m_nu as f64;
        let n = self.nu.len();
        let mid: Vec<f64> = bx
            .lo
            .iter()
            .zip(&bx.hi)
            .map(|(a, b)| m * 0.5 * (a + b))
            .collect();
        let center = self.rotation.apply(&mid);
        let extents: Vec<f64> = bx.lo.iter().zip(&bx.hi).map(|(a, b)| m * (b - a)).collect();
        GridDomain::new(
            self.rotation.clone(),
            center,
            extents,
            self.cfg.h,
            self.cfg.bc_width,
        )
        .map_err(|e| Error::Discretisation(format!("process box {:?}: {e}", (n, bx.lo.clone()))))
    }
}

impl BoxProcess for VolumeProcess {
    fn index_dim(&self) -> usize {
        self.nu.len()
    }

    fn evaluate(&self, omega: &OmegaIndex, bx: &LatticeBox) -> Result<f64> {
        let n = self.nu.len();
        let domain = Arc::new(self.domain_for(bx)?);
        let (f, g) = self.ensemble.realize(omega);
        let spec = SampleSpec::surface_default(1, n);
        let (g0, _) = derivative_at_zero(&g, &self.cfg.derivative_t, &spec, f64::INFINITY)?;
        let p = CellProblem::new(
            PairKind::FG0,
            f,
            g0,
            domain,
            Datum::Linear { xi: self.xi.clone() },
            BcMode::Full,
        )?;
        let raw = solve_process_problem(&p, &self.cfg)?;
        Ok(raw / (self.m_nu as f64).powi(n as i32))
    }

    fn ensemble(&self) -> &StationaryEnsemble {
        &self.ensemble
    }
}

impl BoxProcess for SurfaceProcess {
    fn index_dim(&self) -> usize {
        self.nu.len() - 1
    }

    /// `T_nu(A') = M R (A' × [-c, c))` with `c` half the largest side of A'.
    fn evaluate(&self, omega: &OmegaIndex, bx: &LatticeBox) -> Result<f64> {
        let n = self.nu.len();
        let m = self.m_nu as f64;
        let c = bx
            .lo
            .iter()
            .zip(&bx.hi)
            .map(|(a, b)| b - a)
            .fold(0.0_f64, f64::max)
            / 2.0;
        let mut mid: Vec<f64> = bx
            .lo
            .iter()
            .zip(&bx.hi)
            .map(|(a, b)| m * 0.5 * (a + b))
            .collect();
        mid.push(0.0);
        let center = self.rotation.apply(&mid);
        let mut extents: Vec<f64> = bx.lo.iter().zip(&bx.hi).map(|(a, b)| m * (b - a)).collect();
        extents.push(2.0 * c * m);
        let domain = Arc::new(GridDomain::new(
            self.rotation.clone(),
            center,
            extents,
            self.cfg.h,
            self.cfg.bc_width,
        )?);
        let (f, g) = self.ensemble.realize(omega);
        let spec = SampleSpec::volume_default(1, n);
        let (f_inf, _) = recession(&f, &self.cfg.recession_t, &spec, f64::INFINITY)?;
        let p = CellProblem::new(
            PairKind::FinfG,
            f_inf,
            g,
            domain,
            Datum::Step {
                x0: vec![0.0; n],
                zeta: self.zeta.clone(),
                nu: self.nu.clone(),
            },
            BcMode::Full,
        )?;
        let raw = solve_process_problem(&p, &self.cfg)?;
        Ok(raw / m.powi(n as i32 - 1))
    }

    fn ensemble(&self) -> &StationaryEnsemble {
        &self.ensemble
    }
}

#[derive(Clone, Debug)]
pub struct ErgodicEstimate {
    /// (r, mean over omega samples, std over omega samples).
    pub per_r: Vec<(f64, f64, f64)>,
    /// Tail mean of the per-r means.
    pub limit: f64,
    /// Every raw normalized value: (r, omega index, value).
    pub values: Vec<(f64, usize, f64)>,
}

/// Monte-Carlo surrogate of the expectation formulas: evaluates the process
/// on centered cubes along the schedule for independently sub-seeded
/// realizations; the per-r standard deviation is the constancy diagnostic.
pub fn ergodic_estimate(
    process: &dyn BoxProcess,
    r_schedule: &[f64],
    n_omega: usize,
    tail_window: usize,
) -> Result<ErgodicEstimate> {
    if r_schedule.is_empty() || n_omega == 0 {
        return Err(Error::Precondition("empty ergodic schedule".into()));
    }
    let d = process.index_dim();
    let tasks: Vec<(usize, usize)> = (0..r_schedule.len())
        .flat_map(|ri| (0..n_omega).map(move |oi| (ri, oi)))
        .collect();
    let raw: Result<Vec<((usize, usize), f64)>> = tasks
        .par_iter()
        .map(|&(ri, oi)| {
            let r = r_schedule[ri];
            let omega = process.ensemble().omega(oi as u64);
            let bx = LatticeBox::centered_cube(r, d);
            let v = process.evaluate(&omega, &bx)?;
            Ok(((ri, oi), v / bx.volume()))
        })
        .collect();
    let raw = raw?;
    let mut per_r = Vec::with_capacity(r_schedule.len());
    let mut values = Vec::with_capacity(raw.len());
    for (ri, &r) in r_schedule.iter().enumerate() {
        let vs: Vec<f64> = raw
            .iter()
            .filter(|((i, _), _)| *i == ri)
            .map(|(_, v)| *v)
            .collect();
        let mean = vs.iter().sum::<f64>() / vs.len() as f64;
        let var = vs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vs.len() as f64;
        per_r.push((r, mean, var.sqrt()));
        for ((_, oi), v) in raw.iter().filter(|((i, _), _)| *i == ri) {
            values.push((r, *oi, *v));
        }
    }
    let w = tail_window.max(1).min(per_r.len());
    let limit = per_r[per_r.len() - w..].iter().map(|p| p.1).sum::<f64>() / w as f64;
    Ok(ErgodicEstimate {
        per_r,
        limit,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{energy, DiscreteField};
    use crate::geometry::rotated_rectangle;
    use crate::integrands::{check_surface_admissibility, check_volume_admissibility};
    use approx::assert_abs_diff_eq;

    fn iid_spec_1d() -> EnsembleSpec {
        EnsembleSpec {
            kind: EnsembleKind::IidCell,
            dim: 1,
            volume_law: CoefficientLaw::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap(),
            surface_law: CoefficientLaw::constant(2.0),
        }
    }

    #[test]
    fn law_validation() {
        assert!(CoefficientLaw::new(vec![(1.0, 0.7), (2.0, 0.7)]).is_err());
        assert!(CoefficientLaw::new(vec![]).is_err());
        assert!(CoefficientLaw::new(vec![(1.0, 0.5), (3.0, 0.5)]).is_ok());
    }

    #[test]
    fn constant_law_gives_deterministic_ensemble() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::IidCell,
            dim: 1,
            volume_law: CoefficientLaw::constant(2.0),
            surface_law: CoefficientLaw::constant(1.0),
        };
        let ens = make_ensemble(&spec, 7).unwrap();
        let a = ens.omega(0);
        let b = ens.omega(123);
        for cell in -5i64..5 {
            assert_eq!(ens.volume_coefficient(&a, &[cell]), 2.0);
            assert_eq!(ens.volume_coefficient(&b, &[cell]), 2.0);
        }
    }

    #[test]
    fn seeded_realizations_are_reproducible() {
        let ens1 = make_ensemble(&iid_spec_1d(), 42).unwrap();
        let ens2 = make_ensemble(&iid_spec_1d(), 42).unwrap();
        let o1 = ens1.omega(3);
        let o2 = ens2.omega(3);
        for cell in 0i64..8 {
            assert_eq!(
                ens1.volume_coefficient(&o1, &[cell]),
                ens2.volume_coefficient(&o2, &[cell])
            );
        }
        let other_seed = make_ensemble(&iid_spec_1d(), 43).unwrap();
        let o3 = other_seed.omega(3);
        let same: usize = (0i64..64)
            .filter(|&c| {
                ens1.volume_coefficient(&o1, &[c]) == other_seed.volume_coefficient(&o3, &[c])
            })
            .count();
        assert!(same < 64);
    }

    #[test]
    fn empirical_frequencies_match_law() {
        let ens = make_ensemble(&iid_spec_1d(), 11).unwrap();
        let omega = ens.omega(0);
        let n = 10_000;
        let ones = (0..n)
            .filter(|&i| ens.volume_coefficient(&omega, &[i as i64]) == 1.0)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn shift_group_laws_are_exact() {
        let ens = make_ensemble(&iid_spec_1d(), 9).unwrap();
        let omega = ens.omega(1);
        assert_eq!(shift(&omega, &[0]), omega);
        let a = shift(&shift(&omega, &[3]), &[-7]);
        let b = shift(&omega, &[-4]);
        assert_eq!(a, b);
    }

    #[test]
    fn covariance_is_bit_exact() {
        let ens = make_ensemble(&iid_spec_1d(), 5).unwrap();
        let omega = ens.omega(2);
        for z in [-3i64, 1, 10] {
            let shifted = shift(&omega, &[z]);
            for cell in -4i64..4 {
                // realize(shift(omega, z)) at x equals realize(omega) at x + z.
                assert_eq!(
                    ens.volume_coefficient(&shifted, &[cell]),
                    ens.volume_coefficient(&omega, &[cell + z])
                );
            }
        }
    }

    #[test]
    fn covariance_of_energies_on_random_fields() {
        use rand::{Rng, SeedableRng};
        let ens = make_ensemble(&iid_spec_1d(), 33).unwrap();
        let omega = ens.omega(0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for trial in 0..20 {
            let z = rng.gen_range(-5i64..5);
            let d0 = Arc::new(rotated_rectangle(&[0.0], 4.0, 1, &[1.0], 0.5, 1.0).unwrap());
            let dz = Arc::new(
                rotated_rectangle(&[z as f64], 4.0, 1, &[1.0], 0.5, 1.0).unwrap(),
            );
            let vals: Vec<f64> = (0..d0.total_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut u0 = DiscreteField::constant(d0.clone(), 1, &[0.0]);
            let mut uz = DiscreteField::constant(dz.clone(), 1, &[0.0]);
            for (c, v) in vals.iter().enumerate() {
                u0.set_value(c, &[*v]);
                uz.set_value(c, &[*v]);
            }
            let (f, g) = ens.realize(&omega);
            let (fs, gs) = ens.realize(&shift(&omega, &[z]));
            let e_shifted_domain = energy(&f, &g, &uz, None).unwrap();
            let e_shifted_omega = energy(&fs, &gs, &u0, None).unwrap();
            assert_eq!(e_shifted_domain, e_shifted_omega, "trial {trial}");
        }
    }

    #[test]
    fn realizations_pass_admissibility() {
        let ens = make_ensemble(&iid_spec_1d(), 17).unwrap();
        let (f, g) = ens.realize(&ens.omega(4));
        let rep = check_volume_admissibility(&f, &SampleSpec::volume_default(1, 1)).unwrap();
        assert!(rep.all_passed(), "{rep}");
        let rep = check_surface_admissibility(&g, &SampleSpec::surface_default(1, 1)).unwrap();
        assert!(rep.all_passed(), "{rep}");
    }

    #[test]
    fn checkerboard_kind_alternates() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::Checkerboard,
            ..iid_spec_1d()
        };
        let ens = make_ensemble(&spec, 3).unwrap();
        let omega = ens.omega(0);
        let c0 = ens.volume_coefficient(&omega, &[0]);
        let c1 = ens.volume_coefficient(&omega, &[1]);
        assert_ne!(c0, c1);
        assert_eq!(ens.volume_coefficient(&omega, &[2]), c0);
    }

    #[test]
    fn poisson_inclusion_dilates() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::PoissonInclusion { radius: 1 },
            dim: 1,
            volume_law: CoefficientLaw::new(vec![(1.0, 0.8), (3.0, 0.2)]).unwrap(),
            surface_law: CoefficientLaw::constant(2.0),
        };
        let ens = make_ensemble(&spec, 5).unwrap();
        let omega = ens.omega(0);
        // Inclusions come in runs of length >= 2 * radius + 1 = 3.
        let coeffs: Vec<f64> = (0..200).map(|c| ens.volume_coefficient(&omega, &[c])).collect();
        let mut run = 0;
        let mut min_run = usize::MAX;
        for &c in &coeffs {
            if c == 3.0 {
                run += 1;
            } else if run > 0 {
                min_run = min_run.min(run);
                run = 0;
            }
        }
        assert!(min_run >= 3, "inclusion runs too short: {min_run}");
    }

    #[test]
    fn volume_process_requires_rational_direction() {
        let ens = Arc::new(
            make_ensemble(
                &EnsembleSpec {
                    dim: 2,
                    ..iid_spec_1d()
                },
                1,
            )
            .unwrap(),
        );
        let irrational = {
            let v: [f64; 2] = [1.0, std::f64::consts::SQRT_2];
            let n = norm(&v);
            vec![v[0] / n, v[1] / n]
        };
        assert!(process_volume(ens.clone(), vec![1.0, 0.0], irrational, ProcessCfg::default())
            .is_err());
        assert!(
            process_volume(ens, vec![1.0, 0.0], vec![0.6, 0.8], ProcessCfg::default()).is_ok()
        );
    }

    #[test]
    fn process_homogeneous_value_matches_volume() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::IidCell,
            dim: 1,
            volume_law: CoefficientLaw::constant(1.0),
            surface_law: CoefficientLaw::constant(1.0),
        };
        let ens = Arc::new(make_ensemble(&spec, 1).unwrap());
        let p = process_volume(ens, vec![1.0], vec![1.0], ProcessCfg::default()).unwrap();
        let omega = p.ensemble.omega(0);
        for r in [4.0, 8.0] {
            let bx = LatticeBox::centered_cube(r, 1);
            let v = p.evaluate(&omega, &bx).unwrap();
            assert_abs_diff_eq!(v / bx.volume(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn process_subadditive_on_1d_split() {
        let ens = Arc::new(make_ensemble(&iid_spec_1d(), 21).unwrap());
        let p = process_volume(ens, vec![1.0], vec![1.0], ProcessCfg::default()).unwrap();
        let omega = p.ensemble.omega(0);
        let whole = LatticeBox {
            lo: vec![0.0],
            hi: vec![8.0],
        };
        let left = LatticeBox {
            lo: vec![0.0],
            hi: vec![4.0],
        };
        let right = LatticeBox {
            lo: vec![4.0],
            hi: vec![8.0],
        };
        let vw = p.evaluate(&omega, &whole).unwrap();
        let vl = p.evaluate(&omega, &left).unwrap();
        let vr = p.evaluate(&omega, &right).unwrap();
        assert!(vw <= vl + vr + 1e-9, "{vw} > {vl} + {vr}");
    }

    #[test]
    fn process_boundedness_constants() {
        let ens = Arc::new(make_ensemble(&iid_spec_1d(), 8).unwrap());
        let xi = 1.5;
        let p = process_volume(ens.clone(), vec![xi], vec![1.0], ProcessCfg::default()).unwrap();
        let c = &ens.constants;
        for sample in 0..10 {
            let omega = p.ensemble.omega(sample);
            for r in [4.0, 8.0] {
                let bx = LatticeBox::centered_cube(r, 1);
                let v = p.evaluate(&omega, &bx).unwrap();
                assert!(v >= 0.0);
                assert!(
                    v <= (c.c3 * xi.abs() + c.c4) * bx.volume() + 1e-9,
                    "bound violated: {v}"
                );
            }
        }
    }

    #[test]
    fn process_covariance_bit_exact_through_solves() {
        let ens = Arc::new(make_ensemble(&iid_spec_1d(), 77).unwrap());
        let p = process_volume(ens, vec![1.0], vec![1.0], ProcessCfg::default()).unwrap();
        let omega = p.ensemble.omega(0);
        let bx = LatticeBox {
            lo: vec![0.0],
            hi: vec![6.0],
        };
        let shifted_box = LatticeBox {
            lo: vec![3.0],
            hi: vec![9.0],
        };
        let a = p.evaluate(&omega, &shifted_box).unwrap();
        let b = p.evaluate(&shift(&omega, &[3]), &bx).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn surface_process_2d_covariant_and_subadditive() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::IidCell,
            dim: 2,
            volume_law: CoefficientLaw::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap(),
            surface_law: CoefficientLaw::constant(2.0),
        };
        let ens = Arc::new(make_ensemble(&spec, 55).unwrap());
        let cfg = ProcessCfg {
            h: 0.5,
            bc_width: 1.0,
            heuristic: HeuristicSchedule {
                sweeps: 20,
                restarts: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let p = process_surface(ens, vec![1.0], vec![0.0, 1.0], cfg).unwrap();
        let omega = p.ensemble.omega(0);
        // In-plane covariance, bit-exact.
        let a = p
            .evaluate(
                &omega,
                &LatticeBox {
                    lo: vec![2.0],
                    hi: vec![6.0],
                },
            )
            .unwrap();
        // The in-plane lattice shift (z', 0) maps through M R; here nu = e2,
        // M = 1, so the shift is just (2, 0).
        let b = p
            .evaluate(
                &shift(&omega, &[2, 0]),
                &LatticeBox {
                    lo: vec![0.0],
                    hi: vec![4.0],
                },
            )
            .unwrap();
        assert_eq!(a, b);
        // Subadditivity within heuristic slack (the slab over the union is
        // strictly larger than the union of the slabs).
        let whole = p
            .evaluate(
                &omega,
                &LatticeBox {
                    lo: vec![0.0],
                    hi: vec![8.0],
                },
            )
            .unwrap();
        let left = p
            .evaluate(
                &omega,
                &LatticeBox {
                    lo: vec![0.0],
                    hi: vec![4.0],
                },
            )
            .unwrap();
        let right = p
            .evaluate(
                &omega,
                &LatticeBox {
                    lo: vec![4.0],
                    hi: vec![8.0],
                },
            )
            .unwrap();
        assert!(whole <= (left + right) * 1.01 + 1e-9, "{whole} > {left} + {right}");
        // Boundedness per the surface constant.
        let c3 = p.ensemble.constants.c3;
        assert!(whole <= c3 * 1.0 * 8.0 + 1e-9);
    }

    #[test]
    fn surface_process_needs_two_dimensions() {
        let ens = Arc::new(make_ensemble(&iid_spec_1d(), 1).unwrap());
        assert!(process_surface(ens, vec![1.0], vec![1.0], ProcessCfg::default()).is_err());
    }

    #[test]
    fn ergodic_estimate_homogeneous_has_zero_std() {
        // Bulk route wins: the normalized value is exact at every window.
        let spec = EnsembleSpec {
            kind: EnsembleKind::IidCell,
            dim: 1,
            volume_law: CoefficientLaw::constant(1.0),
            surface_law: CoefficientLaw::constant(2.0),
        };
        let ens = Arc::new(make_ensemble(&spec, 2).unwrap());
        let p = process_volume(ens, vec![1.0], vec![1.0], ProcessCfg::default()).unwrap();
        let est = ergodic_estimate(&p, &[4.0, 8.0], 6, 1).unwrap();
        for (_, mean, std) in &est.per_r {
            assert_abs_diff_eq!(*mean, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(*std, 0.0, epsilon = 1e-12);
        }
        // Jump route wins (small-jump density cheaper than the bulk rate):
        // constant over omega at every window, with an O(h/r) boundary bias
        // that dies along the schedule.
        let spec = EnsembleSpec {
            kind: EnsembleKind::IidCell,
            dim: 1,
            volume_law: CoefficientLaw::constant(2.0),
            surface_law: CoefficientLaw::constant(1.0),
        };
        let ens = Arc::new(make_ensemble(&spec, 2).unwrap());
        let p = process_volume(ens, vec![1.0], vec![1.0], ProcessCfg::default()).unwrap();
        let est = ergodic_estimate(&p, &[8.0, 32.0, 64.0], 4, 1).unwrap();
        for (_, _, std) in &est.per_r {
            assert_abs_diff_eq!(*std, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(est.limit, 1.0, epsilon = 0.02);
    }

    #[test]
    fn ergodic_estimate_iid_checkerboard_converges() {
        let ens = Arc::new(make_ensemble(&iid_spec_1d(), 101).unwrap());
        let p = process_volume(ens, vec![1.0], vec![1.0], ProcessCfg::default()).unwrap();
        let est = ergodic_estimate(&p, &[8.0, 16.0, 32.0], 16, 2).unwrap();
        // Mean decreases towards 1 (larger windows find cheap cells), up to
        // Monte-Carlo noise.
        for w in est.per_r.windows(2) {
            let (_, m0, s0) = w[0];
            let (_, m1, _) = w[1];
            assert!(m1 <= m0 + s0, "means not nonincreasing: {m0} -> {m1}");
        }
        assert!(est.limit < 1.2, "limit {}", est.limit);
        // Reproducibility of the whole table.
        let ens2 = Arc::new(make_ensemble(&iid_spec_1d(), 101).unwrap());
        let p2 = process_volume(ens2, vec![1.0], vec![1.0], ProcessCfg::default()).unwrap();
        let est2 = ergodic_estimate(&p2, &[8.0, 16.0, 32.0], 16, 2).unwrap();
        assert_eq!(est.values, est2.values);
    }
}
