//! Minimum values of the discrete free-discontinuity energy under boundary
//! data: an exact dynamic program over quantized values in 1D, an
//! alternating-descent heuristic in 2D, an exhaustive oracle for tiny
//! instances, and the truncation operator.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{energy, linear_field, step_field, DiscreteField};
use crate::geometry::{CellMask, GridDomain};
use crate::integrands::{SurfaceIntegrand, VolumeIntegrand};
use crate::vecmath::{dot, sub};

/// Which materialised integrand pair a cell problem minimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairKind {
    /// volume density with the small-jump surface density (volume formula)
    FG0,
    /// recession volume density with the full surface density (surface formula)
    FinfG,
    /// both scaling limits (recession-of-the-limit formula)
    FinfG0,
    /// the plain pair
    FG,
}

#[derive(Clone, Debug)]
pub enum Datum {
    Linear { xi: Vec<f64> },
    Step { x0: Vec<f64>, zeta: Vec<f64>, nu: Vec<f64> },
}

impl Datum {
    pub fn components(&self, n: usize) -> usize {
        match self {
            Datum::Linear { xi } => xi.len() / n,
            Datum::Step { zeta, .. } => zeta.len(),
        }
    }

    pub fn eval(&self, x: &[f64], n: usize) -> Vec<f64> {
        match self {
            Datum::Linear { xi } => {
                let m = xi.len() / n;
                (0..m).map(|i| dot(&xi[i * n..(i + 1) * n], x)).collect()
            }
            Datum::Step { x0, zeta, nu } => {
                if dot(&sub(x, x0), nu) >= 0.0 {
                    zeta.clone()
                } else {
                    vec![0.0; zeta.len()]
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcMode {
    /// Pin the whole boundary strip.
    Full,
    /// Pin only the strip along the faces orthogonal to `nu` (the partial
    /// boundary-condition problem); requires a linear datum.
    PerpendicularOnly,
}

/// One minimum-value query `m(datum, domain)`.
#[derive(Clone, Debug)]
pub struct CellProblem {
    pub kind: PairKind,
    pub volume: VolumeIntegrand,
    pub surface: SurfaceIntegrand,
    pub domain: Arc<GridDomain>,
    pub datum: Datum,
    pub bc: BcMode,
}

impl CellProblem {
    pub fn new(
        kind: PairKind,
        volume: VolumeIntegrand,
        surface: SurfaceIntegrand,
        domain: Arc<GridDomain>,
        datum: Datum,
        bc: BcMode,
    ) -> Result<Self> {
        if bc == BcMode::PerpendicularOnly && !matches!(datum, Datum::Linear { .. }) {
            return Err(Error::Precondition(
                "the partial boundary condition requires a linear datum".into(),
            ));
        }
        Ok(Self {
            kind,
            volume,
            surface,
            domain,
            datum,
            bc,
        })
    }

    pub fn pinned_mask(&self) -> CellMask {
        match self.bc {
            BcMode::Full => self.domain.boundary_strip(),
            BcMode::PerpendicularOnly => self.domain.perpendicular_strip(),
        }
    }

    pub fn components(&self) -> usize {
        self.datum.components(self.domain.dim())
    }

    /// The datum extended to the whole lattice; always a feasible competitor.
    pub fn datum_field(&self) -> DiscreteField {
        match &self.datum {
            Datum::Linear { xi } => linear_field(xi, self.components(), self.domain.clone()),
            Datum::Step { x0, zeta, nu } => step_field(x0, zeta, nu, self.domain.clone()),
        }
    }

    pub fn datum_values(&self) -> Vec<f64> {
        let n = self.domain.dim();
        let m = self.components();
        let mut out = Vec::with_capacity(self.domain.total_cells() * m);
        for cell in 0..self.domain.total_cells() {
            out.extend(self.datum.eval(&self.domain.cell_center(cell), n));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub value: f64,
    pub argmin: DiscreteField,
    /// Certified optimum of the quantized problem (DP/enumeration) vs
    /// heuristic upper bound.
    pub exact: bool,
    pub iterations: usize,
    pub restarts: usize,
}

/// Quantized value grid: `levels` points spanning `span`, centred on the
/// datum midrange and shifted onto the datum anchor so that on-grid data
/// stay on-grid.
#[derive(Clone, Copy, Debug)]
pub struct Quantization {
    pub levels: usize,
    pub span: f64,
}

impl Quantization {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 5 || self.levels > 2001 || self.levels % 2 == 0 {
            return Err(Error::Quantization(format!(
                "levels must be odd and in [5, 2001], got {}",
                self.levels
            )));
        }
        if !(self.span > 0.0) {
            return Err(Error::Quantization("span must be positive".into()));
        }
        Ok(())
    }

    /// Grid aligned so that `anchor` is representable.
    pub fn grid(&self, lo: f64, hi: f64, anchor: f64) -> Vec<f64> {
        let mid = 0.5 * (lo + hi);
        let spacing = self.span / (self.levels - 1) as f64;
        let mid_aligned = anchor + ((mid - anchor) / spacing).round() * spacing;
        (0..self.levels)
            .map(|k| mid_aligned - self.span / 2.0 + k as f64 * spacing)
            .collect()
    }
}

/// Alignment-aware quantization: spacing snaps to `unit` (the datum's value
/// increment) so that exact data remain representable; `span_factor >= 1`
/// pads the covered range.
pub fn aligned_quantization(
    datum: &[f64],
    unit: f64,
    span_factor: f64,
    levels_cap: usize,
) -> Quantization {
    let lo = datum.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = datum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = (hi - lo).max(0.0);
    let spacing = if unit > 0.0 {
        unit
    } else {
        (range.max(1.0)) / 64.0
    };
    let span_needed = span_factor.max(1.05) * range.max(spacing);
    let mut levels = (span_needed / spacing).ceil() as usize + 1;
    if levels % 2 == 0 {
        levels += 1;
    }
    let levels = levels.clamp(5, levels_cap.min(2001));
    let spacing = if (levels - 1) as f64 * spacing >= span_needed {
        spacing
    } else {
        // Cap reached: give up alignment, keep the coverage.
        span_needed / (levels - 1) as f64
    };
    Quantization {
        levels,
        span: (levels - 1) as f64 * spacing,
    }
}

/// Bulk and jump costs of one interior face given the adjacent values, with
/// the half-weight boundary extensions folded into the outermost faces.
/// Returns (bulk_total, jump_total).
struct FaceCosts<'a> {
    problem: &'a CellProblem,
    area: f64,
}

impl<'a> FaceCosts<'a> {
    fn new(problem: &'a CellProblem) -> Self {
        let n = problem.domain.dim();
        let area = problem.domain.spacing.powi(n as i32 - 1);
        Self { problem, area }
    }

    fn costs(
        &self,
        axis: usize,
        plane: usize,
        multi: &[usize],
        delta: &[f64],
    ) -> Result<(f64, f64)> {
        let domain = &self.problem.domain;
        let h = domain.spacing;
        let nu_axis = domain.rotation.column(axis);
        let face = domain.face_encode(axis, plane, multi);
        let x = domain.face_center(face);
        let m = delta.len();
        let q: Vec<f64> = crate::vecmath::outer(&crate::vecmath::scale(delta, 1.0 / h), &nu_axis);
        let zeros = vec![0.0; m * domain.dim()];
        let f_q = self.problem.volume.eval(&x, &q)?;
        let f_0 = self.problem.volume.eval(&x, &zeros)?;
        let g_d = self.problem.surface.eval(&x, delta, &nu_axis)?;
        let mut bulk = self.area * h * f_q;
        // Jump faces keep their dual-cell bulk at zero gradient, so
        // zero-amplitude jumps cannot evade the f(x, 0) floor.
        let mut jump = self.area * (g_d + h * f_0);
        let counts = domain.counts[axis];
        if plane == 1 || plane == counts - 1 {
            // The boundary extension copies this face's quotient in either
            // mode (see fields::fold_faces).
            let bnd_plane = if plane == 1 { 0 } else { counts };
            let bf = domain.face_encode(axis, bnd_plane, multi);
            let xb = domain.face_center(bf);
            let end = self.area * (h / 2.0) * self.problem.volume.eval(&xb, &q)?;
            bulk += end;
            jump += end;
        }
        Ok((bulk, jump))
    }
}

/// Total objective of a value assignment with per-face optimal modes
/// (bulk preferred at ties). Works in any supported dimension, m = 1.
fn objective_with_modes(p: &CellProblem, values: &[f64]) -> Result<(f64, Vec<bool>)> {
    let domain = &p.domain;
    let fc = FaceCosts::new(p);
    let mut total = 0.0;
    let mut modes = vec![false; domain.faces_total()];
    for face in domain.iter_faces() {
        if !domain.face_is_interior(face) {
            continue;
        }
        let (axis, plane, multi) = domain.face_decode(face);
        let (lo, up) = domain.face_cells(face);
        let delta = [values[up.unwrap()] - values[lo.unwrap()]];
        let (bulk, jump) = fc.costs(axis, plane, &multi, &delta)?;
        if jump < bulk {
            total += jump;
            modes[face.0] = true;
        } else {
            total += bulk;
        }
    }
    Ok((total, modes))
}

fn build_result(
    p: &CellProblem,
    values: Vec<f64>,
    modes: Vec<bool>,
    value: f64,
    exact: bool,
    iterations: usize,
    restarts: usize,
) -> Result<SolveResult> {
    let mut argmin = DiscreteField::constant(p.domain.clone(), 1, &[0.0]);
    for (cell, v) in values.iter().enumerate() {
        argmin.set_value(cell, &[*v]);
    }
    for face in p.domain.iter_faces() {
        if modes[face.0] {
            argmin.set_jump(face, true)?;
        }
    }
    let recomputed = energy(&p.volume, &p.surface, &argmin, None)?;
    let scale = value.abs().max(1.0);
    if (recomputed - value).abs() > 1e-10 * scale {
        return Err(Error::Solver(format!(
            "objective mismatch: solver {value}, energy recomputation {recomputed}"
        )));
    }
    Ok(SolveResult {
        value,
        argmin,
        exact,
        iterations,
        restarts,
    })
}

/// Exact (for the quantized problem) dynamic program over the 1D chain.
///
/// Free cells range over the quantized grid, pinned cells carry the exact
/// datum value; each face independently chooses bulk or jump. Deterministic
/// tie-breaking: bulk over jump, lower value index first.
pub fn solve_exact_1d(p: &CellProblem, quant: &Quantization) -> Result<SolveResult> {
    let domain = &p.domain;
    if domain.dim() != 1 || p.components() != 1 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    quant.validate()?;
    let n = domain.total_cells();
    let datum = p.datum_values();
    let pinned = p.pinned_mask();
    let lo = datum.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = datum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if quant.span < hi - lo {
        return Err(Error::Quantization(format!(
            "span {} smaller than datum range {}",
            quant.span,
            hi - lo
        )));
    }
    let grid = quant.grid(lo, hi, datum[0]);
    let candidates: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            if pinned.get(c) {
                vec![datum[c]]
            } else {
                grid.clone()
            }
        })
        .collect();
    let fc = FaceCosts::new(p);

    let mut best = vec![0.0_f64; candidates[0].len()];
    // (previous index, jump mode) per (cell, candidate).
    let mut back: Vec<Vec<(u32, bool)>> = Vec::with_capacity(n);
    back.push(vec![(0, false); candidates[0].len()]);
    for j in 1..n {
        let prev = &candidates[j - 1];
        let cur = &candidates[j];
        let mut next = vec![f64::INFINITY; cur.len()];
        let mut ptr = vec![(0u32, false); cur.len()];
        for (bi, &vb) in cur.iter().enumerate() {
            let mut best_cost = f64::INFINITY;
            let mut best_ptr = (0u32, false);
            for (ai, &va) in prev.iter().enumerate() {
                let (bulk, jump) = fc.costs(0, j, &[0], &[vb - va])?;
                let (cost, mode) = if jump < bulk { (jump, true) } else { (bulk, false) };
                let cand = best[ai] + cost;
                if cand < best_cost {
                    best_cost = cand;
                    best_ptr = (ai as u32, mode);
                }
            }
            next[bi] = best_cost;
            ptr[bi] = best_ptr;
        }
        best = next;
        back.push(ptr);
    }
    let (mut idx, value) = best
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |acc, (i, &v)| {
            if v < acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    let mut values = vec![0.0; n];
    let mut modes = vec![false; domain.faces_total()];
    for j in (0..n).rev() {
        values[j] = candidates[j][idx];
        let (prev, mode) = back[j][idx];
        if j > 0 {
            let face = domain.face_encode(0, j, &[0]);
            modes[face.0] = mode;
        }
        idx = prev as usize;
    }
    build_result(p, values, modes, value, true, n - 1, 0)
}

/// Free-boundary 1D minimisation of `energy(u) + sum_c h |u_c - target_c|`
/// over quantized values, no pinned cells. The L1 fidelity is separable per
/// cell, so the chain dynamic program stays exact for the quantized problem.
/// Returns the minimum and its argmin values.
pub fn solve_fidelity_1d(
    volume: &VolumeIntegrand,
    surface: &SurfaceIntegrand,
    domain: Arc<GridDomain>,
    target: &[f64],
    quant: &Quantization,
) -> Result<(f64, Vec<f64>)> {
    if domain.dim() != 1 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    quant.validate()?;
    let n = domain.total_cells();
    if target.len() != n {
        return Err(Error::Precondition("target length must match cell count".into()));
    }
    let h = domain.spacing;
    let lo = target.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if quant.span < hi - lo {
        return Err(Error::Quantization(format!(
            "span {} smaller than target range {}",
            quant.span,
            hi - lo
        )));
    }
    let grid = quant.grid(lo, hi, target[0]);
    let p = CellProblem::new(
        PairKind::FG,
        volume.clone(),
        surface.clone(),
        domain.clone(),
        Datum::Linear { xi: vec![0.0] },
        BcMode::Full,
    )?;
    let fc = FaceCosts::new(&p);
    let mut best: Vec<f64> = grid.iter().map(|&v| h * (v - target[0]).abs()).collect();
    let mut back: Vec<Vec<u32>> = vec![vec![0; grid.len()]];
    for j in 1..n {
        let mut next = vec![f64::INFINITY; grid.len()];
        let mut ptr = vec![0u32; grid.len()];
        for (bi, &vb) in grid.iter().enumerate() {
            let fidelity = h * (vb - target[j]).abs();
            let mut best_cost = f64::INFINITY;
            let mut best_ptr = 0u32;
            for (ai, &va) in grid.iter().enumerate() {
                let (bulk, jump) = fc.costs(0, j, &[0], &[vb - va])?;
                let cand = best[ai] + bulk.min(jump);
                if cand < best_cost {
                    best_cost = cand;
                    best_ptr = ai as u32;
                }
            }
            next[bi] = best_cost + fidelity;
            ptr[bi] = best_ptr;
        }
        best = next;
        back.push(ptr);
    }
    let (mut idx, value) = best
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |acc, (i, &v)| {
            if v < acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    let mut values = vec![0.0; n];
    for j in (0..n).rev() {
        values[j] = grid[idx];
        idx = back[j][idx] as usize;
    }
    Ok((value, values))
}

#[derive(Clone, Debug)]
pub struct HeuristicSchedule {
    pub sweeps: usize,
    pub restarts: usize,
    pub proposal_temperature: f64,
    pub seed: u64,
}

impl Default for HeuristicSchedule {
    fn default() -> Self {
        Self {
            sweeps: 40,
            restarts: 3,
            proposal_temperature: 0.5,
            seed: 0,
        }
    }
}

/// Alternating descent: golden-section line search per free cell against the
/// adjacent face energies, with per-face bulk/jump selection, multi-restart
/// from the datum and from randomised fields. Always an upper bound for the
/// quantized optimum; `exact = false`.
pub fn solve_heuristic(p: &CellProblem, sched: &HeuristicSchedule) -> Result<SolveResult> {
    let domain = &p.domain;
    if domain.dim() > 2 || p.components() != 1 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    let n_cells = domain.total_cells();
    let datum = p.datum_values();
    let pinned = p.pinned_mask();
    let lo = datum.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = datum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = (hi - lo).max(1.0);
    let fc = FaceCosts::new(p);

    // Interior faces adjacent to each cell.
    let mut adj: Vec<Vec<(usize, usize, Vec<usize>, usize, usize)>> = vec![Vec::new(); n_cells];
    for face in domain.iter_faces() {
        if !domain.face_is_interior(face) {
            continue;
        }
        let (axis, plane, multi) = domain.face_decode(face);
        let (lo_c, up_c) = domain.face_cells(face);
        let (lo_c, up_c) = (lo_c.unwrap(), up_c.unwrap());
        adj[lo_c].push((axis, plane, multi.clone(), lo_c, up_c));
        adj[up_c].push((axis, plane, multi, lo_c, up_c));
    }

    let local_cost = |values: &[f64], cell: usize, v: f64| -> Result<f64> {
        let mut total = 0.0;
        for (axis, plane, multi, lo_c, up_c) in &adj[cell] {
            let vl = if *lo_c == cell { v } else { values[*lo_c] };
            let vu = if *up_c == cell { v } else { values[*up_c] };
            let (bulk, jump) = fc.costs(*axis, *plane, multi, &[vu - vl])?;
            total += bulk.min(jump);
        }
        Ok(total)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0usize;
    for restart in 0..sched.restarts.max(1) {
        let mut values = datum.clone();
        if restart > 0 {
            for (c, v) in values.iter_mut().enumerate() {
                if !pinned.get(c) {
                    *v += sched.proposal_temperature * range * rng.gen_range(-1.0..1.0);
                }
            }
        }
        let mut current = objective_with_modes(p, &values)?.0;
        for _ in 0..sched.sweeps {
            iterations += 1;
            let mut improved = false;
            for cell in 0..n_cells {
                if pinned.get(cell) {
                    continue;
                }
                let base = local_cost(&values, cell, values[cell])?;
                // Candidate kinks: neighbour values and the datum.
                let mut best_v = values[cell];
                let mut best_c = base;
                let mut consider = |v: f64, c: f64| {
                    if c < best_c - 1e-14 {
                        best_c = c;
                        best_v = v;
                    }
                };
                let mut lo_b = values[cell];
                let mut hi_b = values[cell];
                for (_, _, _, lo_c, up_c) in &adj[cell] {
                    for &nb in &[*lo_c, *up_c] {
                        if nb != cell {
                            lo_b = lo_b.min(values[nb]);
                            hi_b = hi_b.max(values[nb]);
                            consider(values[nb], local_cost(&values, cell, values[nb])?);
                        }
                    }
                }
                consider(datum[cell], local_cost(&values, cell, datum[cell])?);
                // Golden-section over the bracket padded by the datum range.
                let (mut a, mut b) = (lo_b - 0.5 * range, hi_b + 0.5 * range);
                let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
                let mut x1 = b - phi * (b - a);
                let mut x2 = a + phi * (b - a);
                let mut f1 = local_cost(&values, cell, x1)?;
                let mut f2 = local_cost(&values, cell, x2)?;
                for _ in 0..40 {
                    if f1 <= f2 {
                        b = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = b - phi * (b - a);
                        f1 = local_cost(&values, cell, x1)?;
                    } else {
                        a = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = a + phi * (b - a);
                        f2 = local_cost(&values, cell, x2)?;
                    }
                }
                consider(x1, f1);
                consider(x2, f2);
                if best_v != values[cell] {
                    values[cell] = best_v;
                    improved = true;
                }
            }
            // Greedy mode refresh is implicit: every cost above already takes
            // the per-face minimum, so a sweep with no value change is stable.
            let obj = objective_with_modes(p, &values)?.0;
            if obj < current - 1e-12 {
                current = obj;
            } else if !improved {
                break;
            } else {
                current = current.min(obj);
            }
        }
        let obj = objective_with_modes(p, &values)?.0;
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, values));
        }
    }
    let (value, values) = best.expect("at least one restart");
    let modes = objective_with_modes(p, &values)?.1;
    build_result(
        p,
        values,
        modes,
        value,
        false,
        iterations,
        sched.restarts.max(1),
    )
}

#[derive(Clone, Copy, Debug)]
pub struct OracleLimits {
    pub max_levels: usize,
    pub max_free_cells: usize,
    pub max_assignments: u128,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_levels: 9,
            max_free_cells: 9,
            max_assignments: 1 << 26,
        }
    }
}

/// Exhaustive enumeration over all quantized assignments of the free cells
/// (per-face modes decouple given the values). Exact for the quantized
/// problem; refuses instances beyond the limits, reporting the required
/// enumeration count.
pub fn brute_force_oracle(
    p: &CellProblem,
    quant: &Quantization,
    limits: &OracleLimits,
) -> Result<SolveResult> {
    quant.validate()?;
    if quant.levels > limits.max_levels {
        return Err(Error::Precondition(format!(
            "oracle limit: levels {} > {}",
            quant.levels, limits.max_levels
        )));
    }
    let domain = &p.domain;
    let datum = p.datum_values();
    let pinned = p.pinned_mask();
    let free: Vec<usize> = (0..domain.total_cells()).filter(|&c| !pinned.get(c)).collect();
    if free.len() > limits.max_free_cells {
        return Err(Error::Precondition(format!(
            "oracle limit: {} free cells > {}",
            free.len(),
            limits.max_free_cells
        )));
    }
    let required = (quant.levels as u128)
        .checked_pow(free.len() as u32)
        .unwrap_or(u128::MAX);
    if required > limits.max_assignments {
        return Err(Error::TooLarge {
            required,
            cap: limits.max_assignments,
        });
    }
    let lo = datum.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = datum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if quant.span < hi - lo {
        return Err(Error::Quantization(format!(
            "span {} smaller than datum range {}",
            quant.span,
            hi - lo
        )));
    }
    let grid = quant.grid(lo, hi, datum[0]);
    let mut values = datum.clone();
    let mut odometer = vec![0usize; free.len()];
    let mut best_value = f64::INFINITY;
    let mut best_values = values.clone();
    let mut count = 0u128;
    loop {
        for (slot, &cell) in free.iter().enumerate() {
            values[cell] = grid[odometer[slot]];
        }
        let (obj, _) = objective_with_modes(p, &values)?;
        if obj < best_value {
            best_value = obj;
            best_values = values.clone();
        }
        count += 1;
        // Advance.
        let mut slot = 0;
        loop {
            if slot == free.len() {
                let modes = objective_with_modes(p, &best_values)?.1;
                return build_result(
                    p,
                    best_values,
                    modes,
                    best_value,
                    true,
                    count as usize,
                    0,
                );
            }
            odometer[slot] += 1;
            if odometer[slot] < grid.len() {
                break;
            }
            odometer[slot] = 0;
            slot += 1;
        }
    }
}

/// Componentwise clamp to `[-bound, bound]`, preserving the datum on the
/// pinned mask (the precondition `|datum| <= bound/2` makes this automatic).
/// Sup-norm, L1-distance and boundary-condition conclusions hold by
/// construction; the energy change is for the caller to measure.
pub fn truncate(
    u: &DiscreteField,
    datum: &Datum,
    pinned: &CellMask,
    bound: f64,
) -> Result<DiscreteField> {
    if !(bound > 0.0) {
        return Err(Error::Precondition("truncation bound must be positive".into()));
    }
    let n = u.domain.dim();
    for cell in 0..u.domain.total_cells() {
        if pinned.get(cell) {
            let d = datum.eval(&u.domain.cell_center(cell), n);
            if d.iter().any(|&v| v.abs() > bound / 2.0) {
                return Err(Error::Precondition(format!(
                    "datum exceeds bound/2 = {} on pinned cell {cell}",
                    bound / 2.0
                )));
            }
        }
    }
    let mut out = u.clone();
    for cell in 0..u.domain.total_cells() {
        let clamped: Vec<f64> = u
            .value(cell)
            .iter()
            .map(|&v| v.clamp(-bound, bound))
            .collect();
        out.set_value(cell, &clamped);
    }
    Ok(out)
}
