//! Discrete SBV surrogate fields and the energy/total-variation evaluation.
//!
//! A field holds one m-vector per cell plus a jump indicator per interior
//! face. Along each lattice line the values are read as a piecewise-linear
//! interpolation through the cell centers whose end slopes extend onto the
//! half cells next to the boundary: interior faces carry weight `h`, the two
//! boundary faces carry weight `h/2` and copy the adjacent face's bulk
//! quotient. This makes the energy of the canonical linear and step data
//! exact in 1D. In 2D the bulk term is the direction-split rank-one proxy
//! `(delta/h) ⊗ nu` summed over both axis families, an anisotropic
//! approximation used for qualitative evidence only.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{CellMask, FaceId, GridDomain};
use crate::integrands::{SurfaceIntegrand, VolumeIntegrand};
use crate::vecmath::{dot, norm, outer, scale, sub};

#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub domain: Arc<GridDomain>,
    /// Components per cell (m).
    pub components: usize,
    values: Vec<f64>,
    jump_faces: Vec<bool>,
}

impl DiscreteField {
    pub fn constant(domain: Arc<GridDomain>, components: usize, value: &[f64]) -> Self {
        assert_eq!(value.len(), components);
        let cells = domain.total_cells();
        let faces = domain.faces_total();
        Self {
            domain,
            components,
            values: value
                .iter()
                .cycle()
                .take(cells * components)
                .copied()
                .collect(),
            jump_faces: vec![false; faces],
        }
    }

    pub fn value(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.components..(cell + 1) * self.components]
    }

    pub fn set_value(&mut self, cell: usize, v: &[f64]) {
        assert_eq!(v.len(), self.components);
        self.values[cell * self.components..(cell + 1) * self.components].copy_from_slice(v);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_jump(&self, face: FaceId) -> bool {
        self.jump_faces[face.0]
    }

    pub fn set_jump(&mut self, face: FaceId, v: bool) -> Result<()> {
        if v && !self.domain.face_is_interior(face) {
            return Err(Error::Precondition(
                "jump indicators live on interior faces only".into(),
            ));
        }
        self.jump_faces[face.0] = v;
        Ok(())
    }

    pub fn jump_count(&self) -> usize {
        self.jump_faces.iter().filter(|&&b| b).count()
    }

    /// Value difference across an interior face (upper minus lower cell).
    pub fn delta(&self, face: FaceId) -> Vec<f64> {
        let (lo, up) = self.domain.face_cells(face);
        let (lo, up) = (lo.expect("interior face"), up.expect("interior face"));
        sub(self.value(up), self.value(lo))
    }

    /// Debugging dump: one `cell` row per lattice cell (flat index followed
    /// by the value components) and one `face` row per interior face (flat
    /// index and jump flag).
    pub fn dump_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("row,index,data\n");
        for cell in 0..self.domain.total_cells() {
            let vals: Vec<String> = self.value(cell).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "cell,{cell},{}", vals.join(";"));
        }
        for face in self.domain.iter_faces() {
            if self.domain.face_is_interior(face) {
                let _ = writeln!(out, "face,{},{}", face.0, self.is_jump(face));
            }
        }
        out
    }

    /// Shift all values by a constant vector; leaves every difference intact.
    pub fn translated(&self, offset: &[f64]) -> Self {
        let mut out = self.clone();
        for cell in 0..self.domain.total_cells() {
            let v: Vec<f64> = self
                .value(cell)
                .iter()
                .zip(offset)
                .map(|(a, b)| a + b)
                .collect();
            out.set_value(cell, &v);
        }
        out
    }
}

/// The linear datum with gradient `xi` (an m×n matrix, row-major).
pub fn linear_field(xi: &[f64], components: usize, domain: Arc<GridDomain>) -> DiscreteField {
    let n = domain.dim();
    assert_eq!(xi.len(), components * n);
    let mut field = DiscreteField::constant(domain.clone(), components, &vec![0.0; components]);
    for cell in 0..domain.total_cells() {
        let x = domain.cell_center(cell);
        let v: Vec<f64> = (0..components)
            .map(|i| dot(&xi[i * n..(i + 1) * n], &x))
            .collect();
        field.set_value(cell, &v);
    }
    field
}

/// The elementary jump datum: `zeta` on the side of the plane through `x0`
/// with normal `nu`, zero on the other; jump indicators are set on every
/// interior face across which the indicator changes.
pub fn step_field(
    x0: &[f64],
    zeta: &[f64],
    nu: &[f64],
    domain: Arc<GridDomain>,
) -> DiscreteField {
    let components = zeta.len();
    let mut field = DiscreteField::constant(domain.clone(), components, &vec![0.0; components]);
    let upper: Vec<bool> = (0..domain.total_cells())
        .map(|cell| dot(&sub(&domain.cell_center(cell), x0), nu) >= 0.0)
        .collect();
    for (cell, &up) in upper.iter().enumerate() {
        if up {
            field.set_value(cell, zeta);
        }
    }
    for face in domain.iter_faces() {
        if let (Some(lo), Some(hi)) = domain.face_cells(face) {
            if upper[lo] != upper[hi] {
                field.set_jump(face, true).expect("interior face");
            }
        }
    }
    field
}

/// One face contribution to the energy or the total variation.
enum FaceTerm<'a> {
    /// Non-jump face with its rank-one gradient proxy and line weight
    /// (`h` interior, `h/2` for the copied boundary extensions).
    Bulk {
        face: FaceId,
        quotient: &'a [f64],
        weight: f64,
    },
    Jump { face: FaceId, delta: &'a [f64] },
}

/// Per-line contributions shared by the energy and the total variation.
fn fold_faces<V>(u: &DiscreteField, region: Option<&CellMask>, mut visit: V) -> Result<()>
where
    V: FnMut(FaceTerm<'_>) -> Result<()>,
{
    let domain = &u.domain;
    let h = domain.spacing;
    let in_region = |cell: usize| region.map_or(true, |m| m.get(cell));
    for face in domain.iter_faces() {
        let (axis, plane, multi) = domain.face_decode(face);
        let nu_axis = domain.rotation.column(axis);
        match domain.face_cells(face) {
            (Some(lo), Some(up)) => {
                if !(in_region(lo) && in_region(up)) {
                    continue;
                }
                let delta = u.delta(face);
                if u.is_jump(face) {
                    visit(FaceTerm::Jump { face, delta: &delta })?;
                } else {
                    let q = outer(&scale(&delta, 1.0 / h), &nu_axis);
                    visit(FaceTerm::Bulk {
                        face,
                        quotient: &q,
                        weight: h,
                    })?;
                }
            }
            (lo, up) => {
                // Boundary face: copy the adjacent interior face's quotient at
                // half weight, in jump mode too; otherwise a jump on the
                // outermost face would evade the half-cell measure.
                let cell = lo.or(up).expect("boundary face has one cell");
                if !in_region(cell) {
                    continue;
                }
                let adj_plane = if plane == 0 { 1 } else { domain.counts[axis] - 1 };
                let adj = domain.face_encode(axis, adj_plane, &multi);
                let q = outer(&scale(&u.delta(adj), 1.0 / h), &nu_axis);
                visit(FaceTerm::Bulk {
                    face,
                    quotient: &q,
                    weight: h / 2.0,
                })?;
            }
        }
    }
    Ok(())
}

/// Discrete free-discontinuity energy: bulk term on non-jump faces with the
/// rank-one gradient proxy, surface term `g(x, [u], nu)` on jump faces.
///
/// A jump face keeps its dual-cell bulk at zero gradient, so the `f(x, 0)`
/// floor cannot be evaded by zero-amplitude jumps.
pub fn energy(
    f: &VolumeIntegrand,
    g: &SurfaceIntegrand,
    u: &DiscreteField,
    region: Option<&CellMask>,
) -> Result<f64> {
    let domain = &u.domain;
    let n = domain.dim();
    let h = domain.spacing;
    let area = h.powi(n as i32 - 1);
    let zeros = vec![0.0; u.components * n];
    let mut total = 0.0;
    fold_faces(u, region, |term| {
        match term {
            FaceTerm::Bulk {
                face,
                quotient,
                weight,
            } => {
                let x = domain.face_center(face);
                total += area * weight * f.eval(&x, quotient).map_err(|e| locate(e, face))?;
            }
            FaceTerm::Jump { face, delta } => {
                let x = domain.face_center(face);
                let nu = domain.face_normal(face);
                let g_val = g.eval(&x, delta, &nu).map_err(|e| locate(e, face))?;
                let f_0 = f.eval(&x, &zeros).map_err(|e| locate(e, face))?;
                total += area * (g_val + h * f_0);
            }
        }
        Ok(())
    })?;
    Ok(total)
}

fn locate(e: Error, face: FaceId) -> Error {
    match e {
        Error::Eval { context, value } => Error::Eval {
            context: format!("{context} at face {}", face.0),
            value,
        },
        other => other,
    }
}

/// Discrete total-variation surrogate `|Du|`: every face contributes
/// `h^{n-1} |delta|`, jump and non-jump alike, with the boundary faces at the
/// copied half weight.
pub fn total_variation(u: &DiscreteField) -> f64 {
    let domain = &u.domain;
    let n = domain.dim();
    let h = domain.spacing;
    let area = h.powi(n as i32 - 1);
    let mut total = 0.0;
    fold_faces(u, None, |term| {
        match term {
            FaceTerm::Bulk { quotient, weight, .. } => total += area * weight * norm(quotient),
            FaceTerm::Jump { delta, .. } => total += area * norm(delta),
        }
        Ok(())
    })
    .expect("no integrand evaluation involved");
    total
}

/// One-dimensional test function with an explicit variation decomposition:
/// piecewise-linear absolutely continuous part, point jumps, and a synthetic
/// staircase carrying the diffuse singular mass.
#[derive(Clone, Debug)]
pub struct BVTestFunction1D {
    /// Domain interval.
    pub interval: (f64, f64),
    /// Breakpoints of the AC part: `breakpoints.len() = slopes.len() + 1`,
    /// spanning the interval.
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    /// (location, amplitude) jumps.
    pub jumps: Vec<(f64, f64)>,
    /// Coefficient of the level-`cantor_level` staircase on the interval.
    pub cantor_weight: f64,
    pub cantor_level: u32,
}

impl BVTestFunction1D {
    pub fn linear(xi: f64, interval: (f64, f64)) -> Self {
        Self {
            interval,
            breakpoints: vec![interval.0, interval.1],
            slopes: vec![xi],
            jumps: Vec::new(),
            cantor_weight: 0.0,
            cantor_level: 0,
        }
    }

    pub fn step(location: f64, amplitude: f64, interval: (f64, f64)) -> Self {
        Self {
            interval,
            breakpoints: vec![interval.0, interval.1],
            slopes: vec![0.0],
            jumps: vec![(location, amplitude)],
            cantor_weight: 0.0,
            cantor_level: 0,
        }
    }

    pub fn ac_mass(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.slopes)
            .map(|(w, s)| s.abs() * (w[1] - w[0]))
            .sum()
    }

    pub fn jump_mass(&self) -> f64 {
        self.jumps.iter().map(|(_, a)| a.abs()).sum()
    }

    pub fn cantor_mass(&self) -> f64 {
        self.cantor_weight.abs()
    }

    /// Sign of the staircase coefficient; the 1D polar of the diffuse part.
    pub fn cantor_polar(&self) -> f64 {
        if self.cantor_weight == 0.0 {
            0.0
        } else {
            self.cantor_weight.signum()
        }
    }

    pub fn total_variation(&self) -> f64 {
        self.ac_mass() + self.jump_mass() + self.cantor_mass()
    }

    /// Pointwise evaluation (AC part + jumps + scaled staircase).
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for (w, s) in self.breakpoints.windows(2).zip(&self.slopes) {
            if x <= w[0] {
                break;
            }
            v += s * (x.min(w[1]) - w[0]);
        }
        for &(loc, amp) in &self.jumps {
            if x >= loc {
                v += amp;
            }
        }
        if self.cantor_weight != 0.0 {
            let (a, b) = self.interval;
            let t = ((x - a) / (b - a)).clamp(0.0, 1.0);
            v += self.cantor_weight * staircase(t, self.cantor_level);
        }
        v
    }
}

/// Level-`level` approximation of the singular staircase on [0, 1]:
/// monotone from 0 to 1 with unit variation at every level.
fn staircase(t: f64, level: u32) -> f64 {
    if level == 0 {
        return t.clamp(0.0, 1.0);
    }
    if t < 1.0 / 3.0 {
        0.5 * staircase(3.0 * t, level - 1)
    } else if t < 2.0 / 3.0 {
        0.5
    } else {
        0.5 + 0.5 * staircase(3.0 * t - 2.0, level - 1)
    }
}

/// The scaled level-`level` staircase on (0, 1); its whole mass is recorded
/// as diffuse-singular, with polar `sign(weight)`.
pub fn cantor_test_function(weight: f64, level: u32) -> Result<BVTestFunction1D> {
    if !(3..=12).contains(&level) {
        return Err(Error::Precondition(format!(
            "staircase level must lie in [3, 12], got {level}"
        )));
    }
    Ok(BVTestFunction1D {
        interval: (0.0, 1.0),
        breakpoints: vec![0.0, 1.0],
        slopes: vec![0.0],
        jumps: Vec::new(),
        cantor_weight: weight,
        cantor_level: level,
    })
}
