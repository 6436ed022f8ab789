//! Rotated rectangles discretised in the rotated frame, boundary strips and
//! face decompositions.
//!
//! A `GridDomain` is a box in a local frame whose last axis is aligned with
//! the orientation `nu`; the lattice lives in local coordinates, so every
//! cell problem is internally axis-aligned and rotation only moves the points
//! at which integrands are sampled.

use std::fmt;

use crate::error::{Error, Result};
use crate::vecmath::{add, norm};

const ORTHO_TOL: f64 = 1e-12;

/// Orthogonal completion of a unit direction: `matrix * e_n = nu`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationMap {
    pub nu: Vec<f64>,
    /// Row-major n×n entries.
    pub matrix: Vec<f64>,
    pub rational: bool,
    pub dim: usize,
}

impl RotationMap {
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                out[i] += self.matrix[i * n + j] * y[j];
            }
        }
        out
    }

    /// Column `j`: the physical direction of local axis `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.matrix[i * self.dim + j]).collect()
    }

    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0_f64;
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += self.matrix[i * n + a] * self.matrix[i * n + b];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// Smallest positive integer `M <= cap` with `M * matrix` integral, if any.
pub fn rational_scale(rot: &RotationMap, cap: u32) -> Option<u32> {
    for m in 1..=cap {
        let ok = rot.matrix.iter().all(|&e| {
            let s = e * m as f64;
            (s - s.round()).abs() <= 1e-9 * m as f64
        });
        if ok {
            return Some(m);
        }
    }
    None
}

/// Build the rotation sending `e_n` to `nu`.
///
/// The same closed form is used for every `nu`, so the map is continuous on
/// each hemisphere; for rational `nu` the entries are rational. `n = 1`
/// degenerates to the sign scalar.
pub fn rotation_matrix(nu: &[f64]) -> Result<RotationMap> {
    let n = nu.len();
    if n == 0 || norm(nu) == 0.0 {
        return Err(Error::InvalidDirection("zero direction".into()));
    }
    if (norm(nu) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDirection(format!(
            "|nu| = {} is not 1 within 1e-10",
            norm(nu)
        )));
    }
    let matrix = match n {
        1 => vec![nu[0].signum()],
        2 => {
            // columns: (nu_2, -nu_1) and nu; maps e_2 to nu, det = 1.
            vec![nu[1], nu[0], -nu[0], nu[1]]
        }
        _ => return Err(Error::UnsupportedDimension(n)),
    };
    let mut rot = RotationMap {
        nu: nu.to_vec(),
        matrix,
        rational: false,
        dim: n,
    };
    debug_assert!(rot.orthogonality_residual() <= ORTHO_TOL);
    rot.rational = rational_scale(&rot, 1000).is_some();
    Ok(rot)
}

/// Flat index of a face: faces are grouped by axis, then ordered by
/// (plane index along the axis, transverse cell index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaceId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceRole {
    FullBoundary,
    Perpendicular,
    Parallel,
    InterfacePlane,
}

/// A tagged set of faces.
#[derive(Clone, Debug)]
pub struct FaceMask {
    pub role: FaceRole,
    pub ids: Vec<FaceId>,
}

/// Boolean cell selection on a domain's lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMask {
    bits: Vec<bool>,
}

impl CellMask {
    pub fn full(count: usize, value: bool) -> Self {
        Self {
            bits: vec![value; count],
        }
    }

    pub fn get(&self, cell: usize) -> bool {
        self.bits[cell]
    }

    pub fn set(&mut self, cell: usize, v: bool) {
        self.bits[cell] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }
}

/// Axis-aligned-after-rotation box lattice.
#[derive(Clone)]
pub struct GridDomain {
    pub rotation: RotationMap,
    /// Physical center.
    pub center: Vec<f64>,
    /// Local extents; the last axis runs along `nu`.
    pub extents: Vec<f64>,
    pub spacing: f64,
    pub bc_width: f64,
    pub counts: Vec<usize>,
    /// Row-major cell strides (last axis fastest).
    strides: Vec<usize>,
    /// Per-axis offset into the flat face index space.
    face_offsets: Vec<usize>,
    faces_total: usize,
}

impl fmt::Debug for GridDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridDomain")
            .field("center", &self.center)
            .field("extents", &self.extents)
            .field("spacing", &self.spacing)
            .field("counts", &self.counts)
            .finish()
    }
}

impl GridDomain {
    pub fn new(
        rotation: RotationMap,
        center: Vec<f64>,
        extents: Vec<f64>,
        spacing: f64,
        bc_width: f64,
    ) -> Result<Self> {
        let n = rotation.dim;
        if center.len() != n || extents.len() != n {
            return Err(Error::Discretisation(format!(
                "center/extents length must match dimension {n}"
            )));
        }
        if !(spacing > 0.0) {
            return Err(Error::Discretisation("spacing must be positive".into()));
        }
        if bc_width < 2.0 * spacing - 1e-12 {
            return Err(Error::Discretisation(format!(
                "bc_width {bc_width} must be >= 2h = {}",
                2.0 * spacing
            )));
        }
        let mut counts = Vec::with_capacity(n);
        for (a, &ext) in extents.iter().enumerate() {
            let c = (ext / spacing).round();
            if (c * spacing - ext).abs() > 1e-9 * ext.max(1.0) {
                return Err(Error::Discretisation(format!(
                    "h = {spacing} does not divide extent {ext} on axis {a}"
                )));
            }
            let c = c as usize;
            if c < 4 {
                return Err(Error::Discretisation(format!(
                    "axis {a} has {c} cells; need >= 4"
                )));
            }
            counts.push(c);
        }
        let mut strides = vec![0usize; n];
        let mut s = 1;
        for a in (0..n).rev() {
            strides[a] = s;
            s *= counts[a];
        }
        let mut face_offsets = Vec::with_capacity(n);
        let mut off = 0usize;
        for a in 0..n {
            face_offsets.push(off);
            let transverse: usize = (0..n).filter(|&b| b != a).map(|b| counts[b]).product();
            off += (counts[a] + 1) * transverse;
        }
        Ok(Self {
            rotation,
            center,
            extents,
            spacing,
            bc_width,
            counts,
            strides,
            face_offsets,
            faces_total: off,
        })
    }

    pub fn dim(&self) -> usize {
        self.rotation.dim
    }

    pub fn total_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    /// Sum of cell volumes; equals the product of extents up to round-off.
    pub fn lattice_volume(&self) -> f64 {
        self.total_cells() as f64 * self.cell_volume()
    }

    pub fn cell_multi(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        self.strides
            .iter()
            .map(|&s| {
                let q = rem / s;
                rem %= s;
                q
            })
            .collect()
    }

    pub fn cell_flat(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn cell_center_local(&self, flat: usize) -> Vec<f64> {
        self.cell_multi(flat)
            .iter()
            .zip(&self.extents)
            .map(|(&i, &ext)| -ext / 2.0 + (i as f64 + 0.5) * self.spacing)
            .collect()
    }

    pub fn to_physical(&self, local: &[f64]) -> Vec<f64> {
        add(&self.center, &self.rotation.apply(local))
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        self.to_physical(&self.cell_center_local(flat))
    }

    pub fn faces_total(&self) -> usize {
        self.faces_total
    }

    /// Decode a face id into (axis, plane index along the axis, transverse
    /// cell multi-index with the axis entry unused/zero).
    pub fn face_decode(&self, face: FaceId) -> (usize, usize, Vec<usize>) {
        let n = self.dim();
        let axis = (0..n)
            .rev()
            .find(|&a| face.0 >= self.face_offsets[a])
            .expect("face id in range");
        let mut rem = face.0 - self.face_offsets[axis];
        let mut multi = vec![0usize; n];
        // Order: plane slowest, then transverse axes in ascending order.
        let transverse: Vec<usize> = (0..n).filter(|&b| b != axis).collect();
        let tcount: usize = transverse.iter().map(|&b| self.counts[b]).product();
        let plane = rem / tcount.max(1);
        rem %= tcount.max(1);
        for &b in &transverse {
            let stride: usize = transverse
                .iter()
                .filter(|&&c| c > b)
                .map(|&c| self.counts[c])
                .product();
            multi[b] = rem / stride.max(1);
            rem %= stride.max(1);
        }
        (axis, plane, multi)
    }

    pub fn face_encode(&self, axis: usize, plane: usize, multi: &[usize]) -> FaceId {
        let n = self.dim();
        let transverse: Vec<usize> = (0..n).filter(|&b| b != axis).collect();
        let tcount: usize = transverse.iter().map(|&b| self.counts[b]).product();
        let mut rem = 0usize;
        for &b in &transverse {
            let stride: usize = transverse
                .iter()
                .filter(|&&c| c > b)
                .map(|&c| self.counts[c])
                .product();
            rem += multi[b] * stride.max(1);
        }
        FaceId(self.face_offsets[axis] + plane * tcount.max(1) + rem)
    }

    pub fn face_is_interior(&self, face: FaceId) -> bool {
        let (axis, plane, _) = self.face_decode(face);
        plane > 0 && plane < self.counts[axis]
    }

    /// Cells below/above the face along its axis (None at the boundary).
    pub fn face_cells(&self, face: FaceId) -> (Option<usize>, Option<usize>) {
        let (axis, plane, mut multi) = self.face_decode(face);
        let lower = if plane > 0 {
            multi[axis] = plane - 1;
            Some(self.cell_flat(&multi))
        } else {
            None
        };
        let upper = if plane < self.counts[axis] {
            multi[axis] = plane;
            Some(self.cell_flat(&multi))
        } else {
            None
        };
        (lower, upper)
    }

    pub fn face_center_local(&self, face: FaceId) -> Vec<f64> {
        let (axis, plane, multi) = self.face_decode(face);
        let n = self.dim();
        let mut y = vec![0.0; n];
        for b in 0..n {
            y[b] = if b == axis {
                -self.extents[b] / 2.0 + plane as f64 * self.spacing
            } else {
                -self.extents[b] / 2.0 + (multi[b] as f64 + 0.5) * self.spacing
            };
        }
        y
    }

    pub fn face_center(&self, face: FaceId) -> Vec<f64> {
        self.to_physical(&self.face_center_local(face))
    }

    /// Physical unit normal of a face (direction of its local axis).
    pub fn face_normal(&self, face: FaceId) -> Vec<f64> {
        let (axis, _, _) = self.face_decode(face);
        self.rotation.column(axis)
    }

    pub fn iter_faces(&self) -> impl Iterator<Item = FaceId> {
        (0..self.faces_total).map(FaceId)
    }

    /// Cells whose center lies within `bc_width` of the boundary; constraining
    /// fields there realises the "equal to the datum near the boundary"
    /// convention of the minimum values.
    pub fn boundary_strip(&self) -> CellMask {
        let mut mask = CellMask::full(self.total_cells(), false);
        for cell in 0..self.total_cells() {
            let y = self.cell_center_local(cell);
            let d = y
                .iter()
                .zip(&self.extents)
                .map(|(&c, &ext)| ext / 2.0 - c.abs())
                .fold(f64::INFINITY, f64::min);
            if d < self.bc_width {
                mask.set(cell, true);
            }
        }
        mask
    }

    /// Strip along the two faces orthogonal to `nu` only (last local axis).
    pub fn perpendicular_strip(&self) -> CellMask {
        let n = self.dim();
        let mut mask = CellMask::full(self.total_cells(), false);
        for cell in 0..self.total_cells() {
            let y = self.cell_center_local(cell);
            let d = self.extents[n - 1] / 2.0 - y[n - 1].abs();
            if d < self.bc_width {
                mask.set(cell, true);
            }
        }
        mask
    }

    /// Boundary faces split into the faces orthogonal to `nu` (normals
    /// `±nu`) and the faces parallel to `nu`, plus the interior faces crossed
    /// by the plane through the center orthogonal to `nu`.
    pub fn face_masks(&self) -> (FaceMask, FaceMask, FaceMask) {
        let n = self.dim();
        let mut perp = Vec::new();
        let mut par = Vec::new();
        let mut interface = Vec::new();
        // First plane index along nu whose upper cell center is on the
        // nonnegative side of the center plane.
        let last = n - 1;
        let mut interface_plane = None;
        for p in 1..self.counts[last] {
            let c_up = -self.extents[last] / 2.0 + (p as f64 + 0.5) * self.spacing;
            let c_lo = c_up - self.spacing;
            if c_lo < 0.0 && c_up >= 0.0 {
                interface_plane = Some(p);
                break;
            }
        }
        for face in self.iter_faces() {
            let (axis, plane, _) = self.face_decode(face);
            if plane == 0 || plane == self.counts[axis] {
                if axis == last {
                    perp.push(face);
                } else {
                    par.push(face);
                }
            } else if axis == last && Some(plane) == interface_plane {
                interface.push(face);
            }
        }
        (
            FaceMask {
                role: FaceRole::Perpendicular,
                ids: perp,
            },
            FaceMask {
                role: FaceRole::Parallel,
                ids: par,
            },
            FaceMask {
                role: FaceRole::InterfacePlane,
                ids: interface,
            },
        )
    }

    /// Corner points of the (undiscretised) box, in physical coordinates.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            let local: Vec<f64> = (0..n)
                .map(|a| {
                    let s = if mask & (1 << a) != 0 { 0.5 } else { -0.5 };
                    s * self.extents[a]
                })
                .collect();
            out.push(self.to_physical(&local));
        }
        out
    }
}

/// The oriented rectangle `Q^{nu,k}_r(x)`: side `r` along `nu`, elongation
/// `k` in the orthogonal directions, discretised at spacing `h`.
pub fn rotated_rectangle(
    x: &[f64],
    r: f64,
    k: u32,
    nu: &[f64],
    h: f64,
    bc_width: f64,
) -> Result<GridDomain> {
    if !(r > 0.0) {
        return Err(Error::Discretisation("side r must be positive".into()));
    }
    if k < 1 {
        return Err(Error::Discretisation("elongation k must be >= 1".into()));
    }
    let rot = rotation_matrix(nu)?;
    let n = rot.dim;
    let mut extents = vec![k as f64 * r; n];
    extents[n - 1] = r;
    GridDomain::new(rot, x.to_vec(), extents, h, bc_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rotation_identity_for_en() {
        let r = rotation_matrix(&[0.0, 1.0]).unwrap();
        assert_eq!(r.matrix, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(r.rational);
    }

    #[test]
    fn rotation_pi_for_negative_e2() {
        let r = rotation_matrix(&[0.0, -1.0]).unwrap();
        let img = r.apply(&[0.0, 1.0]);
        assert_abs_diff_eq!(img[0], 0.0);
        assert_abs_diff_eq!(img[1], -1.0);
        assert!(r.orthogonality_residual() < 1e-12);
    }

    #[test]
    fn rotation_rational_for_pythagorean_direction() {
        let r = rotation_matrix(&[0.6, 0.8]).unwrap();
        let img = r.apply(&[0.0, 1.0]);
        assert_abs_diff_eq!(img[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(img[1], 0.8, epsilon = 1e-15);
        assert!(r.rational);
        assert_eq!(rational_scale(&r, 10), Some(5));
    }

    #[test]
    fn rotation_1d_is_sign() {
        assert_eq!(rotation_matrix(&[1.0]).unwrap().matrix, vec![1.0]);
        assert_eq!(rotation_matrix(&[-1.0]).unwrap().matrix, vec![-1.0]);
    }

    #[test]
    fn rotation_rejects_bad_input() {
        assert!(rotation_matrix(&[0.0, 0.0]).is_err());
        assert!(rotation_matrix(&[0.5, 0.5]).is_err());
        assert!(rotation_matrix(&[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn opposite_directions_give_same_cube() {
        for nu in [[0.6, 0.8], [0.0, 1.0], [-1.0, 0.0]] {
            let a = rotated_rectangle(&[0.0, 0.0], 1.0, 1, &nu, 0.25, 0.5).unwrap();
            let neg = [-nu[0], -nu[1]];
            let b = rotated_rectangle(&[0.0, 0.0], 1.0, 1, &neg, 0.25, 0.5).unwrap();
            let mut va = a.vertices();
            let mut vb = b.vertices();
            let key = |p: &Vec<f64>| (p[0] * 1e9) as i64 * 1_000_000 + (p[1] * 1e9) as i64;
            va.sort_by_key(key);
            vb.sort_by_key(key);
            for (p, q) in va.iter().zip(&vb) {
                assert_abs_diff_eq!(p[0], q[0], epsilon = 1e-12);
                assert_abs_diff_eq!(p[1], q[1], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hemisphere_continuity_of_vertices() {
        let delta = 1e-3;
        let base: [f64; 2] = [0.6, 0.8];
        let perturbed = {
            let raw = [0.6 + delta * 0.8, 0.8 - delta * 0.6];
            let n = norm(&raw);
            [raw[0] / n, raw[1] / n]
        };
        let a = rotated_rectangle(&[0.0, 0.0], 1.0, 1, &base, 0.25, 0.5).unwrap();
        let b = rotated_rectangle(&[0.0, 0.0], 1.0, 1, &perturbed, 0.25, 0.5).unwrap();
        let d = norm(&crate::vecmath::sub(&base, &perturbed));
        for (p, q) in a.vertices().iter().zip(b.vertices().iter()) {
            let dist = crate::vecmath::dist(p, q);
            assert!(dist <= 10.0 * d, "vertex moved {dist} for |dnu| = {d}");
        }
    }

    #[test]
    fn unit_cube_counts_and_volume() {
        let d = rotated_rectangle(&[0.0], 1.0, 1, &[1.0], 0.125, 0.25).unwrap();
        assert_eq!(d.counts, vec![8]);
        assert_abs_diff_eq!(d.lattice_volume(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn elongated_rectangle_volume() {
        // r = 2, k = 3 in 2D: area k^{n-1} r^n = 12.
        let d = rotated_rectangle(&[0.0, 0.0], 2.0, 3, &[0.0, 1.0], 0.25, 0.5).unwrap();
        assert_eq!(d.counts, vec![24, 8]);
        assert_abs_diff_eq!(d.lattice_volume(), 12.0, epsilon = 1e-12);
    }

    #[test]
    fn rotated_lattice_volume_exact() {
        let d = rotated_rectangle(&[0.0, 0.0], 5.0, 1, &[0.6, 0.8], 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(d.lattice_volume(), 25.0, epsilon = 1e-12 * 25.0);
    }

    #[test]
    fn incommensurate_spacing_rejected() {
        assert!(rotated_rectangle(&[0.0], 1.0, 1, &[1.0], 0.3, 0.6).is_err());
    }

    #[test]
    fn boundary_strip_1d_masks_two_cells_per_side() {
        let d = rotated_rectangle(&[0.0], 1.0, 1, &[1.0], 0.125, 0.25).unwrap();
        let m = d.boundary_strip();
        let masked: Vec<usize> = (0..8).filter(|&c| m.get(c)).collect();
        assert_eq!(masked, vec![0, 1, 6, 7]);
    }

    #[test]
    fn boundary_strip_half_side_masks_everything() {
        let d = rotated_rectangle(&[0.0], 1.0, 1, &[1.0], 0.125, 0.5).unwrap();
        assert_eq!(d.boundary_strip().count(), 8);
    }

    #[test]
    fn boundary_strip_2d_interior_count() {
        let d = rotated_rectangle(&[0.0, 0.0], 1.0, 1, &[0.0, 1.0], 0.125, 0.25).unwrap();
        let m = d.boundary_strip();
        assert_eq!(m.count(), 48);
        assert_eq!(m.len() - m.count(), 16);
    }

    #[test]
    fn face_masks_1d() {
        let d = rotated_rectangle(&[0.0], 1.0, 1, &[1.0], 0.125, 0.25).unwrap();
        let (perp, par, interface) = d.face_masks();
        assert_eq!(perp.ids.len(), 2);
        assert!(par.ids.is_empty());
        assert_eq!(interface.ids.len(), 1);
        assert_eq!(perp.role, FaceRole::Perpendicular);
    }

    #[test]
    fn face_masks_2d_counts() {
        let d = rotated_rectangle(&[0.0, 0.0], 1.0, 1, &[0.0, 1.0], 0.125, 0.25).unwrap();
        let (perp, par, interface) = d.face_masks();
        assert_eq!(perp.ids.len(), 16);
        assert_eq!(par.ids.len(), 16);
        assert_eq!(interface.ids.len(), 8);
        for f in &interface.ids {
            let y = d.face_center_local(*f);
            assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn face_roundtrip_encode_decode() {
        let d = rotated_rectangle(&[0.0, 0.0], 2.0, 2, &[0.0, 1.0], 0.25, 0.5).unwrap();
        for f in d.iter_faces() {
            let (axis, plane, multi) = d.face_decode(f);
            assert_eq!(d.face_encode(axis, plane, &multi), f);
        }
    }

    #[test]
    fn face_cells_adjacency() {
        let d = rotated_rectangle(&[0.0], 1.0, 1, &[1.0], 0.25, 0.5).unwrap();
        let mut interior = 0;
        for f in d.iter_faces() {
            let (lo, up) = d.face_cells(f);
            if d.face_is_interior(f) {
                interior += 1;
                assert_eq!(up.unwrap(), lo.unwrap() + 1);
            } else {
                assert!(lo.is_none() || up.is_none());
            }
        }
        assert_eq!(interior, 3);
    }

    #[test]
    fn perpendicular_strip_is_last_axis_only() {
        let d = rotated_rectangle(&[0.0, 0.0], 1.0, 1, &[0.0, 1.0], 0.125, 0.25).unwrap();
        let m = d.perpendicular_strip();
        // Two rows of 8 at each nu-end.
        assert_eq!(m.count(), 32);
    }
}
