//! Volume and surface energy densities with declared growth constants,
//! their scaling limits (recession at infinity, directional derivative at
//! zero), and sampled admissibility checks.
//!
//! A volume integrand is a map `(x, xi) -> [0, inf)` with `xi` an m×n matrix
//! flattened row-major; a surface integrand is a map `(x, zeta, nu)` with
//! `zeta` an m-vector and `nu` a unit n-vector. Admissibility of a concrete
//! instance is certified by sampling only: the checks record the worst
//! violation and the witnessing sample.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::vecmath::{norm, scale};

/// Nondecreasing tabulated modulus on `[0, ∞)` with value 0 at 0.
/// Linear interpolation between knots, constant beyond the last knot.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneTable {
    knots: Vec<(f64, f64)>,
}

impl MonotoneTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Precondition("modulus table needs >= 1 knot".into()));
        }
        if knots[0] != (0.0, 0.0) {
            return Err(Error::Precondition(
                "modulus table must start at (0, 0)".into(),
            ));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 < w[0].1 {
                return Err(Error::Precondition(
                    "modulus table must be strictly increasing in t and nondecreasing in value"
                        .into(),
                ));
            }
        }
        Ok(Self { knots })
    }

    /// `min(1, t/delta)`-style ramp saturating at `cap` from `t0` on.
    pub fn ramp(t0: f64, cap: f64) -> Self {
        Self::new(vec![(0.0, 0.0), (t0, cap)]).expect("valid ramp")
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let last = *self.knots.last().expect("nonempty");
        if t >= last.0 {
            return last.1;
        }
        let hi = self.knots.partition_point(|&(k, _)| k <= t);
        if hi == 0 {
            return self.knots[0].1;
        }
        let (t0, v0) = self.knots[hi - 1];
        let (t1, v1) = self.knots[hi];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }
}

/// Growth and continuity constants shared by a volume/surface pair.
#[derive(Clone, Debug)]
pub struct IntegrandConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub alpha: f64,
    pub sigma1: MonotoneTable,
    pub sigma2: MonotoneTable,
}

impl IntegrandConstants {
    pub fn new(
        c1: f64,
        c2: f64,
        c3: f64,
        c4: f64,
        c5: f64,
        alpha: f64,
        sigma1: MonotoneTable,
        sigma2: MonotoneTable,
    ) -> Result<Self> {
        if !(c2 > 0.0 && c2 <= c3) {
            return Err(Error::Precondition(format!(
                "coercivity/growth constants need 0 < c2 <= c3, got c2={c2}, c3={c3}"
            )));
        }
        for (name, v) in [("c1", c1), ("c4", c4), ("c5", c5)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Precondition(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Precondition(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            c1,
            c2,
            c3,
            c4,
            c5,
            alpha,
            sigma1,
            sigma2,
        })
    }

    /// `c1=c3` dominance makes the continuity estimate hold for every
    /// Lipschitz-in-|xi| family with constant <= c3.
    pub fn norm_like(c2: f64, c3: f64) -> Self {
        Self::new(
            c3,
            c2,
            c3,
            0.0,
            1.0,
            0.5,
            MonotoneTable::ramp(0.5, 1.0),
            MonotoneTable::ramp(0.5, 1.0),
        )
        .expect("valid norm-like constants")
    }
}

pub type VolumeEvalFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type SurfaceEvalFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;

/// Evaluable bulk energy density `f(x, xi)`.
#[derive(Clone)]
pub struct VolumeIntegrand {
    eval_fn: VolumeEvalFn,
    pub constants: IntegrandConstants,
    /// (m, n): target and space dimensions; `xi` has length m*n.
    pub dims: (usize, usize),
    pub one_homogeneous: bool,
    pub x_independent: bool,
}

impl fmt::Debug for VolumeIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolumeIntegrand")
            .field("dims", &self.dims)
            .field("one_homogeneous", &self.one_homogeneous)
            .field("x_independent", &self.x_independent)
            .finish()
    }
}

impl VolumeIntegrand {
    pub fn new(
        dims: (usize, usize),
        constants: IntegrandConstants,
        one_homogeneous: bool,
        x_independent: bool,
        eval_fn: VolumeEvalFn,
    ) -> Self {
        Self {
            eval_fn,
            constants,
            dims,
            one_homogeneous,
            x_independent,
        }
    }

    /// Evaluate; non-finite or negative outputs are hard errors, never clamped.
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        debug_assert_eq!(xi.len(), self.dims.0 * self.dims.1);
        let v = (self.eval_fn)(x, xi);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Eval {
                context: format!("f(x={x:?}, xi={xi:?})"),
                value: v,
            });
        }
        Ok(v)
    }

    /// Density with the spatial variable rescaled: `f_s(x, xi) = f(s x, xi)`.
    pub fn with_spatial_scale(&self, s: f64) -> VolumeIntegrand {
        let inner = self.eval_fn.clone();
        VolumeIntegrand::new(
            self.dims,
            self.constants.clone(),
            self.one_homogeneous,
            self.x_independent,
            Arc::new(move |x: &[f64], xi: &[f64]| {
                let xs: Vec<f64> = x.iter().map(|c| c * s).collect();
                inner(&xs, xi)
            }),
        )
    }
}

/// Evaluable jump energy density `g(x, zeta, nu)`.
#[derive(Clone)]
pub struct SurfaceIntegrand {
    eval_fn: SurfaceEvalFn,
    pub constants: IntegrandConstants,
    pub dims: (usize, usize),
    pub one_homogeneous: bool,
    pub x_independent: bool,
}

impl fmt::Debug for SurfaceIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceIntegrand")
            .field("dims", &self.dims)
            .field("one_homogeneous", &self.one_homogeneous)
            .finish()
    }
}

impl SurfaceIntegrand {
    pub fn new(
        dims: (usize, usize),
        constants: IntegrandConstants,
        one_homogeneous: bool,
        x_independent: bool,
        eval_fn: SurfaceEvalFn,
    ) -> Self {
        Self {
            eval_fn,
            constants,
            dims,
            one_homogeneous,
            x_independent,
        }
    }

    pub fn eval(&self, x: &[f64], zeta: &[f64], nu: &[f64]) -> Result<f64> {
        debug_assert_eq!(zeta.len(), self.dims.0);
        let v = (self.eval_fn)(x, zeta, nu);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Eval {
                context: format!("g(x={x:?}, zeta={zeta:?}, nu={nu:?})"),
                value: v,
            });
        }
        Ok(v)
    }

    /// Density with the spatial variable rescaled: `g_s(x, zeta, nu) = g(s x, zeta, nu)`.
    pub fn with_spatial_scale(&self, s: f64) -> SurfaceIntegrand {
        let inner = self.eval_fn.clone();
        SurfaceIntegrand::new(
            self.dims,
            self.constants.clone(),
            self.one_homogeneous,
            self.x_independent,
            Arc::new(move |x: &[f64], zeta: &[f64], nu: &[f64]| {
                let xs: Vec<f64> = x.iter().map(|c| c * s).collect();
                inner(&xs, zeta, nu)
            }),
        )
    }

    /// Density under the change of variables that maps a domain of size `s`
    /// onto the unit domain: `g_s(x, a, nu) = g(s x, s a, nu) / s`.
    pub fn with_epsilon_scale(&self, s: f64) -> SurfaceIntegrand {
        let inner = self.eval_fn.clone();
        SurfaceIntegrand::new(
            self.dims,
            self.constants.clone(),
            self.one_homogeneous,
            self.x_independent,
            Arc::new(move |x: &[f64], zeta: &[f64], nu: &[f64]| {
                let xs: Vec<f64> = x.iter().map(|c| c * s).collect();
                let zs: Vec<f64> = zeta.iter().map(|c| c * s).collect();
                inner(&xs, &zs, nu) / s
            }),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Property {
    F2,
    F3,
    F4,
    F5,
    G2,
    G3,
    G4,
    G5,
    G6,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Property::F2 => "f2-continuity",
            Property::F3 => "f3-lower-bound",
            Property::F4 => "f4-upper-bound",
            Property::F5 => "f5-recession-cauchy",
            Property::G2 => "g2-continuity",
            Property::G3 => "g3-lower-bound",
            Property::G4 => "g4-upper-bound",
            Property::G5 => "g5-derivative-cauchy",
            Property::G6 => "g6-symmetry",
        };
        f.write_str(s)
    }
}

/// The sample at which the worst violation was observed.
#[derive(Clone, Debug)]
pub struct Witness {
    pub x: Vec<f64>,
    pub argument: Vec<f64>,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct PropertyCheck {
    pub property: Property,
    pub passed: bool,
    pub worst_violation: f64,
    pub witness: Option<Witness>,
}

/// Per-property verdicts; every checked property appears exactly once.
#[derive(Clone, Debug)]
pub struct AdmissibilityReport {
    pub checks: Vec<PropertyCheck>,
    pub notes: Vec<String>,
}

impl AdmissibilityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, p: Property) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.property == p)
    }
}

impl fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            if c.passed {
                writeln!(f, "{}: PASS (worst slack {:.3e})", c.property, -c.worst_violation)?;
            } else {
                writeln!(f, "{}: FAIL (violation {:.3e})", c.property, c.worst_violation)?;
                if let Some(w) = &c.witness {
                    writeln!(f, "    witness x={:?} arg={:?} {}", w.x, w.argument, w.detail)?;
                }
            }
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

/// Sampling grid for the admissibility checks and scaling diagnostics.
#[derive(Clone, Debug)]
pub struct SampleSpec {
    pub x_points: Vec<Vec<f64>>,
    /// Unit directions in argument space (m*n for volume, m for surface).
    pub directions: Vec<Vec<f64>>,
    pub magnitudes: Vec<f64>,
    /// Scaling grid: used as `t`-samples for f5/g5 and as the tau grid for the
    /// modulus of uniform convergence.
    pub t_values: Vec<f64>,
    /// Unit normals (surface checks only).
    pub normals: Vec<Vec<f64>>,
    pub tol: f64,
}

fn unit_directions(len: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..len {
        let mut d = vec![0.0; len];
        d[i] = 1.0;
        dirs.push(d.clone());
        d[i] = -1.0;
        dirs.push(d);
    }
    if len > 1 {
        dirs.push(vec![1.0 / (len as f64).sqrt(); len]);
    }
    dirs
}

impl SampleSpec {
    pub fn volume_default(m: usize, n: usize) -> Self {
        Self {
            x_points: default_x_points(n),
            directions: unit_directions(m * n),
            magnitudes: vec![0.5, 1.0, 2.0, 4.0, 16.0],
            t_values: vec![1.0, 4.0, 16.0, 64.0, 256.0, 1024.0],
            normals: Vec::new(),
            tol: 1e-9,
        }
    }

    pub fn surface_default(m: usize, n: usize) -> Self {
        Self {
            x_points: default_x_points(n),
            directions: unit_directions(m),
            magnitudes: vec![0.5, 1.0, 2.0, 4.0],
            t_values: vec![1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0],
            normals: unit_directions(n)
                .into_iter()
                .map(|d| {
                    let nn = norm(&d);
                    scale(&d, 1.0 / nn)
                })
                .collect(),
            tol: 1e-9,
        }
    }
}

fn default_x_points(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![0.0], vec![0.3], vec![1.0], vec![2.5]],
        _ => vec![
            vec![0.0; n],
            {
                let mut p = vec![0.0; n];
                p[0] = 1.0;
                p
            },
            vec![0.3; n],
            vec![1.7; n],
        ],
    }
}

struct CheckAccum {
    property: Property,
    worst: f64,
    witness: Option<Witness>,
}

impl CheckAccum {
    fn new(property: Property) -> Self {
        Self {
            property,
            worst: f64::NEG_INFINITY,
            witness: None,
        }
    }

    fn record(&mut self, violation: f64, x: &[f64], arg: &[f64], detail: impl FnOnce() -> String) {
        if violation > self.worst {
            self.worst = violation;
            self.witness = Some(Witness {
                x: x.to_vec(),
                argument: arg.to_vec(),
                detail: detail(),
            });
        }
    }

    fn finish(self, tol: f64) -> PropertyCheck {
        let passed = self.worst <= tol;
        PropertyCheck {
            property: self.property,
            passed,
            worst_violation: self.worst,
            witness: if passed { None } else { self.witness },
        }
    }
}

/// Sampled verdicts for (f2)-(f5). The f5 check uses the two-sided Cauchy
/// estimate equivalent to the recession bound under the upper bound f4.
pub fn check_volume_admissibility(
    f: &VolumeIntegrand,
    spec: &SampleSpec,
) -> Result<AdmissibilityReport> {
    if spec.x_points.is_empty() || spec.directions.is_empty() || spec.magnitudes.is_empty() {
        return Err(Error::Precondition("empty sample spec".into()));
    }
    let c = &f.constants;
    let mut f2 = CheckAccum::new(Property::F2);
    let mut f3 = CheckAccum::new(Property::F3);
    let mut f4 = CheckAccum::new(Property::F4);
    let mut f5 = CheckAccum::new(Property::F5);

    for x in &spec.x_points {
        // Cache sampled arguments and values for the pairwise f2 check.
        let mut args: Vec<Vec<f64>> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        for d in &spec.directions {
            for &mag in &spec.magnitudes {
                let xi = scale(d, mag);
                let v = f.eval(x, &xi)?;
                f3.record(c.c2 * norm(&xi) - v, x, &xi, || "c2|xi| > f".into());
                f4.record(v - c.c3 * norm(&xi) - c.c4, x, &xi, || {
                    "f > c3|xi| + c4".into()
                });
                args.push(xi);
                vals.push(v);
            }
        }
        for i in 0..args.len() {
            for j in (i + 1)..args.len() {
                let d = crate::vecmath::dist(&args[i], &args[j]);
                let bound = c.sigma1.eval(d) * (vals[i] + vals[j]) + c.c1 * d;
                f2.record((vals[i] - vals[j]).abs() - bound, x, &args[i], || {
                    format!("pair with xi2={:?}", args[j])
                });
            }
        }
        // f5 via the Cauchy form: |f(s xi)/s - f(t xi)/t| <= sum of tail terms.
        for d in &spec.directions {
            let mut scaled: Vec<(f64, f64)> = Vec::new();
            for &t in &spec.t_values {
                let xi = scale(d, t);
                scaled.push((t, f.eval(x, &xi)?));
            }
            for i in 0..scaled.len() {
                for j in (i + 1)..scaled.len() {
                    let (s, fs) = scaled[i];
                    let (t, ft) = scaled[j];
                    let lhs = (fs / s - ft / t).abs();
                    let rhs = c.c5 / s * (1.0 + fs.powf(1.0 - c.alpha))
                        + c.c5 / t * (1.0 + ft.powf(1.0 - c.alpha));
                    f5.record(lhs - rhs, x, d, || format!("s={s}, t={t}"));
                }
            }
        }
    }

    Ok(AdmissibilityReport {
        checks: vec![
            f2.finish(spec.tol),
            f3.finish(spec.tol),
            f4.finish(spec.tol),
            f5.finish(spec.tol),
        ],
        notes: Vec::new(),
    })
}

/// Sampled verdicts for (g2)-(g6). The g5 check combines the Cauchy form in
/// terms of the sampled modulus with a direct uniformity probe of the small-t
/// spread; uniformity is certified on the sample set only.
pub fn check_surface_admissibility(
    g: &SurfaceIntegrand,
    spec: &SampleSpec,
) -> Result<AdmissibilityReport> {
    if spec.x_points.is_empty()
        || spec.directions.is_empty()
        || spec.magnitudes.is_empty()
        || spec.normals.is_empty()
    {
        return Err(Error::Precondition("empty sample spec".into()));
    }
    let c = &g.constants;
    let mut g2 = CheckAccum::new(Property::G2);
    let mut g3 = CheckAccum::new(Property::G3);
    let mut g4 = CheckAccum::new(Property::G4);
    let mut g5 = CheckAccum::new(Property::G5);
    let mut g6 = CheckAccum::new(Property::G6);

    let mut t_grid = spec.t_values.clone();
    t_grid.sort_by(|a, b| a.partial_cmp(b).expect("finite t"));
    let t_min = t_grid[0];

    // Sampled estimate of the directional derivative at zero.
    let g0_hat = |x: &[f64], zd: &[f64], nu: &[f64]| -> Result<f64> {
        Ok(g.eval(x, &scale(zd, t_min), nu)? / t_min)
    };

    // Sampled modulus of uniform convergence at scale tau (running sup over
    // the fixed tau grid keeps it nondecreasing).
    let mut lambda_grid: Vec<f64> = Vec::new();
    {
        let mut running = 0.0_f64;
        for &tau in &t_grid {
            for x in &spec.x_points {
                for zd in &spec.directions {
                    for nu in &spec.normals {
                        let dev = (g0_hat(x, zd, nu)? - g.eval(x, &scale(zd, tau), nu)? / tau).abs();
                        running = running.max(dev);
                    }
                }
            }
            lambda_grid.push(running);
        }
    }
    let lambda_at = |t: f64| -> f64 {
        let mut v = 0.0;
        for (i, &tau) in t_grid.iter().enumerate() {
            if tau <= t {
                v = lambda_grid[i];
            }
        }
        v
    };

    for x in &spec.x_points {
        for nu in &spec.normals {
            let mut args: Vec<Vec<f64>> = Vec::new();
            let mut vals: Vec<f64> = Vec::new();
            for d in &spec.directions {
                for &mag in &spec.magnitudes {
                    let z = scale(d, mag);
                    let v = g.eval(x, &z, nu)?;
                    g3.record(c.c2 * norm(&z) - v, x, &z, || "c2|zeta| > g".into());
                    g4.record(v - c.c3 * norm(&z), x, &z, || "g > c3|zeta|".into());
                    let neg_nu = scale(nu, -1.0);
                    let neg_z = scale(&z, -1.0);
                    let sym = g.eval(x, &neg_z, &neg_nu)?;
                    g6.record((v - sym).abs(), x, &z, || format!("nu={nu:?}"));
                    args.push(z);
                    vals.push(v);
                }
            }
            for i in 0..args.len() {
                for j in (i + 1)..args.len() {
                    let d = crate::vecmath::dist(&args[i], &args[j]);
                    let bound = c.sigma2.eval(d) * (vals[i] + vals[j]);
                    g2.record((vals[i] - vals[j]).abs() - bound, x, &args[i], || {
                        format!("pair with zeta2={:?}", args[j])
                    });
                }
            }
            // g5 Cauchy form on unit directions.
            for zd in &spec.directions {
                let mut scaled: Vec<(f64, f64)> = Vec::new();
                for &t in &t_grid {
                    scaled.push((t, g.eval(x, &scale(zd, t), nu)? / t));
                }
                for i in 0..scaled.len() {
                    for j in (i + 1)..scaled.len() {
                        let (s, gs) = scaled[i];
                        let (t, gt) = scaled[j];
                        let lhs = (gs - gt).abs();
                        let rhs = (lambda_at(s) * gs + lambda_at(t) * gt) / c.c2;
                        g5.record(lhs - rhs, x, zd, || format!("cauchy s={s}, t={t}"));
                    }
                }
                // Uniform small-t spread over the three smallest scales.
                let k = scaled.len().min(3);
                let head = &scaled[..k];
                let lo = head.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let hi = head.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                let spread_tol = 10.0 * t_grid[k - 1] * c.c3;
                g5.record(hi - lo - spread_tol, x, zd, || {
                    format!("small-t spread {:.3e}", hi - lo)
                });
            }
        }
    }

    Ok(AdmissibilityReport {
        checks: vec![
            g2.finish(spec.tol),
            g3.finish(spec.tol),
            g4.finish(spec.tol),
            g5.finish(spec.tol),
            g6.finish(spec.tol),
        ],
        notes: vec![
            "g5 limit uniformity is certified on the sample set only".into(),
        ],
    })
}

/// Convergence trace of a scaling limit: value spread over the last three
/// schedule entries, maximised over probe directions and x samples.
#[derive(Clone, Debug)]
pub struct ScaleDiagnostic {
    /// max - min of the rescaled values over the last three schedule entries.
    pub spread: f64,
    /// (t, rescaled value) along the schedule for the worst direction.
    pub trace: Vec<(f64, f64)>,
}

fn tail_spread(values: &[f64]) -> f64 {
    let k = values.len().min(3);
    let tail = &values[values.len() - k..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Materialise the recession integrand `f_inf(x, xi) ~ f(x, t_max xi)/t_max`.
///
/// The finite-t bias is reported through the attached diagnostic; a spread
/// above `tol` is a non-convergence error.
pub fn recession(
    f: &VolumeIntegrand,
    t_schedule: &[f64],
    spec: &SampleSpec,
    tol: f64,
) -> Result<(VolumeIntegrand, ScaleDiagnostic)> {
    if t_schedule.len() < 3 || t_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "recession schedule must be increasing with >= 3 entries".into(),
        ));
    }
    let t_max = *t_schedule.last().expect("nonempty");
    if t_max < 1e3 {
        return Err(Error::Precondition(format!(
            "recession schedule must reach t >= 1e3, got {t_max}"
        )));
    }
    let mut worst = ScaleDiagnostic {
        spread: -1.0,
        trace: Vec::new(),
    };
    for x in &spec.x_points {
        for d in &spec.directions {
            let nd = norm(d);
            if nd == 0.0 {
                continue;
            }
            let unit = scale(d, 1.0 / nd);
            let mut vals = Vec::with_capacity(t_schedule.len());
            for &t in t_schedule {
                vals.push(f.eval(x, &scale(&unit, t))? / t);
            }
            let s = tail_spread(&vals);
            if s > worst.spread {
                worst = ScaleDiagnostic {
                    spread: s,
                    trace: t_schedule.iter().copied().zip(vals).collect(),
                };
            }
        }
    }
    if worst.spread > tol {
        return Err(Error::NonConvergence {
            spread: worst.spread,
            tol,
        });
    }
    let inner = f.eval_fn.clone();
    let rec = VolumeIntegrand::new(
        f.dims,
        f.constants.clone(),
        true,
        f.x_independent,
        Arc::new(move |x: &[f64], xi: &[f64]| inner(x, &scale(xi, t_max)) / t_max),
    );
    Ok((rec, worst))
}

/// Materialise the small-jump density `g0(x, zeta, nu) ~ g(x, t_min zeta, nu)/t_min`,
/// positively 1-homogeneous in `zeta` by construction.
pub fn derivative_at_zero(
    g: &SurfaceIntegrand,
    t_schedule: &[f64],
    spec: &SampleSpec,
    tol: f64,
) -> Result<(SurfaceIntegrand, ScaleDiagnostic)> {
    if t_schedule.len() < 3 || t_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition(
            "derivative schedule must be decreasing with >= 3 entries".into(),
        ));
    }
    let t_min = *t_schedule.last().expect("nonempty");
    if t_min > 1e-3 {
        return Err(Error::Precondition(format!(
            "derivative schedule must reach t <= 1e-3, got {t_min}"
        )));
    }
    let mut worst = ScaleDiagnostic {
        spread: -1.0,
        trace: Vec::new(),
    };
    for x in &spec.x_points {
        for nu in &spec.normals {
            for d in &spec.directions {
                let nd = norm(d);
                if nd == 0.0 {
                    continue;
                }
                let unit = scale(d, 1.0 / nd);
                let mut vals = Vec::with_capacity(t_schedule.len());
                for &t in t_schedule {
                    vals.push(g.eval(x, &scale(&unit, t), nu)? / t);
                }
                let s = tail_spread(&vals);
                if s > worst.spread {
                    worst = ScaleDiagnostic {
                        spread: s,
                        trace: t_schedule.iter().copied().zip(vals).collect(),
                    };
                }
            }
        }
    }
    if worst.spread > tol {
        return Err(Error::NonConvergence {
            spread: worst.spread,
            tol,
        });
    }
    let inner = g.eval_fn.clone();
    let g0 = SurfaceIntegrand::new(
        g.dims,
        g.constants.clone(),
        true,
        g.x_independent,
        Arc::new(move |x: &[f64], zeta: &[f64], nu: &[f64]| {
            let nz = norm(zeta);
            if nz == 0.0 {
                return 0.0;
            }
            let unit = scale(zeta, 1.0 / nz);
            nz * inner(x, &scale(&unit, t_min), nu) / t_min
        }),
    );
    Ok((g0, worst))
}

/// Sampled supremum of `|g0 - g(tau zeta, .)/tau|` over x, unit zeta, nu and
/// tau in the grid restricted to (0, t]. Running max over a fixed tau grid,
/// hence nondecreasing in t.
pub fn modulus_lambda(
    g: &SurfaceIntegrand,
    g0: &SurfaceIntegrand,
    t: f64,
    spec: &SampleSpec,
) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Precondition("modulus scale t must be positive".into()));
    }
    let mut sup = 0.0_f64;
    for &tau in &spec.t_values {
        if tau <= 0.0 || tau > t {
            continue;
        }
        for x in &spec.x_points {
            for nu in &spec.normals {
                for d in &spec.directions {
                    let nd = norm(d);
                    if nd == 0.0 {
                        continue;
                    }
                    let unit = scale(d, 1.0 / nd);
                    let base = g0.eval(x, &unit, nu)?;
                    let dev = (base - g.eval(x, &scale(&unit, tau), nu)? / tau).abs();
                    sup = sup.max(dev);
                }
            }
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn iso_volume(c: f64) -> VolumeIntegrand {
        VolumeIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(c, c),
            true,
            true,
            Arc::new(move |_x, xi| c * norm(xi)),
        )
    }

    fn iso_surface(c: f64) -> SurfaceIntegrand {
        SurfaceIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(c, c),
            true,
            true,
            Arc::new(move |_x, z, _nu| c * norm(z)),
        )
    }

    #[test]
    fn monotone_table_interpolates() {
        let t = MonotoneTable::ramp(0.5, 1.0);
        assert_eq!(t.eval(0.0), 0.0);
        assert_abs_diff_eq!(t.eval(0.25), 0.5);
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(7.0), 1.0);
    }

    #[test]
    fn monotone_table_rejects_decreasing() {
        assert!(MonotoneTable::new(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]).is_err());
        assert!(MonotoneTable::new(vec![(0.0, 0.5)]).is_err());
    }

    #[test]
    fn constants_validate() {
        assert!(IntegrandConstants::new(
            0.0,
            2.0,
            1.0,
            0.0,
            0.0,
            0.5,
            MonotoneTable::ramp(1.0, 1.0),
            MonotoneTable::ramp(1.0, 1.0)
        )
        .is_err());
    }

    #[test]
    fn norm_volume_passes_all_checks() {
        let f = iso_volume(1.0);
        let rep = check_volume_admissibility(&f, &SampleSpec::volume_default(1, 1)).unwrap();
        assert!(rep.all_passed(), "{rep}");
    }

    #[test]
    fn smoothed_norm_passes_f5() {
        // f = sqrt(1 + |xi|^2) - 1 with c2 = 1/2 valid on |xi| >= 2 samples.
        let mut c = IntegrandConstants::norm_like(0.5, 1.0);
        c.c5 = 1.0;
        let f = VolumeIntegrand::new(
            (1, 1),
            c,
            false,
            true,
            Arc::new(|_x, xi| (1.0 + norm(xi).powi(2)).sqrt() - 1.0),
        );
        let mut spec = SampleSpec::volume_default(1, 1);
        spec.magnitudes = vec![2.0, 4.0, 8.0, 32.0];
        let rep = check_volume_admissibility(&f, &spec).unwrap();
        assert!(rep.all_passed(), "{rep}");
    }

    #[test]
    fn quadratic_fails_f4_with_witness() {
        let f = VolumeIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(1.0, 10.0),
            false,
            true,
            Arc::new(|_x, xi| norm(xi).powi(2)),
        );
        let mut spec = SampleSpec::volume_default(1, 1);
        spec.magnitudes = vec![1.0, 10.0, 100.0];
        let rep = check_volume_admissibility(&f, &spec).unwrap();
        let f4 = rep.check(Property::F4).unwrap();
        assert!(!f4.passed);
        let w = f4.witness.as_ref().expect("witness recorded");
        assert_abs_diff_eq!(norm(&w.argument), 100.0);
    }

    #[test]
    fn norm_surface_passes_all_checks() {
        let g = iso_surface(1.0);
        let rep = check_surface_admissibility(&g, &SampleSpec::surface_default(1, 1)).unwrap();
        assert!(rep.all_passed(), "{rep}");
    }

    #[test]
    fn exp_saturating_surface_passes_and_has_norm_derivative() {
        let g = SurfaceIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(1.0, 2.0),
            false,
            true,
            Arc::new(|_x, z, _nu| {
                let n = norm(z);
                n * (2.0 - (-n).exp())
            }),
        );
        let rep = check_surface_admissibility(&g, &SampleSpec::surface_default(1, 1)).unwrap();
        assert!(rep.all_passed(), "{rep}");
        let (g0, diag) = derivative_at_zero(
            &g,
            &[1e-1, 1e-2, 1e-3, 1e-4],
            &SampleSpec::surface_default(1, 1),
            1e-1,
        )
        .unwrap();
        assert!(diag.spread < 1e-1);
        let v = g0.eval(&[0.0], &[2.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 2.0 * 2e-4);
    }

    #[test]
    fn saturating_surface_fails_g3() {
        let g = SurfaceIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(0.5, 1.0),
            false,
            true,
            Arc::new(|_x, z, _nu| norm(z).min(1.0)),
        );
        let mut spec = SampleSpec::surface_default(1, 1);
        spec.magnitudes = vec![1.0, 4.0, 10.0];
        let rep = check_surface_admissibility(&g, &spec).unwrap();
        let g3 = rep.check(Property::G3).unwrap();
        assert!(!g3.passed);
        assert_abs_diff_eq!(norm(&g3.witness.as_ref().unwrap().argument), 10.0);
    }

    #[test]
    fn non_finite_eval_is_hard_error() {
        let f = VolumeIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(1.0, 1.0),
            true,
            true,
            Arc::new(|_x, xi| if norm(xi) > 3.0 { f64::NAN } else { norm(xi) }),
        );
        let err = f.eval(&[0.0], &[4.0]).unwrap_err();
        assert!(matches!(err, Error::Eval { .. }));
    }

    #[test]
    fn recession_of_one_homogeneous_is_identity() {
        let f = iso_volume(1.0);
        let (rec, diag) =
            recession(&f, &[10.0, 100.0, 1000.0], &SampleSpec::volume_default(1, 1), 1e-12)
                .unwrap();
        assert!(rec.one_homogeneous);
        assert_eq!(diag.spread, 0.0);
        for xi in [[0.5], [3.0], [-2.0]] {
            assert_abs_diff_eq!(
                rec.eval(&[0.7], &xi).unwrap(),
                f.eval(&[0.7], &xi).unwrap(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn recession_of_smoothed_norm() {
        let f = VolumeIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(0.5, 1.0),
            false,
            true,
            Arc::new(|_x, xi| (1.0 + norm(xi).powi(2)).sqrt() - 1.0),
        );
        let sched = [10.0, 100.0, 1000.0, 10000.0];
        let (rec, _) = recession(&f, &sched, &SampleSpec::volume_default(1, 1), 1e-2).unwrap();
        assert_abs_diff_eq!(rec.eval(&[0.0], &[1.0]).unwrap(), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn recession_spread_decay_matches_declared_alpha() {
        // f = |xi| + |xi|^(1/2): the finite-t deviation decays like t^(-1/2).
        let f = VolumeIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(1.0, 2.0),
            false,
            true,
            Arc::new(|_x, xi| norm(xi) + norm(xi).sqrt()),
        );
        let ts = [1e2, 1e3, 1e4, 1e5];
        let mut devs = Vec::new();
        for &t in &ts {
            let v = f.eval(&[0.0], &[t]).unwrap() / t;
            devs.push((t.ln(), (v - 1.0).ln()));
        }
        // Least-squares slope of log-deviation vs log-t.
        let n = devs.len() as f64;
        let sx: f64 = devs.iter().map(|p| p.0).sum();
        let sy: f64 = devs.iter().map(|p| p.1).sum();
        let sxx: f64 = devs.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = devs.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert_abs_diff_eq!(slope, -0.5, epsilon = 1e-6);
        let (rec, _) = recession(
            &f,
            &[1e2, 1e3, 1e4, 1e5, 1e6],
            &SampleSpec::volume_default(1, 1),
            1e-1,
        )
        .unwrap();
        assert_abs_diff_eq!(rec.eval(&[0.0], &[2.0]).unwrap(), 2.0, epsilon = 5e-3);
    }

    #[test]
    fn recession_nonconvergence_reported() {
        // log-growth never settles at the requested tolerance.
        let f = VolumeIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(1.0, 2.0),
            false,
            true,
            Arc::new(|_x, xi| norm(xi) + norm(xi).sqrt()),
        );
        let err = recession(
            &f,
            &[1.0, 2.0, 1000.0],
            &SampleSpec::volume_default(1, 1),
            1e-12,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn derivative_at_zero_is_exactly_homogeneous() {
        let g = SurfaceIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(1.0, 2.0),
            false,
            true,
            Arc::new(|_x, z, _nu| {
                let n = norm(z);
                n * (2.0 - (-n).exp())
            }),
        );
        let (g0, _) = derivative_at_zero(
            &g,
            &[1e-1, 1e-2, 1e-3, 1e-4],
            &SampleSpec::surface_default(1, 1),
            1.0,
        )
        .unwrap();
        let v1 = g0.eval(&[0.0], &[1.0], &[1.0]).unwrap();
        for s in [0.5, 2.0, 7.5] {
            assert_abs_diff_eq!(g0.eval(&[0.0], &[s], &[1.0]).unwrap(), s * v1, epsilon = 1e-14);
        }
    }

    #[test]
    fn derivative_of_truncated_quadratic() {
        // g = |z| + |z|^2 capped into its admissible range: g0 = |z|.
        let g = SurfaceIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(1.0, 2.0),
            false,
            true,
            Arc::new(|_x, z, _nu| {
                let n = norm(z);
                (n + n * n).min(2.0 * n)
            }),
        );
        let (g0, _) = derivative_at_zero(
            &g,
            &[1e-1, 1e-2, 1e-3, 1e-4],
            &SampleSpec::surface_default(1, 1),
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(g0.eval(&[0.0], &[1.0], &[1.0]).unwrap(), 1.0, epsilon = 2e-4);
    }

    #[test]
    fn lambda_zero_for_homogeneous_and_closed_form_for_exp() {
        let g = iso_surface(1.0);
        let (g0, _) = derivative_at_zero(
            &g,
            &[1e-1, 1e-2, 1e-3, 1e-4],
            &SampleSpec::surface_default(1, 1),
            1.0,
        )
        .unwrap();
        let spec = SampleSpec::surface_default(1, 1);
        for t in [0.1, 1.0, 10.0] {
            assert!(modulus_lambda(&g, &g0, t, &spec).unwrap() < 1e-12);
        }

        let ge = SurfaceIntegrand::new(
            (1, 1),
            IntegrandConstants::norm_like(1.0, 2.0),
            false,
            true,
            Arc::new(|_x, z, _nu| {
                let n = norm(z);
                n * (2.0 - (-n).exp())
            }),
        );
        let (ge0, _) = derivative_at_zero(
            &ge,
            &[1e-1, 1e-2, 1e-3, 1e-4],
            &SampleSpec::surface_default(1, 1),
            1.0,
        )
        .unwrap();
        // lambda(t) = 1 - exp(-t) up to the t_min bias; refine the tau grid near 1.
        let mut spec = SampleSpec::surface_default(1, 1);
        spec.t_values = (0..=40).map(|i| 1e-4 + (1.0 - 1e-4) * i as f64 / 40.0).collect();
        let l1 = modulus_lambda(&ge, &ge0, 1.0, &spec).unwrap();
        assert_abs_diff_eq!(l1, 1.0 - (-1.0_f64).exp(), epsilon = 5e-3);
        // Nondecreasing in t by construction.
        let l05 = modulus_lambda(&ge, &ge0, 0.5, &spec).unwrap();
        assert!(l05 <= l1 + 1e-15);
        // The small-t estimate vanishes as the grid refines.
        let l_small = modulus_lambda(&ge, &ge0, 2e-4, &spec).unwrap();
        assert!(l_small < 2e-4);
    }

    #[test]
    fn bv_floor_holds_for_admissible_samples() {
        let f = iso_volume(1.0);
        let g = iso_surface(1.0);
        let spec_v = SampleSpec::volume_default(1, 1);
        for x in &spec_v.x_points {
            for d in &spec_v.directions {
                for &m in &spec_v.magnitudes {
                    let xi = scale(d, m);
                    assert!(f.eval(x, &xi).unwrap() >= f.constants.c2 * norm(&xi) - 1e-12);
                }
            }
        }
        let spec_s = SampleSpec::surface_default(1, 1);
        for x in &spec_s.x_points {
            for d in &spec_s.directions {
                for &m in &spec_s.magnitudes {
                    let z = scale(d, m);
                    assert!(
                        g.eval(x, &z, &[1.0]).unwrap() >= g.constants.c2 * norm(&z) - 1e-12
                    );
                }
            }
        }
    }
}
