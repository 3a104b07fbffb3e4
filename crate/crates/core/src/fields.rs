//! Transport fields, right-hand sides and boundary data, in linear and
//! functionally causal form, together with the audits that check their
//! requirements on samples.
//!
//! A functional coefficient `c[v](x)` is used through [`FunctionalField::freeze`],
//! which fixes the argument `v` and returns a plain point field. Solvers
//! freeze once per Picard iteration and then evaluate along characteristics.

use std::sync::Arc;

use crate::characteristics::boundary_parameter_of;
use crate::error::{Error, Result};
use crate::geometry::{grad_t0_of, t0_of, BoundaryCurve, Domain, Point2, TimeFunction, Vec2};
use crate::grid::{DomainGrid, ScalarGridField};
use crate::io::csv_bytes;

/// A unit vector field at a fixed functional argument.
pub trait PointField: Send + Sync {
    fn direction(&self, p: Point2) -> Vec2;
}

/// A scalar field at a fixed functional argument.
pub trait PointScalar: Send + Sync {
    fn value(&self, p: Point2) -> f64;
}

/// A linear (argument-free) transport field with its declared causality bound.
pub trait TransportField: PointField {
    fn beta(&self) -> f64;
}

pub trait FunctionalField: Send + Sync {
    fn freeze<'a>(&'a self, v: &'a ScalarGridField) -> Box<dyn PointField + 'a>;
    /// Declared uniform lower bound on `<c[v], N>`.
    fn beta(&self) -> f64;
    /// Declared `L1` in `||c[v] - c[w]||_inf <= L1 ||v - w||_{L1}`.
    fn lipschitz(&self) -> f64;
    /// Declared `L1` bound on `D_x c[v]`; metadata only.
    fn dx_bound(&self) -> f64 {
        0.0
    }
}

pub trait FunctionalRhs: Send + Sync {
    fn freeze<'a>(&'a self, v: &'a ScalarGridField) -> Box<dyn PointScalar + 'a>;
    /// `M2 >= ||f[v]||_inf`.
    fn sup_bound(&self) -> f64;
    /// `M3 >= ||grad_x f[v]||_inf`.
    fn grad_bound(&self) -> f64;
    /// `L2` in `||f[v] - f[w]||_inf <= L2 ||v - w||_{L1}`.
    fn lipschitz(&self) -> f64;
}

/// Adapter turning a linear coefficient into a functional one that ignores its argument.
#[derive(Clone, Debug)]
pub struct Independent<F>(pub F);

struct Borrowed<'a, F: ?Sized>(&'a F);

impl<F: PointField + ?Sized> PointField for Borrowed<'_, F> {
    #[inline]
    fn direction(&self, p: Point2) -> Vec2 {
        self.0.direction(p)
    }
}

impl<F: PointScalar + ?Sized> PointScalar for Borrowed<'_, F> {
    #[inline]
    fn value(&self, p: Point2) -> f64 {
        self.0.value(p)
    }
}

impl<F: TransportField> FunctionalField for Independent<F> {
    fn freeze<'a>(&'a self, _v: &'a ScalarGridField) -> Box<dyn PointField + 'a> {
        Box::new(Borrowed(&self.0))
    }
    fn beta(&self) -> f64 {
        self.0.beta()
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
}

impl<T: TransportField + ?Sized> PointField for Arc<T> {
    fn direction(&self, p: Point2) -> Vec2 {
        self.as_ref().direction(p)
    }
}

impl<T: TransportField + ?Sized> TransportField for Arc<T> {
    fn beta(&self) -> f64 {
        self.as_ref().beta()
    }
}

/// The level-line normal `N = grad T / |grad T|` rotated by a fixed angle.
///
/// Angle zero gives pure normal transport (the radial field on the disk);
/// its causality bound is `cos(angle)`.
#[derive(Clone)]
pub struct RotatedNormalField {
    pub time: Arc<dyn TimeFunction>,
    pub angle: f64,
}

impl RotatedNormalField {
    pub fn new(time: Arc<dyn TimeFunction>, angle: f64) -> Self {
        RotatedNormalField { time, angle }
    }
}

impl PointField for RotatedNormalField {
    #[inline]
    fn direction(&self, p: Point2) -> Vec2 {
        let n = normal_or_default(self.time.as_ref(), p);
        if self.angle == 0.0 {
            n
        } else {
            n.rotated(self.angle)
        }
    }
}

impl TransportField for RotatedNormalField {
    fn beta(&self) -> f64 {
        self.angle.cos()
    }
}

/// `N` at `p`, or the x unit vector where the gradient vanishes (on the stop set).
#[inline]
pub fn normal_or_default(time: &dyn TimeFunction, p: Point2) -> Vec2 {
    time.gradient(p).normalized().unwrap_or(Point2::new(1.0, 0.0))
}

/// A transport field given by a closure; the direction is normalized on evaluation.
pub struct FnField {
    f: Box<dyn Fn(Point2) -> Vec2 + Send + Sync>,
    beta: f64,
}

impl FnField {
    pub fn new(beta: f64, f: impl Fn(Point2) -> Vec2 + Send + Sync + 'static) -> Self {
        FnField { f: Box::new(f), beta }
    }
}

impl PointField for FnField {
    fn direction(&self, p: Point2) -> Vec2 {
        let d = (self.f)(p);
        d.normalized().unwrap_or(d)
    }
}

impl TransportField for FnField {
    fn beta(&self) -> f64 {
        self.beta
    }
}

/// Linear right-hand side with declared sup and gradient bounds.
pub struct FnRhs {
    f: Box<dyn Fn(Point2) -> f64 + Send + Sync>,
    pub m2: f64,
    pub m3: f64,
}

impl FnRhs {
    pub fn new(m2: f64, m3: f64, f: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        FnRhs { f: Box::new(f), m2, m3 }
    }

    pub fn constant(k: f64) -> Self {
        FnRhs::new(k.abs(), 0.0, move |_| k)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }
}

impl PointScalar for FnRhs {
    #[inline]
    fn value(&self, p: Point2) -> f64 {
        (self.f)(p)
    }
}

impl FunctionalRhs for FnRhs {
    fn freeze<'a>(&'a self, _v: &'a ScalarGridField) -> Box<dyn PointScalar + 'a> {
        Box::new(Borrowed(self))
    }
    fn sup_bound(&self) -> f64 {
        self.m2
    }
    fn grad_bound(&self) -> f64 {
        self.m3
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
}

/// Past-masked local average
/// `A(v, x) = (1/A_ref) sum_z w(|z - x|) s(T0(x) - T0(z)) v(z) |cell|`
/// over in-domain cells `z` with `T0(z) < T0(x)`.
///
/// `w` is the bump `(1 - (d/r)^2)^2` and `s` a smoothstep of width `lag` that
/// vanishes for non-positive time differences, so future cells never
/// contribute. `A_ref = pi r^2 / 3` is the integral of `w`, which bounds
/// `|A(v) - A(w)| <= ||v - w||_{L1} / A_ref`.
#[derive(Clone, Debug)]
pub struct PastAverage {
    pub grid: Arc<DomainGrid>,
    pub radius: f64,
    pub lag: f64,
}

impl PastAverage {
    pub fn new(grid: Arc<DomainGrid>, radius: f64, lag: f64) -> Self {
        PastAverage { grid, radius, lag }
    }

    pub fn reference_area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius / 3.0
    }

    pub fn evaluate(&self, v: &ScalarGridField, x: Point2, t0x: f64) -> f64 {
        let dg = self.grid.as_ref();
        let g = dg.grid;
        let (dx, dy) = (g.dx(), g.dy());
        let r = self.radius;
        let r2 = r * r;
        let lo_i = (((x.x - r - g.bbox.min.x) / dx).floor().max(0.0)) as usize;
        let hi_i = (((x.x + r - g.bbox.min.x) / dx).ceil().max(0.0) as usize).min(g.nx);
        let lo_j = (((x.y - r - g.bbox.min.y) / dy).floor().max(0.0)) as usize;
        let hi_j = (((x.y + r - g.bbox.min.y) / dy).ceil().max(0.0) as usize).min(g.ny);
        let mut acc = 0.0;
        for j in lo_j..hi_j {
            let cy = g.bbox.min.y + (j as f64 + 0.5) * dy;
            let ddy = cy - x.y;
            for i in lo_i..hi_i {
                let k = j * g.nx + i;
                let age = t0x - dg.t0[k];
                if age <= 0.0 || !dg.mask[k].in_domain() {
                    continue;
                }
                let cx = g.bbox.min.x + (i as f64 + 0.5) * dx;
                let ddx = cx - x.x;
                let d2 = ddx * ddx + ddy * ddy;
                if d2 >= r2 {
                    continue;
                }
                let b = 1.0 - d2 / r2;
                acc += b * b * smoothstep(age / self.lag) * v.values[k];
            }
        }
        acc * g.cell_area() / self.reference_area()
    }
}

#[inline]
fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * (3.0 - 2.0 * u)
    }
}

/// Built-in causal transport field
/// `c[v](x) = normalize(b(x) + eps * tanh(A(v, x)) * b(x)^perp)`
/// with `b` a linear base field and `A` a [`PastAverage`].
///
/// The perturbation rotates `b` by `atan(eps * tanh A)`, so the declared
/// causality bound is `cos(acos(beta_b) + atan(eps))` and the declared
/// Lipschitz constant is `eps / A_ref`.
pub struct CausalAverageField {
    pub base: Arc<dyn TransportField>,
    pub time: Arc<dyn TimeFunction>,
    pub average: PastAverage,
    pub eps: f64,
}

impl CausalAverageField {
    pub fn new(base: Arc<dyn TransportField>, time: Arc<dyn TimeFunction>, average: PastAverage, eps: f64) -> Self {
        CausalAverageField {
            base,
            time,
            average,
            eps,
        }
    }

    pub fn eval(&self, v: &ScalarGridField, x: Point2) -> Vec2 {
        let b = self.base.direction(x);
        if self.eps == 0.0 {
            return b;
        }
        let t0x = t0_of(self.time.as_ref(), x);
        let a = self.average.evaluate(v, x, t0x);
        let sigma = self.eps * a.tanh();
        let d = b + b.perp() * sigma;
        d / d.norm()
    }
}

struct FrozenCausal<'a> {
    field: &'a CausalAverageField,
    v: &'a ScalarGridField,
}

impl PointField for FrozenCausal<'_> {
    #[inline]
    fn direction(&self, p: Point2) -> Vec2 {
        self.field.eval(self.v, p)
    }
}

impl FunctionalField for CausalAverageField {
    fn freeze<'a>(&'a self, v: &'a ScalarGridField) -> Box<dyn PointField + 'a> {
        Box::new(FrozenCausal { field: self, v })
    }

    fn beta(&self) -> f64 {
        let base_angle = self.base.beta().clamp(-1.0, 1.0).acos();
        (base_angle + self.eps.atan()).cos()
    }

    fn lipschitz(&self) -> f64 {
        self.eps / self.average.reference_area()
    }
}

/// Built-in causal right-hand side `f[v](x) = f_b(x) + amp * tanh(A(v, x))`.
pub struct CausalAverageRhs {
    pub base: Arc<FnRhs>,
    pub time: Arc<dyn TimeFunction>,
    pub average: PastAverage,
    pub amp: f64,
    /// Declared bound on the spatial gradient.
    pub m3: f64,
}

struct FrozenCausalRhs<'a> {
    rhs: &'a CausalAverageRhs,
    v: &'a ScalarGridField,
}

impl PointScalar for FrozenCausalRhs<'_> {
    fn value(&self, p: Point2) -> f64 {
        let r = self.rhs;
        let t0x = t0_of(r.time.as_ref(), p);
        r.base.value(p) + r.amp * r.average.evaluate(self.v, p, t0x).tanh()
    }
}

impl FunctionalRhs for CausalAverageRhs {
    fn freeze<'a>(&'a self, v: &'a ScalarGridField) -> Box<dyn PointScalar + 'a> {
        Box::new(FrozenCausalRhs { rhs: self, v })
    }
    fn sup_bound(&self) -> f64 {
        self.base.m2 + self.amp.abs()
    }
    fn grad_bound(&self) -> f64 {
        self.m3
    }
    fn lipschitz(&self) -> f64 {
        self.amp.abs() / self.average.reference_area()
    }
}

/// Deliberately acausal field: rotates `N` by an amount read from `v` at the
/// future point `x + lookahead * N(x)`.
pub struct LookaheadField {
    pub time: Arc<dyn TimeFunction>,
    pub eps: f64,
    pub lookahead: f64,
}

struct FrozenLookahead<'a> {
    field: &'a LookaheadField,
    v: &'a ScalarGridField,
}

impl PointField for FrozenLookahead<'_> {
    fn direction(&self, p: Point2) -> Vec2 {
        let f = self.field;
        let n = normal_or_default(f.time.as_ref(), p);
        let probe = p + n * f.lookahead;
        let d = n + n.perp() * (f.eps * self.v.value_at(probe).tanh());
        d / d.norm()
    }
}

impl FunctionalField for LookaheadField {
    fn freeze<'a>(&'a self, v: &'a ScalarGridField) -> Box<dyn PointField + 'a> {
        Box::new(FrozenLookahead { field: self, v })
    }
    fn beta(&self) -> f64 {
        self.eps.atan().cos()
    }
    fn lipschitz(&self) -> f64 {
        f64::INFINITY
    }
}

/// Scaled coefficients `c0 = c / <c, grad T0>` and `f0 = f / <c, grad T0>`.
#[inline]
pub fn scale_by_time(
    c: &dyn PointField,
    f: Option<&dyn PointScalar>,
    time: &dyn TimeFunction,
    x: Point2,
    eps_stop: f64,
) -> Result<(Vec2, f64)> {
    let g = grad_t0_of(time, x, eps_stop)?;
    let cx = c.direction(x);
    let denom = cx.dot(g);
    if !(denom > 0.0) {
        return Err(Error::CausalityViolation {
            x: x.x,
            y: x.y,
            dot: denom,
        });
    }
    let inv = 1.0 / denom;
    let f0 = f.map(|f| f.value(x) * inv).unwrap_or(0.0);
    Ok((cx * inv, f0))
}

/// Dirichlet data on the boundary, evaluated at boundary points.
pub trait BoundaryData: Send + Sync {
    fn value_at(&self, p: Point2) -> Result<f64>;
    /// `M4 >= ||u0||_inf`.
    fn sup_bound(&self) -> f64;
    /// `M5 >=` total variation over one period.
    fn variation_bound(&self) -> f64;
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Boundary data given through its pullback `s -> u0(gamma(s))`.
///
/// At a declared jump parameter the midpoint of the one-sided values is returned.
#[derive(Clone)]
pub struct CurveData {
    pub curve: Arc<dyn BoundaryCurve>,
    pub pullback: ScalarFn,
    pub jumps: Vec<f64>,
    pub tolerance: f64,
    m4: f64,
    m5: f64,
}

impl CurveData {
    pub fn new(curve: Arc<dyn BoundaryCurve>, pullback: ScalarFn, jumps: Vec<f64>, tolerance: f64) -> Self {
        let (a, b) = curve.period();
        let n = 8192;
        let samples: Vec<f64> = (0..=n).map(|k| pullback(a + (b - a) * k as f64 / n as f64)).collect();
        let m4 = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let m5 = samples.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        CurveData {
            curve,
            pullback,
            jumps,
            tolerance,
            m4,
            m5,
        }
    }

    pub fn value_at_parameter(&self, s: f64) -> f64 {
        let (a, b) = self.curve.period();
        let len = b - a;
        for &sj in &self.jumps {
            let mut d = (s - sj) % len;
            if d > len / 2.0 {
                d -= len;
            } else if d < -len / 2.0 {
                d += len;
            }
            if d.abs() < 1e-9 {
                let eta = 1e-7 * len;
                return 0.5 * ((self.pullback)(sj - eta) + (self.pullback)(sj + eta));
            }
        }
        (self.pullback)(s)
    }
}

impl BoundaryData for CurveData {
    fn value_at(&self, p: Point2) -> Result<f64> {
        let s = boundary_parameter_of(self.curve.as_ref(), p, self.tolerance)?;
        Ok(self.value_at_parameter(s))
    }
    fn sup_bound(&self) -> f64 {
        self.m4
    }
    fn variation_bound(&self) -> f64 {
        self.m5
    }
}

/// Boundary data defined by a function on the plane, restricted to the boundary.
pub struct PointData {
    f: Box<dyn Fn(Point2) -> f64 + Send + Sync>,
    m4: f64,
    m5: f64,
}

impl PointData {
    pub fn new(m4: f64, m5: f64, f: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        PointData { f: Box::new(f), m4, m5 }
    }

    pub fn constant(k: f64) -> Self {
        PointData::new(k.abs(), 0.0, move |_| k)
    }
}

impl BoundaryData for PointData {
    fn value_at(&self, p: Point2) -> Result<f64> {
        Ok((self.f)(p))
    }
    fn sup_bound(&self) -> f64 {
        self.m4
    }
    fn variation_bound(&self) -> f64 {
        self.m5
    }
}

#[derive(Clone, Debug)]
pub struct AuditRow {
    pub point: Point2,
    pub value: f64,
    pub violation: bool,
}

#[derive(Clone, Debug)]
pub struct CausalityAudit {
    pub beta: f64,
    pub min_dot: f64,
    pub max_dot: f64,
    /// Largest `||c| - 1|` seen.
    pub speed_error: f64,
    pub violations: Vec<Point2>,
    pub rows: Vec<AuditRow>,
}

impl CausalityAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.speed_error <= 1e-9
    }

    /// CSV with columns `x,y,value,violation`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        audit_csv(&self.rows)
    }
}

pub(crate) fn audit_csv(rows: &[AuditRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &["x", "y", "value", "violation"],
        rows.iter().map(|r| {
            [
                r.point.x.to_string(),
                r.point.y.to_string(),
                r.value.to_string(),
                (r.violation as u8).to_string(),
            ]
        }),
    )
}

const AUDIT_TAU: f64 = 1e-9;

/// Samples `<c(x), N(x)>` and flags points outside `[beta - tau, 1 + tau]`.
pub fn audit_causality_condition(
    c: &dyn PointField,
    beta: f64,
    domain: &Domain,
    samples: &[Point2],
    eps_stop: f64,
) -> CausalityAudit {
    let mut audit = CausalityAudit {
        beta,
        min_dot: f64::INFINITY,
        max_dot: f64::NEG_INFINITY,
        speed_error: 0.0,
        violations: Vec::new(),
        rows: Vec::with_capacity(samples.len()),
    };
    for &p in samples {
        let Ok(n) = domain.normal_field(p, eps_stop) else {
            continue;
        };
        let cp = c.direction(p);
        let dot = cp.dot(n);
        audit.speed_error = audit.speed_error.max((cp.norm() - 1.0).abs());
        audit.min_dot = audit.min_dot.min(dot);
        audit.max_dot = audit.max_dot.max(dot);
        let violation = !(dot >= beta - AUDIT_TAU && dot <= 1.0 + AUDIT_TAU) || !dot.is_finite();
        if violation {
            audit.violations.push(p);
        }
        audit.rows.push(AuditRow {
            point: p,
            value: dot,
            violation,
        });
    }
    audit
}

/// A functional coefficient of either kind, evaluated as a small vector.
#[derive(Clone, Copy)]
pub enum Coefficient<'a> {
    Field(&'a dyn FunctionalField),
    Rhs(&'a dyn FunctionalRhs),
}

impl Coefficient<'_> {
    fn eval_many(&self, v: &ScalarGridField, points: &[Point2]) -> Vec<[f64; 2]> {
        match self {
            Coefficient::Field(c) => {
                let frozen = c.freeze(v);
                points
                    .iter()
                    .map(|p| {
                        let d = frozen.direction(*p);
                        [d.x, d.y]
                    })
                    .collect()
            }
            Coefficient::Rhs(f) => {
                let frozen = f.freeze(v);
                points.iter().map(|p| [frozen.value(*p), 0.0]).collect()
            }
        }
    }

    fn eval(&self, v: &ScalarGridField, p: Point2) -> [f64; 2] {
        self.eval_many(v, std::slice::from_ref(&p))[0]
    }
}

#[derive(Clone, Debug)]
pub struct FunctionalCausalityAudit {
    pub max_discrepancy: f64,
    pub rows: Vec<AuditRow>,
}

impl FunctionalCausalityAudit {
    /// Honest causal operators reproduce themselves on the past-masked argument.
    pub fn passed(&self) -> bool {
        self.max_discrepancy <= 1e-12
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        audit_csv(&self.rows)
    }
}

/// Compares `F[v](x)` against `F[v * 1_{T0 < T0(x)}](x)` at every probe.
pub fn audit_functional_causality(
    coefficient: Coefficient<'_>,
    v: &ScalarGridField,
    grid: &DomainGrid,
    time: &dyn TimeFunction,
    probes: &[Point2],
) -> FunctionalCausalityAudit {
    let mut rows = Vec::with_capacity(probes.len());
    let mut max_discrepancy: f64 = 0.0;
    for &p in probes {
        let full = coefficient.eval(v, p);
        let masked_v = v.mask_past(&grid.t0, t0_of(time, p));
        let masked = coefficient.eval(&masked_v, p);
        let d = (full[0] - masked[0]).abs().max((full[1] - masked[1]).abs());
        max_discrepancy = max_discrepancy.max(d);
        rows.push(AuditRow {
            point: p,
            value: d,
            violation: d > 1e-12,
        });
    }
    FunctionalCausalityAudit { max_discrepancy, rows }
}

/// Lower bound on the Lipschitz constant of a functional coefficient:
/// the largest `max_x |F[v](x) - F[w](x)| / ||v - w||_{L1}` over the pairs.
pub fn estimate_lipschitz(
    coefficient: Coefficient<'_>,
    pairs: &[(ScalarGridField, ScalarGridField)],
    points: &[Point2],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::DegeneratePair);
    }
    let mut best: f64 = 0.0;
    for (v, w) in pairs {
        let dist = v.l1_distance(w);
        if !(dist > 0.0) {
            return Err(Error::DegeneratePair);
        }
        let a = coefficient.eval_many(v, points);
        let b = coefficient.eval_many(w, points);
        let sup = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x[0] - y[0]).hypot(x[1] - y[1]))
            .fold(0.0f64, f64::max);
        best = best.max(sup / dist);
    }
    Ok(best)
}
