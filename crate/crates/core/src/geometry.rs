//! Domains, boundary parametrizations, time functions and stop sets.
//!
//! A [`TimeFunction`] `T` vanishes on the boundary, equals one on the stop
//! set and increases in between. Everything downstream runs on the
//! transformed clock `T0 = 1 - (1 - T)^(1/q)`, whose level sets are those of
//! `T` and whose gradient blows up at the stop set.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default width of the stop-set collar in `T0` units.
pub const DEFAULT_EPS_STOP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

/// Displacements share the point representation.
pub type Vec2 = Point2;

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    /// Unit vector in the same direction, or `None` for (near) zero input.
    #[inline]
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    /// Counter-clockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Point2::new(-self.y, self.x)
    }

    #[inline]
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    #[inline]
    fn add_assign(&mut self, o: Point2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    #[inline]
    fn mul(self, p: Point2) -> Point2 {
        p * self
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn div(self, k: f64) -> Point2 {
        Point2::new(self.x / k, self.y / k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle `[min.x, max.x] x [min.y, max.y]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Point2,
    pub max: Point2,
}

impl BBox {
    pub fn new(min: Point2, max: Point2) -> Self {
        BBox { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Regular periodic parametrization `s -> gamma(s)` of a closed boundary curve.
pub trait BoundaryCurve: Send + Sync {
    fn point(&self, s: f64) -> Point2;
    fn derivative(&self, s: f64) -> Vec2;
    /// Period interval `[a, b)`.
    fn period(&self) -> (f64, f64);

    /// +1 for counter-clockwise curves, -1 for clockwise ones.
    fn orientation(&self) -> f64 {
        let (a, b) = self.period();
        let n = 512;
        let h = (b - a) / n as f64;
        let area2: f64 = (0..n)
            .map(|k| {
                let p = self.point(a + k as f64 * h);
                let q = self.point(a + (k + 1) as f64 * h);
                p.cross(q)
            })
            .sum();
        area2.signum()
    }

    /// Wrap `s` into the period interval.
    fn wrap(&self, s: f64) -> f64 {
        let (a, b) = self.period();
        let len = b - a;
        let mut r = (s - a) % len;
        if r < 0.0 {
            r += len;
        }
        a + r
    }
}

#[derive(Clone, Debug)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

impl Circle {
    pub fn unit() -> Self {
        Circle {
            center: Point2::ZERO,
            radius: 1.0,
        }
    }
}

impl BoundaryCurve for Circle {
    fn point(&self, s: f64) -> Point2 {
        let (sn, cs) = s.sin_cos();
        self.center + Point2::new(cs, sn) * self.radius
    }

    fn derivative(&self, s: f64) -> Vec2 {
        let (sn, cs) = s.sin_cos();
        Point2::new(-sn, cs) * self.radius
    }

    fn period(&self) -> (f64, f64) {
        (0.0, 2.0 * PI)
    }

    fn orientation(&self) -> f64 {
        1.0
    }
}

/// Axis-aligned ellipse `x^2/a^2 + y^2/b^2 = 1` centred at the origin.
#[derive(Clone, Debug)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
}

impl BoundaryCurve for Ellipse {
    fn point(&self, s: f64) -> Point2 {
        let (sn, cs) = s.sin_cos();
        Point2::new(self.a * cs, self.b * sn)
    }

    fn derivative(&self, s: f64) -> Vec2 {
        let (sn, cs) = s.sin_cos();
        Point2::new(-self.a * sn, self.b * cs)
    }

    fn period(&self) -> (f64, f64) {
        (0.0, 2.0 * PI)
    }

    fn orientation(&self) -> f64 {
        1.0
    }
}

/// The interior outflow set where `T = 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum StopSet {
    IsolatedPoint(Point2),
    /// A single C1 arc given as a polyline with unit normals at the vertices.
    SingleArc {
        points: Vec<Point2>,
        normals: Vec<Vec2>,
    },
    /// Pixel centres of a raster ridge (the discrete argmax of a sampled time function).
    PixelRidge(Vec<Point2>),
}

impl StopSet {
    /// One-dimensional Hausdorff measure of the set.
    pub fn length(&self) -> f64 {
        match self {
            StopSet::IsolatedPoint(_) => 0.0,
            StopSet::SingleArc { points, .. } => points.windows(2).map(|w| w[0].distance(w[1])).sum(),
            StopSet::PixelRidge(pixels) => {
                let mut diam: f64 = 0.0;
                for (i, p) in pixels.iter().enumerate() {
                    for q in &pixels[i + 1..] {
                        diam = diam.max(p.distance(*q));
                    }
                }
                diam
            }
        }
    }

    pub fn points(&self) -> &[Point2] {
        match self {
            StopSet::IsolatedPoint(p) => std::slice::from_ref(p),
            StopSet::SingleArc { points, .. } => points,
            StopSet::PixelRidge(p) => p,
        }
    }

    /// Checks containment in the open domain and simplicity of arcs.
    pub fn validate(&self, inside: &dyn Fn(Point2) -> bool) -> Result<()> {
        for p in self.points() {
            if !inside(*p) {
                return Err(Error::TimeFunctionInvalid(format!(
                    "stop-set point {p} is not inside the domain"
                )));
            }
        }
        if let StopSet::SingleArc { points, normals } = self {
            if points.len() < 2 {
                return Err(Error::TimeFunctionInvalid(
                    "an arc stop set needs at least two vertices".into(),
                ));
            }
            if normals.len() != points.len() {
                return Err(Error::TimeFunctionInvalid(
                    "arc normals must match the vertex count".into(),
                ));
            }
            if normals.iter().any(|n| (n.norm() - 1.0).abs() > 1e-9) {
                return Err(Error::TimeFunctionInvalid("arc normals must be unit".into()));
            }
            let segs: Vec<(Point2, Point2)> = points.windows(2).map(|w| (w[0], w[1])).collect();
            for i in 0..segs.len() {
                for j in i + 2..segs.len() {
                    if segments_intersect(segs[i], segs[j]) {
                        return Err(Error::TimeFunctionInvalid(format!(
                            "arc stop set self-intersects (segments {i} and {j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn segments_intersect(a: (Point2, Point2), b: (Point2, Point2)) -> bool {
    let d1 = (a.1 - a.0).cross(b.0 - a.0);
    let d2 = (a.1 - a.0).cross(b.1 - a.0);
    let d3 = (b.1 - b.0).cross(a.0 - b.0);
    let d4 = (b.1 - b.0).cross(a.1 - b.0);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Representation {
    Analytic,
    GridSampled { spacing: f64 },
}

pub trait TimeFunction: Send + Sync {
    fn value(&self, p: Point2) -> f64;
    fn gradient(&self, p: Point2) -> Vec2;
    /// Blow-up exponent of the transformed clock.
    fn q(&self) -> f64;
    fn stop_set(&self) -> &StopSet;
    fn representation(&self) -> Representation {
        Representation::Analytic
    }
}

/// `T0 = 1 - (1 - T)^(1/q)`.
#[inline]
pub fn t0_from_t(t: f64, q: f64) -> f64 {
    1.0 - (1.0 - t).max(0.0).powf(1.0 / q)
}

/// `T0` of the time function at `p`, without a domain check.
#[inline]
pub fn t0_of(time: &dyn TimeFunction, p: Point2) -> f64 {
    t0_from_t(time.value(p), time.q())
}

/// `grad T0 = (1/q) (1 - T)^(1/q - 1) grad T`, refusing points in the stop-set collar.
#[inline]
pub fn grad_t0_of(time: &dyn TimeFunction, p: Point2, eps_stop: f64) -> Result<Vec2> {
    let q = time.q();
    let t = time.value(p);
    let t0 = t0_from_t(t, q);
    if t0 > 1.0 - eps_stop {
        return Err(Error::StopSetProximity { x: p.x, y: p.y, t0 });
    }
    let one_minus = 1.0 - t;
    Ok(time.gradient(p) * (one_minus.powf(1.0 / q - 1.0) / q))
}

/// `T = 1 - |x|^2` on the unit disk with the origin as stop set.
#[derive(Clone, Debug)]
pub struct DiskTime {
    q: f64,
    stop: StopSet,
}

impl DiskTime {
    pub fn new(q: f64) -> Self {
        DiskTime {
            q,
            stop: StopSet::IsolatedPoint(Point2::ZERO),
        }
    }
}

impl TimeFunction for DiskTime {
    fn value(&self, p: Point2) -> f64 {
        1.0 - p.norm_sq()
    }

    fn gradient(&self, p: Point2) -> Vec2 {
        p * -2.0
    }

    fn q(&self) -> f64 {
        self.q
    }

    fn stop_set(&self) -> &StopSet {
        &self.stop
    }
}

/// Confocal-ellipse time function on `x^2/a^2 + y^2/b^2 < 1`.
///
/// With foci `(+-f, 0)`, `f^2 = a^2 - b^2`, and `w = (r1 + r2) / (2f)` the
/// elliptic radius (`w = cosh mu`), `T = 1 - (w^2 - 1) / (w_b^2 - 1)` where
/// `w_b = a / f`. The stop set is the focal segment, where `w = 1`.
#[derive(Clone, Debug)]
pub struct EllipseTime {
    a: f64,
    b: f64,
    focal: f64,
    q: f64,
    stop: StopSet,
}

impl EllipseTime {
    pub fn new(a: f64, b: f64, q: f64) -> Result<Self> {
        if !(a > b && b > 0.0) {
            return Err(Error::TimeFunctionInvalid(format!(
                "ellipse needs a > b > 0, got a = {a}, b = {b}"
            )));
        }
        let focal = (a * a - b * b).sqrt();
        let n = 33;
        let points: Vec<Point2> = (0..n)
            .map(|k| Point2::new(-focal + 2.0 * focal * k as f64 / (n - 1) as f64, 0.0))
            .collect();
        let normals = vec![Point2::new(0.0, 1.0); n];
        Ok(EllipseTime {
            a,
            b,
            focal,
            q,
            stop: StopSet::SingleArc { points, normals },
        })
    }

    pub fn axes(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    fn w(&self, p: Point2) -> f64 {
        let r1 = p.distance(Point2::new(-self.focal, 0.0));
        let r2 = p.distance(Point2::new(self.focal, 0.0));
        (r1 + r2) / (2.0 * self.focal)
    }

    fn wb2_minus_one(&self) -> f64 {
        let wb = self.a / self.focal;
        wb * wb - 1.0
    }
}

impl TimeFunction for EllipseTime {
    fn value(&self, p: Point2) -> f64 {
        let w = self.w(p);
        1.0 - (w * w - 1.0) / self.wb2_minus_one()
    }

    fn gradient(&self, p: Point2) -> Vec2 {
        let f1 = Point2::new(-self.focal, 0.0);
        let f2 = Point2::new(self.focal, 0.0);
        let e1 = (p - f1).normalized().unwrap_or(Point2::ZERO);
        let e2 = (p - f2).normalized().unwrap_or(Point2::ZERO);
        let grad_w = (e1 + e2) / (2.0 * self.focal);
        grad_w * (-2.0 * self.w(p) / self.wb2_minus_one())
    }

    fn q(&self) -> f64 {
        self.q
    }

    fn stop_set(&self) -> &StopSet {
        &self.stop
    }
}

/// Time function sampled at the cell centres of a regular grid.
///
/// Values are interpolated bilinearly. Gradients are central differences at
/// the nodes (one-sided on the grid edge), interpolated bilinearly as well.
#[derive(Clone, Debug)]
pub struct GridTime {
    bbox: BBox,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    grads: Vec<Vec2>,
    q: f64,
    stop: StopSet,
}

impl GridTime {
    pub fn new(bbox: BBox, nx: usize, ny: usize, values: Vec<f64>, q: f64, stop: StopSet) -> Result<Self> {
        if nx < 2 || ny < 2 || values.len() != nx * ny {
            return Err(Error::TimeFunctionInvalid(format!(
                "grid time needs nx, ny >= 2 and nx*ny values (got {nx}x{ny}, {} values)",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::TimeFunctionInvalid("non-finite sample".into()));
        }
        if !(q > 0.0) {
            return Err(Error::TimeFunctionInvalid(format!("q must be positive, got {q}")));
        }
        let dx = bbox.width() / nx as f64;
        let dy = bbox.height() / ny as f64;
        let at = |i: usize, j: usize| values[j * nx + i];
        let mut grads = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let gx = if i == 0 {
                    (at(1, j) - at(0, j)) / dx
                } else if i == nx - 1 {
                    (at(nx - 1, j) - at(nx - 2, j)) / dx
                } else {
                    (at(i + 1, j) - at(i - 1, j)) / (2.0 * dx)
                };
                let gy = if j == 0 {
                    (at(i, 1) - at(i, 0)) / dy
                } else if j == ny - 1 {
                    (at(i, ny - 1) - at(i, ny - 2)) / dy
                } else {
                    (at(i, j + 1) - at(i, j - 1)) / (2.0 * dy)
                };
                grads.push(Point2::new(gx, gy));
            }
        }
        Ok(GridTime {
            bbox,
            nx,
            ny,
            values,
            grads,
            q,
            stop,
        })
    }

    /// Samples an analytic time function at the cell centres of a grid.
    pub fn sample(time: &dyn TimeFunction, bbox: BBox, nx: usize, ny: usize) -> Result<Self> {
        let dx = bbox.width() / nx as f64;
        let dy = bbox.height() / ny as f64;
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let p = Point2::new(bbox.min.x + (i as f64 + 0.5) * dx, bbox.min.y + (j as f64 + 0.5) * dy);
                values.push(time.value(p));
            }
        }
        GridTime::new(bbox, nx, ny, values, time.q(), time.stop_set().clone())
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.bbox.width() / self.nx as f64, self.bbox.height() / self.ny as f64)
    }

    /// Bilinear weights: lower-left node indices and fractional offsets.
    #[inline]
    fn locate(&self, p: Point2) -> (usize, usize, f64, f64) {
        let (dx, dy) = self.spacing();
        let fx = ((p.x - self.bbox.min.x) / dx - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((p.y - self.bbox.min.y) / dy - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        (i, j, fx - i as f64, fy - j as f64)
    }
}

impl TimeFunction for GridTime {
    fn value(&self, p: Point2) -> f64 {
        let (i, j, tx, ty) = self.locate(p);
        let n = self.nx;
        let v = &self.values;
        let a = v[j * n + i] * (1.0 - tx) + v[j * n + i + 1] * tx;
        let b = v[(j + 1) * n + i] * (1.0 - tx) + v[(j + 1) * n + i + 1] * tx;
        a * (1.0 - ty) + b * ty
    }

    fn gradient(&self, p: Point2) -> Vec2 {
        let (i, j, tx, ty) = self.locate(p);
        let n = self.nx;
        let g = &self.grads;
        let a = g[j * n + i] * (1.0 - tx) + g[j * n + i + 1] * tx;
        let b = g[(j + 1) * n + i] * (1.0 - tx) + g[(j + 1) * n + i + 1] * tx;
        a * (1.0 - ty) + b * ty
    }

    fn q(&self) -> f64 {
        self.q
    }

    fn stop_set(&self) -> &StopSet {
        &self.stop
    }

    fn representation(&self) -> Representation {
        Representation::GridSampled {
            spacing: self.spacing().0.min(self.spacing().1),
        }
    }
}

pub type InsidePredicate = Arc<dyn Fn(Point2) -> bool + Send + Sync>;

/// An open, bounded, simply connected domain together with its time function.
#[derive(Clone)]
pub struct Domain {
    pub name: String,
    /// Absent for raster domains, whose boundary data is evaluated pointwise.
    pub boundary: Option<Arc<dyn BoundaryCurve>>,
    pub time: Arc<dyn TimeFunction>,
    pub bbox: BBox,
    pub inside: InsidePredicate,
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Domain")
            .field("name", &self.name)
            .field("bbox", &self.bbox)
            .field("q", &self.time.q())
            .finish()
    }
}

impl Domain {
    /// Unit disk with `T = 1 - |x|^2`.
    pub fn unit_disk(q: f64) -> Self {
        let pad = 1.05;
        Domain {
            name: "unit-disk".into(),
            boundary: Some(Arc::new(Circle::unit())),
            time: Arc::new(DiskTime::new(q)),
            bbox: BBox::new(Point2::new(-pad, -pad), Point2::new(pad, pad)),
            inside: Arc::new(|p: Point2| p.norm_sq() < 1.0),
        }
    }

    /// Ellipse with semi-axes `a > b` and the focal segment as stop set.
    pub fn ellipse(a: f64, b: f64, q: f64) -> Result<Self> {
        let time = EllipseTime::new(a, b, q)?;
        let pad = 1.05;
        Ok(Domain {
            name: "ellipse".into(),
            boundary: Some(Arc::new(Ellipse { a, b })),
            time: Arc::new(time),
            bbox: BBox::new(Point2::new(-a * pad, -b * pad), Point2::new(a * pad, b * pad)),
            inside: Arc::new(move |p: Point2| (p.x / a).powi(2) + (p.y / b).powi(2) < 1.0),
        })
    }

    /// Boundary tolerance for the `T = 0` check.
    pub fn tau_bd(&self) -> f64 {
        1e-6 * self.bbox.diameter()
    }

    pub fn q(&self) -> f64 {
        self.time.q()
    }

    pub fn in_closure(&self, p: Point2) -> bool {
        (self.inside)(p) || self.time.value(p).abs() <= self.tau_bd()
    }

    /// `T0(x) = 1 - (1 - T(x))^(1/q)` for `x` in the closed domain.
    pub fn transformed_time(&self, p: Point2) -> Result<f64> {
        if !self.in_closure(p) {
            return Err(Error::DomainMembership { x: p.x, y: p.y });
        }
        Ok(t0_of(self.time.as_ref(), p).max(0.0))
    }

    pub fn grad_transformed_time(&self, p: Point2, eps_stop: f64) -> Result<Vec2> {
        grad_t0_of(self.time.as_ref(), p, eps_stop)
    }

    /// Unit normal `N = grad T / |grad T|` of the level lines, pointing to increasing time.
    pub fn normal_field(&self, p: Point2, eps_stop: f64) -> Result<Vec2> {
        let t0 = t0_of(self.time.as_ref(), p);
        if t0 > 1.0 - eps_stop {
            return Err(Error::StopSetProximity { x: p.x, y: p.y, t0 });
        }
        self.time
            .gradient(p)
            .normalized()
            .ok_or(Error::StopSetProximity { x: p.x, y: p.y, t0 })
    }

    /// Minimum of `|grad T0|` over the samples that lie outside the collar.
    pub fn m0_estimate(&self, samples: &[Point2], eps_stop: f64) -> Result<f64> {
        let mut m0 = f64::INFINITY;
        for p in samples {
            if !self.in_closure(*p) {
                continue;
            }
            match self.grad_transformed_time(*p, eps_stop) {
                Ok(g) => m0 = m0.min(g.norm()),
                Err(Error::StopSetProximity { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if !(m0 > 0.0) || !m0.is_finite() {
            return Err(Error::TimeFunctionInvalid(format!(
                "m0 estimate is not positive ({m0})"
            )));
        }
        Ok(m0)
    }

    /// Whether `x` lies in the past `{T0 < lambda}`.
    pub fn past_membership(&self, lambda: f64, p: Point2) -> bool {
        (self.inside)(p) && t0_of(self.time.as_ref(), p) < lambda
    }

    /// Regular `n x n` lattice over the bounding box restricted to the domain,
    /// plus `n_boundary` samples on the boundary curve when one is present.
    pub fn sample_points(&self, n: usize, n_boundary: usize) -> Vec<Point2> {
        let mut out = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let p = Point2::new(
                    self.bbox.min.x + (i as f64 + 0.5) * self.bbox.width() / n as f64,
                    self.bbox.min.y + (j as f64 + 0.5) * self.bbox.height() / n as f64,
                );
                if (self.inside)(p) {
                    out.push(p);
                }
            }
        }
        if let Some(curve) = &self.boundary {
            let (a, b) = curve.period();
            for k in 0..n_boundary {
                out.push(curve.point(a + (b - a) * k as f64 / n_boundary as f64));
            }
        }
        out
    }

    /// Checks the time-function requirements that sampling can falsify.
    pub fn validate_time_function(&self, n: usize, eps_stop: f64) -> Result<()> {
        let time = self.time.as_ref();
        self.time.stop_set().validate(self.inside.as_ref())?;
        for p in self.time.stop_set().points() {
            let t = time.value(*p);
            if (t - 1.0).abs() > 1e-9 {
                return Err(Error::TimeFunctionInvalid(format!(
                    "T = {t} on the stop set at {p}, expected 1"
                )));
            }
        }
        if let Some(curve) = &self.boundary {
            let (a, b) = curve.period();
            for k in 0..4 * n {
                let p = curve.point(a + (b - a) * k as f64 / (4 * n) as f64);
                let t = time.value(p);
                if t.abs() > self.tau_bd() {
                    return Err(Error::TimeFunctionInvalid(format!("T = {t} on the boundary at {p}")));
                }
            }
        }
        let samples = self.sample_points(n, 0);
        for p in &samples {
            let t = time.value(*p);
            if !(-1e-12..=1.0 + 1e-12).contains(&t) {
                return Err(Error::TimeFunctionInvalid(format!("T = {t} out of [0,1] at {p}")));
            }
            let t0 = t0_from_t(t, time.q());
            if t0 <= 1.0 - eps_stop && time.gradient(*p).norm() <= 0.0 {
                return Err(Error::TimeFunctionInvalid(format!(
                    "vanishing gradient away from the stop set at {p}"
                )));
            }
        }
        for k in 1..10 {
            let lambda = k as f64 / 10.0;
            let comps = self.upper_level_components(n, lambda);
            if comps > 1 {
                return Err(Error::TimeFunctionInvalid(format!(
                    "upper level set {{T0 > {lambda}}} has {comps} components"
                )));
            }
        }
        Ok(())
    }

    /// Number of 4-connected components of `{T0 > lambda}` on an `n x n` lattice.
    pub fn upper_level_components(&self, n: usize, lambda: f64) -> usize {
        let mut on = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                let p = Point2::new(
                    self.bbox.min.x + (i as f64 + 0.5) * self.bbox.width() / n as f64,
                    self.bbox.min.y + (j as f64 + 0.5) * self.bbox.height() / n as f64,
                );
                on[j * n + i] = (self.inside)(p) && t0_of(self.time.as_ref(), p) > lambda;
            }
        }
        count_components(&on, n, n)
    }
}

/// 4-connected component count of a boolean raster.
pub fn count_components(on: &[bool], nx: usize, ny: usize) -> usize {
    let mut seen = vec![false; on.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            let mut visit = |ii: usize, jj: usize| {
                let kk = jj * nx + ii;
                if on[kk] && !seen[kk] {
                    seen[kk] = true;
                    stack.push(kk);
                }
            };
            if i > 0 {
                visit(i - 1, j);
            }
            if i + 1 < nx {
                visit(i + 1, j);
            }
            if j > 0 {
                visit(i, j - 1);
            }
            if j + 1 < ny {
                visit(i, j + 1);
            }
        }
    }
    count
}
