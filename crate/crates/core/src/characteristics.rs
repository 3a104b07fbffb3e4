//! Characteristic curves of the scaled field `c0 = c / <c, grad T0>`.
//!
//! The independent variable is the transformed time itself: along a forward
//! curve `T0(xi(t, s)) = t`, so stripe boundaries are level sets of the clock.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{scale_by_time, PointField};
use crate::geometry::{grad_t0_of, t0_of, BoundaryCurve, Domain, Point2, Vec2, DEFAULT_EPS_STOP};
use crate::io::csv_bytes;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with a fixed step.
    Rk4,
    /// Dormand-Prince 5(4) with embedded error control.
    Rk45,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Base step in units of `T0`.
    pub dt: f64,
    /// Tolerance on `|T0(p) - t|` along curves.
    pub tau_time: f64,
    /// Width of the stop-set collar `{T0 > 1 - eps_stop}`.
    pub eps_stop: f64,
    pub max_steps: usize,
    /// Parameter `a` of the curve `{xi(t, a)}` where the characteristic chart is cut.
    pub cut: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            dt: 1e-3,
            tau_time: 1e-6,
            eps_stop: DEFAULT_EPS_STOP,
            max_steps: 1_000_000,
            cut: 0.0,
        }
    }
}

impl IntegratorConfig {
    pub fn with_dt(dt: f64) -> Self {
        IntegratorConfig {
            dt,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.eps_stop > 0.0 && self.eps_stop < 0.1) {
            return Err(Error::Config(format!(
                "eps_stop must lie in (0, 0.1), got {}",
                self.eps_stop
            )));
        }
        if !(self.tau_time > 0.0) {
            return Err(Error::Config(format!(
                "tau_time must be positive, got {}",
                self.tau_time
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A traced characteristic. Forward curves are sampled at `T0 = t`;
/// backward curves at backward time `tau`, where `T0 = T0(anchor_x) - tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct CharCurve {
    pub samples: Vec<(f64, Point2)>,
    pub anchor_s: Option<f64>,
    pub anchor_x: Option<Point2>,
    pub direction: Direction,
}

impl CharCurve {
    pub fn end(&self) -> Point2 {
        self.samples.last().expect("curves have at least one sample").1
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map(|s| s.0).unwrap_or(0.0)
    }

    pub fn arc_length(&self) -> f64 {
        self.samples.windows(2).map(|w| w[0].1.distance(w[1].1)).sum()
    }

    /// CSV with columns `t,x,y`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["t", "x", "y"],
            self.samples
                .iter()
                .map(|(t, p)| [t.to_string(), p.x.to_string(), p.y.to_string()]),
        )
    }
}

/// A frozen transport field on a domain, ready for tracing.
#[derive(Clone, Copy)]
pub struct Tracer<'a> {
    pub field: &'a dyn PointField,
    pub domain: &'a Domain,
    pub cfg: &'a IntegratorConfig,
}

// Dormand-Prince coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl<'a> Tracer<'a> {
    pub fn new(field: &'a dyn PointField, domain: &'a Domain, cfg: &'a IntegratorConfig) -> Self {
        Tracer { field, domain, cfg }
    }

    /// `sign * c0(p)`.
    #[inline]
    fn velocity(&self, p: Point2, sign: f64) -> Result<Vec2> {
        let (c0, _) = scale_by_time(self.field, None, self.domain.time.as_ref(), p, self.cfg.eps_stop)?;
        Ok(c0 * sign)
    }

    fn rk4_step(&self, p: Point2, h: f64, sign: f64) -> Result<Point2> {
        let k1 = self.velocity(p, sign)?;
        let k2 = self.velocity(p + k1 * (0.5 * h), sign)?;
        let k3 = self.velocity(p + k2 * (0.5 * h), sign)?;
        let k4 = self.velocity(p + k3 * h, sign)?;
        Ok(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }

    /// One Dormand-Prince step; returns the fifth-order point and the error estimate.
    fn dp_step(&self, p: Point2, h: f64, sign: f64) -> Result<(Point2, f64)> {
        let mut k = [Point2::ZERO; 7];
        for i in 0..7 {
            let mut q = p;
            for j in 0..i {
                q += k[j] * (DP_A[i][j] * h);
            }
            debug_assert!(DP_C[i] <= 1.0);
            k[i] = self.velocity(q, sign)?;
        }
        let mut hi = p;
        let mut lo = p;
        for i in 0..7 {
            hi += k[i] * (DP_B5[i] * h);
            lo += k[i] * (DP_B4[i] * h);
        }
        Ok((hi, hi.distance(lo)))
    }

    /// Pulls `p` back onto `{T0 = target}` by Newton steps along `grad T0`
    /// when the drift exceeds `tau_time / 10`.
    fn project(&self, mut p: Point2, target: f64) -> Result<Point2> {
        let time = self.domain.time.as_ref();
        let limit = self.cfg.tau_time / 10.0;
        let mut dir = None;
        for _ in 0..4 {
            let drift = t0_of(time, p) - target;
            if drift.abs() <= limit {
                return Ok(p);
            }
            let g = match grad_t0_of(time, p, self.cfg.eps_stop * 0.5) {
                Ok(g) => g,
                Err(_) => return Ok(p),
            };
            dir = Some(g / g.norm_sq());
            p = p - g * (drift / g.norm_sq());
        }
        // Sampled time functions interpolate value and gradient separately, so
        // Newton can stall; finish with secant steps along the last direction.
        if let Some(d) = dir {
            let phi = |a: f64| t0_of(time, p - d * a) - target;
            let (mut a0, mut f0) = (0.0, phi(0.0));
            let mut a1 = f0;
            let mut f1 = phi(a1);
            for _ in 0..20 {
                if f1.abs() <= limit || f1 == f0 {
                    break;
                }
                let a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
                (a0, f0) = (a1, f1);
                a1 = a2;
                f1 = phi(a1);
            }
            if f1.abs() < f0.abs().max(phi(0.0).abs()) {
                p = p - d * a1;
            }
        }
        Ok(p)
    }

    fn check_consistency(&self, p: Point2, target: f64) -> Result<()> {
        let drift = (t0_of(self.domain.time.as_ref(), p) - target).abs();
        if drift > self.cfg.tau_time {
            return Err(Error::IntegrationFailure(format!(
                "time drift {drift:e} at {p} exceeds tolerance {:e}",
                self.cfg.tau_time
            )));
        }
        Ok(())
    }

    fn check_inside(&self, p: Point2) -> Result<()> {
        if !self.domain.in_closure(p) {
            return Err(Error::GeometryInconsistency(format!(
                "characteristic left the domain at {p}"
            )));
        }
        Ok(())
    }

    /// Integrates `dp/dt = sign * c0(p)` from clock value `0` to `duration`;
    /// `level(t)` is the `T0` value the point must sit on at clock `t`.
    fn integrate(
        &self,
        start: Point2,
        duration: f64,
        sign: f64,
        level: impl Fn(f64) -> f64,
        check_final_inside: bool,
    ) -> Result<Vec<(f64, Point2)>> {
        let mut samples = vec![(0.0, start)];
        if duration <= 0.0 {
            return Ok(samples);
        }
        let cfg = self.cfg;
        match cfg.method {
            Method::Rk4 => {
                let n = (duration / cfg.dt).ceil().max(1.0) as usize;
                if n > cfg.max_steps {
                    return Err(Error::IntegrationFailure(format!(
                        "{n} steps exceed max_steps {}",
                        cfg.max_steps
                    )));
                }
                let h = duration / n as f64;
                samples.reserve(n);
                let mut p = start;
                for k in 1..=n {
                    let t = if k == n { duration } else { k as f64 * h };
                    p = self.rk4_step(p, h, sign)?;
                    p = self.project(p, level(t))?;
                    self.check_consistency(p, level(t))?;
                    if k < n || check_final_inside {
                        self.check_inside(p)?;
                    }
                    samples.push((t, p));
                }
            }
            Method::Rk45 => {
                let atol = cfg.tau_time * 1e-2;
                let mut t = 0.0;
                let mut h = cfg.dt.min(duration);
                let mut p = start;
                let mut steps = 0;
                while t < duration {
                    steps += 1;
                    if steps > cfg.max_steps {
                        return Err(Error::IntegrationFailure(format!(
                            "adaptive integration exceeded {} steps",
                            cfg.max_steps
                        )));
                    }
                    let last = t + h >= duration - 1e-15;
                    let step = if last { duration - t } else { h };
                    let (next, err) = self.dp_step(p, step, sign)?;
                    if err <= atol || step <= 1e-12 {
                        t = if last { duration } else { t + step };
                        p = self.project(next, level(t))?;
                        self.check_consistency(p, level(t))?;
                        if !last || check_final_inside {
                            self.check_inside(p)?;
                        }
                        samples.push((t, p));
                    }
                    let factor = if err > 0.0 {
                        (0.9 * (atol / err).powf(0.2)).clamp(0.2, 5.0)
                    } else {
                        5.0
                    };
                    h = (step * factor).min(cfg.dt * 10.0);
                }
            }
        }
        Ok(samples)
    }

    /// Forward characteristic `xi(., s)` from `gamma(s)` up to clock `t_max`.
    pub fn trace_forward(&self, curve: &dyn BoundaryCurve, s: f64, t_max: f64) -> Result<CharCurve> {
        if t_max > 1.0 - self.cfg.eps_stop + 1e-12 {
            return Err(Error::StopSetProximity {
                x: f64::NAN,
                y: f64::NAN,
                t0: t_max,
            });
        }
        let start = curve.point(s);
        let samples = self.integrate(start, t_max, 1.0, |t| t, true)?;
        Ok(CharCurve {
            samples,
            anchor_s: Some(s),
            anchor_x: None,
            direction: Direction::Forward,
        })
    }

    /// Continues a forward characteristic from `start`, which sits on
    /// `{T0 = t_start}`, up to clock `t_end`. Sample times are absolute.
    pub fn trace_forward_from(&self, start: Point2, t_start: f64, t_end: f64) -> Result<Vec<(f64, Point2)>> {
        let mut samples = self.integrate(start, t_end - t_start, 1.0, |t| t_start + t, true)?;
        for s in samples.iter_mut() {
            s.0 += t_start;
        }
        if let Some(last) = samples.last_mut() {
            last.0 = t_end.max(t_start);
        }
        Ok(samples)
    }

    /// Backward characteristic `eta(., x)` from `x` to the boundary, which it
    /// reaches at backward time `T0(x)`; the terminal point is projected onto `{T = 0}`.
    pub fn trace_backward(&self, x: Point2) -> Result<CharCurve> {
        let time = self.domain.time.as_ref();
        if !self.domain.in_closure(x) {
            return Err(Error::DomainMembership { x: x.x, y: x.y });
        }
        let t0x = t0_of(time, x).max(0.0);
        if t0x > 1.0 - self.cfg.eps_stop {
            return Err(Error::StopSetProximity {
                x: x.x,
                y: x.y,
                t0: t0x,
            });
        }
        let mut samples = self.integrate(x, t0x, -1.0, |tau| t0x - tau, false)?;
        if t0x > 0.0 {
            let last = samples.last_mut().unwrap();
            last.1 = self.project_to_boundary(last.1)?;
        }
        Ok(CharCurve {
            samples,
            anchor_s: None,
            anchor_x: Some(x),
            direction: Direction::Backward,
        })
    }

    fn project_to_boundary(&self, mut p: Point2) -> Result<Point2> {
        let time = self.domain.time.as_ref();
        let tau_bd = self.domain.tau_bd();
        for _ in 0..8 {
            let t = time.value(p);
            if t.abs() <= tau_bd * 1e-3 {
                break;
            }
            let g = time.gradient(p);
            let g2 = g.norm_sq();
            if !(g2 > 0.0) {
                break;
            }
            p = p - g * (t / g2);
        }
        if time.value(p).abs() > tau_bd {
            return Err(Error::IntegrationFailure(format!(
                "backward characteristic ended at {p} off the boundary (T = {:e})",
                time.value(p)
            )));
        }
        Ok(p)
    }

    /// Endpoint `xi(t, s)` of a forward trace.
    pub fn forward_point(&self, curve: &dyn BoundaryCurve, s: f64, t: f64) -> Result<Point2> {
        Ok(self.trace_forward(curve, s, t)?.end())
    }

    /// Oriented `det D xi(t, s)` by central differences (one-sided in `t` near 0),
    /// positive when characteristics do not cross.
    pub fn jacobian_determinant(&self, curve: &dyn BoundaryCurve, t: f64, s: f64) -> Result<f64> {
        const D: f64 = 1e-4;
        let dxi_ds = (self.forward_point(curve, s + D, t)? - self.forward_point(curve, s - D, t)?) / (2.0 * D);
        let dxi_dt = if t >= D {
            (self.forward_point(curve, s, t + D)? - self.forward_point(curve, s, t - D)?) / (2.0 * D)
        } else {
            let p0 = self.forward_point(curve, s, t)?;
            let p1 = self.forward_point(curve, s, t + D)?;
            let p2 = self.forward_point(curve, s, t + 2.0 * D)?;
            (p1 * 4.0 - p0 * 3.0 - p2) / (2.0 * D)
        };
        let det = -curve.orientation() * dxi_dt.cross(dxi_ds);
        if !(det > 0.0) {
            return Err(Error::CharacteristicCrossing { t, s, det });
        }
        Ok(det)
    }

    /// Determinants on the lattice `t_i = i * lambda / (nt - 1)`,
    /// `s_j = cut + j * period / ns`.
    pub fn determinant_lattice(
        &self,
        curve: &dyn BoundaryCurve,
        lambda: f64,
        nt: usize,
        ns: usize,
    ) -> Result<Vec<DetSample>> {
        use rayon::prelude::*;
        let (a, b) = curve.period();
        let nt = nt.max(2);
        let points: Vec<(f64, f64)> = (0..ns)
            .flat_map(|j| {
                let s = curve.wrap(self.cfg.cut + (b - a) * j as f64 / ns as f64);
                (0..nt).map(move |i| (lambda * i as f64 / (nt - 1) as f64, s))
            })
            .collect();
        points
            .par_iter()
            .map(|&(t, s)| {
                self.jacobian_determinant(curve, t, s)
                    .map(|det| DetSample { t, s, det })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetSample {
    pub t: f64,
    pub s: f64,
    pub det: f64,
}

/// Parameter `s` minimizing `|gamma(s) - p|`, refined by Newton's method.
pub fn boundary_parameter_of(curve: &dyn BoundaryCurve, p: Point2, tolerance: f64) -> Result<f64> {
    let (a, b) = curve.period();
    let n = 256;
    let h = (b - a) / n as f64;
    let mut s = a;
    let mut best = f64::INFINITY;
    for k in 0..n {
        let sk = a + k as f64 * h;
        let d = curve.point(sk).distance(p);
        if d < best {
            best = d;
            s = sk;
        }
    }
    // g(s) = <gamma(s) - p, gamma'(s)>
    let e = 1e-6 * (b - a);
    for _ in 0..60 {
        let d1 = curve.derivative(s);
        let d2 = (curve.derivative(s + e) - curve.derivative(s - e)) / (2.0 * e);
        let r = curve.point(s) - p;
        let g = r.dot(d1);
        let dg = d1.norm_sq() + r.dot(d2);
        if !(dg > 0.0) {
            break;
        }
        let step = (g / dg).clamp(-h, h);
        s -= step;
        if step.abs() < 1e-15 * (b - a) {
            break;
        }
    }
    let dist = curve.point(s).distance(p);
    if dist > tolerance {
        return Err(Error::GeometryInconsistency(format!(
            "{p} is {dist:e} from the boundary (tolerance {tolerance:e})"
        )));
    }
    Ok(curve.wrap(s))
}
