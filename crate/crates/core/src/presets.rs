//! Built-in problems that run without external data.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{
    normal_or_default, BoundaryData, CausalAverageField, CurveData, FnField, FnRhs, FunctionalField, FunctionalRhs,
    Independent, LookaheadField, PastAverage, PointData, PointField, RotatedNormalField, TransportField,
};
use crate::geometry::{Domain, Point2};
use crate::grid::{DomainGrid, Grid};
use crate::quasilinear::QuasiProblem;

pub type Oracle = Arc<dyn Fn(Point2) -> f64 + Send + Sync>;

/// A problem with owned coefficients, a grid, and declared metadata.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub domain: Domain,
    pub grid: Arc<DomainGrid>,
    pub c: Arc<dyn FunctionalField>,
    pub f: Arc<dyn FunctionalRhs>,
    pub u0: Arc<dyn BoundaryData>,
    /// Declared `L1` bound on the spatial derivative of `c`.
    pub m1: f64,
    /// Whether the field is claimed to be functionally causal.
    pub causal: bool,
    /// Exact solution when known.
    pub oracle: Option<Oracle>,
}

impl Problem {
    pub fn as_quasi(&self) -> QuasiProblem<'_> {
        QuasiProblem {
            domain: &self.domain,
            c: self.c.as_ref(),
            f: self.f.as_ref(),
            u0: self.u0.as_ref(),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.as_quasi().is_linear()
    }
}

pub const PRESETS: &[&str] = &[
    "disk-radial-f0",
    "disk-radial-f1",
    "disk-spiral",
    "ellipse-segment",
    "disk-beta-violating",
    "disk-causal-eps0.1",
    "disk-acausal",
];

/// Window radius and lag of the built-in causal field.
pub const CAUSAL_RADIUS: f64 = 0.06;
pub const CAUSAL_LAG: f64 = 0.02;

/// Smooth function used by the manufactured presets, with its gradient.
pub fn manufactured_g(p: Point2) -> f64 {
    (2.0 * p.x).sin() * p.y.cos() + p.x * p.y
}

pub fn manufactured_grad(p: Point2) -> Point2 {
    Point2::new(
        2.0 * (2.0 * p.x).cos() * p.y.cos() + p.y,
        -(2.0 * p.x).sin() * p.y.sin() + p.x,
    )
}

/// Angle between `c` and `N` in the spiral preset.
pub const SPIRAL_ANGLE: f64 = 0.5;

fn cosine_data(domain: &Domain) -> Arc<dyn BoundaryData> {
    let curve = domain.boundary.clone().expect("analytic domain");
    Arc::new(CurveData::new(curve, Arc::new(f64::cos), vec![], 1e-5))
}

/// The built-in causal field on the disk, rotating `N` by up to `atan(eps)`.
pub fn causal_disk_field(domain: &Domain, grid: Arc<DomainGrid>, eps: f64) -> CausalAverageField {
    let base: Arc<dyn TransportField> = Arc::new(RotatedNormalField::new(domain.time.clone(), 0.0));
    CausalAverageField::new(
        base,
        domain.time.clone(),
        PastAverage::new(grid, CAUSAL_RADIUS, CAUSAL_LAG),
        eps,
    )
}

/// Builds a preset on an `n x n` grid with collar width `eps_stop`.
pub fn build_preset(name: &str, n: usize, eps_stop: f64) -> Result<Problem> {
    let q = 4.0;
    let disk = || Domain::unit_disk(q);
    let grid_for = |d: &Domain| Arc::new(DomainGrid::new(d, Grid::square(d, n), eps_stop));
    let dn_disk = 2.0 * PI;
    let problem = match name {
        "disk-radial-f0" => {
            let domain = disk();
            Problem {
                name: name.into(),
                grid: grid_for(&domain),
                c: Arc::new(Independent(RotatedNormalField::new(domain.time.clone(), 0.0))),
                f: Arc::new(FnRhs::zero()),
                u0: cosine_data(&domain),
                m1: dn_disk,
                causal: true,
                oracle: Some(Arc::new(|p: Point2| p.y.atan2(p.x).cos())),
                domain,
            }
        }
        "disk-radial-f1" => {
            let domain = disk();
            Problem {
                name: name.into(),
                grid: grid_for(&domain),
                c: Arc::new(Independent(RotatedNormalField::new(domain.time.clone(), 0.0))),
                f: Arc::new(FnRhs::constant(1.0)),
                u0: Arc::new(PointData::constant(0.0)),
                m1: dn_disk,
                causal: true,
                oracle: Some(Arc::new(|p: Point2| 1.0 - p.norm())),
                domain,
            }
        }
        "disk-spiral" => {
            let domain = disk();
            let field = RotatedNormalField::new(domain.time.clone(), SPIRAL_ANGLE);
            let fc = field.clone();
            let rhs = FnRhs::new(3.7, 12.0, move |p| fc.direction(p).dot(manufactured_grad(p)));
            Problem {
                name: name.into(),
                grid: grid_for(&domain),
                c: Arc::new(Independent(field)),
                f: Arc::new(rhs),
                u0: Arc::new(PointData::new(2.0, 23.0, manufactured_g)),
                m1: dn_disk,
                causal: true,
                oracle: Some(Arc::new(manufactured_g)),
                domain,
            }
        }
        "ellipse-segment" => {
            let domain = Domain::ellipse(1.0, 0.6, q)?;
            let grid = grid_for(&domain);
            let m1 = crate::linear::estimate_dn_l1(&domain, &grid);
            Problem {
                name: name.into(),
                c: Arc::new(Independent(RotatedNormalField::new(domain.time.clone(), 0.0))),
                f: Arc::new(FnRhs::zero()),
                u0: cosine_data(&domain),
                m1,
                causal: true,
                oracle: None,
                grid,
                domain,
            }
        }
        "disk-beta-violating" => {
            let domain = disk();
            let time = domain.time.clone();
            // Turns N past the perpendicular on the right half of the disk.
            let field = FnField::new(0.2, move |p: Point2| {
                normal_or_default(time.as_ref(), p).rotated(1.9 * ((p.x - 0.1) / 0.4).clamp(0.0, 1.0))
            });
            Problem {
                name: name.into(),
                grid: grid_for(&domain),
                c: Arc::new(Independent(field)),
                f: Arc::new(FnRhs::zero()),
                u0: cosine_data(&domain),
                m1: dn_disk,
                causal: true,
                oracle: None,
                domain,
            }
        }
        "disk-causal-eps0.1" => {
            let domain = disk();
            let grid = grid_for(&domain);
            let eps = 0.1;
            let field = causal_disk_field(&domain, grid.clone(), eps);
            Problem {
                name: name.into(),
                c: Arc::new(field),
                f: Arc::new(FnRhs::zero()),
                u0: cosine_data(&domain),
                m1: causal_m1(eps, 1.0),
                causal: true,
                oracle: None,
                grid,
                domain,
            }
        }
        "disk-acausal" => {
            let domain = disk();
            Problem {
                name: name.into(),
                grid: grid_for(&domain),
                c: Arc::new(LookaheadField {
                    time: domain.time.clone(),
                    eps: 0.3,
                    lookahead: 0.15,
                }),
                f: Arc::new(FnRhs::zero()),
                u0: cosine_data(&domain),
                m1: causal_m1(0.3, 1.0),
                causal: false,
                oracle: None,
                domain,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(problem)
}

/// Declared `M1` for the built-in causal field on the unit disk: the normal
/// field's share plus a window-gradient share for arguments bounded by `m4`.
pub fn causal_m1(eps: f64, m4: f64) -> f64 {
    (1.0 + eps) * 2.0 * PI + eps * PI * m4 * 8.0 / (3.0 * CAUSAL_RADIUS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DEFAULT_EPS_STOP;

    #[test]
    fn every_preset_builds() {
        for name in PRESETS {
            let p = build_preset(name, 16, DEFAULT_EPS_STOP).unwrap();
            assert_eq!(&p.name, name);
        }
        assert!(matches!(
            build_preset("nope", 16, DEFAULT_EPS_STOP),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn linear_presets_are_linear() {
        for name in ["disk-radial-f0", "disk-radial-f1", "disk-spiral", "ellipse-segment"] {
            assert!(build_preset(name, 8, DEFAULT_EPS_STOP).unwrap().is_linear());
        }
        assert!(!build_preset("disk-causal-eps0.1", 8, DEFAULT_EPS_STOP)
            .unwrap()
            .is_linear());
    }
}
