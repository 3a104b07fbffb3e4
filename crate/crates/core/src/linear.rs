//! The linear solution operator: backward characteristics plus quadrature of
//! the scaled right-hand side, and the radii of the ball it maps into.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{IntegratorConfig, Tracer};
use crate::error::{Error, Result};
use crate::fields::{scale_by_time, BoundaryData, PointField, PointScalar};
use crate::geometry::{BoundaryCurve, Domain, Point2};
use crate::grid::{CellKind, DomainGrid, ScalarGridField};

/// A linear problem with frozen coefficients.
#[derive(Clone, Copy)]
pub struct LinearProblem<'a> {
    pub domain: &'a Domain,
    pub c: &'a dyn PointField,
    pub f: &'a dyn PointScalar,
    pub u0: &'a dyn BoundaryData,
}

impl<'a> LinearProblem<'a> {
    pub fn tracer(&self, cfg: &'a IntegratorConfig) -> Tracer<'a> {
        Tracer::new(self.c, self.domain, cfg)
    }
}

/// `u(x) = u0(eta(T0(x), x)) + int_0^{T0(x)} f0(eta(tau, x)) d tau`, with the
/// composite trapezoid rule on the tracer's samples.
pub fn solve_point(problem: &LinearProblem<'_>, cfg: &IntegratorConfig, x: Point2) -> Result<f64> {
    let curve = problem.tracer(cfg).trace_backward(x)?;
    let end = curve.end();
    let boundary = problem
        .u0
        .value_at(end)
        .map_err(|e| Error::BoundaryData(format!("at {end}: {e}")))?;
    let time = problem.domain.time.as_ref();
    let f0 = |p: Point2| -> Result<f64> { Ok(scale_by_time(problem.c, Some(problem.f), time, p, cfg.eps_stop)?.1) };
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(tau, p) in &curve.samples {
        let g = f0(p)?;
        if let Some((tp, gp)) = prev {
            integral += 0.5 * (tau - tp) * (g + gp);
        }
        prev = Some((tau, g));
    }
    Ok(boundary + integral)
}

/// Solves at every cell in `cells`, in parallel; errors are reported for the
/// lowest failing cell index so runs are reproducible.
pub(crate) fn solve_cells(
    problem: &LinearProblem<'_>,
    dg: &DomainGrid,
    cfg: &IntegratorConfig,
    cells: &[usize],
) -> Result<Vec<f64>> {
    let results: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&k| solve_point(problem, cfg, dg.grid.center_of(k)))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for (r, &k) in results.into_iter().zip(cells) {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                let (i, j) = (k % dg.grid.nx, k / dg.grid.nx);
                return Err(Error::AtPixel {
                    col: i,
                    row: j,
                    source: Box::new(e),
                });
            }
        }
    }
    Ok(out)
}

/// Evaluates the linear solution at every interior cell centre, then fills the
/// stop-set collar by extension.
pub fn solve_linear(problem: &LinearProblem<'_>, dg: &DomainGrid, cfg: &IntegratorConfig) -> Result<ScalarGridField> {
    cfg.validate()?;
    let cells: Vec<usize> = dg.interior_cells().collect();
    let values = solve_cells(problem, dg, cfg, &cells)?;
    let mut u = ScalarGridField::zeros(dg);
    let mut solved = vec![false; dg.grid.len()];
    for (k, v) in cells.iter().zip(values) {
        u.values[*k] = v;
        solved[*k] = true;
    }
    fill_unsolved(&mut u, &solved, dg, problem.c);
    Ok(u)
}

/// Gives every in-domain cell that is not `solved` the value of the first solved
/// cell met when walking from its centre along `-c`; cells whose walk fails take
/// the solved neighbour of largest `T0` in the smallest ring containing one.
pub fn fill_unsolved(u: &mut ScalarGridField, solved: &[bool], dg: &DomainGrid, c: &dyn PointField) {
    let g = dg.grid;
    let step = 0.5 * g.dx().min(g.dy());
    let max_walk = 4 * (g.nx + g.ny);
    let targets: Vec<usize> = (0..g.len()).filter(|&k| dg.mask[k].in_domain() && !solved[k]).collect();
    let fills: Vec<Option<f64>> = targets
        .par_iter()
        .map(|&k| {
            let x = g.center_of(k);
            let d = c.direction(x);
            if d.is_finite() && d.norm() > 0.5 {
                let mut p = x;
                for _ in 0..max_walk {
                    p = p - d * step;
                    match g.cell_of(p) {
                        Some((i, j)) => {
                            let kk = g.index(i, j);
                            if solved[kk] {
                                return Some(u.values[kk]);
                            }
                            if dg.mask[kk] == CellKind::Exterior {
                                break;
                            }
                        }
                        None => break,
                    }
                }
            }
            ring_search(u, solved, dg, k)
        })
        .collect();
    for (k, v) in targets.into_iter().zip(fills) {
        u.values[k] = v.unwrap_or(0.0);
    }
}

fn ring_search(u: &ScalarGridField, solved: &[bool], dg: &DomainGrid, k: usize) -> Option<f64> {
    let g = dg.grid;
    let (ci, cj) = ((k % g.nx) as isize, (k / g.nx) as isize);
    for r in 1..(g.nx.max(g.ny) as isize) {
        let mut best: Option<(f64, f64)> = None;
        for j in (cj - r)..=(cj + r) {
            for i in (ci - r)..=(ci + r) {
                if (i - ci).abs() != r && (j - cj).abs() != r {
                    continue;
                }
                if i < 0 || j < 0 || i >= g.nx as isize || j >= g.ny as isize {
                    continue;
                }
                let kk = g.index(i as usize, j as usize);
                if solved[kk] && best.is_none_or(|(t, _)| dg.t0[kk] > t) {
                    best = Some((dg.t0[kk], u.values[kk]));
                }
            }
        }
        if let Some((_, v)) = best {
            return Some(v);
        }
    }
    None
}

/// `v(t, s) = u0(gamma(s)) + int_0^t f0(xi(tau, s)) d tau` on a lattice.
/// Returns `values[j][i]` for `ss[j]`, `ts[i]`; `ts` must be non-decreasing.
pub fn solve_in_characteristic_coordinates(
    problem: &LinearProblem<'_>,
    curve: &dyn BoundaryCurve,
    ts: &[f64],
    ss: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("lattice times must be non-decreasing".into()));
    }
    let tracer = problem.tracer(cfg);
    let time = problem.domain.time.as_ref();
    let f0 = |p: Point2| -> Result<f64> { Ok(scale_by_time(problem.c, Some(problem.f), time, p, cfg.eps_stop)?.1) };
    ss.par_iter()
        .map(|&s| {
            let start = curve.point(s);
            let base = problem.u0.value_at(start)?;
            let mut row = Vec::with_capacity(ts.len());
            let mut p = start;
            let mut t_prev = 0.0;
            let mut integral = 0.0;
            let mut g_prev = f0(p)?;
            for &t in ts {
                if t > 1.0 - cfg.eps_stop {
                    return Err(Error::StopSetProximity { x: p.x, y: p.y, t0: t });
                }
                let seg = tracer.trace_forward_from(p, t_prev, t)?;
                for w in seg.windows(2) {
                    let g = f0(w[1].1)?;
                    integral += 0.5 * (w[1].0 - w[0].0) * (g + g_prev);
                    g_prev = g;
                }
                p = seg.last().unwrap().1;
                t_prev = t;
                row.push(base + integral);
            }
            Ok(row)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfMapInputs {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m5: f64,
    pub beta: f64,
    pub m0: f64,
    pub area: f64,
    /// Length of the stop set.
    pub h1_sigma: f64,
    /// `||DN||_{L1}`.
    pub dn_l1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfMapBounds {
    pub m_star: f64,
    pub m_star_star: f64,
    pub inputs: SelfMapInputs,
}

/// Radii of the `L1` / total-variation ball mapped into itself by the solution operator.
pub fn compute_self_map_bounds(inputs: &SelfMapInputs) -> Result<SelfMapBounds> {
    let named = [
        ("M1", inputs.m1),
        ("M2", inputs.m2),
        ("M3", inputs.m3),
        ("M4", inputs.m4),
        ("M5", inputs.m5),
        ("H1(stop set)", inputs.h1_sigma),
        ("||DN||_L1", inputs.dn_l1),
    ];
    for (name, v) in named {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidBounds(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    if !(inputs.beta > 0.0 && inputs.beta <= 1.0) {
        return Err(Error::InvalidBounds(format!(
            "beta must lie in (0, 1], got {}",
            inputs.beta
        )));
    }
    for (name, v) in [("m0", inputs.m0), ("area", inputs.area)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidBounds(format!("{name} must be positive, got {v}")));
        }
    }
    let SelfMapInputs {
        m1,
        m2,
        m3,
        m4,
        m5,
        beta,
        m0,
        area,
        h1_sigma,
        dn_l1,
    } = *inputs;
    let bm = beta * m0;
    let head = m4 + m2 / bm;
    let m_star = head * area;
    let m_star_star = 2.0 * head * h1_sigma
        + m5 / bm
        + (m2 / beta + m3 / (beta * beta * m0)) * area
        + m2 / (beta * beta * beta * m0) * (m1 + dn_l1);
    Ok(SelfMapBounds {
        m_star,
        m_star_star,
        inputs: inputs.clone(),
    })
}

/// `||DN||_{L1}` by central differences of the normal field at interior cell
/// centres (Frobenius norm), skipping cells whose stencil meets the collar.
pub fn estimate_dn_l1(domain: &Domain, dg: &DomainGrid) -> f64 {
    let h = 0.25 * dg.grid.dx().min(dg.grid.dy());
    let eps = dg.eps_stop;
    dg.interior_cells()
        .filter_map(|k| {
            let p = dg.grid.center_of(k);
            let n = |q: Point2| domain.normal_field(q, eps).ok();
            let dx = (n(p + Point2::new(h, 0.0))? - n(p - Point2::new(h, 0.0))?) / (2.0 * h);
            let dy = (n(p + Point2::new(0.0, h))? - n(p - Point2::new(0.0, h))?) / (2.0 * h);
            Some((dx.norm_sq() + dy.norm_sq()).sqrt())
        })
        .sum::<f64>()
        * dg.grid.cell_area()
}
