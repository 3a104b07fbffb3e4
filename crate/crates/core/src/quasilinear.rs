//! Fixed points of the solution operator `U` for functionally causal
//! coefficients, computed by marching through stripes of the transformed time.

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::characteristics::{DetSample, IntegratorConfig, Tracer};
use crate::error::{Error, Result};
use crate::fields::{BoundaryData, FunctionalField, FunctionalRhs};
use crate::geometry::{Domain, DEFAULT_EPS_STOP};
use crate::grid::{CellKind, DomainGrid, ScalarGridField};
use crate::io::csv_bytes;
use crate::linear::{
    compute_self_map_bounds, estimate_dn_l1, fill_unsolved, solve_cells, LinearProblem, SelfMapBounds, SelfMapInputs,
};

/// A quasi-linear problem `<c[u], grad u> = f[u]`, `u = u0` on the boundary.
#[derive(Clone, Copy)]
pub struct QuasiProblem<'a> {
    pub domain: &'a Domain,
    pub c: &'a dyn FunctionalField,
    pub f: &'a dyn FunctionalRhs,
    pub u0: &'a dyn BoundaryData,
}

impl QuasiProblem<'_> {
    /// True when neither coefficient depends on its argument.
    pub fn is_linear(&self) -> bool {
        self.c.lipschitz() == 0.0 && self.f.lipschitz() == 0.0
    }

    /// Self-map inputs from the declared bounds, with `m0`, the area,
    /// `H1` of the stop set and `||DN||_{L1}` measured on the grid.
    pub fn self_map_inputs(&self, dg: &DomainGrid, m1: f64) -> Result<SelfMapInputs> {
        let samples = self.domain.sample_points(96, 256);
        Ok(SelfMapInputs {
            m1,
            m2: self.f.sup_bound(),
            m3: self.f.grad_bound(),
            m4: self.u0.sup_bound(),
            m5: self.u0.variation_bound(),
            beta: self.c.beta(),
            m0: self.domain.m0_estimate(&samples, dg.eps_stop)?,
            area: dg.area(),
            h1_sigma: self.domain.time.stop_set().length(),
            dn_l1: estimate_dn_l1(self.domain, dg),
        })
    }

    pub fn self_map_bounds(&self, dg: &DomainGrid, m1: f64) -> Result<SelfMapBounds> {
        compute_self_map_bounds(&self.self_map_inputs(dg, m1)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripePlan {
    pub lambda_max: f64,
    pub h: f64,
    /// `floor(lambda_max / h)`.
    pub count: usize,
    pub final_thickness: f64,
}

/// Smallest stripe thickness used when the contraction constant is too large.
pub const DEFAULT_H_MIN: f64 = 0.05;

impl StripePlan {
    pub fn new(lambda_max: f64, h: f64) -> Result<Self> {
        if !(lambda_max > 0.0 && lambda_max < 1.0) {
            return Err(Error::Config(format!(
                "lambda_max must lie in (0, 1), got {lambda_max}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("stripe thickness must be positive, got {h}")));
        }
        let count = (lambda_max / h).floor() as usize;
        let final_thickness = (lambda_max - count as f64 * h).max(0.0);
        Ok(StripePlan {
            lambda_max,
            h,
            count,
            final_thickness,
        })
    }

    /// Thickness `0.9 / kappa` capped at `lambda_max`, or `h_min` with a warning
    /// when that would be thinner than `h_min`.
    pub fn from_kappa(lambda_max: f64, kappa: f64, h_min: f64) -> Result<Self> {
        let h = if kappa <= 0.0 {
            lambda_max
        } else {
            let ideal = 0.9 / kappa;
            if ideal < h_min {
                warn!(
                    "contraction constant {kappa:.3e} asks for stripes of {ideal:.3e}; \
                     using h = {h_min} and iterating to tolerance"
                );
                h_min
            } else {
                ideal.min(lambda_max)
            }
        };
        StripePlan::new(lambda_max, h)
    }

    /// Stripe intervals `[lo, hi)`; the last one is closed at `lambda_max`.
    pub fn stripes(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.count + 1);
        for l in 0..self.count {
            let lo = l as f64 * self.h;
            let hi = if l + 1 == self.count && self.final_thickness <= 1e-12 {
                self.lambda_max
            } else {
                (l + 1) as f64 * self.h
            };
            out.push((lo, hi));
        }
        if self.final_thickness > 1e-12 {
            out.push((self.count as f64 * self.h, self.lambda_max));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstants {
    pub k_lambda: f64,
    pub big_k_lambda: f64,
    pub c_lambda: f64,
    pub kappa: f64,
    pub beta: f64,
    pub m0: f64,
    pub l1: f64,
    pub l2: f64,
    pub m_star_star: f64,
    pub area: f64,
    pub lambda: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn compute_contraction_constants(
    dets: &[DetSample],
    beta: f64,
    m0: f64,
    l1: f64,
    l2: f64,
    m_star_star: f64,
    area: f64,
    lambda: f64,
) -> Result<ContractionConstants> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidBounds(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let mut k = f64::INFINITY;
    let mut big_k = 0.0f64;
    for d in dets.iter().filter(|d| d.t <= lambda + 1e-12) {
        if !(d.det > 0.0) {
            return Err(Error::CharacteristicCrossing {
                t: d.t,
                s: d.s,
                det: d.det,
            });
        }
        k = k.min(d.det);
        big_k = big_k.max(d.det);
    }
    if !k.is_finite() {
        return Err(Error::InvalidBounds("no determinant samples in [0, lambda]".into()));
    }
    let c_lambda = big_k / (beta * m0 * k);
    // Written so that vanishing Lipschitz constants give exactly zero.
    let kappa = if l1 == 0.0 && l2 == 0.0 {
        0.0
    } else {
        c_lambda * (l2 * area + l1 * m_star_star)
    };
    Ok(ContractionConstants {
        k_lambda: k,
        big_k_lambda: big_k,
        c_lambda,
        kappa,
        beta,
        m0,
        l1,
        l2,
        m_star_star,
        area,
        lambda,
    })
}

/// Determinant samples over `[0, lambda] x period` for the coefficient frozen at
/// each probe argument, pooled.
pub fn determinant_samples(
    problem: &QuasiProblem<'_>,
    probes: &[ScalarGridField],
    lambda: f64,
    nt: usize,
    ns: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<DetSample>> {
    let curve = problem
        .domain
        .boundary
        .as_ref()
        .ok_or_else(|| Error::Config("determinant bounds need a parametrized boundary".into()))?;
    let mut out = Vec::new();
    for v in probes {
        let frozen = problem.c.freeze(v);
        let tracer = Tracer::new(frozen.as_ref(), problem.domain, cfg);
        out.extend(tracer.determinant_lattice(curve.as_ref(), lambda, nt, ns)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StripeInit {
    /// Keep the current iterate's values inside the new stripe.
    FromGuess,
    /// Carry values from the previous stripes along `-c` into the new stripe.
    Extend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasiConfig {
    /// Stop when the `L1` update over the current stripe is at most this.
    pub tol: f64,
    pub max_iterations: usize,
    pub init: StripeInit,
}

impl Default for QuasiConfig {
    fn default() -> Self {
        QuasiConfig {
            tol: 1e-8,
            max_iterations: 200,
            init: StripeInit::Extend,
        }
    }
}

impl QuasiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub stripe: usize,
    pub iteration: usize,
    pub update: f64,
    /// Ratio of this update to the previous one within the stripe.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripeRecord {
    pub stripe: usize,
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub iterations: usize,
    pub final_update: f64,
    /// Largest update ratio seen after the first iteration.
    pub contraction_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub stripes: Vec<StripeRecord>,
    pub iterations: Vec<IterationRecord>,
    pub total_iterations: usize,
    pub kappa: Option<f64>,
    pub wall_time: f64,
}

impl SolveDiagnostics {
    /// CSV with columns `stripe,iteration,update,ratio`; the first iteration of
    /// a stripe has an empty ratio.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["stripe", "iteration", "update", "ratio"],
            self.iterations.iter().map(|r| {
                [
                    r.stripe.to_string(),
                    r.iteration.to_string(),
                    format!("{:e}", r.update),
                    r.ratio.map(|x| format!("{x:e}")).unwrap_or_default(),
                ]
            }),
        )
    }
}

/// Interior cells with `lo <= T0 < hi`, or `lo <= T0 <= hi` when `closed`.
fn stripe_cells(dg: &DomainGrid, lo: f64, hi: f64, closed: bool) -> Vec<usize> {
    dg.interior_cells()
        .filter(|&k| {
            let t = dg.t0[k];
            t >= lo && (t < hi || (closed && t <= hi))
        })
        .collect()
}

/// One application of `U[v]` at the given cells.
pub fn apply_operator(
    problem: &QuasiProblem<'_>,
    v: &ScalarGridField,
    dg: &DomainGrid,
    cfg: &IntegratorConfig,
    cells: &[usize],
) -> Result<Vec<f64>> {
    let c = problem.c.freeze(v);
    let f = problem.f.freeze(v);
    let linear = LinearProblem {
        domain: problem.domain,
        c: c.as_ref(),
        f: f.as_ref(),
        u0: problem.u0,
    };
    solve_cells(&linear, dg, cfg, cells)
}

fn extend_into(v: &mut ScalarGridField, problem: &QuasiProblem<'_>, dg: &DomainGrid, cells: &[usize], lo: f64) {
    let frozen = problem.c.freeze(v);
    let g = dg.grid;
    let step = 0.5 * g.dx().min(g.dy());
    let values: Vec<Option<f64>> = cells
        .iter()
        .map(|&k| {
            let mut p = g.center_of(k);
            let d = frozen.direction(p);
            for _ in 0..4 * (g.nx + g.ny) {
                p = p - d * step;
                let (i, j) = g.cell_of(p)?;
                let kk = g.index(i, j);
                if dg.mask[kk] == CellKind::Exterior {
                    return None;
                }
                if dg.t0[kk] < lo {
                    return Some(v.values[kk]);
                }
            }
            None
        })
        .collect();
    drop(frozen);
    for (k, val) in cells.iter().zip(values) {
        if let Some(val) = val {
            v.values[*k] = val;
        }
    }
}

/// Stripe-marching Picard iteration from the initial guess `guess`.
///
/// Within stripe `l` the iterate outside the stripe is frozen: earlier stripes are
/// final and, by causality, later ones are never read. Coefficients that ignore
/// their argument make `U` constant, so each stripe takes exactly one iteration.
pub fn solve_quasilinear(
    problem: &QuasiProblem<'_>,
    dg: &DomainGrid,
    plan: &StripePlan,
    guess: &ScalarGridField,
    qcfg: &QuasiConfig,
    cfg: &IntegratorConfig,
) -> Result<(ScalarGridField, SolveDiagnostics)> {
    qcfg.validate()?;
    cfg.validate()?;
    if !guess.same_layout(&ScalarGridField::zeros(dg)) {
        return Err(Error::Config("initial guess does not match the grid".into()));
    }
    if plan.lambda_max > 1.0 - dg.eps_stop + 1e-12 {
        return Err(Error::Config(format!(
            "lambda_max {} reaches into the stop-set collar (1 - eps_stop = {})",
            plan.lambda_max,
            1.0 - dg.eps_stop
        )));
    }
    let start = Instant::now();
    let linear = problem.is_linear();
    let area = dg.grid.cell_area();
    let mut v = guess.clone();
    let mut solved = vec![false; dg.grid.len()];
    let mut diag = SolveDiagnostics::default();
    let stripes = plan.stripes();
    let n_stripes = stripes.len();
    for (l, (lo, hi)) in stripes.into_iter().enumerate() {
        let cells = stripe_cells(dg, lo, hi, l + 1 == n_stripes);
        if cells.is_empty() {
            continue;
        }
        if qcfg.init == StripeInit::Extend && l > 0 && !linear {
            extend_into(&mut v, problem, dg, &cells, lo);
        }
        let mut prev_update: Option<f64> = None;
        let mut worst_ratio: Option<f64> = None;
        let mut iteration = 0;
        loop {
            iteration += 1;
            let new = apply_operator(problem, &v, dg, cfg, &cells)?;
            let mut update = 0.0;
            for (k, val) in cells.iter().zip(&new) {
                update += (val - v.values[*k]).abs();
                v.values[*k] = *val;
            }
            update *= area;
            let ratio = prev_update.map(|p| if p > 0.0 { update / p } else { 0.0 });
            if let Some(r) = ratio {
                worst_ratio = Some(worst_ratio.map_or(r, |w: f64| w.max(r)));
            }
            diag.iterations.push(IterationRecord {
                stripe: l,
                iteration,
                update,
                ratio,
            });
            debug!("stripe {l} iteration {iteration}: update {update:e}");
            if linear || update <= qcfg.tol {
                break;
            }
            if iteration >= qcfg.max_iterations {
                return Err(Error::ContractionFailure {
                    stripe: l,
                    iterations: iteration,
                    update,
                    ratio: ratio.unwrap_or(f64::NAN),
                });
            }
            prev_update = Some(update);
        }
        for k in &cells {
            solved[*k] = true;
        }
        diag.total_iterations += iteration;
        diag.stripes.push(StripeRecord {
            stripe: l,
            lo,
            hi,
            cells: cells.len(),
            iterations: iteration,
            final_update: diag.iterations.last().map(|r| r.update).unwrap_or(0.0),
            contraction_ratio: worst_ratio,
        });
    }
    finish(problem, dg, &mut v, &solved);
    diag.wall_time = start.elapsed().as_secs_f64();
    Ok((v, diag))
}

fn finish(problem: &QuasiProblem<'_>, dg: &DomainGrid, v: &mut ScalarGridField, solved: &[bool]) {
    for k in 0..v.values.len() {
        if dg.mask[k] == CellKind::Exterior {
            v.values[k] = 0.0;
        }
    }
    let snapshot = v.clone();
    let frozen = problem.c.freeze(&snapshot);
    fill_unsolved(v, solved, dg, frozen.as_ref());
}

/// Whole-domain Picard iteration `u <- U[u]` on `{T0 <= lambda_max}`.
pub fn global_picard_solve(
    problem: &QuasiProblem<'_>,
    dg: &DomainGrid,
    lambda_max: f64,
    guess: &ScalarGridField,
    qcfg: &QuasiConfig,
    cfg: &IntegratorConfig,
) -> Result<(ScalarGridField, SolveDiagnostics)> {
    qcfg.validate()?;
    cfg.validate()?;
    let start = Instant::now();
    let cells = stripe_cells(dg, 0.0, lambda_max, true);
    let area = dg.grid.cell_area();
    let linear = problem.is_linear();
    let mut v = guess.clone();
    let mut diag = SolveDiagnostics::default();
    let mut prev: Option<f64> = None;
    let mut iteration = 0;
    loop {
        iteration += 1;
        let new = apply_operator(problem, &v, dg, cfg, &cells)?;
        let mut update = 0.0;
        for (k, val) in cells.iter().zip(&new) {
            update += (val - v.values[*k]).abs();
            v.values[*k] = *val;
        }
        update *= area;
        let ratio = prev.map(|p| if p > 0.0 { update / p } else { 0.0 });
        diag.iterations.push(IterationRecord {
            stripe: 0,
            iteration,
            update,
            ratio,
        });
        if linear || update <= qcfg.tol {
            break;
        }
        if iteration >= qcfg.max_iterations {
            return Err(Error::MaxIterations {
                iterations: iteration,
                update,
            });
        }
        prev = Some(update);
    }
    let mut solved = vec![false; dg.grid.len()];
    for k in &cells {
        solved[*k] = true;
    }
    diag.total_iterations = iteration;
    diag.stripes.push(StripeRecord {
        stripe: 0,
        lo: 0.0,
        hi: lambda_max,
        cells: cells.len(),
        iterations: iteration,
        final_update: diag.iterations.last().map(|r| r.update).unwrap_or(0.0),
        contraction_ratio: None,
    });
    finish(problem, dg, &mut v, &solved);
    diag.wall_time = start.elapsed().as_secs_f64();
    Ok((v, diag))
}

/// `||U[v1] - U[v2]||_{L1(Omega_lambda)} / ||v1 - v2||_{L1(Omega_lambda)}` from two linear solves.
pub fn measure_operator_lipschitz(
    problem: &QuasiProblem<'_>,
    v1: &ScalarGridField,
    v2: &ScalarGridField,
    lambda: f64,
    dg: &DomainGrid,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let denom = v1.l1_distance_on(v2, dg, lambda);
    if !(denom > 0.0) {
        return Err(Error::DegeneratePair);
    }
    let cells: Vec<usize> = dg.interior_cells().filter(|&k| dg.t0[k] < lambda).collect();
    let a = apply_operator(problem, v1, dg, cfg, &cells)?;
    let b = apply_operator(problem, v2, dg, cfg, &cells)?;
    let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() * dg.grid.cell_area();
    Ok(num / denom)
}

/// Largest admissible `lambda_max` for a collar width.
pub fn default_lambda_max(eps_stop: f64) -> f64 {
    1.0 - eps_stop
}

impl Default for StripePlan {
    fn default() -> Self {
        StripePlan::new(default_lambda_max(DEFAULT_EPS_STOP), DEFAULT_H_MIN).expect("valid default plan")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::DetSample;
    use crate::fields::{
        CausalAverageField, FnRhs, Independent, PastAverage, PointData, RotatedNormalField, TransportField,
    };
    use crate::grid::Grid;
    use crate::linear::solve_linear;
    use std::sync::Arc;

    #[test]
    fn plan_arithmetic() {
        let p = StripePlan::new(0.9, 0.25).unwrap();
        assert_eq!(p.count, 3);
        assert!((p.final_thickness - 0.15).abs() < 1e-12);
        let s = p.stripes();
        assert_eq!(s.len(), 4);
        assert_eq!(s[3], (0.75, 0.9));
        let exact = StripePlan::new(0.5, 0.25).unwrap();
        assert_eq!(exact.stripes(), vec![(0.0, 0.25), (0.25, 0.5)]);
        assert!(StripePlan::new(1.0, 0.1).is_err());
        assert_eq!(StripePlan::from_kappa(0.9, 1e6, 0.05).unwrap().h, 0.05);
        assert_eq!(StripePlan::from_kappa(0.9, 0.0, 0.05).unwrap().h, 0.9);
    }

    fn radial_dets(lambda: f64) -> Vec<DetSample> {
        (0..=10)
            .map(|i| {
                let t = lambda * i as f64 / 10.0;
                DetSample {
                    t,
                    s: 0.0,
                    det: 2.0 * (1.0 - t).powi(3),
                }
            })
            .collect()
    }

    #[test]
    fn contraction_constant_examples() {
        let c = compute_contraction_constants(&radial_dets(0.5), 1.0, 0.5, 0.0, 0.0, 1.0, 3.0, 0.5).unwrap();
        assert!((c.c_lambda - 16.0).abs() < 1e-12);
        assert_eq!(c.kappa, 0.0);
        let a = compute_contraction_constants(&radial_dets(0.25), 1.0, 0.5, 0.1, 0.1, 1.0, 3.0, 0.25).unwrap();
        let b = compute_contraction_constants(&radial_dets(0.5), 1.0, 0.5, 0.1, 0.1, 1.0, 3.0, 0.5).unwrap();
        assert!(a.kappa <= b.kappa);
        let mut bad = radial_dets(0.5);
        bad[3].det = -1.0;
        assert!(matches!(
            compute_contraction_constants(&bad, 1.0, 0.5, 0.0, 0.0, 1.0, 3.0, 0.5),
            Err(Error::CharacteristicCrossing { .. })
        ));
    }

    fn setup(n: usize) -> (Domain, DomainGrid, IntegratorConfig) {
        let d = Domain::unit_disk(4.0);
        let cfg = IntegratorConfig {
            dt: 0.02,
            eps_stop: 0.02,
            ..Default::default()
        };
        let dg = DomainGrid::new(&d, Grid::square(&d, n), cfg.eps_stop);
        (d, dg, cfg)
    }

    #[test]
    fn linear_reduction_is_exact() {
        let (d, dg, cfg) = setup(40);
        let c = Independent(RotatedNormalField::new(d.time.clone(), 0.3));
        let f = FnRhs::new(1.0, 1.0, |p| p.x.sin());
        let u0 = PointData::new(1.0, 4.0, |p| p.y.cos());
        let q = QuasiProblem {
            domain: &d,
            c: &c,
            f: &f,
            u0: &u0,
        };
        let plan = StripePlan::new(default_lambda_max(cfg.eps_stop), 0.1).unwrap();
        let (u, diag) = solve_quasilinear(
            &q,
            &dg,
            &plan,
            &ScalarGridField::zeros(&dg),
            &QuasiConfig::default(),
            &cfg,
        )
        .unwrap();
        assert!(diag.stripes.iter().all(|s| s.iterations == 1));
        let lin = LinearProblem {
            domain: &d,
            c: &c.0,
            f: &f,
            u0: &u0,
        };
        let reference = solve_linear(&lin, &dg, &cfg).unwrap();
        assert_eq!(u, reference);
        let (g, gdiag) = global_picard_solve(
            &q,
            &dg,
            plan.lambda_max,
            &ScalarGridField::zeros(&dg),
            &QuasiConfig::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(gdiag.total_iterations, 1);
        assert_eq!(g, reference);
    }

    fn causal(d: &Domain, dg: &DomainGrid, eps: f64) -> CausalAverageField {
        let base: Arc<dyn TransportField> = Arc::new(RotatedNormalField::new(d.time.clone(), 0.0));
        CausalAverageField::new(
            base,
            d.time.clone(),
            PastAverage::new(Arc::new(dg.clone()), 0.1, 0.02),
            eps,
        )
    }

    #[test]
    fn causal_problem_converges_and_agrees_with_global_iteration() {
        let (d, dg, cfg) = setup(40);
        let c = causal(&d, &dg, 0.3);
        let f = FnRhs::constant(1.0);
        let u0 = PointData::new(1.0, 4.0, |p| p.x);
        let q = QuasiProblem {
            domain: &d,
            c: &c,
            f: &f,
            u0: &u0,
        };
        let qcfg = QuasiConfig {
            tol: 1e-10,
            ..Default::default()
        };
        let plan = StripePlan::new(0.9, 0.1).unwrap();
        let (u, diag) = solve_quasilinear(&q, &dg, &plan, &ScalarGridField::zeros(&dg), &qcfg, &cfg).unwrap();
        assert!(diag.stripes.iter().all(|s| s.final_update <= qcfg.tol));
        let csv = String::from_utf8(diag.to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().count(), diag.total_iterations + 1);
        let (g, _) = global_picard_solve(&q, &dg, 0.9, &ScalarGridField::constant(&dg, 1.0), &qcfg, &cfg).unwrap();
        assert!(u.l1_distance_on(&g, &dg, 0.9) <= 10.0 * qcfg.tol);
    }

    #[test]
    fn later_values_do_not_influence_earlier_stripes() {
        let (d, dg, cfg) = setup(40);
        let c = causal(&d, &dg, 0.3);
        let f = FnRhs::zero();
        let u0 = PointData::new(1.0, 4.0, |p| p.x);
        let q = QuasiProblem {
            domain: &d,
            c: &c,
            f: &f,
            u0: &u0,
        };
        let early: Vec<usize> = dg.interior_cells().filter(|&k| dg.t0[k] < 0.3).collect();
        let v = ScalarGridField::from_fn(&dg, |p| p.y);
        let mut w = v.clone();
        for k in 0..w.values.len() {
            if dg.t0[k] >= 0.3 {
                w.values[k] += 5.0;
            }
        }
        let a = apply_operator(&q, &v, &dg, &cfg, &early).unwrap();
        let b = apply_operator(&q, &w, &dg, &cfg, &early).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn operator_lipschitz_of_linear_problem_is_zero() {
        let (d, dg, cfg) = setup(24);
        let c = Independent(RotatedNormalField::new(d.time.clone(), 0.0));
        let f = FnRhs::constant(1.0);
        let u0 = PointData::constant(0.0);
        let q = QuasiProblem {
            domain: &d,
            c: &c,
            f: &f,
            u0: &u0,
        };
        let v1 = ScalarGridField::zeros(&dg);
        let v2 = ScalarGridField::constant(&dg, 1.0);
        assert_eq!(measure_operator_lipschitz(&q, &v1, &v2, 0.5, &dg, &cfg).unwrap(), 0.0);
        assert!(matches!(
            measure_operator_lipschitz(&q, &v1, &v1, 0.5, &dg, &cfg),
            Err(Error::DegeneratePair)
        ));
    }
}
