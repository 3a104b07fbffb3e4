use std::sync::Arc;

use chartrans::characteristics::{IntegratorConfig, Tracer};
use chartrans::fields::{scale_by_time, CurveData, FnRhs, PointData, RotatedNormalField};
use chartrans::geometry::{BoundaryCurve, Circle, DEFAULT_EPS_STOP};
use chartrans::inpainting::{squared_distance_transform, GrayImage, InpaintMask};
use chartrans::io::{parse_pgm, write_pgm};
use chartrans::linear::{solve_point, LinearProblem};
use chartrans::presets::build_preset;
use chartrans::quasilinear::StripePlan;
use chartrans::verification::{perturb, PerturbationSpec};
use chartrans::{Domain, DomainGrid, Grid, Point2, ScalarGridField};
use proptest::prelude::*;

fn disk_point(r_max: f64) -> impl Strategy<Value = Point2> {
    (0.0..r_max, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| Point2::new(r * a.cos(), r * a.sin()))
}

fn ellipse_point() -> impl Strategy<Value = Point2> {
    (0.0..0.97f64, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| Point2::new(r * a.cos(), 0.6 * r * a.sin()))
}

fn small_grid_field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transformed_time_is_monotone_in_t(a in ellipse_point(), b in ellipse_point()) {
        let d = Domain::ellipse(1.0, 0.6, 4.0).unwrap();
        let (ta, tb) = (d.time.value(a), d.time.value(b));
        let (sa, sb) = (d.transformed_time(a).unwrap(), d.transformed_time(b).unwrap());
        prop_assert!((0.0..=1.0).contains(&sa));
        if ta < tb {
            prop_assert!(sa <= sb);
        }
    }

    #[test]
    fn gradient_of_transformed_time_matches_differences(p in disk_point(0.9), q in 2.0..5.0f64) {
        prop_assume!(p.norm() > 0.15);
        let d = Domain::unit_disk(q);
        let g = d.grad_transformed_time(p, DEFAULT_EPS_STOP).unwrap();
        let h = 1e-6;
        let t = |x: Point2| d.transformed_time(x).unwrap();
        let fd = Point2::new(
            (t(p + Point2::new(h, 0.0)) - t(p - Point2::new(h, 0.0))) / (2.0 * h),
            (t(p + Point2::new(0.0, h)) - t(p - Point2::new(0.0, h))) / (2.0 * h),
        );
        prop_assert!((g - fd).norm() <= 1e-4 * g.norm().max(1.0));
    }

    #[test]
    fn normal_field_has_unit_length(p in ellipse_point()) {
        let d = Domain::ellipse(1.0, 0.6, 4.0).unwrap();
        if let Ok(n) = d.normal_field(p, DEFAULT_EPS_STOP) {
            prop_assert!((n.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn past_sets_are_nested(l1 in 0.0..1.0f64, l2 in 0.0..1.0f64) {
        let d = Domain::unit_disk(4.0);
        let dg = DomainGrid::new(&d, Grid::square(&d, 24), DEFAULT_EPS_STOP);
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let (a, b) = (dg.past_flags(lo), dg.past_flags(hi));
        prop_assert!(a.iter().zip(&b).all(|(x, y)| !*x || *y));
    }

    #[test]
    fn masking_the_past_is_idempotent(values in small_grid_field(16), lambda in 0.0..1.0f64) {
        let d = Domain::unit_disk(4.0);
        let dg = DomainGrid::new(&d, Grid::square(&d, 16), DEFAULT_EPS_STOP);
        let mut v = ScalarGridField::zeros(&dg);
        v.values = values;
        let once = v.mask_past(&dg.t0, lambda);
        let twice = once.mask_past(&dg.t0, lambda);
        prop_assert_eq!(&once, &twice);
        for (k, t) in dg.t0.iter().enumerate() {
            if *t >= lambda {
                prop_assert_eq!(once.values[k], 0.0);
            }
        }
    }

    #[test]
    fn causal_field_has_unit_speed(values in small_grid_field(16), p in disk_point(0.9)) {
        let problem = build_preset("disk-causal-eps0.1", 16, DEFAULT_EPS_STOP).unwrap();
        let mut v = ScalarGridField::zeros(&problem.grid);
        v.values = values;
        let frozen = problem.c.freeze(&v);
        prop_assert!((frozen.direction(p).norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn scaled_speed_is_bounded(values in small_grid_field(16), p in disk_point(0.95)) {
        let problem = build_preset("disk-causal-eps0.1", 16, DEFAULT_EPS_STOP).unwrap();
        let mut v = ScalarGridField::zeros(&problem.grid);
        v.values = values;
        let frozen = problem.c.freeze(&v);
        let time = problem.domain.time.as_ref();
        let Ok((c0, _)) = scale_by_time(frozen.as_ref(), None, time, p, DEFAULT_EPS_STOP) else {
            return Ok(());
        };
        let m0 = 2.0 / problem.domain.q();
        prop_assert!(c0.norm() <= 1.0 / (m0 * problem.c.beta()) + 1e-9);
    }

    #[test]
    fn forward_traces_keep_time(s in 0.0..std::f64::consts::TAU, angle in -0.8..0.8f64, t in 0.05..0.9f64) {
        let d = Domain::unit_disk(4.0);
        let field = RotatedNormalField::new(d.time.clone(), angle);
        let cfg = IntegratorConfig::with_dt(1e-2);
        let tracer = Tracer::new(&field, &d, &cfg);
        let curve = tracer.trace_forward(&Circle::unit(), s, t).unwrap();
        for (ts, p) in &curve.samples {
            prop_assert!((d.transformed_time(*p).unwrap() - ts).abs() <= cfg.tau_time);
        }
        let beta = angle.cos();
        let m0 = 0.5;
        prop_assert!(curve.arc_length() <= t / (m0 * beta) + 1e-6);
    }

    #[test]
    fn backward_trace_returns_to_the_start(s in 0.0..std::f64::consts::TAU, angle in -0.8..0.8f64, t in 0.05..0.9f64) {
        let d = Domain::unit_disk(4.0);
        let field = RotatedNormalField::new(d.time.clone(), angle);
        let cfg = IntegratorConfig::with_dt(1e-2);
        let tracer = Tracer::new(&field, &d, &cfg);
        let circle = Circle::unit();
        let x = tracer.forward_point(&circle, s, t).unwrap();
        let back = tracer.trace_backward(x).unwrap();
        prop_assert!(back.end().distance(circle.point(s)) <= 1e-5);
    }

    #[test]
    fn homogeneous_solution_obeys_maximum_principle(p in disk_point(0.95), k in 1.0..4.0f64, angle in -0.8..0.8f64) {
        let d = Domain::unit_disk(4.0);
        let field = RotatedNormalField::new(d.time.clone(), angle);
        let data = CurveData::new(Arc::new(Circle::unit()), Arc::new(move |s: f64| (k * s).cos()), vec![], 1e-5);
        let f = FnRhs::zero();
        let problem = LinearProblem { domain: &d, c: &field, f: &f, u0: &data };
        let cfg = IntegratorConfig::with_dt(1e-2);
        let u = solve_point(&problem, &cfg, p).unwrap();
        prop_assert!(u.abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn linear_solution_is_linear_in_data(p in disk_point(0.9), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let d = Domain::unit_disk(4.0);
        let field = RotatedNormalField::new(d.time.clone(), 0.4);
        let cfg = IntegratorConfig::with_dt(1e-2);
        let solve = |alpha: f64, beta: f64| {
            let u0 = PointData::new(1.0, 1.0, move |x: Point2| alpha * x.x + beta * x.y * x.y);
            let f = FnRhs::new(1.0, 1.0, move |x: Point2| alpha * x.y.sin() + beta);
            let problem = LinearProblem { domain: &d, c: &field, f: &f, u0: &u0 };
            solve_point(&problem, &cfg, p).unwrap()
        };
        let combined = solve(a, b);
        let separate = a * solve(1.0, 0.0) + b * solve(0.0, 1.0);
        prop_assert!((combined - separate).abs() <= 1e-9 * (1.0 + combined.abs()));
    }

    #[test]
    fn stripes_cover_the_plan(lambda in 0.1..0.999f64, h in 0.01..0.5f64) {
        let plan = StripePlan::new(lambda, h).unwrap();
        let stripes = plan.stripes();
        prop_assert_eq!(stripes.len(), plan.count + usize::from(plan.final_thickness > 1e-12));
        prop_assert_eq!(stripes[0].0, 0.0);
        prop_assert!((stripes.last().unwrap().1 - lambda).abs() <= 1e-12);
        for w in stripes.windows(2) {
            prop_assert_eq!(w[0].1, w[1].0);
        }
        for (lo, hi) in &stripes {
            prop_assert!(hi > lo && hi - lo <= h + 1e-12);
        }
    }

    #[test]
    fn distance_transform_matches_brute_force(bits in prop::collection::vec(prop::bool::weighted(0.15), 12 * 9)) {
        let (w, h) = (12, 9);
        prop_assume!(bits.iter().any(|b| *b));
        let d = squared_distance_transform(&bits, w, h);
        for r in 0..h {
            for c in 0..w {
                let mut best = f64::INFINITY;
                for rr in 0..h {
                    for cc in 0..w {
                        if bits[rr * w + cc] {
                            let dr = r as f64 - rr as f64;
                            let dc = c as f64 - cc as f64;
                            best = best.min(dr * dr + dc * dc);
                        }
                    }
                }
                prop_assert_eq!(d[r * w + c], best);
            }
        }
    }

    #[test]
    fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let pixels: Vec<u8> = (0..w * h).map(|k| (seed.wrapping_mul(k as u64 + 7) >> 13) as u8).collect();
        let mut buf = Vec::new();
        write_pgm(&mut buf, w, h, &pixels).unwrap();
        let (w2, h2, p2) = parse_pgm(&buf).unwrap();
        prop_assert_eq!((w2, h2), (w, h));
        prop_assert_eq!(&p2, &pixels);
        let image = GrayImage::from_bytes(w, h, &pixels).unwrap();
        prop_assert_eq!(image.to_bytes(), pixels);
    }

    #[test]
    fn grid_binary_round_trip(values in small_grid_field(12)) {
        let d = Domain::unit_disk(4.0);
        let dg = DomainGrid::new(&d, Grid::square(&d, 12), DEFAULT_EPS_STOP);
        let mut v = ScalarGridField::zeros(&dg);
        v.values = values;
        let mut buf = Vec::new();
        v.write_binary(&mut buf).unwrap();
        let back = ScalarGridField::read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn rectangular_holes_are_valid(x0 in 1usize..10, y0 in 1usize..10, w in 1usize..8, h in 1usize..8) {
        let (width, height) = (20, 20);
        let bytes: Vec<u8> = (0..width * height)
            .map(|k| {
                let (c, r) = (k % width, k / width);
                if (x0..x0 + w).contains(&c) && (y0..y0 + h).contains(&r) { 0 } else { 255 }
            })
            .collect();
        let mask = InpaintMask::from_bytes(width, height, &bytes).unwrap();
        prop_assert!(mask.validate().is_ok());
        prop_assert_eq!(mask.damaged_count(), w * h);
    }

    #[test]
    fn zero_field_and_source_perturbation_leave_them_unchanged(p in disk_point(0.9), delta in 0.0..0.2f64, seed in any::<u64>()) {
        let problem = build_preset("disk-spiral", 16, DEFAULT_EPS_STOP).unwrap();
        let spec = PerturbationSpec { delta_u0: delta, delta_f: 0.0, delta_c: 0.0, seed };
        let (perturbed, waves) = perturb(&problem, &spec);
        let v = ScalarGridField::zeros(&problem.grid);
        prop_assert_eq!(perturbed.c.freeze(&v).direction(p), problem.c.freeze(&v).direction(p));
        prop_assert_eq!(perturbed.f.freeze(&v).value(p), problem.f.freeze(&v).value(p));
        let b = Point2::new(p.x, p.y) / p.norm().max(1e-12);
        prop_assume!(p.norm() > 1e-6);
        let diff = perturbed.u0.value_at(b).unwrap() - problem.u0.value_at(b).unwrap();
        prop_assert!((diff - delta * waves[0].at(b)).abs() <= 1e-12);
    }
}

#[test]
fn m0_matches_two_over_q_on_the_disk() {
    for q in [2.0, 3.0, 4.0] {
        let d = Domain::unit_disk(q);
        let m0 = d.m0_estimate(&d.sample_points(64, 256), DEFAULT_EPS_STOP).unwrap();
        assert!((m0 - 2.0 / q).abs() <= 1e-6, "q {q}: m0 {m0}");
    }
}
