use std::fs;
use std::path::Path;

use chartrans::fields::{audit_causality_condition, audit_functional_causality, Coefficient};
use chartrans::inpainting::{inpaint, GrayImage, InpaintMask};
use chartrans::io::csv_bytes;
use chartrans::linear::{solve_linear, LinearProblem};
use chartrans::presets::{build_preset, Oracle, Problem};
use chartrans::quasilinear::solve_quasilinear;
use chartrans::verification::{random_smooth_field, run_suite};
use chartrans::{Error, Point2, ScalarGridField};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_AUDIT: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn audit(message: String) -> Self {
        Failure {
            code: EXIT_AUDIT,
            message,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_audit() {
            EXIT_AUDIT
        } else {
            match e {
                Error::Config(_) | Error::Pgm { .. } | Error::GridFormat(_) | Error::Io(_) | Error::Json(_) => {
                    EXIT_CONFIG
                }
                _ => EXIT_SOLVER,
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub type Outcome = std::result::Result<(), Failure>;

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Outcome {
    fs::write(dir.join(name), bytes).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("cannot write {}: {e}", dir.join(name).display()),
    })
}

fn prepare_out(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("cannot create output directory {}: {e}", dir.display()),
    })
}

/// Writes `u.bin`, `u.pgm` and `norms.csv`.
fn write_solution(dir: &Path, u: &ScalarGridField, problem: &Problem) -> Outcome {
    let mut bin = Vec::new();
    u.write_binary(&mut bin)?;
    write(dir, "u.bin", &bin)?;
    let mut pgm = Vec::new();
    u.write_pgm(&mut pgm)?;
    write(dir, "u.pgm", &pgm)?;
    let norms = u.norms();
    let mut rows = vec![
        ["l1".to_string(), format!("{:e}", norms.l1)],
        ["linf".to_string(), format!("{:e}", norms.linf)],
        ["tv".to_string(), format!("{:e}", norms.tv)],
    ];
    if let Some(oracle) = &problem.oracle {
        let (max_err, l1_err) = oracle_errors(u, problem, oracle);
        rows.push(["oracle_max_error".into(), format!("{max_err:e}")]);
        rows.push(["oracle_l1_error".into(), format!("{l1_err:e}")]);
        info!("error against the exact solution: max {max_err:.3e}, L1 {l1_err:.3e}");
    }
    write(dir, "norms.csv", &csv_bytes(&["quantity", "value"], rows)?)
}

fn oracle_errors(u: &ScalarGridField, problem: &Problem, oracle: &Oracle) -> (f64, f64) {
    let dg = problem.grid.as_ref();
    let mut max_err: f64 = 0.0;
    let mut l1 = 0.0;
    for k in dg.interior_cells() {
        let e = (u.values[k] - oracle(dg.grid.center_of(k))).abs();
        max_err = max_err.max(e);
        l1 += e * dg.grid.cell_area();
    }
    (max_err, l1)
}

fn random_probes(problem: &Problem, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point2> {
    let b = problem.domain.bbox;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point2::new(rng.gen_range(b.min.x..b.max.x), rng.gen_range(b.min.y..b.max.y));
        if (problem.domain.inside)(p) {
            out.push(p);
        }
    }
    out
}

/// Checks `<c[v], N> >= beta` at lattice samples and writes `audit.csv`.
fn beta_audit(problem: &Problem, v: &ScalarGridField, cfg: &RunConfig) -> Outcome {
    let frozen = problem.c.freeze(v);
    let samples = problem.domain.sample_points(64, 256);
    let audit = audit_causality_condition(
        frozen.as_ref(),
        problem.c.beta(),
        &problem.domain,
        &samples,
        cfg.integrator.eps_stop,
    );
    write(&cfg.out, "audit.csv", &audit.to_csv()?)?;
    if !audit.passed() {
        return Err(Failure::audit(format!(
            "causality condition fails at {} of {} samples (min <c, N> = {:.4}, declared beta = {}); see {}",
            audit.violations.len(),
            audit.rows.len(),
            audit.min_dot,
            audit.beta,
            cfg.out.join("audit.csv").display()
        )));
    }
    Ok(())
}

pub fn solve_linear_cmd(cfg: &RunConfig) -> Outcome {
    cfg.validate()?;
    let problem = build_preset(&cfg.preset, cfg.grid, cfg.integrator.eps_stop)?;
    if !problem.is_linear() {
        return Err(Error::Config(format!(
            "preset '{}' has argument-dependent coefficients; use solve-quasilinear",
            cfg.preset
        ))
        .into());
    }
    prepare_out(&cfg.out)?;
    let zeros = ScalarGridField::zeros(&problem.grid);
    beta_audit(&problem, &zeros, cfg)?;
    let c = problem.c.freeze(&zeros);
    let f = problem.f.freeze(&zeros);
    let linear = LinearProblem {
        domain: &problem.domain,
        c: c.as_ref(),
        f: f.as_ref(),
        u0: problem.u0.as_ref(),
    };
    let u = solve_linear(&linear, &problem.grid, &cfg.integrator)?;
    write_solution(&cfg.out, &u, &problem)?;
    println!(
        "solved {} on {}x{}; outputs in {}",
        cfg.preset,
        cfg.grid,
        cfg.grid,
        cfg.out.display()
    );
    Ok(())
}

pub fn solve_quasilinear_cmd(cfg: &RunConfig) -> Outcome {
    cfg.validate()?;
    let problem = build_preset(&cfg.preset, cfg.grid, cfg.integrator.eps_stop)?;
    prepare_out(&cfg.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v = random_smooth_field(&problem.grid, problem.u0.sup_bound().max(1.0), rng.gen());
    beta_audit(&problem, &ScalarGridField::zeros(&problem.grid), cfg)?;
    beta_audit(&problem, &v, cfg)?;
    let probes = random_probes(&problem, 100, &mut rng);
    let time = problem.domain.time.as_ref();
    let audits = [
        ("causality_c.csv", Coefficient::Field(problem.c.as_ref())),
        ("causality_f.csv", Coefficient::Rhs(problem.f.as_ref())),
    ];
    for (file, coefficient) in audits {
        let audit = audit_functional_causality(coefficient, &v, &problem.grid, time, &probes);
        write(&cfg.out, file, &audit.to_csv()?)?;
        if !audit.passed() {
            return Err(Failure::audit(format!(
                "coefficient is not functionally causal: discrepancy {:.3e} at {} probes; see {}",
                audit.max_discrepancy,
                audit.rows.iter().filter(|r| r.violation).count(),
                cfg.out.join(file).display()
            )));
        }
    }
    let quasi = problem.as_quasi();
    let bounds = quasi.self_map_bounds(&problem.grid, problem.m1)?;
    let qcfg = cfg.quasi(bounds.m_star);
    qcfg.validate()?;
    let plan = cfg.plan()?;
    let zeros = ScalarGridField::zeros(&problem.grid);
    let (u, diag) = solve_quasilinear(&quasi, &problem.grid, &plan, &zeros, &qcfg, &cfg.integrator)?;
    write_solution(&cfg.out, &u, &problem)?;
    write(&cfg.out, "diagnostics.csv", &diag.to_csv()?)?;
    println!(
        "solved {} on {}x{}: {} stripes, {} Picard iterations (tol {:.3e}); outputs in {}",
        cfg.preset,
        cfg.grid,
        cfg.grid,
        diag.stripes.len(),
        diag.total_iterations,
        qcfg.tol,
        cfg.out.display()
    );
    Ok(())
}

pub fn verify_cmd(suite: &str, cfg: &RunConfig) -> Outcome {
    cfg.validate()?;
    let reports = run_suite(suite, &cfg.suite)?;
    prepare_out(&cfg.out)?;
    let mut rows = Vec::new();
    for r in &reports {
        write(&cfg.out, &format!("{}.csv", r.name), &r.to_csv()?)?;
        write(&cfg.out, &format!("{}_scalars.csv", r.name), &r.scalars_csv()?)?;
        print!("{}", r.summary());
        rows.push([r.name.clone(), (if r.passed() { "pass" } else { "fail" }).to_string()]);
    }
    write(&cfg.out, "summary.csv", &csv_bytes(&["report", "status"], rows)?)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        println!("all {} reports passed", reports.len());
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("failed reports: {}", failed.join(", ")),
        })
    }
}

pub fn inpaint_cmd(image: &Path, mask: &Path, truth: Option<&Path>, cfg: &RunConfig) -> Outcome {
    cfg.validate()?;
    let img = GrayImage::read_pgm(image)?;
    let mask = InpaintMask::read_pgm(mask)?;
    let truth = truth.map(GrayImage::read_pgm).transpose()?;
    let result = inpaint(&img, &mask, &cfg.inpaint)?;
    prepare_out(&cfg.out)?;
    result.image.write_pgm(&cfg.out.join("inpainted.pgm"))?;
    write(&cfg.out, "diagnostics.csv", &result.diagnostics.to_csv()?)?;
    let mut rows = vec![["damaged_pixels".to_string(), mask.damaged_count().to_string()]];
    if let Some(truth) = truth {
        if (truth.width, truth.height) != (img.width, img.height) {
            return Err(Error::Config("reference image size differs from the input".into()).into());
        }
        let mae = result.image.hole_mae(&truth, &mask);
        rows.push(["hole_mae".into(), format!("{mae:e}")]);
        println!("mean absolute error over the hole: {mae:.4}");
    }
    write(&cfg.out, "metrics.csv", &csv_bytes(&["quantity", "value"], rows)?)?;
    println!(
        "filled {} pixels in {} Picard iterations; output in {}",
        mask.damaged_count(),
        result.diagnostics.total_iterations,
        cfg.out.join("inpainted.pgm").display()
    );
    Ok(())
}
