use std::sync::Arc;

use varexp_core::inequalities::{
    decade_truncations, figure1_profiles, poincare_failure_run, run_suite, Counterexample, CounterexampleSpec,
    DivergenceCertificate, SuiteConfig,
};
use varexp_core::io::{self, Manifest};
use varexp_core::mesh::{build_mesh_hierarchy, Domain, MeshLevel};
use varexp_core::models::{
    adversarial_flux, check_growth_coercivity, check_lower_order, check_monotone, default_lower_order,
    prototype_flux, FluxModel, LowerOrderMode,
};
use varexp_core::solver::{
    default_q, galerkin_convergence_study, l2_space_time_error, manufactured_solution, manufactured_source,
    run_galerkin, InitialFn, ProblemSpec, VectorFn,
};
use varexp_core::tensor::SymTensor2;
use varexp_core::Result;

use crate::config::{Command, FluxKind, InitialSpec, RunConfig, SourceSpec};

/// What a command produced: its manifest and whether every pass flag held.
pub struct Outcome {
    pub manifest: Manifest,
    pub pass: bool,
    pub summary: Vec<String>,
}

pub fn run(c: &RunConfig) -> Result<Outcome> {
    std::fs::create_dir_all(&c.output_dir)?;
    let mut out = Outcome {
        manifest: Manifest::new(),
        pass: true,
        summary: Vec::new(),
    };
    match c.command {
        Command::Solve => solve(c, &mut out)?,
        Command::VerifyStructure => verify_structure(c, &mut out)?,
        Command::Inequalities => inequalities(c, &mut out)?,
        Command::Counterexample => counterexample(c, &mut out)?,
        Command::Convergence => convergence(c, &mut out)?,
    }
    out.manifest.write(&c.output_dir)?;
    Ok(out)
}

fn flux(c: &RunConfig, p: &varexp_core::exponent::ExponentField) -> Result<FluxModel> {
    match c.flux {
        FluxKind::Prototype => prototype_flux(p, c.delta),
        FluxKind::Adversarial => Ok(adversarial_flux(p)),
    }
}

fn problem(c: &RunConfig) -> Result<ProblemSpec> {
    let p = c.exponent.build(c.domain, c.t_final)?;
    let lower = default_lower_order(&p, c.eps_star, c.kappa, c.lower)?;
    let q = match c.q {
        Some(q) => q.build(c.domain, c.t_final)?,
        None => default_q(&p, lower.eps_star())?,
    };
    let f_source: VectorFn = match c.source {
        SourceSpec::Zero => Arc::new(|_, _| [0.0, 0.0]),
        SourceSpec::Manufactured => {
            let kappa = if c.lower == LowerOrderMode::LinearDamping { c.kappa } else { 0.0 };
            Arc::new(manufactured_source(kappa))
        }
    };
    let (centre, width) = match c.domain {
        Domain::UnitSquare => ([0.5, 0.5], 1.0),
        Domain::Disk { radius } => ([0.0, 0.0], radius),
    };
    let u0: InitialFn = match c.u0 {
        InitialSpec::Zero => Arc::new(|_| [0.0, 0.0]),
        InitialSpec::Manufactured => Arc::new(|x| manufactured_solution(0.0, x)),
        InitialSpec::Gaussian(a) => Arc::new(move |x| {
            let r2 = ((x[0] - centre[0]).powi(2) + (x[1] - centre[1]).powi(2)) / (width * width);
            let g = a * (-20.0 * r2).exp();
            [g, -0.5 * g]
        }),
    };
    ProblemSpec::new(flux(c, &p)?, lower, f_source, Arc::new(|_, _| SymTensor2::ZERO), u0, c.t_final, q)
}

fn hierarchy(c: &RunConfig) -> Result<Vec<Arc<MeshLevel>>> {
    build_mesh_hierarchy(c.domain, c.levels + 1)
}

fn solve(c: &RunConfig, out: &mut Outcome) -> Result<()> {
    let spec = problem(c)?;
    let h = hierarchy(c)?;
    let run = run_galerkin(&spec, &h[c.levels], c.steps, &c.newton)?;
    let path = c.output_dir.join("energy.csv");
    out.manifest.record(&path, io::write_energy(&path, &run.ledger)?);
    for (k, (u, &t)) in run.state.trajectory.iter().zip(&run.state.time_grid).enumerate() {
        if k % c.stride == 0 || k == c.steps {
            let path = c.output_dir.join(format!("snapshot_{k:05}.csv"));
            out.manifest.record(&path, io::write_snapshot(&path, u, t)?);
        }
    }
    out.pass = run.ledger.passes(c.tol_energy);
    let newton_max = run.newton.iter().map(|s| s.iterations).max().unwrap_or(0);
    out.summary.push(format!(
        "level {} ({} dofs), {} steps, max Newton iterations {newton_max}, min energy slack {:.3e}",
        c.levels,
        h[c.levels].n_dofs(),
        c.steps,
        run.ledger.min_slack()
    ));
    if c.source == SourceSpec::Manufactured && c.u0 == InitialSpec::Manufactured {
        let err = l2_space_time_error(&run.state, manufactured_solution);
        out.summary.push(format!("L2(Q_T) error against the manufactured solution {err:.6e}"));
    }
    Ok(())
}

fn verify_structure(c: &RunConfig, out: &mut Outcome) -> Result<()> {
    let p = c.exponent.build(c.domain, c.t_final)?;
    let s = flux(c, &p)?;
    let b = default_lower_order(&p, c.eps_star, c.kappa, c.lower)?;
    let (s2, s3) = check_growth_coercivity(&s, c.samples, c.seed);
    let s4 = check_monotone(&s, c.samples, c.seed.wrapping_add(1));
    let (b2, b3) = check_lower_order(&b, c.samples, c.seed.wrapping_add(2));
    let reports = [s2, s3, s4, b2, b3];
    let path = c.output_dir.join("conditions.csv");
    out.manifest.record(&path, io::write_conditions(&path, &reports)?);
    out.pass = reports.iter().all(|r| r.passes());
    for r in &reports {
        out.summary.push(format!(
            "{:?}: worst slack {:.3e} over {} samples{}",
            r.id,
            r.worst_slack,
            r.samples,
            if r.passes() { "" } else { " (violated)" }
        ));
    }
    Ok(())
}

fn inequalities(c: &RunConfig, out: &mut Outcome) -> Result<()> {
    let cfg = SuiteConfig {
        seed: c.seed,
        calibration: c.calibration,
        validation: c.validation,
        ..SuiteConfig::default()
    };
    let reports = run_suite(c.suite, &cfg)?;
    for r in &reports {
        let path = c.output_dir.join(format!("{}.csv", r.name));
        out.manifest.record(&path, io::write_inequality_report(&path, r)?);
        out.summary.push(r.to_string());
    }
    out.pass = reports.iter().all(|r| r.pass);
    Ok(())
}

fn counterexample(c: &RunConfig, out: &mut Outcome) -> Result<()> {
    let ce = Counterexample::analytic(CounterexampleSpec::default())?;
    let rows = poincare_failure_run(&ce, &decade_truncations(c.truncations))?;
    let path = c.output_dir.join("counterexample.csv");
    out.manifest.record(&path, io::write_counterexample(&path, &rows)?);
    let path = c.output_dir.join("figure1.csv");
    out.manifest.record(&path, io::write_figure1(&path, &figure1_profiles(&ce, c.profile_points))?);
    if rows.len() >= 2 {
        let cert = DivergenceCertificate::from_rows(&rows);
        out.summary.push(format!(
            "modular of u grows by {:.4?} per decade (A ln 10 with A = {:.4}, max deviation {:.1}%)",
            cert.u_increments,
            cert.a_fit,
            100.0 * cert.max_relative_deviation
        ));
        let grad: Vec<String> = cert.grad_increments.iter().map(|d| format!("{d:.3e}")).collect();
        out.summary.push(format!("modular of grad u grows by [{}] per decade", grad.join(", ")));
    }
    Ok(())
}

fn convergence(c: &RunConfig, out: &mut Outcome) -> Result<()> {
    let spec = problem(c)?;
    let h = hierarchy(c)?;
    let steps: Vec<usize> = (1..=c.levels).map(|l| c.steps >> (c.levels - l)).collect();
    let report = galerkin_convergence_study(&spec, &h[1..=c.levels], &steps, &c.newton)?;
    let path = c.output_dir.join("convergence.csv");
    out.manifest.record(&path, io::write_convergence(&path, &report)?);
    out.pass = report.bounded && report.differences_non_increasing && report.rows.iter().all(|r| r.energy_ok);
    for r in &report.rows {
        out.summary.push(format!(
            "level {} / {} steps: proxy norm {:.6e}, L2 difference to the next level {}",
            r.level,
            r.steps,
            r.proxy_norm,
            r.l2_diff.map(|d| format!("{d:.3e}")).unwrap_or_else(|| "-".into())
        ));
    }
    out.summary.push(format!(
        "bound {:.3e}: bounded {}, differences non-increasing {}",
        report.bound, report.bounded, report.differences_non_increasing
    ));
    Ok(())
}
