//! Subcommand implementations. Each returns a [`RunReport`]; writing files is left to the caller.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cli::config::{CheckKind, LoadedConfig, RhoResolution};
use crate::cli::report::{RunReport, SolveSummary};
use crate::cli::CliError;
use crate::derivative::d0_operator;
use crate::grid::{rate_for_discrete, GridFunction, TimeGrid};
use crate::material::{
    mult_operator, piecewise_constant_levels, rho0_commutator, sqrt_and_inv_sqrt, MaterialLaw, Regime,
};
use crate::solver::{equivalence_check, march, regime_certificates, wellposedness_certificate, Scenario};
use crate::spatial::{lift_to_spacetime, SpatialOperator, TransportSpec};
use crate::verify::{
    check_adjoint_sum, check_evo_adjoint, check_resolvent_commutation, check_sandwich_adjoint, counterexample_search,
    derive_seed, run_suite, Expectation, SearchOptions, SuiteOptions, TheoremReport,
};

type CliResult<T> = std::result::Result<T, CliError>;

/// Regime certificates followed by the well-posedness margin when they all pass.
fn certify(s: &Scenario, report: &mut RunReport) -> CliResult<bool> {
    let certs = regime_certificates(s)?;
    let hypotheses = certs.iter().all(|c| c.passed);
    report.certificates.extend(certs);
    if hypotheses {
        report.certificates.push(wellposedness_certificate(s)?);
    } else {
        report.notes.push("regime hypotheses failed; well-posedness margin not certified".into());
    }
    Ok(hypotheses)
}

fn filter_checks(report: &mut RunReport, checks: &Option<Vec<CheckKind>>) {
    if let Some(wanted) = checks {
        report.certificates.retain(|c| CheckKind::of_certificate(&c.kind).is_some_and(|k| wanted.contains(&k)));
    }
}

/// Runs the hypothesis certificates and the well-posedness margin.
pub fn cmd_check(cfg: &LoadedConfig, seed: Option<u64>) -> CliResult<RunReport> {
    let built = cfg.build(seed)?;
    let mut report = RunReport::new("check", built.seed, Some(&cfg.source));
    report.rho = Some(built.rho);
    certify(&built.scenario, &mut report)?;
    filter_checks(&mut report, &cfg.config.checks);
    report.passed = report.certificates.iter().all(|c| c.passed);
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub report: RunReport,
    /// Absent when the hypotheses failed and solving was not forced.
    pub solution: Option<GridFunction>,
}

fn solve_scenario(s: &Scenario, mut report: RunReport, force: bool) -> CliResult<SolveOutput> {
    let certs = regime_certificates(s)?;
    let hypotheses = certs.iter().all(|c| c.passed);
    if !hypotheses && !force {
        report.certificates = certs;
        report.notes.push("regime hypotheses failed; refusing to solve (pass --force to solve anyway)".into());
        report.passed = false;
        return Ok(SolveOutput { report, solution: None });
    }
    let solved = march(s)?;
    let equivalence_residual =
        if hypotheses && s.regime() == Regime::Commutator { Some(equivalence_check(s)?) } else { None };
    report.certificates = solved.certificates.clone();
    report.solve = Some(SolveSummary {
        norm_u: solved.norm_u,
        norm_f: solved.norm_f,
        residual: solved.residual,
        c_h: solved.c_h,
        bound_ok: solved.bound_ok,
        causality_residual: solved.causality_residual,
        equivalence_residual,
        max_step_condition: solved.step_conditions.iter().copied().fold(0.0, f64::max),
    });
    report.passed = hypotheses && report.certificates.iter().all(|c| c.passed) && solved.bound_ok;
    Ok(SolveOutput { report, solution: Some(solved.solution) })
}

/// Certifies and marches the configured scenario.
pub fn cmd_solve(cfg: &LoadedConfig, seed: Option<u64>, force: bool) -> CliResult<SolveOutput> {
    let built = cfg.build(seed)?;
    let mut report = RunReport::new("solve", built.seed, Some(&cfg.source));
    report.rho = Some(built.rho);
    solve_scenario(&built.scenario, report, force)
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions<'a> {
    pub config: Option<&'a LoadedConfig>,
    pub suite: bool,
    pub seed: Option<u64>,
    /// Dimension for the counterexample search.
    pub dim: Option<usize>,
}

pub const SEARCH_TRIALS: usize = 100;

/// Theorem residuals over the built-in suite or the operators of one scenario.
pub fn cmd_verify(opts: VerifyOptions<'_>) -> CliResult<RunReport> {
    let mut report = match (opts.suite, opts.config) {
        (true, _) => {
            let seed = opts.seed.unwrap_or(0);
            let mut report = RunReport::new("verify", seed, None);
            let suite = SuiteOptions {
                seed,
                search_dim: opts.dim.unwrap_or(2),
                search_trials: SEARCH_TRIALS,
                ..Default::default()
            };
            report.theorems = run_suite(suite)?;
            report
        }
        (false, Some(cfg)) => {
            let built = cfg.build(opts.seed)?;
            let mut report = RunReport::new("verify", built.seed, Some(&cfg.source));
            report.theorems = scenario_theorems(&built.scenario, built.seed, opts.dim)?;
            report.rho = Some(built.rho);
            report
        }
        (false, None) => return Err(CliError::Usage("verify needs --config or --suite".into())),
    };
    report.passed = report.theorems.iter().all(TheoremReport::ok);
    Ok(report)
}

fn scenario_theorems(s: &Scenario, seed: u64, dim: Option<usize>) -> CliResult<Vec<TheoremReport>> {
    let g = s.grid();
    let m = s.block_dim();
    let cells = s.spatial().cells();
    let d = d0_operator(g, m);
    let a = lift_to_spacetime(&s.spatial().matrix(), g)?;
    let m0 = mult_operator(s.law().m0(), g, cells)?;
    let m1 = mult_operator(s.law().m1(), g, cells)?;
    let mut rows = vec![
        check_adjoint_sum(&d.try_compose(&m0)?.try_add(&m1)?, &a)?.labelled("adjoint_sum/scenario"),
        check_resolvent_commutation(&a, &d)?.labelled("resolvent_commutation/d0_spatial"),
    ];
    if s.regime() == Regime::Commutator {
        let roots =
            s.law().m0().iter().map(|x| sqrt_and_inv_sqrt(x).map(|r| r.0)).collect::<crate::Result<Vec<_>>>()?;
        let sq = mult_operator(&roots, g, cells)?;
        let t = sq.try_compose(&d)?.try_compose(&sq)?;
        let commutes = s.spatial().commutation_certificate(s.law().m0())?.passed;
        let mut r = check_resolvent_commutation(&a, &t)?.labelled("resolvent_commutation/sandwich_spatial");
        if !commutes {
            r.expectation = Expectation::Informational;
            r.notes.push("coupling does not commute with M0; no commutation expected".into());
        }
        rows.push(r);
        rows.push(check_sandwich_adjoint(&sq, &d)?.labelled("sandwich_adjoint/m0_sqrt_d0"));
        if commutes {
            rows.push(check_evo_adjoint(s)?.labelled("evo_adjoint/scenario"));
        }
    }
    let search_dim = dim.unwrap_or(s.law().dim());
    rows.push(counterexample_search(SearchOptions { dim: search_dim, trials: SEARCH_TRIALS, seed, scalar_m0: false })?);
    Ok(rows)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExampleVariant {
    /// Rotation coupling, scalar coefficient.
    #[default]
    Default,
    /// `diag(1/2, 1)` times the rotation; still commutes with scalar coefficients.
    ScaledCoupling,
    /// Independent coefficients per component; breaks commutation with the rotation.
    DiagonalCoefficients,
}

pub const EXAMPLE_CELLS: usize = 16;
pub const EXAMPLE_NODES: usize = 32;
pub const EXAMPLE_JUMPS: usize = 10;

fn rotation(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Transport with rotational boundary coupling and a piecewise-constant coefficient in `[1, 2]`.
pub fn example_scenario(variant: ExampleVariant, seed: u64) -> CliResult<(Scenario, RhoResolution)> {
    let base = TimeGrid::new(0.0, 1.0, EXAMPLE_NODES, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let c1 = piecewise_constant_levels(&base, EXAMPLE_JUMPS, 1.0, 2.0, &mut rng);
    let c2 = match variant {
        ExampleVariant::DiagonalCoefficients => piecewise_constant_levels(&base, EXAMPLE_JUMPS, 1.0, 2.0, &mut rng),
        _ => c1.clone(),
    };
    let m0: Vec<_> =
        c1.iter().zip(&c2).map(|(&a, &b)| DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))).collect();
    let m1 = vec![DMatrix::zeros(2, 2); EXAMPLE_NODES];
    let law = MaterialLaw::new(&base, m0, m1, Regime::Commutator)?.discontinuous().with_lower_bound(1.0)?;

    let coupling = match variant {
        ExampleVariant::ScaledCoupling => {
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0])) * rotation(PI / 3.0)
        }
        _ => rotation(PI / 3.0),
    };
    let spec = TransportSpec::new(EXAMPLE_CELLS, coupling)?;
    let dx = spec.dx();

    let c = 1.0;
    let rho0 = rho0_commutator(&law, c)?;
    let rho = rate_for_discrete(rho0, base.step()).ok_or_else(|| CliError::Invalid {
        field: "example".into(),
        message: format!("rate {rho0} is not reachable on {EXAMPLE_NODES} nodes"),
    })?;
    let grid = base.with_rho(rho)?;
    let forcing = GridFunction::from_fn(&grid, 2 * EXAMPLE_CELLS, |t| {
        let amp = (PI * t).sin().powi(2);
        DVector::from_fn(2 * EXAMPLE_CELLS, |i, _| {
            let x = 2.0 * PI * ((i / 2) as f64 + 0.5) * dx;
            amp * if i % 2 == 0 { x.cos() } else { x.sin() }
        })
    })?;
    let resolution = RhoResolution {
        auto: true,
        rho0: Some(rho0),
        rho,
        discrete_rho: grid.discrete_rho(),
        search: None,
        notes: vec!["rho chosen so that the discrete rate equals rho0".into()],
    };
    Ok((Scenario::new(grid, law, SpatialOperator::Transport(spec), forcing, c)?, resolution))
}

/// Runs the built-in transport example end to end.
pub fn cmd_example(variant: ExampleVariant, seed: Option<u64>) -> CliResult<SolveOutput> {
    let seed = seed.unwrap_or(0);
    let (s, rho) = example_scenario(variant, seed)?;
    let mut report = RunReport::new("example", seed, None);
    report.rho = Some(rho);
    report.notes.push(format!("variant {variant:?}"));
    solve_scenario(&s, report, false)
}
