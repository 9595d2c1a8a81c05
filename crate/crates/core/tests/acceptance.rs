//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use evocert::cli::{cmd_example, cmd_verify, ExampleVariant, VerifyOptions};
use evocert::derivative::d0_operator;
use evocert::material::rho0_commutator;
use evocert::operator::matrix_margin;
use evocert::solver::{march, wellposedness_certificate};
use evocert::spatial::transport_operator;
use evocert::verify::{derive_seed, random_coupling, run_suite, Expectation, SuiteOptions, SUITE_DIMS, SUITE_NODES};
use evocert::{GridFunction, MaterialLaw, Regime, Scenario, SpatialOperator, TimeGrid, TransportSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_scenario, FAMILIES};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn d0_accretivity() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_lower = f64::INFINITY;
    for n in [16, 64, 256] {
        for rho in [0.5, 1.0, 2.0] {
            let g = TimeGrid::new(0.0, 1.0, n, rho).unwrap();
            let h = g.step();
            let margin = d0_operator(&g, 1).accretivity_margin().unwrap().margin;
            let rho_h = (1.0 - (-2.0 * rho * h).exp()) / (2.0 * h);
            worst_lower = worst_lower.min(margin - rho_h);
            if margin < rho_h - 1e-12 {
                failures.push(format!("n={n} rho={rho}: margin {margin:.6} below discrete rate {rho_h:.6}"));
            }
            let err = (margin - rho).abs();
            if err > 2.0 * rho * rho * h {
                failures.push(format!(
                    "n={n} rho={rho}: |margin - rho| = {err:.4e} > 2 rho^2 h = {:.4e}",
                    2.0 * rho * rho * h
                ));
            }
        }
    }
    let detail = format!("min(margin - rho_h) = {worst_lower:.3e}");
    if failures.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, format!("{detail}; {}", failures.join("; ")))
    }
}

fn transport_accretivity() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for d in [1, 2, 3] {
        for cells in [8, 32, 128] {
            for i in 0..50u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(1000 + (d * 1000 + cells) as u64, i));
                let b = random_coupling(&mut rng, d, 0.0, 1.0);
                let a = transport_operator(&TransportSpec::new(cells, b).unwrap());
                worst = worst.min(matrix_margin("a", &a).unwrap().margin);
                count += 1;
            }
        }
    }
    let mut witness = None;
    for i in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(2000, i));
        let target = rng.random_range(1.0..=2.0);
        let b = random_coupling(&mut rng, 2, target, target);
        let spec = TransportSpec::new(32, b.clone()).unwrap();
        let m = matrix_margin("a", &transport_operator(&spec)).unwrap().margin;
        if m < -1e-6 && witness.is_none() {
            witness = Some((i, spec.coupling_norm(), m, b));
        }
    }
    let ok = worst >= -1e-10 && witness.is_some();
    let w = witness
        .map(|(i, nb, m, b)| {
            format!("witness draw {i}: |B| = {nb:.4}, margin {m:.4e}, B = {:?}", b.transpose().as_slice())
        })
        .unwrap_or_else(|| "no witness with margin < -1e-6".into());
    outcome(ok, format!("{count} contractive couplings, worst margin {worst:.3e}; {w}"))
}

fn wellposedness_bound() -> Outcome {
    let mut accepted = 0;
    let mut per_family = [0usize; 4];
    let mut worst_ratio = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut failures = Vec::new();
    let mut seed = 0u64;
    while accepted < 100 && seed < 1000 {
        let family = FAMILIES[(seed % 4) as usize];
        seed += 1;
        let Some(s) = random_scenario(family, seed) else { continue };
        let Ok(report) = march(&s) else { continue };
        let certified = report.hypotheses_passed && report.certificates.iter().all(|c| c.passed);
        let Some(c_h) = report.c_h.filter(|_| certified) else { continue };
        accepted += 1;
        per_family[family as usize] += 1;
        let ratio = report.norm_u * c_h / report.norm_f;
        worst_ratio = worst_ratio.max(ratio);
        worst_residual = worst_residual.max(report.residual / report.norm_f);
        if report.norm_u > report.norm_f / c_h * (1.0 + 1e-9) || report.residual > 1e-10 * report.norm_f {
            failures.push(format!("seed {seed} ({family:?})"));
        }
    }
    let ok = accepted == 100 && failures.is_empty() && per_family.iter().all(|&k| k > 0);
    outcome(
        ok,
        format!(
            "{accepted} certified scenarios (smooth/degenerate/scalar/matrix = {per_family:?}), max c_h|U|/|F| = {worst_ratio:.4}, max residual/|F| = {worst_residual:.2e}{}",
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

fn causality() -> Outcome {
    let mut checked = 0;
    let mut nonzero = Vec::new();
    let mut seed = 5000u64;
    while checked < 20 && seed < 5200 {
        let family = FAMILIES[(seed % 4) as usize];
        seed += 1;
        let Some(s) = random_scenario(family, seed) else { continue };
        let g = s.grid().clone();
        let mut f = s.forcing().clone();
        for k in 0..g.len() {
            if g.node(k) <= 0.5 {
                f.set_block(k, &DVector::zeros(f.block_dim()));
            }
        }
        let s = s.with_forcing(f).unwrap();
        let Ok(report) = march(&s) else { continue };
        checked += 1;
        for k in 0..g.len() {
            if g.node(k) <= 0.5 && report.solution.block(k).iter().any(|&x| x != 0.0) {
                nonzero.push(format!("seed {seed} node {k}"));
            }
        }
    }
    outcome(checked == 20 && nonzero.is_empty(), format!("{checked} scenarios, nonzero early nodes: {}", nonzero.len()))
}

fn ode_scenario(n: usize, f: impl Fn(f64) -> f64) -> Scenario {
    let g = TimeGrid::new(0.0, 1.0, n, 1.0).unwrap();
    let law = MaterialLaw::constant(&g, DMatrix::identity(1, 1), DMatrix::zeros(1, 1), Regime::Lipschitz).unwrap();
    let forcing = GridFunction::from_scalar_fn(&g, f);
    Scenario::new(g, law, SpatialOperator::Zero { dim: 1 }, forcing, 0.5).unwrap()
}

fn convergence_oracle() -> Outcome {
    let mut unit_err = 0.0f64;
    for n in [4, 32, 256] {
        let u = march(&ode_scenario(n, |_| 1.0)).unwrap().solution;
        let g = u.grid().clone();
        for k in 0..n {
            unit_err = unit_err.max((u.values()[k] - g.node(k)).abs() / g.node(k));
        }
    }
    let unit_ok = unit_err <= 4.0 * f64::EPSILON;

    let mut euler_err = 0.0f64;
    let mut errors = Vec::new();
    for n in [32, 64, 128, 256] {
        let u = march(&ode_scenario(n, f64::exp)).unwrap().solution;
        let g = u.grid().clone();
        let h = g.step();
        let mut exact_err = 0.0f64;
        for k in 0..n {
            // u_k = h sum_{j<=k} e^{(j+1)h}
            let euler = h * h.exp() * (((k + 1) as f64 * h).exp_m1() / h.exp_m1());
            euler_err = euler_err.max((u.values()[k] - euler).abs());
            exact_err = exact_err.max((u.values()[k] - g.node(k).exp_m1()).abs());
        }
        errors.push(exact_err);
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let orders_ok = orders.iter().all(|p| (p - 1.0).abs() <= 0.2);
    outcome(
        unit_ok && euler_err <= 1e-12 && orders_ok,
        format!("unit forcing rel. error {unit_err:.2e}; implicit Euler error {euler_err:.2e}; observed orders {orders:.3?}"),
    )
}

fn theorem_residuals() -> Outcome {
    let rows = run_suite(SuiteOptions::default()).unwrap();
    let positive: Vec<_> = rows
        .iter()
        .filter(|r| ["adjoint_sum/", "sandwich_adjoint/", "evo_adjoint/"].iter().any(|p| r.id.starts_with(p)))
        .collect();
    let positive_ok = positive.iter().all(|r| r.passed && r.expectation == Expectation::Pass);
    let coverage = SUITE_DIMS
        .iter()
        .all(|d| SUITE_NODES.iter().all(|n| positive.iter().any(|r| r.id.contains(&format!("dim{d}_n{n}")))));
    let commuting: Vec<_> = rows
        .iter()
        .filter(|r| r.id.starts_with("resolvent_commutation/") && r.expectation == Expectation::Pass)
        .collect();
    let expected_fail: Vec<_> = rows.iter().filter(|r| r.expectation == Expectation::Fail).collect();
    let fail_ok = !expected_fail.is_empty()
        && expected_fail.iter().all(|r| r.residual("resolvent_commutation").is_some_and(|x| x > 1e-8));
    let witness = expected_fail.iter().any(|r| r.id.ends_with("search_witness"));
    let worst_rel = positive
        .iter()
        .flat_map(|r| r.residuals.iter().filter(|x| x.gating))
        .map(|x| x.value / x.tolerance)
        .fold(0.0, f64::max);
    let ok =
        positive.len() >= 100 && positive_ok && coverage && commuting.iter().all(|r| r.passed) && fail_ok && witness;
    outcome(
        ok,
        format!(
            "{} positive instances (max residual/tolerance {worst_rel:.2e}), {} commuting resolvent rows, {} expected-fail rows (search witness: {witness})",
            positive.len(),
            commuting.len(),
            expected_fail.len()
        ),
    )
}

fn rho0_formulas() -> Outcome {
    let law_on = |g: &TimeGrid| {
        MaterialLaw::constant(
            g,
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Regime::Commutator,
        )
        .unwrap()
        .with_lower_bound(1.0)
        .unwrap()
    };
    let margin_at = |rho: f64| {
        let g = TimeGrid::new(0.0, 1.0, 64, rho).unwrap();
        let s = Scenario::new(g.clone(), law_on(&g), SpatialOperator::Zero { dim: 2 }, GridFunction::zeros(&g, 2), 1.0)
            .unwrap();
        wellposedness_certificate(&s).unwrap()
    };
    let g = TimeGrid::new(0.0, 1.0, 64, 1.0).unwrap();
    let rho0 = rho0_commutator(&law_on(&g), 1.0).unwrap();
    let above = margin_at(1.5 + 0.01);
    let below = margin_at(0.5);
    outcome(
        (rho0 - 1.5).abs() <= 1e-12 && above.passed && !below.passed,
        format!("rho0 = {rho0:.15}; margin at 1.51 = {:.4}, at 0.5 = {:.4} (target 1)", above.margin, below.margin),
    )
}

fn transport_example() -> Outcome {
    let out = cmd_example(ExampleVariant::Default, None).unwrap();
    let r = &out.report;
    let certs_ok = !r.certificates.is_empty() && r.certificates.iter().all(|c| c.passed);
    let Some(s) = &r.solve else { return outcome(false, "example did not solve") };
    let eq = s.equivalence_residual.unwrap_or(f64::INFINITY);
    let ok = certs_ok && out.solution.is_some() && s.bound_ok && eq <= 1e-9 * s.norm_f && s.causality_residual == 0.0;
    outcome(
        ok,
        format!(
            "{} certificates passed, c_h = {:.4}, |U|_W = {:.4e} <= |F|_W / c_h = {:.4e}, equivalence residual {:.2e}",
            r.certificates.len(),
            s.c_h.unwrap_or(f64::NAN),
            s.norm_u,
            s.norm_f / s.c_h.unwrap_or(f64::NAN),
            eq
        ),
    )
}

fn determinism() -> Outcome {
    let run = || cmd_verify(VerifyOptions { config: None, suite: true, seed: Some(42), dim: None }).unwrap().stamped();
    let a = run();
    std::thread::sleep(Duration::from_millis(1100));
    let b = run();
    let (ha, hb) = (a.payload_hash().unwrap(), b.payload_hash().unwrap());
    outcome(ha == hb && a.passed, format!("payload hash {}", &ha[..16]))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("discrete time-derivative accretivity", d0_accretivity, Duration::from_secs(5)),
        ("transport m-accretivity", transport_accretivity, Duration::from_secs(30)),
        ("well-posedness bound", wellposedness_bound, Duration::from_secs(60)),
        ("causality", causality, Duration::from_secs(10)),
        ("convergence oracle", convergence_oracle, Duration::from_secs(5)),
        ("theorem residuals", theorem_residuals, Duration::from_secs(60)),
        ("rho0 formulas", rho0_formulas, Duration::from_secs(5)),
        ("transport example end-to-end", transport_example, Duration::from_secs(30)),
        ("determinism", determinism, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let passed = out.passed && in_time;
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} ({:.2}s of {}s) {}{}",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            out.detail,
            if in_time { "" } else { " [over time budget]" }
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
