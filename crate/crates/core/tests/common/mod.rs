#![allow(dead_code)]

use evocert::grid::rate_for_discrete;
use evocert::material::{piecewise_constant_levels, rho0_lipschitz};
use evocert::verify::{derive_seed, random_coupling, random_matrix, random_spd};
use evocert::{GridFunction, MaterialLaw, Regime, Scenario, SpatialOperator, TimeGrid, TransportSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    SmoothLipschitz,
    DegenerateLipschitz,
    ScalarCommutator,
    MatrixCommutator,
}

pub const FAMILIES: [Family; 4] =
    [Family::SmoothLipschitz, Family::DegenerateLipschitz, Family::ScalarCommutator, Family::MatrixCommutator];

fn spatial(rng: &mut ChaCha8Rng, dim: usize) -> SpatialOperator {
    if rng.random_bool(0.5) {
        SpatialOperator::Zero { dim }
    } else {
        let cells = rng.random_range(2..=4);
        SpatialOperator::Transport(TransportSpec::new(cells, random_coupling(rng, dim, 0.1, 1.0)).unwrap())
    }
}

fn forcing(rng: &mut ChaCha8Rng, grid: &TimeGrid, block: usize) -> GridFunction {
    GridFunction::from_fn(grid, block, |_| DVector::from_fn(block, |_, _| rng.random_range(-1.0..1.0))).unwrap()
}

/// Smallest rate on a coarse ladder passing the positivity condition, lifted so that the
/// discrete rate reaches it.
fn lipschitz_rate(law: &MaterialLaw, c: f64, h: f64) -> Option<f64> {
    let ladder: Vec<f64> = (1..=120).map(|i| 0.25 * i as f64).collect();
    let found = rho0_lipschitz(law, c, &ladder).ok()?.rho?;
    rate_for_discrete(found, h)
}

/// A seeded scenario of the given family on `(0, 1]`. `None` when no admissible rate exists.
pub fn random_scenario(family: Family, seed: u64) -> Option<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, family as u64));
    let n = rng.random_range(8..=16);
    let base = TimeGrid::new(0.0, 1.0, n, 0.0).unwrap();
    let h = base.step();
    let c = 0.5;
    let (law, spatial) = match family {
        Family::SmoothLipschitz => {
            let dim = rng.random_range(1..=3);
            let s0 = random_spd(&mut rng, dim, 1.0, 2.0);
            let s1 = random_spd(&mut rng, dim, -0.5, 0.5);
            let m0: Vec<_> = base.nodes().iter().map(|t| &s0 + &s1 * *t).collect();
            let m1: Vec<_> = (0..n).map(|_| random_matrix(&mut rng, dim, dim) * 0.5).collect();
            let prime = vec![s1.clone(); n];
            let law = MaterialLaw::new(&base, m0, m1, Regime::Lipschitz).unwrap().with_derivative(prime).unwrap();
            (law, spatial(&mut rng, dim))
        }
        Family::DegenerateLipschitz => {
            let m0 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
            let off = rng.random_range(-0.5..0.5);
            let m1 =
                DMatrix::from_row_slice(2, 2, &[rng.random_range(-1.0..1.0), off, -off, rng.random_range(1.0..2.0)]);
            let law = MaterialLaw::constant(&base, m0, m1, Regime::Lipschitz).unwrap();
            (law, spatial(&mut rng, 2))
        }
        Family::ScalarCommutator => {
            let dim = rng.random_range(1..=3);
            let levels = piecewise_constant_levels(&base, rng.random_range(1..=6), 1.0, 2.0, &mut rng);
            let m0: Vec<_> = levels.iter().map(|l| DMatrix::identity(dim, dim) * *l).collect();
            let m1: Vec<_> = (0..n).map(|_| random_matrix(&mut rng, dim, dim) * 0.5).collect();
            let law = MaterialLaw::new(&base, m0, m1, Regime::Commutator)
                .unwrap()
                .discontinuous()
                .with_lower_bound(1.0)
                .unwrap();
            (law, spatial(&mut rng, dim))
        }
        Family::MatrixCommutator => {
            let dim = rng.random_range(1..=3);
            let m0: Vec<_> = (0..n).map(|_| random_spd(&mut rng, dim, 1.0, 3.0)).collect();
            let m1: Vec<_> = (0..n).map(|_| random_matrix(&mut rng, dim, dim) * 0.5).collect();
            let law = MaterialLaw::new(&base, m0, m1, Regime::Commutator)
                .unwrap()
                .discontinuous()
                .with_lower_bound(1.0)
                .unwrap();
            (law, SpatialOperator::Zero { dim })
        }
    };
    let rho = match family {
        Family::SmoothLipschitz | Family::DegenerateLipschitz => lipschitz_rate(&law, c, h)?,
        _ => rate_for_discrete((c + law.sandwiched_m1_norm().ok()?) / law.d_low()? * 1.05, h)?,
    };
    let grid = base.with_rho(rho).unwrap();
    let f = forcing(&mut rng, &grid, spatial.block_dim());
    Some(Scenario::new(grid, law, spatial, f, c).unwrap())
}
