//! Assembly, causal time marching and well-posedness certificates for
//! `(D M0 + M1 + A) U = F`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{weighted_norm_raw, GridFunction, TimeGrid};
use crate::linalg;
use crate::material::{check_pos_def_condition, sqrt_and_inv_sqrt, MaterialLaw, Regime};
use crate::operator::{Certificate, SpaceTimeOperator};
use crate::spatial::SpatialOperator;

/// Relative slack in the a-priori bound `||U|| <= ||F|| / c_h`.
pub const BOUND_SLACK: f64 = 1e-9;
/// Step matrices with a larger 1-norm condition estimate are treated as singular.
pub const MAX_STEP_CONDITION: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct Scenario {
    grid: TimeGrid,
    law: MaterialLaw,
    spatial: SpatialOperator,
    forcing: GridFunction,
    c: f64,
}

impl Scenario {
    pub fn new(
        grid: TimeGrid,
        law: MaterialLaw,
        spatial: SpatialOperator,
        forcing: GridFunction,
        c: f64,
    ) -> Result<Self> {
        spatial.validate()?;
        if law.len() != grid.len() {
            return Err(Error::SampleCountMismatch { expected: grid.len(), found: law.len() });
        }
        if law.dim() != spatial.dim() {
            return Err(Error::DimensionMismatch { expected: law.dim(), found: spatial.dim() });
        }
        if forcing.block_dim() != spatial.block_dim() {
            return Err(Error::DimensionMismatch { expected: spatial.block_dim(), found: forcing.block_dim() });
        }
        let forcing = if forcing.grid() == &grid { forcing } else { forcing.reweighted(&grid)? };
        Ok(Self { grid, law, spatial, forcing, c })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn law(&self) -> &MaterialLaw {
        &self.law
    }

    pub fn spatial(&self) -> &SpatialOperator {
        &self.spatial
    }

    pub fn forcing(&self) -> &GridFunction {
        &self.forcing
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn regime(&self) -> Regime {
        self.law.regime()
    }

    pub fn block_dim(&self) -> usize {
        self.spatial.block_dim()
    }

    pub fn with_forcing(&self, forcing: GridFunction) -> Result<Self> {
        Self::new(self.grid.clone(), self.law.clone(), self.spatial.clone(), forcing, self.c)
    }

    fn cells(&self) -> usize {
        self.spatial.cells()
    }

    fn expanded(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::repeat_block(m, self.cells())
    }

    /// Per-node `(M0^1/2, M0^-1/2)`, expanded over cells.
    fn m0_roots(&self) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
        self.law
            .m0()
            .iter()
            .map(|m| sqrt_and_inv_sqrt(m).map(|(s, si)| (self.expanded(&s), self.expanded(&si))))
            .collect()
    }
}

/// `D blockdiag(M0) + blockdiag(M1) + I_t (x) A_h`.
pub fn assemble(s: &Scenario) -> Result<SpaceTimeOperator> {
    let inv_h = 1.0 / s.grid.step();
    let a = s.spatial.matrix();
    let m0: Vec<_> = s.law.m0().iter().map(|m| s.expanded(m)).collect();
    let m1: Vec<_> = s.law.m1().iter().map(|m| s.expanded(m)).collect();
    bidiagonal_operator(s, |k| &m0[k] * inv_h + &m1[k] + &a, |k| -&m0[k - 1] * inv_h)
}

/// Block lower-bidiagonal operator from its diagonal and sub-diagonal blocks.
fn bidiagonal_operator(
    s: &Scenario,
    diag: impl Fn(usize) -> DMatrix<f64>,
    sub: impl Fn(usize) -> DMatrix<f64>,
) -> Result<SpaceTimeOperator> {
    let m = s.block_dim();
    let n = s.grid.len();
    let mut out = DMatrix::zeros(n * m, n * m);
    for k in 0..n {
        out.view_mut((k * m, k * m), (m, m)).copy_from(&diag(k));
        if k > 0 {
            out.view_mut((k * m, (k - 1) * m), (m, m)).copy_from(&sub(k));
        }
    }
    SpaceTimeOperator::new(out, &s.grid, m)
}

/// Applies the assembled operator block by block, without forming it.
pub fn apply_assembled(s: &Scenario, u: &GridFunction) -> Result<GridFunction> {
    if u.block_dim() != s.block_dim() || u.grid().len() != s.grid.len() {
        return Err(Error::DimensionMismatch { expected: s.block_dim(), found: u.block_dim() });
    }
    let inv_h = 1.0 / s.grid.step();
    let a = s.spatial.matrix();
    let mut out = GridFunction::zeros(&s.grid, s.block_dim());
    let mut prev = DVector::zeros(s.block_dim());
    for k in 0..s.grid.len() {
        let uk = u.block(k);
        let cur = s.expanded(&s.law.m0()[k]) * &uk;
        let val = (&cur - &prev) * inv_h + s.expanded(&s.law.m1()[k]) * &uk + &a * &uk;
        out.set_block(k, &val);
        prev = cur;
    }
    Ok(out)
}

/// `M0^1/2 D M0^1/2 + M0^1/2 M1 M0^-1/2 + A`; commutator regime only.
pub fn sandwich_operator(s: &Scenario) -> Result<SpaceTimeOperator> {
    check_commutator_hypotheses(s)?;
    let (diag, sub) = sandwich_blocks(s)?;
    bidiagonal_operator(s, |k| diag[k].clone(), |k| sub[k].clone())
}

/// Diagonal and sub-diagonal blocks of a block lower-bidiagonal operator (`sub[0]` is unused).
type BidiagonalBlocks = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Blocks of the sandwiched operator.
fn sandwich_blocks(s: &Scenario) -> Result<BidiagonalBlocks> {
    let inv_h = 1.0 / s.grid.step();
    let a = s.spatial.matrix();
    let roots = s.m0_roots()?;
    let m1: Vec<_> = s.law.m1().iter().map(|m| s.expanded(m)).collect();
    let diag =
        (0..roots.len()).map(|k| &roots[k].0 * &roots[k].0 * inv_h + &roots[k].0 * &m1[k] * &roots[k].1 + &a).collect();
    let sub = (0..roots.len())
        .map(|k| if k == 0 { DMatrix::zeros(0, 0) } else { -(&roots[k].0 * &roots[k - 1].0) * inv_h })
        .collect();
    Ok((diag, sub))
}

fn check_commutator_hypotheses(s: &Scenario) -> Result<()> {
    if s.regime() != Regime::Commutator {
        return Err(Error::HypothesisFailed(Box::new(
            Certificate::new("commutator_regime", 0.0, 1.0).with_note("scenario is in the Lipschitz regime"),
        )));
    }
    let d_low = s.law.d_low().ok_or(Error::MissingLowerBound)?;
    let lower = s.law.lower_bound_certificate(d_low)?;
    if !lower.passed {
        return Err(Error::HypothesisFailed(Box::new(lower)));
    }
    let comm = s.spatial.commutation_certificate(s.law.m0())?;
    if !comm.passed {
        return Err(Error::HypothesisFailed(Box::new(comm)));
    }
    Ok(())
}

/// Hypothesis certificates of the scenario's regime, evaluated with discrete constants.
pub fn regime_certificates(s: &Scenario) -> Result<Vec<Certificate>> {
    let mut certs = vec![s.spatial.accretivity_certificate()?];
    match s.regime() {
        Regime::Lipschitz => {
            let rho_h = s.grid.discrete_rho();
            let cert = check_pos_def_condition(&s.law, rho_h, s.c)?
                .with_note(format!("evaluated at discrete rate rho_h = {rho_h}"));
            certs.push(cert);
        }
        Regime::Commutator => {
            let d_low = s.law.d_low().ok_or(Error::MissingLowerBound)?;
            certs.push(s.law.lower_bound_certificate(d_low)?);
            certs.push(s.spatial.commutation_certificate(s.law.m0())?);
        }
    }
    Ok(certs)
}

fn margin_certificate(s: &Scenario) -> Result<Certificate> {
    let (kind, op) = match s.regime() {
        Regime::Lipschitz => ("wellposedness_lipschitz", assemble(s)?),
        Regime::Commutator => ("wellposedness_commutator", sandwich_operator(s)?),
    };
    let mut cert = op.accretivity_margin()?.with_threshold(s.c);
    cert.kind = kind.into();
    Ok(cert.with_note(format!("discrete rho_h = {}", s.grid.discrete_rho())).with_note("closure trivialized"))
}

/// Accretivity margin of the assembled (Lipschitz) or sandwiched (commutator) operator
/// against the target `c`, after the regime hypotheses pass.
pub fn wellposedness_certificate(s: &Scenario) -> Result<Certificate> {
    for cert in regime_certificates(s)? {
        if !cert.passed {
            return Err(Error::HypothesisFailed(Box::new(cert)));
        }
    }
    margin_certificate(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: GridFunction,
    pub norm_u: f64,
    pub norm_f: f64,
    /// `||assemble(s) U - F||_W`.
    pub residual: f64,
    /// Constant in `||U||_W <= ||F||_W / c_h`, when one is certified.
    pub c_h: Option<f64>,
    pub bound_ok: bool,
    pub causality_residual: f64,
    pub step_conditions: Vec<f64>,
    pub hypotheses_passed: bool,
    pub certificates: Vec<Certificate>,
}

/// Forward substitution for a block lower-bidiagonal system with diagonal blocks
/// `diag(k)` and sub-diagonal blocks `sub(k)` (coupling node `k - 1` into node `k`).
fn march_bidiagonal(
    rhs: &GridFunction,
    diag: impl Fn(usize) -> DMatrix<f64>,
    sub: impl Fn(usize) -> DMatrix<f64>,
) -> Result<(GridFunction, Vec<f64>)> {
    let n = rhs.grid().len();
    let mut u = GridFunction::zeros(rhs.grid(), rhs.block_dim());
    let mut conditions = Vec::with_capacity(n);
    let mut prev: Option<DVector<f64>> = None;
    for k in 0..n {
        let kk = diag(k);
        let inv = linalg::try_inverse(&kk).ok_or(Error::StepSingular { node: k, condition: f64::INFINITY })?;
        let condition = linalg::condition_1(&kk, &inv);
        if !(condition <= MAX_STEP_CONDITION) {
            return Err(Error::StepSingular { node: k, condition });
        }
        conditions.push(condition);
        let mut b = rhs.block(k);
        if let Some(p) = &prev {
            b -= sub(k) * p;
        }
        let x = kk.lu().solve(&b).ok_or(Error::StepSingular { node: k, condition })?;
        u.set_block(k, &x);
        prev = Some(x);
    }
    Ok((u, conditions))
}

/// Solves the plain system by marching:
/// `(M0_k/h + M1_k + A_h) u_k = f_k + M0_{k-1} u_{k-1} / h`.
pub fn forward_solve(s: &Scenario) -> Result<(GridFunction, Vec<f64>)> {
    forward_solve_rhs(s, &s.forcing)
}

fn forward_solve_rhs(s: &Scenario, rhs: &GridFunction) -> Result<(GridFunction, Vec<f64>)> {
    let inv_h = 1.0 / s.grid.step();
    let a = s.spatial.matrix();
    let m0: Vec<_> = s.law.m0().iter().map(|m| s.expanded(m)).collect();
    let m1: Vec<_> = s.law.m1().iter().map(|m| s.expanded(m)).collect();
    march_bidiagonal(rhs, |k| &m0[k] * inv_h + &m1[k] + &a, |k| -&m0[k - 1] * inv_h)
}

/// Solves the sandwiched system `S V = M0^1/2 F` by marching.
pub fn forward_solve_sandwich(s: &Scenario) -> Result<(GridFunction, Vec<f64>)> {
    check_commutator_hypotheses(s)?;
    let roots = s.m0_roots()?;
    let (diag, sub) = sandwich_blocks(s)?;
    let rhs = scale_blocks(&s.forcing, roots.iter().map(|r| &r.0));
    march_bidiagonal(&rhs, |k| diag[k].clone(), |k| sub[k].clone())
}

fn scale_blocks<'a>(u: &GridFunction, blocks: impl Iterator<Item = &'a DMatrix<f64>>) -> GridFunction {
    let mut out = u.clone();
    for (k, b) in blocks.enumerate() {
        out.set_block(k, &(b * u.block(k)));
    }
    out
}

/// Dense LU solve of the assembled space-time system; a cross-check for [`forward_solve`].
pub fn space_time_solve(s: &Scenario) -> Result<GridFunction> {
    assemble(s)?.solve(&s.forcing)
}

/// Marches the scenario and certifies the a-priori bound when the regime allows it.
pub fn march(s: &Scenario) -> Result<SolveReport> {
    let (u, step_conditions) = forward_solve(s)?;
    let g = &s.grid;
    let m = s.block_dim();
    let norm_u = weighted_norm_raw(u.values(), g, m);
    let norm_f = weighted_norm_raw(s.forcing.values(), g, m);
    let residual = weighted_norm_raw(&(apply_assembled(s, &u)?.into_values() - s.forcing.values()), g, m);

    let causality_residual = causality_residual(s, &u)?;

    let mut certificates = regime_certificates(s)?;
    let hypotheses_passed = certificates.iter().all(|c| c.passed);
    let c_h = match s.regime() {
        Regime::Lipschitz => {
            let cert = margin_certificate(s)?;
            let c = cert.margin;
            certificates.push(cert);
            (c > 0.0).then_some(c)
        }
        Regime::Commutator if hypotheses_passed => {
            let cert = margin_certificate(s)?;
            let c = cert.margin;
            certificates.push(cert);
            let kappa = m0_condition(s.law.m0())?;
            (c > 0.0).then(|| c / kappa.sqrt())
        }
        Regime::Commutator => None,
    };
    let bound_ok = c_h.is_some_and(|c| norm_u <= norm_f / c * (1.0 + BOUND_SLACK));
    Ok(SolveReport {
        solution: u,
        norm_u,
        norm_f,
        residual,
        c_h,
        bound_ok,
        causality_residual,
        step_conditions,
        hypotheses_passed,
        certificates,
    })
}

/// `max_k lambda_max(M0_k) / min_k lambda_min(M0_k)`.
fn m0_condition(m0: &[DMatrix<f64>]) -> Result<f64> {
    let mut hi = 0.0f64;
    let mut lo = f64::INFINITY;
    for m in m0 {
        hi = hi.max(linalg::max_eigenvalue(m)?);
        lo = lo.min(linalg::min_eigenvalue(m)?);
    }
    Ok(hi / lo)
}

/// Re-marches with the forcing cut off after the middle node and reports the largest
/// deviation on the retained prefix. Exactly zero for a causal scheme.
fn causality_residual(s: &Scenario, u: &GridFunction) -> Result<f64> {
    let n = s.grid.len();
    let cut = n / 2;
    let mut truncated = s.forcing.clone();
    let zero = DVector::zeros(s.block_dim());
    for k in cut..n {
        truncated.set_block(k, &zero);
    }
    let (v, _) = forward_solve_rhs(s, &truncated)?;
    Ok((0..cut).map(|k| (u.block(k) - v.block(k)).amax()).fold(0.0, f64::max))
}

/// `||M0^1/2 U_plain - V_sandwich||_W`.
pub fn equivalence_check(s: &Scenario) -> Result<f64> {
    let (v, _) = forward_solve_sandwich(s)?;
    let (u, _) = forward_solve(s)?;
    let roots = s.m0_roots()?;
    let su = scale_blocks(&u, roots.iter().map(|r| &r.0));
    Ok(weighted_norm_raw(&(su.into_values() - v.into_values()), &s.grid, s.block_dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivative::d0_operator;
    use crate::grid::weighted_norm;
    use crate::material::{mult_operator, rho0_commutator};
    use crate::spatial::{lift_to_spacetime, TransportSpec};

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn scalar_scenario(n: usize, rho: f64, f: impl Fn(f64) -> f64) -> Scenario {
        let g = TimeGrid::new(0.0, 1.0, n, rho).unwrap();
        let law = MaterialLaw::constant(&g, diag(&[1.0]), diag(&[0.0]), Regime::Lipschitz).unwrap();
        let forcing = GridFunction::from_scalar_fn(&g, f);
        Scenario::new(g, law, SpatialOperator::Zero { dim: 1 }, forcing, 0.1).unwrap()
    }

    #[test]
    fn assemble_reduces_to_d0() {
        let s = scalar_scenario(5, 1.0, |_| 1.0);
        let a = assemble(&s).unwrap();
        assert_eq!(a.matrix(), d0_operator(s.grid(), 1).matrix());
    }

    fn transport_scenario() -> Scenario {
        let g = TimeGrid::new(0.0, 1.0, 6, 0.7).unwrap();
        let m0: Vec<_> = (0..6).map(|k| DMatrix::identity(2, 2) * (1.0 + 0.2 * (k % 3) as f64)).collect();
        let m1: Vec<_> = (0..6).map(|k| DMatrix::from_row_slice(2, 2, &[0.1 * k as f64, 0.3, -0.2, 0.5])).collect();
        let law = MaterialLaw::new(&g, m0, m1, Regime::Commutator).unwrap().with_lower_bound(1.0).unwrap();
        let spec = TransportSpec::new(3, DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0])).unwrap();
        Scenario::new(g.clone(), law, SpatialOperator::Transport(spec), GridFunction::zeros(&g, 6), 1.0).unwrap()
    }

    #[test]
    fn blockwise_assembly_matches_dense_products() {
        let s = transport_scenario();
        let g = s.grid();
        let d = d0_operator(g, 6);
        let m0 = mult_operator(s.law().m0(), g, 3).unwrap();
        let m1 = mult_operator(s.law().m1(), g, 3).unwrap();
        let a = lift_to_spacetime(&s.spatial().matrix(), g).unwrap();
        let dense = &(&(&d * &m0) + &m1) + &a;
        assert!((assemble(&s).unwrap().matrix() - dense.matrix()).amax() < 1e-13);

        let roots: Vec<_> = s.law().m0().iter().map(|m| sqrt_and_inv_sqrt(m).unwrap()).collect();
        let sq = mult_operator(&roots.iter().map(|r| r.0.clone()).collect::<Vec<_>>(), g, 3).unwrap();
        let isq = mult_operator(&roots.iter().map(|r| r.1.clone()).collect::<Vec<_>>(), g, 3).unwrap();
        let dense = &(&(&(&sq * &d) * &sq) + &(&(&sq * &m1) * &isq)) + &a;
        assert!((sandwich_operator(&s).unwrap().matrix() - dense.matrix()).amax() < 1e-13);
    }

    #[test]
    fn algebraic_limit_is_identity() {
        let g = TimeGrid::new(0.0, 1.0, 4, 1.0).unwrap();
        let law = MaterialLaw::constant(&g, diag(&[0.0, 0.0]), diag(&[1.0, 1.0]), Regime::Lipschitz).unwrap();
        let f = GridFunction::zeros(&g, 2);
        let s = Scenario::new(g, law, SpatialOperator::Zero { dim: 2 }, f, 0.5).unwrap();
        assert_eq!(assemble(&s).unwrap().matrix(), &DMatrix::identity(8, 8));
    }

    #[test]
    fn ode_with_unit_forcing_reproduces_nodes() {
        let s = scalar_scenario(4, 1.0, |_| 1.0);
        let r = march(&s).unwrap();
        assert_eq!(r.solution.values().as_slice(), &[0.25, 0.5, 0.75, 1.0]);
        assert!(r.bound_ok);
        assert_eq!(r.causality_residual, 0.0);
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let s = scalar_scenario(6, 1.0, |_| 0.0);
        let r = march(&s).unwrap();
        assert_eq!(r.solution.values().amax(), 0.0);
    }

    #[test]
    fn late_forcing_leaves_prefix_untouched() {
        let s = scalar_scenario(10, 1.0, |t| if t > 0.5 { t.exp() } else { 0.0 });
        let r = march(&s).unwrap();
        for k in 0..10 {
            if s.grid().node(k) <= 0.5 {
                assert_eq!(r.solution.values()[k], 0.0);
            }
        }
    }

    #[test]
    fn march_matches_space_time_solve() {
        let g = TimeGrid::new(0.0, 1.0, 6, 1.2).unwrap();
        let m0: Vec<_> = g.nodes().iter().map(|&t| diag(&[1.0 + t, 0.0])).collect();
        let m1: Vec<_> = g.nodes().iter().map(|&t| DMatrix::from_row_slice(2, 2, &[0.2, t, -t, 1.0])).collect();
        let law = MaterialLaw::new(&g, m0, m1, Regime::Lipschitz).unwrap();
        let spatial = SpatialOperator::Transport(TransportSpec::new(3, diag(&[0.5, -0.9])).unwrap());
        let f = GridFunction::from_fn(&g, 6, |t| DVector::from_fn(6, |i, _| (t * (i + 1) as f64).sin())).unwrap();
        let s = Scenario::new(g, law, spatial, f, 0.1).unwrap();
        let (u, _) = forward_solve(&s).unwrap();
        let v = space_time_solve(&s).unwrap();
        assert!((u.values() - v.values()).amax() < 1e-11);
        let au = assemble(&s).unwrap().apply(&u).unwrap();
        assert!((au.values() - apply_assembled(&s, &u).unwrap().values()).amax() < 1e-11);
        let r = march(&s).unwrap();
        assert!(r.residual <= 1e-10 * r.norm_f);
    }

    #[test]
    fn degenerate_m0_margin() {
        for rho in [1.0, 2.0, 3.0] {
            let g = TimeGrid::new(0.0, 1.0, 8, rho).unwrap();
            let law = MaterialLaw::constant(&g, diag(&[1.0, 0.0]), diag(&[0.0, 1.0]), Regime::Lipschitz).unwrap();
            let f = GridFunction::from_fn(&g, 2, |t| DVector::from_vec(vec![1.0, t])).unwrap();
            let s = Scenario::new(g.clone(), law, SpatialOperator::Zero { dim: 2 }, f, 0.1).unwrap();
            let cert = wellposedness_certificate(&s).unwrap();
            assert!(cert.margin >= g.discrete_rho().min(1.0) - 1e-10);
            let r = march(&s).unwrap();
            assert!(r.bound_ok);
        }
    }

    #[test]
    fn unit_law_margin_matches_discrete_rate() {
        let s = scalar_scenario(4, 1.0, |_| 1.0);
        let cert = wellposedness_certificate(&s).unwrap();
        assert!(cert.margin >= 0.786);
    }

    #[test]
    fn singular_step_is_reported() {
        let g = TimeGrid::new(0.0, 1.0, 4, 1.0).unwrap();
        let law = MaterialLaw::constant(&g, diag(&[1.0, 0.0]), DMatrix::zeros(2, 2), Regime::Lipschitz).unwrap();
        let f = GridFunction::zeros(&g, 2);
        let s = Scenario::new(g, law, SpatialOperator::Zero { dim: 2 }, f, 0.1).unwrap();
        assert!(matches!(march(&s), Err(Error::StepSingular { node: 0, .. })));
    }

    #[test]
    fn perturbing_m1_shifts_margin() {
        let g = TimeGrid::new(0.0, 1.0, 6, 1.0).unwrap();
        let m0: Vec<_> = g.nodes().iter().map(|&t| diag(&[1.0 + t * t, 2.0])).collect();
        let m1 = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -0.3, 0.2]);
        let eps = 0.37;
        let make = |m1: DMatrix<f64>| {
            let law = MaterialLaw::new(&g, m0.clone(), vec![m1; 6], Regime::Lipschitz).unwrap();
            Scenario::new(g.clone(), law, SpatialOperator::Zero { dim: 2 }, GridFunction::zeros(&g, 2), 0.0).unwrap()
        };
        let a = margin_certificate(&make(m1.clone())).unwrap().margin;
        let b = margin_certificate(&make(m1 + DMatrix::identity(2, 2) * eps)).unwrap().margin;
        assert!((b - a - eps).abs() < 1e-10);
    }

    fn commutator_scenario(m0: DMatrix<f64>, m1: DMatrix<f64>, rho: f64, d_low: f64) -> Scenario {
        let g = TimeGrid::new(0.0, 1.0, 16, rho).unwrap();
        let d = m0.nrows();
        let law = MaterialLaw::constant(&g, m0, m1, Regime::Commutator).unwrap().with_lower_bound(d_low).unwrap();
        let f = GridFunction::from_fn(&g, d, |t| DVector::from_element(d, (3.0 * t).cos())).unwrap();
        Scenario::new(g, law, SpatialOperator::Zero { dim: d }, f, 1.0).unwrap()
    }

    #[test]
    fn sandwich_trivializes_for_identity_m0() {
        let m1 = DMatrix::from_row_slice(2, 2, &[0.1, 2.0, 0.0, -0.4]);
        let s = commutator_scenario(DMatrix::identity(2, 2), m1, 1.0, 1.0);
        let sw = sandwich_operator(&s).unwrap();
        assert!((sw.matrix() - assemble(&s).unwrap().matrix()).amax() < 1e-12);
        assert!(equivalence_check(&s).unwrap() <= 1e-12);
    }

    #[test]
    fn sandwich_with_scalar_m0() {
        let s = commutator_scenario(DMatrix::identity(1, 1) * 4.0, DMatrix::zeros(1, 1), 1.0, 4.0);
        let sw = sandwich_operator(&s).unwrap();
        let expected = d0_operator(s.grid(), 1).scaled(4.0);
        assert!((sw.matrix() - expected.matrix()).amax() < 1e-12);
        let cert = wellposedness_certificate(&s).unwrap();
        assert!(cert.margin >= 4.0 * s.grid().discrete_rho() - 1e-10);
        assert!(equivalence_check(&s).unwrap() <= 1e-11);
    }

    #[test]
    fn sandwich_margin_obeys_discrete_lemma_bound() {
        let m1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        for rho in [0.5, 1.0, 2.0] {
            let s = commutator_scenario(diag(&[1.0, 4.0]), m1.clone(), rho, 1.0);
            let bound = s.grid().discrete_rho() * 1.0 - s.law().sandwiched_m1_norm().unwrap();
            let margin = sandwich_operator(&s).unwrap().accretivity_margin().unwrap().margin;
            assert!(margin >= bound - 1e-10);
        }
    }

    #[test]
    fn strongly_nonnormal_m1_below_rho0_fails() {
        let m1 = DMatrix::from_row_slice(2, 2, &[0.0, 40.0, 0.0, 0.0]);
        let probe = commutator_scenario(diag(&[1.0, 4.0]), m1.clone(), 1.0, 1.0);
        let rho0 = rho0_commutator(probe.law(), 1.0).unwrap();
        assert!(rho0 > 10.0);
        let s = commutator_scenario(diag(&[1.0, 4.0]), m1, rho0 / 4.0, 1.0);
        let cert = wellposedness_certificate(&s).unwrap();
        assert!(!cert.passed);
    }

    #[test]
    fn commutator_bound_holds() {
        let m1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let s = commutator_scenario(diag(&[1.0, 4.0]), m1, 2.0, 1.0);
        let r = march(&s).unwrap();
        assert!(r.hypotheses_passed && r.bound_ok);
        assert!(r.c_h.unwrap() > 0.0);
        let nu = weighted_norm(&r.solution, s.grid()).unwrap();
        assert!((nu - r.norm_u).abs() < 1e-12 * nu.max(1.0));
    }

    #[test]
    fn lipschitz_scenario_has_no_sandwich() {
        let s = scalar_scenario(4, 1.0, |_| 1.0);
        assert!(matches!(sandwich_operator(&s), Err(Error::HypothesisFailed(_))));
    }
}
