//! Non-autonomous material laws `M0(t)`, `M1(t)` sampled on grid nodes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::derivative::d0_operator;
use crate::error::{Error, Result};
use crate::grid::{weighted_norm_raw, GridFunction, TimeGrid};
use crate::linalg;
use crate::operator::{Certificate, SpaceTimeOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `M0` Lipschitz in time; hypotheses use `M0'`.
    Lipschitz,
    /// `M0 >= d_low > 0` and `M0` commutes with the spatial operator.
    Commutator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Supplied,
    ForwardDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLaw {
    dim: usize,
    step: f64,
    m0: Vec<DMatrix<f64>>,
    m1: Vec<DMatrix<f64>>,
    m0_prime: Option<Vec<DMatrix<f64>>>,
    regime: Regime,
    d_low: Option<f64>,
    discontinuous: bool,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl MaterialLaw {
    pub fn new(grid: &TimeGrid, m0: Vec<DMatrix<f64>>, m1: Vec<DMatrix<f64>>, regime: Regime) -> Result<Self> {
        let n = grid.len();
        for samples in [&m0, &m1] {
            if samples.len() != n {
                return Err(Error::SampleCountMismatch { expected: n, found: samples.len() });
            }
        }
        let dim = m0[0].nrows();
        for m in m0.iter().chain(&m1) {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m.nrows().max(m.ncols()) });
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::EigenSolveFailure("non-finite coefficient sample".into()));
            }
        }
        for m in &m0 {
            let asym = linalg::asymmetry(m);
            if asym > SYMMETRY_TOL * m.amax().max(1.0) {
                return Err(Error::NotSymmetric(asym));
            }
        }
        Ok(Self { dim, step: grid.step(), m0, m1, m0_prime: None, regime, d_low: None, discontinuous: false })
    }

    /// Time-independent coefficients.
    pub fn constant(grid: &TimeGrid, m0: DMatrix<f64>, m1: DMatrix<f64>, regime: Regime) -> Result<Self> {
        let n = grid.len();
        let dim = m0.nrows();
        let mut law = Self::new(grid, vec![m0; n], vec![m1; n], regime)?;
        law.m0_prime = Some(vec![DMatrix::zeros(dim, dim); n]);
        Ok(law)
    }

    pub fn with_derivative(mut self, m0_prime: Vec<DMatrix<f64>>) -> Result<Self> {
        if m0_prime.len() != self.m0.len() {
            return Err(Error::SampleCountMismatch { expected: self.m0.len(), found: m0_prime.len() });
        }
        if let Some(m) = m0_prime.iter().find(|m| m.nrows() != self.dim || m.ncols() != self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, found: m.nrows() });
        }
        self.m0_prime = Some(m0_prime);
        Ok(self)
    }

    /// Sets `d_low`; every `M0(t_k)` must satisfy `lambda_min >= d_low > 0`.
    pub fn with_lower_bound(mut self, d_low: f64) -> Result<Self> {
        let cert = self.lower_bound_certificate(d_low)?;
        if !(d_low > 0.0) || !cert.passed {
            return Err(Error::HypothesisFailed(Box::new(cert)));
        }
        self.d_low = Some(d_low);
        Ok(self)
    }

    /// Marks the samples as coming from a non-Lipschitz (e.g. piecewise constant) coefficient.
    pub fn discontinuous(mut self) -> Self {
        self.discontinuous = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.m0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m0.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn m0(&self) -> &[DMatrix<f64>] {
        &self.m0
    }

    pub fn m1(&self) -> &[DMatrix<f64>] {
        &self.m1
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn d_low(&self) -> Option<f64> {
        self.d_low
    }

    pub fn is_discontinuous(&self) -> bool {
        self.discontinuous
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        if self.m0_prime.is_some() {
            DerivativeSource::Supplied
        } else {
            DerivativeSource::ForwardDifference
        }
    }

    /// Supplied `M0'` samples, or forward differences of `M0` when none were given.
    /// Refused for samples flagged discontinuous.
    pub fn m0_prime(&self) -> Result<Vec<DMatrix<f64>>> {
        match &self.m0_prime {
            Some(p) => Ok(p.clone()),
            None if self.discontinuous => Err(Error::NotLipschitz),
            None => difference_quotients(&self.m0, self.step),
        }
    }

    pub fn m0_is_psd(&self) -> bool {
        self.m0.iter().all(|m| linalg::min_eigenvalue(m).is_ok_and(|l| l >= -SYMMETRY_TOL * m.amax().max(1.0)))
    }

    /// `min_k lambda_min(M0(t_k))` against `d_low`.
    pub fn lower_bound_certificate(&self, d_low: f64) -> Result<Certificate> {
        let mut worst = f64::INFINITY;
        for m in &self.m0 {
            worst = worst.min(linalg::min_eigenvalue(m)?);
        }
        Ok(Certificate::new("m0_lower_bound", worst, d_low))
    }

    /// `max_k ||M0^1/2 M1 M0^-1/2 (t_k)||`.
    pub fn sandwiched_m1_norm(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for (m0, m1) in self.m0.iter().zip(&self.m1) {
            let (s, si) = sqrt_and_inv_sqrt(m0)?;
            worst = worst.max(linalg::spectral_norm(&(&s * m1 * &si)));
        }
        Ok(worst)
    }
}

fn difference_quotients(samples: &[DMatrix<f64>], h: f64) -> Result<Vec<DMatrix<f64>>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let mut out: Vec<_> = samples.windows(2).map(|w| (&w[1] - &w[0]) / h).collect();
    out.push(out[n - 2].clone());
    Ok(out)
}

/// Forward differences `(M(t_{k+1}) - M(t_k)) / h`; the last node repeats its predecessor.
pub fn lipschitz_derivative(samples: &[DMatrix<f64>], grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
    if samples.len() != grid.len() {
        if samples.len() < 2 {
            return Err(Error::TooFewSamples(samples.len()));
        }
        return Err(Error::SampleCountMismatch { expected: grid.len(), found: samples.len() });
    }
    difference_quotients(samples, grid.step())
}

/// Block-diagonal multiplication operator with blocks `I_cells (x) M(t_k)`.
pub fn mult_operator(samples: &[DMatrix<f64>], grid: &TimeGrid, cells: usize) -> Result<SpaceTimeOperator> {
    if samples.len() != grid.len() {
        return Err(Error::SampleCountMismatch { expected: grid.len(), found: samples.len() });
    }
    let blocks: Vec<_> = samples.iter().map(|m| linalg::repeat_block(m, cells)).collect();
    SpaceTimeOperator::block_diagonal(grid, &blocks)
}

/// Checks `rho M0 + M0'/2 + M1 >= c` at every node, symmetrizing `M1`.
pub fn check_pos_def_condition(law: &MaterialLaw, rho: f64, c: f64) -> Result<Certificate> {
    let prime = law.m0_prime().map_err(|e| match e {
        Error::NotLipschitz => Error::NotLipschitz,
        _ => Error::MissingDerivative,
    })?;
    let mut worst = (f64::INFINITY, 0usize, DVector::zeros(law.dim));
    for (k, ((m0, m1), mp)) in law.m0.iter().zip(&law.m1).zip(&prime).enumerate() {
        let q = m0 * rho + mp * 0.5 + linalg::symmetric_part(m1);
        let (l, v) = linalg::min_eigenpair(&linalg::symmetric_part(&q))?;
        if l < worst.0 {
            worst = (l, k, v);
        }
    }
    let mut cert = Certificate::new("pos_def_lipschitz", worst.0, c)
        .with_witness(worst.2.as_slice().to_vec())
        .with_note(format!("worst node {}", worst.1))
        .with_note("essential infimum approximated by the minimum over grid nodes");
    if law.derivative_source() == DerivativeSource::ForwardDifference {
        cert = cert.with_note("M0' ESTIMATED by forward differences of the M0 samples");
    }
    if !law.m0_is_psd() {
        cert = cert.with_note("M0 samples are not all positive semidefinite");
    }
    Ok(cert)
}

/// Symmetric PSD square root through the symmetric eigendecomposition.
pub fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = psd_eigen(m)?;
    Ok(&vecs * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * vecs.transpose())
}

fn psd_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let scale = m.amax().max(1.0);
    let asym = linalg::asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let e = nalgebra::SymmetricEigen::try_new(linalg::symmetric_part(m), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenSolveFailure("square root".into()))?;
    let lmin = e.eigenvalues.min();
    if lmin < -SYMMETRY_TOL * scale {
        return Err(Error::NegativeEigenvalue(lmin));
    }
    Ok((e.eigenvalues.map(|l| l.max(0.0)), e.eigenvectors))
}

/// `(M^1/2, M^-1/2)` for symmetric positive definite `M`.
pub fn sqrt_and_inv_sqrt(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = psd_eigen(m)?;
    if vals.min() <= 0.0 {
        return Err(Error::NegativeEigenvalue(vals.min()));
    }
    let s = &vecs * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * vecs.transpose();
    let si = &vecs * DMatrix::from_diagonal(&vals.map(|l| 1.0 / l.sqrt())) * vecs.transpose();
    Ok((s, si))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rho0Search {
    /// Smallest passing rate on the grid; `None` when no rate passes.
    pub rho: Option<f64>,
    /// `(rho, margin)` for every grid rate.
    pub margins: Vec<(f64, f64)>,
    pub m0_psd: bool,
    /// Margins nondecreasing in `rho`; only guaranteed when `m0_psd`.
    pub monotone: bool,
}

/// Scans an ascending list of rates for the first one passing the positive-definiteness condition.
pub fn rho0_lipschitz(law: &MaterialLaw, c: f64, rho_grid: &[f64]) -> Result<Rho0Search> {
    if rho_grid.is_empty() {
        return Err(Error::TooFewSamples(0));
    }
    let margins = rho_grid
        .iter()
        .map(|&rho| check_pos_def_condition(law, rho, c).map(|cert| (rho, cert.margin)))
        .collect::<Result<Vec<_>>>()?;
    let monotone = margins.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12 * w[0].1.abs().max(1.0));
    let rho = margins.iter().find(|(_, m)| *m >= c).map(|(r, _)| *r);
    Ok(Rho0Search { rho, margins, m0_psd: law.m0_is_psd(), monotone })
}

/// `(c + max_k ||M0^1/2 M1 M0^-1/2||) / d_low`.
pub fn rho0_commutator(law: &MaterialLaw, c: f64) -> Result<f64> {
    let d_low = law.d_low.ok_or(Error::MissingLowerBound)?;
    Ok((c + law.sandwiched_m1_norm()?) / d_low)
}

/// Weighted norm over nodes `1..n` of `D(M0 u) - M0 D u - M0' u`. Node 0 carries the
/// zero-history jump and is excluded.
pub fn product_rule_residual(law: &MaterialLaw, grid: &TimeGrid, u: &GridFunction) -> Result<f64> {
    let m = u.block_dim();
    if !m.is_multiple_of(law.dim) {
        return Err(Error::DimensionMismatch { expected: law.dim, found: m });
    }
    let cells = m / law.dim;
    let prime = law.m0_prime().map_err(|e| match e {
        Error::NotLipschitz => Error::NotLipschitz,
        _ => Error::MissingDerivative,
    })?;
    let d = d0_operator(grid, m);
    let m0 = mult_operator(&law.m0, grid, cells)?;
    let mp = mult_operator(&prime, grid, cells)?;
    let x = u.values();
    let mut r = d.matrix() * (m0.matrix() * x) - m0.matrix() * (d.matrix() * x) - mp.matrix() * x;
    r.rows_mut(0, m).fill(0.0);
    Ok(weighted_norm_raw(&r, grid, m))
}

/// Piecewise-constant levels on the grid nodes: `jumps` uniformly drawn jump times and
/// `jumps + 1` levels uniform in `[low, high]`.
pub fn piecewise_constant_levels(grid: &TimeGrid, jumps: usize, low: f64, high: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut times: Vec<f64> = (0..jumps).map(|_| rng.random_range(grid.t_start()..grid.t_end())).collect();
    times.sort_by(f64::total_cmp);
    let levels: Vec<f64> = (0..=jumps).map(|_| if high > low { rng.random_range(low..=high) } else { low }).collect();
    grid.nodes().into_iter().map(|t| levels[times.iter().take_while(|&&s| s < t).count()]).collect()
}
