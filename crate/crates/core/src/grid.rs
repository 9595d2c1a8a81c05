//! Truncated, uniformly discretized exponentially weighted space `L2,rho(R; H)`.
//!
//! Nodes sit at `t_start + (k + 1) h`, so the value at `t_start` is an implicit
//! zero (zero history). The quadrature weight of node `k` is `h * exp(-2 rho t_k)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n: usize,
    rho: f64,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n: usize, rho: f64) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::NonPositiveSpan { t_start, t_end });
        }
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::NegativeRho(rho));
        }
        Ok(Self { t_start, t_end, n, rho })
    }

    /// Same nodes, different decay rate.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.t_start, self.t_end, self.n, rho)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t_start) / self.n as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.t_start + (k + 1) as f64 * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    /// `exp(-2 rho t_k)`.
    pub fn weight(&self, k: usize) -> f64 {
        (-2.0 * self.rho * self.node(k)).exp()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.weight(k)).collect()
    }

    /// Quadrature weights `h * w_k`, the diagonal of `W` per time node.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n).map(|k| h * self.weight(k)).collect()
    }

    /// Diagonal of `W` expanded over `block_dim` components per node.
    pub fn expanded_weights(&self, block_dim: usize) -> DVector<f64> {
        let q = self.quadrature_weights();
        DVector::from_fn(self.n * block_dim, |i, _| q[i / block_dim])
    }

    /// Discrete accretivity constant of the backward difference,
    /// `(1 - exp(-2 rho h)) / (2 h)`. Tends to `rho` as `h -> 0` and never exceeds it.
    pub fn discrete_rho(&self) -> f64 {
        discrete_rate(self.rho, self.step())
    }
}

/// `(1 - exp(-2 rho h)) / (2 h)`.
pub fn discrete_rate(rho: f64, h: f64) -> f64 {
    -(-2.0 * rho * h).exp_m1() / (2.0 * h)
}

/// Inverse of [`discrete_rate`] in `rho`: the smallest rate whose discrete constant on
/// step `h` reaches `target`. `None` if `target >= 1 / (2h)`, the supremum over all rates.
pub fn rate_for_discrete(target: f64, h: f64) -> Option<f64> {
    if target <= 0.0 {
        return Some(0.0);
    }
    let x = 2.0 * h * target;
    if x >= 1.0 {
        return None;
    }
    Some(-(-x).ln_1p() / (2.0 * h))
}

/// A space-time vector: `n` blocks of dimension `block_dim`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: DVector<f64>,
    block_dim: usize,
    grid: TimeGrid,
}

impl GridFunction {
    pub fn zeros(grid: &TimeGrid, block_dim: usize) -> Self {
        Self { values: DVector::zeros(grid.len() * block_dim), block_dim, grid: grid.clone() }
    }

    pub fn from_vector(grid: &TimeGrid, block_dim: usize, values: DVector<f64>) -> Result<Self> {
        let expected = grid.len() * block_dim;
        if block_dim == 0 || values.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: values.len() });
        }
        Ok(Self { values, block_dim, grid: grid.clone() })
    }

    pub fn from_blocks(grid: &TimeGrid, blocks: &[DVector<f64>]) -> Result<Self> {
        if blocks.len() != grid.len() {
            return Err(Error::SampleCountMismatch { expected: grid.len(), found: blocks.len() });
        }
        let m = blocks[0].len();
        let mut values = DVector::zeros(grid.len() * m);
        for (k, b) in blocks.iter().enumerate() {
            if b.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: b.len() });
            }
            values.rows_mut(k * m, m).copy_from(b);
        }
        Self::from_vector(grid, m, values)
    }

    /// Samples `f(t_k)` into each block.
    pub fn from_fn(grid: &TimeGrid, block_dim: usize, mut f: impl FnMut(f64) -> DVector<f64>) -> Result<Self> {
        let blocks: Vec<_> = grid.nodes().into_iter().map(&mut f).collect();
        if blocks.iter().any(|b| b.len() != block_dim) {
            return Err(Error::DimensionMismatch {
                expected: block_dim,
                found: blocks.iter().map(|b| b.len()).find(|&l| l != block_dim).unwrap_or(0),
            });
        }
        Self::from_blocks(grid, &blocks)
    }

    /// Scalar-valued convenience (`block_dim == 1`).
    pub fn from_scalar_fn(grid: &TimeGrid, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = DVector::from_iterator(grid.len(), grid.nodes().into_iter().map(&mut f));
        Self { values, block_dim: 1, grid: grid.clone() }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn block(&self, k: usize) -> DVector<f64> {
        self.values.rows(k * self.block_dim, self.block_dim).into_owned()
    }

    pub fn set_block(&mut self, k: usize, block: &DVector<f64>) {
        self.values.rows_mut(k * self.block_dim, self.block_dim).copy_from(block);
    }

    /// Same values viewed on a grid with identical nodes but another decay rate.
    pub fn reweighted(&self, grid: &TimeGrid) -> Result<Self> {
        if grid.len() != self.grid.len() || grid.step() != self.grid.step() || grid.t_start() != self.grid.t_start() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { values: self.values.clone(), block_dim: self.block_dim, grid: grid.clone() })
    }

    fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.block_dim != other.block_dim {
            return Err(Error::DimensionMismatch { expected: self.block_dim, found: other.block_dim });
        }
        Ok(())
    }
}

/// `sum_k h w_k <u_k, v_k>`.
pub fn weighted_inner(u: &GridFunction, v: &GridFunction, grid: &TimeGrid) -> Result<f64> {
    u.check_compatible(v)?;
    if &u.grid != grid {
        return Err(Error::GridMismatch);
    }
    let m = u.block_dim;
    Ok(grid
        .quadrature_weights()
        .iter()
        .enumerate()
        .map(|(k, q)| q * u.values.rows(k * m, m).dot(&v.values.rows(k * m, m)))
        .sum())
}

pub fn weighted_norm(u: &GridFunction, grid: &TimeGrid) -> Result<f64> {
    Ok(weighted_inner(u, u, grid)?.max(0.0).sqrt())
}

/// Weighted norm of a raw space-time vector with the given block dimension.
pub(crate) fn weighted_norm_raw(values: &DVector<f64>, grid: &TimeGrid, block_dim: usize) -> f64 {
    let q = grid.quadrature_weights();
    values.iter().enumerate().map(|(i, x)| q[i / block_dim] * x * x).sum::<f64>().sqrt()
}
