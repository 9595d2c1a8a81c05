//! Finite-dimensional operator algebra relative to the weighted inner product.
//!
//! `W` is the diagonal quadrature matrix (`h * w_k` repeated over each block). The
//! weighted adjoint is `W^-1 T^T W`; margins and norms are computed on the similar
//! matrix `W^1/2 T W^-1/2`, where the weighted geometry becomes Euclidean.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::linalg;

/// Outcome of a hypothesis check. `passed` is always `margin >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: String,
    pub margin: f64,
    pub threshold: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn new(kind: impl Into<String>, margin: f64, threshold: f64) -> Self {
        Self { kind: kind.into(), margin, threshold, passed: margin >= threshold, witness: None, notes: Vec::new() }
    }

    pub fn with_witness(mut self, witness: Vec<f64>) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Re-evaluate against another threshold.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self.passed = self.margin >= threshold;
        self
    }

    /// A residual-style check (`residual <= tolerance`), stored as `margin = -residual`.
    pub fn residual(kind: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self::new(kind, 0.0 - residual, 0.0 - tolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeOperator {
    matrix: DMatrix<f64>,
    grid: TimeGrid,
    block_dim: usize,
}

impl SpaceTimeOperator {
    pub fn new(matrix: DMatrix<f64>, grid: &TimeGrid, block_dim: usize) -> Result<Self> {
        let size = grid.len() * block_dim;
        if block_dim == 0 || matrix.nrows() != size || matrix.ncols() != size {
            return Err(Error::DimensionMismatch { expected: size, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Self { matrix, grid: grid.clone(), block_dim })
    }

    pub fn identity(grid: &TimeGrid, block_dim: usize) -> Self {
        let size = grid.len() * block_dim;
        Self { matrix: DMatrix::identity(size, size), grid: grid.clone(), block_dim }
    }

    pub fn zeros(grid: &TimeGrid, block_dim: usize) -> Self {
        let size = grid.len() * block_dim;
        Self { matrix: DMatrix::zeros(size, size), grid: grid.clone(), block_dim }
    }

    /// Block-diagonal in time with one `block_dim x block_dim` block per node.
    pub fn block_diagonal(grid: &TimeGrid, blocks: &[DMatrix<f64>]) -> Result<Self> {
        if blocks.len() != grid.len() {
            return Err(Error::SampleCountMismatch { expected: grid.len(), found: blocks.len() });
        }
        let m = blocks[0].nrows();
        if let Some(b) = blocks.iter().find(|b| b.nrows() != m || b.ncols() != m) {
            return Err(Error::DimensionMismatch { expected: m, found: b.nrows().max(b.ncols()) });
        }
        Self::new(linalg::block_diagonal(blocks), grid, m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// `(i, j)` time block.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let m = self.block_dim;
        self.matrix.view((i * m, j * m), (m, m)).into_owned()
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        self.check_grid_function(u)?;
        GridFunction::from_vector(&self.grid, self.block_dim, &self.matrix * u.values())
    }

    fn check_grid_function(&self, u: &GridFunction) -> Result<()> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if u.block_dim() != self.block_dim {
            return Err(Error::DimensionMismatch { expected: self.block_dim, found: u.block_dim() });
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &SpaceTimeOperator) -> Result<()> {
        if self.block_dim != other.block_dim || self.size() != other.size() {
            return Err(Error::DimensionMismatch { expected: self.size(), found: other.size() });
        }
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn try_add(&self, other: &SpaceTimeOperator) -> Result<SpaceTimeOperator> {
        self.check_same_shape(other)?;
        Ok(Self { matrix: &self.matrix + &other.matrix, ..self.clone() })
    }

    pub fn try_sub(&self, other: &SpaceTimeOperator) -> Result<SpaceTimeOperator> {
        self.check_same_shape(other)?;
        Ok(Self { matrix: &self.matrix - &other.matrix, ..self.clone() })
    }

    pub fn try_compose(&self, other: &SpaceTimeOperator) -> Result<SpaceTimeOperator> {
        self.check_same_shape(other)?;
        Ok(Self { matrix: &self.matrix * &other.matrix, ..self.clone() })
    }

    pub fn scaled(&self, factor: f64) -> SpaceTimeOperator {
        Self { matrix: &self.matrix * factor, ..self.clone() }
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> SpaceTimeOperator {
        let mut matrix = self.matrix.clone();
        for i in 0..matrix.nrows() {
            matrix[(i, i)] += shift;
        }
        Self { matrix, ..self.clone() }
    }

    fn sqrt_weights(&self) -> DVector<f64> {
        self.grid.expanded_weights(self.block_dim).map(f64::sqrt)
    }

    /// `W^1/2 T W^-1/2`.
    pub fn euclidean_form(&self) -> DMatrix<f64> {
        linalg::conjugate_diag(&self.matrix, &self.sqrt_weights())
    }

    /// `W^-1 T^T W`, the adjoint with respect to the weighted inner product.
    pub fn weighted_adjoint(&self) -> SpaceTimeOperator {
        let w = self.grid.expanded_weights(self.block_dim);
        let t = &self.matrix;
        let matrix = DMatrix::from_fn(t.nrows(), t.ncols(), |i, j| t[(j, i)] * w[j] / w[i]);
        Self { matrix, ..self.clone() }
    }

    /// Minimum of `<u, T u>_W` over `||u||_W = 1`, with a minimizing `u` as witness.
    /// Threshold 0: passing means accretive.
    pub fn accretivity_margin(&self) -> Result<Certificate> {
        let sym = linalg::symmetric_part(&self.euclidean_form());
        let (margin, y) = linalg::min_eigenpair(&sym)?;
        let s = self.sqrt_weights();
        let witness = y.component_div(&s);
        Ok(Certificate::new("accretivity", margin, 0.0).with_witness(witness.as_slice().to_vec()))
    }

    /// Spectral norm in the weighted geometry.
    pub fn weighted_norm(&self) -> f64 {
        linalg::spectral_norm(&self.euclidean_form())
    }

    /// `(lambda + T)^-1`.
    pub fn resolvent(&self, lambda: f64) -> Result<SpaceTimeOperator> {
        let shifted = self.shifted(lambda);
        let inv = linalg::try_inverse(&shifted.matrix).ok_or(Error::SingularOperator { shift: lambda })?;
        if linalg::condition_1(&shifted.matrix, &inv) > 1e14 {
            return Err(Error::SingularOperator { shift: lambda });
        }
        Ok(Self { matrix: inv, ..self.clone() })
    }

    /// Solves `T x = b` by LU.
    pub fn solve(&self, b: &GridFunction) -> Result<GridFunction> {
        self.check_grid_function(b)?;
        let x = self.matrix.clone().lu().solve(b.values()).ok_or(Error::SingularOperator { shift: 0.0 })?;
        GridFunction::from_vector(&self.grid, self.block_dim, x)
    }

    /// Largest absolute entry strictly above the block diagonal; zero for causal operators.
    pub fn upper_block_mass(&self) -> f64 {
        let m = self.block_dim;
        let mut worst = 0.0f64;
        for i in 0..self.matrix.nrows() {
            for j in ((i / m) + 1) * m..self.matrix.ncols() {
                worst = worst.max(self.matrix[(i, j)].abs());
            }
        }
        worst
    }
}

impl Add for &SpaceTimeOperator {
    type Output = SpaceTimeOperator;

    fn add(self, rhs: Self) -> SpaceTimeOperator {
        self.try_add(rhs).expect("operator shapes differ")
    }
}

impl Sub for &SpaceTimeOperator {
    type Output = SpaceTimeOperator;

    fn sub(self, rhs: Self) -> SpaceTimeOperator {
        self.try_sub(rhs).expect("operator shapes differ")
    }
}

impl Mul for &SpaceTimeOperator {
    type Output = SpaceTimeOperator;

    fn mul(self, rhs: Self) -> SpaceTimeOperator {
        self.try_compose(rhs).expect("operator shapes differ")
    }
}

pub fn weighted_adjoint(t: &SpaceTimeOperator) -> SpaceTimeOperator {
    t.weighted_adjoint()
}

pub fn accretivity_margin(t: &SpaceTimeOperator) -> Result<Certificate> {
    t.accretivity_margin()
}

pub fn resolvent(t: &SpaceTimeOperator, lambda: f64) -> Result<SpaceTimeOperator> {
    t.resolvent(lambda)
}

/// Weighted operator norm of `PT - TP`.
pub fn commutator_residual(p: &SpaceTimeOperator, t: &SpaceTimeOperator) -> Result<f64> {
    p.check_same_shape(t)?;
    let c = p.try_compose(t)?.try_sub(&t.try_compose(p)?)?;
    Ok(c.weighted_norm())
}

/// Accretivity margin of a plain (unweighted) square matrix, e.g. a spatial operator.
pub fn matrix_margin(kind: &str, m: &DMatrix<f64>) -> Result<Certificate> {
    let (margin, witness) = linalg::min_eigenpair(&linalg::symmetric_part(m))?;
    Ok(Certificate::new(kind, margin, 0.0).with_witness(witness.as_slice().to_vec()))
}
