//! Dense helpers shared by the operator modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `diag(s) * m * diag(s)^-1`.
pub fn conjugate_diag(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| s[i] * m[(i, j)] / s[j])
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

fn eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenSolveFailure("non-finite matrix entry".into()));
    }
    SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenSolveFailure(format!("no convergence for {}x{} matrix", m.nrows(), m.ncols())))
}

/// Smallest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn min_eigenpair(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let e = eigen(m)?;
    let (idx, val) = e
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::EigenSolveFailure("empty matrix".into()))?;
    Ok((*val, e.eigenvectors.column(idx).into_owned()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    min_eigenpair(m).map(|(v, _)| v)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let e = eigen(m)?;
    Ok(e.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Inverse via LU; `None` when the factorization is singular or the result is not finite.
pub fn try_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = m.clone().lu().try_inverse()?;
    inv.iter().all(|x| x.is_finite()).then_some(inv)
}

/// 1-norm condition number, computed from an explicit inverse.
pub fn condition_1(m: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    norm_1(m) * norm_1(inv)
}

fn norm_1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `I_cells (x) block`, i.e. `block` repeated along the diagonal.
pub fn repeat_block(block: &DMatrix<f64>, cells: usize) -> DMatrix<f64> {
    let d = block.nrows();
    let mut out = DMatrix::zeros(d * cells, d * cells);
    for j in 0..cells {
        out.view_mut((j * d, j * d), (d, d)).copy_from(block);
    }
    out
}

/// Block-diagonal matrix from equally sized square blocks.
pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = blocks.first().map_or(0, |b| b.nrows());
    let mut out = DMatrix::zeros(m * blocks.len(), m * blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((k * m, k * m), (m, m)).copy_from(b);
    }
    out
}
