//! Backward-difference time derivative on the weighted grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{weighted_norm_raw, GridFunction, TimeGrid};
use crate::operator::SpaceTimeOperator;

/// `(D u)_k = (u_k - u_{k-1}) / h` with `u_{-1} = 0`, acting componentwise on blocks of size `block_dim`.
pub fn d0_operator(grid: &TimeGrid, block_dim: usize) -> SpaceTimeOperator {
    let m = block_dim;
    let size = grid.len() * m;
    let inv_h = 1.0 / grid.step();
    let mut d = DMatrix::zeros(size, size);
    for i in 0..size {
        d[(i, i)] = inv_h;
        if i >= m {
            d[(i, i - m)] = -inv_h;
        }
    }
    SpaceTimeOperator::new(d, grid, m).expect("sizes are consistent by construction")
}

/// Forward difference `(v_{k+1} - v_k) / h`, zero on the last node.
fn forward_difference(v: &GridFunction) -> DVector<f64> {
    let m = v.block_dim();
    let n = v.grid().len();
    let h = v.grid().step();
    let x = v.values();
    DVector::from_fn(n * m, |i, _| if i + m < n * m { (x[i + m] - x[i]) / h } else { 0.0 })
}

/// Weighted norm, over interior nodes, of `D* v - (-D_f v + 2 rho v)`.
///
/// `v` has to vanish on the first and last node. For `rho = 0` the identity is exact.
pub fn d0_adjoint_consistency(grid: &TimeGrid, v: &GridFunction) -> Result<f64> {
    if v.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let n = grid.len();
    if v.block(0).amax() != 0.0 || v.block(n - 1).amax() != 0.0 {
        return Err(Error::UnsupportedBoundarySupport);
    }
    let m = v.block_dim();
    let adjoint = d0_operator(grid, m).weighted_adjoint();
    let lhs = adjoint.matrix() * v.values();
    let rhs = -forward_difference(v) + v.values() * (2.0 * grid.rho());
    let mut diff = lhs - rhs;
    diff.rows_mut(0, m).fill(0.0);
    diff.rows_mut((n - 1) * m, m).fill(0.0);
    Ok(weighted_norm_raw(&diff, grid, m))
}
