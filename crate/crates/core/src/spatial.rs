//! Spatial operators `A`: the coupled upwind transport operator on `(0,1)^d` and plug-ins.
//!
//! Spatial vectors are cell-major: entry `j * d + i` holds component `i` in cell `j`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::operator::{matrix_margin, Certificate, SpaceTimeOperator};

/// Slack for rounding when certifying accretivity of a spatial matrix.
pub const SPATIAL_MARGIN_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportSpec {
    cells: usize,
    coupling: Vec<Vec<f64>>,
    coupling_norm: f64,
}

impl TransportSpec {
    pub fn new(cells: usize, coupling: DMatrix<f64>) -> Result<Self> {
        if cells < 2 {
            return Err(Error::TooFewNodes(cells));
        }
        if coupling.nrows() != coupling.ncols() || coupling.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: coupling.nrows(), found: coupling.ncols() });
        }
        let coupling_norm = linalg::spectral_norm(&coupling);
        let rows = coupling.row_iter().map(|r| r.iter().copied().collect()).collect();
        Ok(Self { cells, coupling: rows, coupling_norm })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dim(&self) -> usize {
        self.coupling.len()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn coupling(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.coupling[i][j])
    }

    pub fn coupling_norm(&self) -> f64 {
        self.coupling_norm
    }

    /// `||B|| <= 1`, the condition under which the operator is accretive.
    pub fn is_contractive(&self) -> bool {
        self.coupling_norm <= 1.0 + 1e-12
    }
}

/// Upwind `(A u)_j = (u_j - u_{j-1}) / dx` for `j >= 2`, `(A u)_1 = (u_1 - B u_N) / dx`.
pub fn transport_operator(spec: &TransportSpec) -> DMatrix<f64> {
    let d = spec.dim();
    let n = spec.cells;
    let inv_dx = 1.0 / spec.dx();
    let b = spec.coupling();
    let mut a = DMatrix::zeros(d * n, d * n);
    for j in 0..n {
        for i in 0..d {
            a[(j * d + i, j * d + i)] = inv_dx;
        }
        if j > 0 {
            for i in 0..d {
                a[(j * d + i, (j - 1) * d + i)] = -inv_dx;
            }
        }
    }
    a.view_mut((0, (n - 1) * d), (d, d)).copy_from(&(-b * inv_dx));
    a
}

/// `I_t (x) A_h`.
pub fn lift_to_spacetime(a_h: &DMatrix<f64>, grid: &TimeGrid) -> Result<SpaceTimeOperator> {
    if a_h.nrows() != a_h.ncols() || a_h.nrows() == 0 {
        return Err(Error::DimensionMismatch { expected: a_h.nrows(), found: a_h.ncols() });
    }
    let m = a_h.nrows();
    SpaceTimeOperator::new(linalg::repeat_block(a_h, grid.len()), grid, m)
}

/// `max_k ||B M0(t_k) - M0(t_k) B||` against `1e-12 * scale`.
pub fn coupling_commutes(b: &DMatrix<f64>, m0_samples: &[DMatrix<f64>]) -> Result<Certificate> {
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for m in m0_samples {
        if m.nrows() != b.nrows() || m.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch { expected: b.nrows(), found: m.nrows() });
        }
        worst = worst.max(linalg::spectral_norm(&(b * m - m * b)));
        scale = scale.max(linalg::spectral_norm(b) * linalg::spectral_norm(m));
    }
    Ok(Certificate::residual("coupling_commutes", worst, 1e-12 * scale.max(1.0)))
}

/// The spatial operator of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialOperator {
    /// `A = 0` on `R^dim`.
    Zero {
        dim: usize,
    },
    Transport(TransportSpec),
    /// User-supplied matrix acting on `cells` cells of `dim` components each.
    Matrix {
        matrix: DMatrix<f64>,
        dim: usize,
    },
}

impl SpatialOperator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } | Self::Matrix { dim, .. } => *dim,
            Self::Transport(spec) => spec.dim(),
        }
    }

    pub fn cells(&self) -> usize {
        match self {
            Self::Zero { .. } => 1,
            Self::Transport(spec) => spec.cells(),
            Self::Matrix { matrix, dim } => matrix.nrows() / dim,
        }
    }

    /// Size of one time block, `d * N`.
    pub fn block_dim(&self) -> usize {
        self.dim() * self.cells()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Self::Zero { dim } => DMatrix::zeros(*dim, *dim),
            Self::Transport(spec) => transport_operator(spec),
            Self::Matrix { matrix, .. } => matrix.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Matrix { matrix, dim } = self {
            if *dim == 0 || matrix.nrows() != matrix.ncols() || matrix.nrows() % dim != 0 {
                return Err(Error::DimensionMismatch { expected: *dim, found: matrix.nrows() });
            }
        }
        Ok(())
    }

    /// Accretivity of `A_h`, passing when the margin is at least `-1e-10`.
    pub fn accretivity_certificate(&self) -> Result<Certificate> {
        let mut cert = matrix_margin("spatial_accretivity", &self.matrix())?.with_threshold(-SPATIAL_MARGIN_SLACK);
        if let Self::Transport(spec) = self {
            if !spec.is_contractive() {
                cert = cert.with_note(format!("coupling norm {} exceeds 1", spec.coupling_norm()));
            }
        }
        Ok(cert)
    }

    /// Whether `M0(t_k)` (repeated over cells) commutes with `A_h` at every node.
    pub fn commutation_certificate(&self, m0_samples: &[DMatrix<f64>]) -> Result<Certificate> {
        match self {
            Self::Zero { .. } => Ok(Certificate::residual("coupling_commutes", 0.0, 0.0)),
            Self::Transport(spec) => coupling_commutes(&spec.coupling(), m0_samples),
            Self::Matrix { matrix, .. } => {
                let cells = self.cells();
                let mut worst = 0.0f64;
                let mut scale = 0.0f64;
                let an = linalg::spectral_norm(matrix);
                for m in m0_samples {
                    let big = linalg::repeat_block(m, cells);
                    worst = worst.max(linalg::spectral_norm(&(&big * matrix - matrix * &big)));
                    scale = scale.max(an * linalg::spectral_norm(m));
                }
                Ok(Certificate::residual("spatial_commutes", worst, 1e-12 * scale.max(1.0)))
            }
        }
    }
}
