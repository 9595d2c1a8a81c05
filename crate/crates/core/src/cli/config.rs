//! TOML scenario description and its translation into a [`Scenario`].

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cli::CliError;
use crate::grid::{rate_for_discrete, GridFunction, TimeGrid};
use crate::linalg;
use crate::material::{piecewise_constant_levels, rho0_commutator, rho0_lipschitz, MaterialLaw, Regime, Rho0Search};
use crate::solver::Scenario;
use crate::spatial::{SpatialOperator, TransportSpec};
use crate::verify::derive_seed;

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridConfig,
    pub law: LawConfig,
    #[serde(default)]
    pub spatial: SpatialConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    /// Target accretivity constant.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Certificates reported by `check`; all when absent.
    #[serde(default)]
    pub checks: Option<Vec<CheckKind>>,
}

fn default_c() -> f64 {
    1.0
}

fn default_t_end() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    pub n: usize,
    pub rho: RhoSetting,
    /// Ascending candidate rates for the Lipschitz `auto` search.
    #[serde(default)]
    pub rho_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSetting {
    Fixed(f64),
    Keyword(RhoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoKeyword {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub dim: usize,
    pub regime: Regime,
    #[serde(default)]
    pub d_low: Option<f64>,
    /// Samples come from a non-Lipschitz coefficient; forward differences are refused.
    #[serde(default)]
    pub discontinuous: bool,
    pub m0: CoefficientConfig,
    #[serde(default)]
    pub m1: Option<CoefficientConfig>,
    #[serde(default)]
    pub m0_prime: Option<CoefficientConfig>,
}

/// Per-node matrix samples. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// `c(t) I`, or `diag(c_1(t), ..., c_d(t))` with independent draws when `independent_diagonal`.
    PiecewiseConstantRandom {
        jumps: usize,
        low: f64,
        high: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        independent_diagonal: bool,
    },
    /// Columns `t` followed by the `dim * dim` row-major entries.
    Table {
        path: PathBuf,
    },
    Inline {
        samples: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialConfig {
    #[default]
    Zero,
    Transport {
        cells: usize,
        coupling: Vec<Vec<f64>>,
    },
    /// A square matrix acting on `size / dim` cells, inline or from a whitespace table.
    Matrix {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        rows: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForcingConfig {
    #[serde(flatten)]
    pub profile: ForcingProfile,
    /// Zero the forcing on nodes with `t <= after`.
    #[serde(default)]
    pub after: Option<f64>,
}

/// Amplitude vectors have length `dim` (repeated over cells) or the full block size.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingProfile {
    #[default]
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `amplitude * exp(rate t)`.
    Exp {
        rate: f64,
        amplitude: Vec<f64>,
    },
    /// `amplitude * cos^2(pi (t - center) / (2 width))` on `|t - center| < width`.
    Bump {
        center: f64,
        width: f64,
        amplitude: Vec<f64>,
    },
    /// Columns `t` followed by one block; the format written by `solve`.
    Table {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Accretivity,
    PosDef,
    LowerBound,
    Commutation,
    Wellposedness,
}

impl CheckKind {
    pub fn of_certificate(kind: &str) -> Option<Self> {
        match kind {
            "spatial_accretivity" => Some(Self::Accretivity),
            "pos_def_lipschitz" => Some(Self::PosDef),
            "m0_lower_bound" => Some(Self::LowerBound),
            "coupling_commutes" => Some(Self::Commutation),
            k if k.starts_with("wellposedness") => Some(Self::Wellposedness),
            _ => None,
        }
    }
}

/// How the decay rate was chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoResolution {
    pub auto: bool,
    /// Rate threshold from the regime formula or search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    pub rho: f64,
    pub discrete_rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<Rho0Search>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// A parsed config with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
    /// Raw file contents, hashed into reports.
    pub source: String,
}

pub struct BuiltScenario {
    pub scenario: Scenario,
    pub rho: RhoResolution,
    pub seed: u64,
}

const DEFAULT_RHO_GRID_STEP: f64 = 0.05;
const DEFAULT_RHO_GRID_MAX: f64 = 50.0;

fn invalid(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Invalid { field: field.into(), message: message.into() }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let source = fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&source, base_dir).map_err(|e| match e {
            CliError::Parse { message, .. } => CliError::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    pub fn parse(source: &str, base_dir: PathBuf) -> CliResult<Self> {
        let config: ScenarioConfig = toml::from_str(source)
            .map_err(|e| CliError::Parse { path: PathBuf::from("<inline>"), message: e.to_string() })?;
        Ok(Self { config, base_dir, source: source.to_string() })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Builds the scenario; `seed` overrides the config seed.
    pub fn build(&self, seed: Option<u64>) -> CliResult<BuiltScenario> {
        let cfg = &self.config;
        let seed = seed.or(cfg.seed).unwrap_or(0);
        let g = &cfg.grid;
        let base = TimeGrid::new(g.t_start, g.t_end, g.n, 0.0).map_err(|e| invalid("grid", e.to_string()))?;
        let law = self.build_law(&base, seed)?;
        let spatial = self.build_spatial()?;
        if spatial.dim() != law.dim() {
            return Err(invalid(
                "spatial",
                format!("component dimension {} does not match law.dim {}", spatial.dim(), law.dim()),
            ));
        }
        let rho = self.resolve_rho(&base, &law)?;
        let grid = base.with_rho(rho.rho).map_err(|e| invalid("grid.rho", e.to_string()))?;
        let forcing = self.build_forcing(&grid, spatial.block_dim(), spatial.cells())?;
        let scenario =
            Scenario::new(grid, law, spatial, forcing, cfg.c).map_err(|e| invalid("scenario", e.to_string()))?;
        Ok(BuiltScenario { scenario, rho, seed })
    }

    fn build_law(&self, grid: &TimeGrid, seed: u64) -> CliResult<MaterialLaw> {
        let lc = &self.config.law;
        if lc.dim == 0 {
            return Err(invalid("law.dim", "must be positive"));
        }
        let m0 = self.samples(&lc.m0, grid, lc.dim, "law.m0", derive_seed(seed, 0))?;
        let m1 = match &lc.m1 {
            Some(c) => self.samples(c, grid, lc.dim, "law.m1", derive_seed(seed, 1))?,
            None => vec![DMatrix::zeros(lc.dim, lc.dim); grid.len()],
        };
        let mut law = MaterialLaw::new(grid, m0, m1, lc.regime).map_err(|e| invalid("law.m0", e.to_string()))?;
        if let Some(p) = &lc.m0_prime {
            let prime = self.samples(p, grid, lc.dim, "law.m0_prime", derive_seed(seed, 2))?;
            law = law.with_derivative(prime).map_err(|e| invalid("law.m0_prime", e.to_string()))?;
        } else if matches!(lc.m0, CoefficientConfig::Constant { .. }) {
            law = law
                .with_derivative(vec![DMatrix::zeros(lc.dim, lc.dim); grid.len()])
                .map_err(|e| invalid("law.m0", e.to_string()))?;
        }
        if lc.discontinuous || matches!(lc.m0, CoefficientConfig::PiecewiseConstantRandom { .. }) {
            law = law.discontinuous();
        }
        let d_low = match (lc.d_low, lc.regime) {
            (Some(d), _) => Some(d),
            (None, Regime::Commutator) => {
                let mut lo = f64::INFINITY;
                for m in law.m0() {
                    lo = lo.min(linalg::min_eigenvalue(m).map_err(|e| invalid("law.m0", e.to_string()))?);
                }
                Some(lo)
            }
            (None, Regime::Lipschitz) => None,
        };
        if let Some(d) = d_low {
            law = law
                .with_lower_bound(d)
                .map_err(|e| invalid("law.d_low", format!("{d} is not a lower bound for M0: {e}")))?;
        }
        Ok(law)
    }

    fn samples(
        &self,
        c: &CoefficientConfig,
        grid: &TimeGrid,
        dim: usize,
        field: &str,
        seed: u64,
    ) -> CliResult<Vec<DMatrix<f64>>> {
        let n = grid.len();
        match c {
            CoefficientConfig::Constant { matrix } => {
                Ok(vec![rows_to_matrix(matrix, dim, &format!("{field}.matrix"))?; n])
            }
            CoefficientConfig::PiecewiseConstantRandom { jumps, low, high, seed: own, independent_diagonal } => {
                if !(low <= high) {
                    return Err(invalid(format!("{field}.low"), "low must not exceed high"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(own.unwrap_or(seed));
                let channels = if *independent_diagonal { dim } else { 1 };
                let levels: Vec<Vec<f64>> =
                    (0..channels).map(|_| piecewise_constant_levels(grid, *jumps, *low, *high, &mut rng)).collect();
                Ok((0..n)
                    .map(|k| DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| levels[i % channels][k])))
                    .collect())
            }
            CoefficientConfig::Inline { samples } => {
                if samples.len() != n {
                    return Err(invalid(
                        format!("{field}.samples"),
                        format!("expected {n} matrices, got {}", samples.len()),
                    ));
                }
                samples
                    .iter()
                    .enumerate()
                    .map(|(k, rows)| rows_to_matrix(rows, dim, &format!("{field}.samples[{k}]")))
                    .collect()
            }
            CoefficientConfig::Table { path } => {
                let path = self.resolve(path);
                let rows = read_table(&path)?;
                let values = match_nodes(&rows, grid, dim * dim, &format!("{field}.path"))?;
                Ok(values.into_iter().map(|v| DMatrix::from_row_slice(dim, dim, &v)).collect())
            }
        }
    }

    fn build_spatial(&self) -> CliResult<SpatialOperator> {
        let dim = self.config.law.dim;
        match &self.config.spatial {
            SpatialConfig::Zero => Ok(SpatialOperator::Zero { dim }),
            SpatialConfig::Transport { cells, coupling } => {
                let b = rows_to_matrix(coupling, dim, "spatial.coupling")?;
                let spec = TransportSpec::new(*cells, b).map_err(|e| invalid("spatial.cells", e.to_string()))?;
                Ok(SpatialOperator::Transport(spec))
            }
            SpatialConfig::Matrix { path, rows } => {
                let data = match (path, rows) {
                    (Some(p), None) => read_table(&self.resolve(p))?,
                    (None, Some(r)) => r.clone(),
                    _ => return Err(invalid("spatial", "matrix needs exactly one of `path` or `rows`")),
                };
                let size = data.len();
                if size == 0 || size % dim != 0 {
                    return Err(invalid(
                        "spatial.rows",
                        format!("size {size} is not a positive multiple of law.dim {dim}"),
                    ));
                }
                let matrix = rows_to_matrix(&data, size, "spatial.rows")?;
                let op = SpatialOperator::Matrix { matrix, dim };
                op.validate().map_err(|e| invalid("spatial", e.to_string()))?;
                Ok(op)
            }
        }
    }

    fn resolve_rho(&self, grid: &TimeGrid, law: &MaterialLaw) -> CliResult<RhoResolution> {
        let cfg = &self.config;
        let h = grid.step();
        let rho0 = match cfg.grid.rho {
            RhoSetting::Fixed(rho) => {
                if !(rho >= 0.0) {
                    return Err(invalid("grid.rho", format!("must be non-negative, got {rho}")));
                }
                return Ok(RhoResolution {
                    auto: false,
                    rho0: None,
                    rho,
                    discrete_rho: grid.with_rho(rho).map(|g| g.discrete_rho()).unwrap_or(rho),
                    search: None,
                    notes: Vec::new(),
                });
            }
            RhoSetting::Keyword(RhoKeyword::Auto) => match law.regime() {
                Regime::Commutator => {
                    (rho0_commutator(law, cfg.c).map_err(|e| invalid("grid.rho", e.to_string()))?, None)
                }
                Regime::Lipschitz => {
                    let candidates = cfg.grid.rho_grid.clone().unwrap_or_else(|| {
                        let steps = (DEFAULT_RHO_GRID_MAX / DEFAULT_RHO_GRID_STEP) as usize;
                        (0..=steps).map(|i| i as f64 * DEFAULT_RHO_GRID_STEP).collect()
                    });
                    let search =
                        rho0_lipschitz(law, cfg.c, &candidates).map_err(|e| invalid("grid.rho", e.to_string()))?;
                    match search.rho {
                        Some(r) => (r, Some(search)),
                        None => {
                            let rho = candidates.iter().copied().fold(0.0, f64::max);
                            let g = grid.with_rho(rho).map_err(|e| invalid("grid.rho", e.to_string()))?;
                            return Ok(RhoResolution {
                                auto: true,
                                rho0: None,
                                rho,
                                discrete_rho: g.discrete_rho(),
                                search: Some(search),
                                notes: vec![
                                    "no candidate rate satisfies the positivity condition; using the largest".into()
                                ],
                            });
                        }
                    }
                }
            },
        };
        let (rho0, search) = rho0;
        let rho = rate_for_discrete(rho0, h).ok_or_else(|| {
            invalid(
                "grid.n",
                format!("rate {rho0} is not reachable by the discrete derivative at step {h}; refine the grid"),
            )
        })?;
        let g = grid.with_rho(rho).map_err(|e| invalid("grid.rho", e.to_string()))?;
        Ok(RhoResolution {
            auto: true,
            rho0: Some(rho0),
            rho,
            discrete_rho: g.discrete_rho(),
            search,
            notes: vec!["rho chosen so that the discrete rate equals rho0".into()],
        })
    }

    fn build_forcing(&self, grid: &TimeGrid, block_dim: usize, cells: usize) -> CliResult<GridFunction> {
        let fc = &self.config.forcing;
        let amp = |v: &[f64], field: &str| expand_amplitude(v, block_dim, cells, field);
        let mut f = match &fc.profile {
            ForcingProfile::Zero => GridFunction::zeros(grid, block_dim),
            ForcingProfile::Constant { value } => {
                let a = amp(value, "forcing.value")?;
                GridFunction::from_fn(grid, block_dim, |_| a.clone()).map_err(|e| invalid("forcing", e.to_string()))?
            }
            ForcingProfile::Exp { rate, amplitude } => {
                let a = amp(amplitude, "forcing.amplitude")?;
                GridFunction::from_fn(grid, block_dim, |t| &a * (rate * t).exp())
                    .map_err(|e| invalid("forcing", e.to_string()))?
            }
            ForcingProfile::Bump { center, width, amplitude } => {
                if !(*width > 0.0) {
                    return Err(invalid("forcing.width", "must be positive"));
                }
                let a = amp(amplitude, "forcing.amplitude")?;
                GridFunction::from_fn(grid, block_dim, |t| {
                    let s = (t - center) / width;
                    if s.abs() < 1.0 {
                        &a * (std::f64::consts::FRAC_PI_2 * s).cos().powi(2)
                    } else {
                        DVector::zeros(block_dim)
                    }
                })
                .map_err(|e| invalid("forcing", e.to_string()))?
            }
            ForcingProfile::Table { path } => {
                let rows = read_table(&self.resolve(path))?;
                let values = match_nodes(&rows, grid, block_dim, "forcing.path")?;
                let blocks: Vec<_> = values.into_iter().map(DVector::from_vec).collect();
                GridFunction::from_blocks(grid, &blocks).map_err(|e| invalid("forcing", e.to_string()))?
            }
        };
        if let Some(after) = fc.after {
            let zero = DVector::zeros(block_dim);
            for k in 0..grid.len() {
                if grid.node(k) <= after {
                    f.set_block(k, &zero);
                }
            }
        }
        Ok(f)
    }
}

fn expand_amplitude(v: &[f64], block_dim: usize, cells: usize, field: &str) -> CliResult<DVector<f64>> {
    let dim = block_dim / cells;
    if v.len() == block_dim {
        Ok(DVector::from_column_slice(v))
    } else if v.len() == dim {
        Ok(DVector::from_fn(block_dim, |i, _| v[i % dim]))
    } else {
        Err(invalid(field, format!("expected {dim} or {block_dim} entries, got {}", v.len())))
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], dim: usize, field: &str) -> CliResult<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(invalid(field, format!("expected a {dim}x{dim} matrix given as rows")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

/// Whitespace-separated numeric rows; blank lines and lines starting with `#` are skipped.
pub fn read_table(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    parse_table(&text).map_err(|(line, message)| CliError::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    })
}

pub fn parse_table(text: &str) -> std::result::Result<Vec<Vec<f64>>, (usize, String)> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|e| (i + 1, format!("`{tok}`: {e}"))))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Checks that the first column reproduces the grid nodes and returns the remaining columns.
fn match_nodes(rows: &[Vec<f64>], grid: &TimeGrid, width: usize, field: &str) -> CliResult<Vec<Vec<f64>>> {
    if rows.len() != grid.len() {
        return Err(invalid(field, format!("expected {} rows, got {}", grid.len(), rows.len())));
    }
    let tol = 1e-9 * (grid.t_end().abs() + grid.t_start().abs()).max(1.0);
    rows.iter()
        .enumerate()
        .map(|(k, r)| {
            if r.len() != width + 1 {
                return Err(invalid(field, format!("row {k}: expected {} columns, got {}", width + 1, r.len())));
            }
            if (r[0] - grid.node(k)).abs() > tol {
                return Err(invalid(field, format!("row {k}: time {} does not match node {}", r[0], grid.node(k))));
            }
            Ok(r[1..].to_vec())
        })
        .collect()
}
