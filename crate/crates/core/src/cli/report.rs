//! JSON run reports, solution tables and atomic file output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cli::config::RhoResolution;
use crate::cli::CliError;
use crate::grid::GridFunction;
use crate::operator::Certificate;
use crate::verify::TheoremReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub norm_u: f64,
    pub norm_f: f64,
    pub residual: f64,
    pub c_h: Option<f64>,
    pub bound_ok: bool,
    pub causality_residual: f64,
    /// `||M0^1/2 U - V||_W` between plain and sandwiched solutions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equivalence_residual: Option<f64>,
    pub max_step_condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Wall-clock field; excluded from the payload hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_unix_seconds: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<RhoResolution>,
    pub certificates: Vec<Certificate>,
    pub theorems: Vec<TheoremReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSummary>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, config_source: Option<&str>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config_hash: config_source.map(sha256_hex),
            seed,
            rho: None,
            certificates: Vec::new(),
            theorems: Vec::new(),
            solve: None,
            passed: false,
            notes: Vec::new(),
            provenance: Provenance {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                generated_unix_seconds: None,
            },
        }
    }

    pub fn stamped(mut self) -> Self {
        self.provenance.generated_unix_seconds = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
        self
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the report with wall-clock fields removed.
    pub fn payload_hash(&self) -> Result<String, CliError> {
        let mut bare = self.clone();
        bare.provenance.generated_unix_seconds = None;
        Ok(sha256_hex(&serde_json::to_string(&bare)?))
    }

    /// One line per certificate and theorem row, then the solve summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        if let Some(r) = &self.rho {
            let _ = writeln!(
                out,
                "rho = {:.6} (discrete {:.6}{})",
                r.rho,
                r.discrete_rho,
                r.rho0.map(|x| format!(", rho0 = {x:.6}")).unwrap_or_default()
            );
        }
        for c in &self.certificates {
            let _ = writeln!(
                out,
                "[{}] {:<28} margin {:>14.6e}  threshold {:>14.6e}",
                mark(c.passed),
                c.kind,
                c.margin,
                c.threshold
            );
        }
        let failed_rows: Vec<_> = self.theorems.iter().filter(|t| !t.ok()).collect();
        if !self.theorems.is_empty() {
            let _ = writeln!(out, "theorem rows: {} total, {} not as expected", self.theorems.len(), failed_rows.len());
            for t in failed_rows {
                let _ = writeln!(out, "  [FAIL] {}", t.id);
            }
            for t in self.theorems.iter().filter(|t| t.witness.is_some()) {
                let _ = writeln!(out, "  witness: {} ({})", t.id, t.notes.join("; "));
            }
        }
        if let Some(s) = &self.solve {
            let _ = writeln!(
                out,
                "solve: |U|_W = {:.6e}, |F|_W = {:.6e}, c_h = {}, bound {}, causality residual {:.3e}, residual {:.3e}",
                s.norm_u,
                s.norm_f,
                s.c_h.map(|c| format!("{c:.6}")).unwrap_or_else(|| "n/a".into()),
                mark(s.bound_ok),
                s.causality_residual,
                s.residual
            );
            if let Some(e) = s.equivalence_residual {
                let _ = writeln!(out, "plain/sandwiched equivalence residual {e:.3e}");
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "overall: {}", mark(self.passed));
        out
    }
}

pub fn sha256_hex(data: &str) -> String {
    hex::encode(Sha256::digest(data.as_bytes()))
}

/// Column table: `t` then the block entries, 17 significant digits.
pub fn solution_table(u: &GridFunction) -> String {
    let g = u.grid();
    let m = u.block_dim();
    let mut out = String::from("# t");
    for i in 0..m {
        let _ = write!(out, " u{i}");
    }
    out.push('\n');
    for k in 0..g.len() {
        let _ = write!(out, "{:.16e}", g.node(k));
        for x in u.block(k).iter() {
            let _ = write!(out, " {x:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |e| CliError::Io { path: path.to_path_buf(), source: e };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}
