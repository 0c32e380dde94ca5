//! Desk-scale experiment drivers: targets, learning-rate tuning, depth sweeps,
//! initialization comparisons, the two-parameter toy landscape, power-law
//! fits and result emission.

mod output;
mod parallel;
mod powerlaw;
mod runs;
mod toy;
mod tuning;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gaussian_matrix, Matrix};
use crate::rng::RngState;

pub use output::{emit_results, format_float, read_csv_records, read_json_records, sidecar_path, Format, Tabular, VERSION};
pub use parallel::{par_map, worker_count, THREADS_ENV};
pub use powerlaw::{fit_powerlaw, PowerLawFit};
pub use runs::{compare_inits, depth_sweep, run_once, CompareConfig, CompareResult, RunRecord, SweepConfig};
pub use toy::{toy_loss_grad, toy_trajectory, ToyPath, ToyPoint, STALL_GRAD_NORM, STALL_LOSS_FLOOR, TOY_TARGET};
pub use tuning::{tune_lr, TunedLr, TuningProbe};

/// Default `ε` for "converged".
pub const DEFAULT_EPS: f64 = 1e-10;
/// Default iteration budget.
pub const DEFAULT_BUDGET: u64 = 10_000_000;
/// Default dimension for the initialization comparison.
pub const COMPARE_DIM: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpec {
    /// i.i.d. `N(0, 1)` entries drawn from `seed`.
    GaussianRandom { seed: u64 },
    NegIdentity,
    Custom { matrix: Matrix },
    /// A 1×1 target.
    ScalarToy { value: f64 },
}

/// Builds the `d×d` target. `ScalarToy` ignores `d` and is always 1×1.
pub fn make_target(spec: &TargetSpec, d: usize) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidInput("target dimension must be >= 1".into()));
    }
    match spec {
        TargetSpec::GaussianRandom { seed } => gaussian_matrix(d, d, 0.0, 1.0, &mut RngState::new(*seed)),
        TargetSpec::NegIdentity => Ok(Matrix::identity(d).scale(-1.0)),
        TargetSpec::Custom { matrix } => {
            if !matrix.is_square() {
                return Err(Error::shape("make_target", "square matrix", format!("{}x{}", matrix.rows(), matrix.cols())));
            }
            Ok(matrix.clone())
        }
        TargetSpec::ScalarToy { value } => Ok(Matrix::diag(&[*value])),
    }
}

/// Rescales `phi` so that `‖Φ‖_F ≤ 1`; returns it unchanged if it already is.
pub fn unit_frobenius(phi: &Matrix) -> Matrix {
    let n = phi.frobenius_norm();
    if n > 1.0 {
        phi.scale(1.0 / n)
    } else {
        phi.clone()
    }
}

/// Parsed `--target` value. `custom:PATH` stays a path until loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetArg {
    Gaussian,
    NegIdentity,
    ScalarToy,
    Custom(PathBuf),
}

impl TargetArg {
    /// Resolves to a [`TargetSpec`], reading the custom matrix if needed.
    pub fn resolve(&self, seed: u64) -> Result<TargetSpec> {
        Ok(match self {
            TargetArg::Gaussian => TargetSpec::GaussianRandom { seed },
            TargetArg::NegIdentity => TargetSpec::NegIdentity,
            TargetArg::ScalarToy => TargetSpec::ScalarToy { value: TOY_TARGET },
            TargetArg::Custom(path) => TargetSpec::Custom { matrix: read_matrix_csv(path)? },
        })
    }
}

impl fmt::Display for TargetArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetArg::Gaussian => f.write_str("gaussian"),
            TargetArg::NegIdentity => f.write_str("neg-identity"),
            TargetArg::ScalarToy => f.write_str("scalar-toy"),
            TargetArg::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

impl FromStr for TargetArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => TargetArg::Gaussian,
            "neg-identity" => TargetArg::NegIdentity,
            "scalar-toy" => TargetArg::ScalarToy,
            _ => match s.strip_prefix("custom:") {
                Some(p) if !p.is_empty() => TargetArg::Custom(PathBuf::from(p)),
                _ => return Err(Error::InvalidInput(format!("unknown target `{s}`"))),
            },
        })
    }
}

/// Reads a headerless CSV of numbers as a matrix.
pub fn read_matrix_csv(path: &std::path::Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
        })?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("`{f}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty { path: path.to_path_buf() });
    }
    Matrix::from_rows(&rows)
}

/// How a run picks its step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrPolicy {
    Theoretical,
    Fixed(f64),
    Auto,
}

impl fmt::Display for LrPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LrPolicy::Theoretical => f.write_str("theoretical"),
            LrPolicy::Fixed(v) => write!(f, "{v}"),
            LrPolicy::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for LrPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theoretical" => Ok(LrPolicy::Theoretical),
            "auto" => Ok(LrPolicy::Auto),
            _ => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("learning rate must be auto, theoretical or a number, got `{s}`")))?;
                if v.is_finite() && v > 0.0 {
                    Ok(LrPolicy::Fixed(v))
                } else {
                    Err(Error::InvalidInput(format!("learning rate must be positive, got {v}")))
                }
            }
        }
    }
}
