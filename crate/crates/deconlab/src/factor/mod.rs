//! Latent-variable models of the causes and the substitute confounder they
//! induce.
//!
//! Each family fits by EM-style ascent and exposes `zhat` together with a
//! `mapping` that re-evaluates E[Z | A = a] for a single cause row. The
//! mapping is a deterministic function of the row alone; the fitters build
//! `zhat` by applying the mapping row by row, so re-evaluation reproduces
//! `zhat` bit for bit.

mod diagnostics;
mod mixture;
mod poisson;
mod ppca;

pub use diagnostics::{
    heldout_predictive_check, heldout_row_scores, independence_check, IndependenceReport,
    PairIndependence,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Factor-model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorFamily {
    Ppca,
    PoissonMf,
    Mixture,
}

impl std::fmt::Display for FactorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FactorFamily::Ppca => "ppca",
            FactorFamily::PoissonMf => "poisson-mf",
            FactorFamily::Mixture => "mixture",
        })
    }
}

fn default_max_iters() -> usize {
    2000
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_standardize() -> bool {
    true
}

/// Fit configuration for one factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorModelSpec {
    pub family: FactorFamily,
    /// Latent dimension or cluster count.
    pub k: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Relative log-likelihood change below which the fit stops.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub init_seed: u64,
    /// Standardize cause columns before a PPCA fit (default true).
    #[serde(default = "default_standardize")]
    pub standardize: bool,
}

impl FactorModelSpec {
    pub fn new(family: FactorFamily, k: usize, init_seed: u64) -> Self {
        FactorModelSpec {
            family,
            k,
            max_iters: default_max_iters(),
            rel_tol: default_rel_tol(),
            init_seed,
            standardize: default_standardize(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("factor model needs k >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fitted parameters sufficient to evaluate E[Z | A = a] for a new row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FittedMapping {
    /// Posterior mean `projection * (standardize(a) - mean)`.
    Ppca {
        /// Precomputed (W'W + s2 I)^-1 W', k x m.
        projection: DMatrix<f64>,
        mean: Vec<f64>,
        noise_var: f64,
        loadings: DMatrix<f64>,
        /// Per-column (mean, sd) applied before the projection, when enabled.
        standardizer: Option<Vec<(f64, f64)>>,
    },
    /// Posterior responsibilities under a shared-diagonal gaussian mixture.
    Mixture {
        weights: Vec<f64>,
        /// k x m component means.
        means: DMatrix<f64>,
        /// Shared per-coordinate variances.
        variances: Vec<f64>,
    },
    /// Per-row Poisson factor scores at a fixed basis.
    PoissonMf {
        /// m x k basis.
        basis: DMatrix<f64>,
        max_iters: usize,
        rel_tol: f64,
    },
}

impl FittedMapping {
    /// Evaluate the substitute-confounder row for one cause row.
    pub fn evaluate(&self, row: &[f64]) -> Vec<f64> {
        match self {
            FittedMapping::Ppca { .. } => ppca::evaluate(self, row),
            FittedMapping::Mixture { .. } => mixture::evaluate(self, row),
            FittedMapping::PoissonMf { .. } => poisson::evaluate(self, row),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            FittedMapping::Ppca { projection, .. } => projection.nrows(),
            FittedMapping::Mixture { weights, .. } => weights.len(),
            FittedMapping::PoissonMf { basis, .. } => basis.ncols(),
        }
    }
}

/// Notes accumulated during a fit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// The mixture fit was reseeded once after an empty component.
    pub reseeded: bool,
    /// Set when the fit remained degenerate after the retry.
    pub degenerate_fit: Option<String>,
}

/// A fitted latent-variable model of the causes: `zhat` plus the mapping that
/// regenerates it from cause rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstituteConfounder {
    pub family: FactorFamily,
    pub k: usize,
    /// n x k posterior summary per unit (posterior mean or responsibilities).
    pub zhat: DMatrix<f64>,
    pub mapping: FittedMapping,
    /// Log-likelihood (or Poisson objective) per iteration; non-decreasing.
    pub loglik_trace: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl SubstituteConfounder {
    /// Fit the family selected by `spec` to the cause matrix.
    pub fn fit(causes: &DMatrix<f64>, spec: &FactorModelSpec) -> Result<SubstituteConfounder> {
        spec.validate()?;
        match spec.family {
            FactorFamily::Ppca => ppca::fit(causes, spec),
            FactorFamily::Mixture => mixture::fit(causes, spec),
            FactorFamily::PoissonMf => poisson::fit(causes, spec),
        }
    }

    /// Re-evaluate the mapping for one cause row.
    pub fn evaluate(&self, row: &[f64]) -> Vec<f64> {
        self.mapping.evaluate(row)
    }

    /// Covariate block for outcome regressions. Mixture responsibilities sum
    /// to one, so the last column is dropped to keep the block independent of
    /// the intercept; other families pass `zhat` through.
    pub fn covariate_columns(&self) -> DMatrix<f64> {
        match self.family {
            FactorFamily::Mixture if self.k > 1 => {
                self.zhat.columns(0, self.k - 1).into_owned()
            }
            FactorFamily::Mixture => DMatrix::zeros(self.zhat.nrows(), 0),
            _ => self.zhat.clone(),
        }
    }

    /// Names for the covariate block columns.
    pub fn covariate_names(&self) -> Vec<String> {
        let cols = match self.family {
            FactorFamily::Mixture => self.k.saturating_sub(1),
            _ => self.k,
        };
        (0..cols).map(|j| format!("zhat{j}")).collect()
    }

    /// Hard cluster labels (mixture only); ties break toward the lower
    /// component index.
    pub fn hard_assignments(&self) -> Option<Vec<usize>> {
        if self.family != FactorFamily::Mixture {
            return None;
        }
        Some(
            (0..self.zhat.nrows())
                .map(|i| {
                    let mut best = 0;
                    for c in 1..self.k {
                        if self.zhat[(i, c)] > self.zhat[(i, best)] {
                            best = c;
                        }
                    }
                    best
                })
                .collect(),
        )
    }

    /// Maximum relative discrepancy between `zhat` rows and mapping
    /// re-evaluation; the determinism-of-mapping contract keeps this at zero.
    pub fn mapping_discrepancy(&self, causes: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..causes.nrows() {
            let row: Vec<f64> = causes.row(i).iter().copied().collect();
            let z = self.mapping.evaluate(&row);
            for (j, zj) in z.iter().enumerate() {
                worst = worst.max((zj - self.zhat[(i, j)]).abs());
            }
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SubstituteConfounder> {
        Ok(serde_json::from_str(text)?)
    }
}

/// True when the trace never decreases by more than `rel_slack` relative to
/// the running scale.
pub fn trace_is_monotone(trace: &[f64], rel_slack: f64) -> bool {
    trace.windows(2).all(|w| {
        let scale = w[0].abs().max(1.0);
        w[1] >= w[0] - rel_slack * scale
    })
}
