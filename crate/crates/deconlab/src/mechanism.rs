//! Node mechanisms: the per-node generating functions of a structural model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of an explicit finite conditional table: a distribution over
/// `values` for one exact configuration of the parent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub parent_values: Vec<f64>,
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

/// The generating function of one node.
///
/// Exogenous forms (`uniform`, `two-point`, `categorical-indicator`) require
/// zero parents. `weights` keys must be exactly the node's graph parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Mechanism {
    /// value = intercept + sum_p w_p * parent_p + noise_sd * eps, eps ~ N(0,1)
    LinearGaussian {
        weights: BTreeMap<String, f64>,
        intercept: f64,
        noise_sd: f64,
    },
    /// value = 1 with probability sigmoid(intercept + sum_p w_p * parent_p)
    BernoulliLogistic {
        weights: BTreeMap<String, f64>,
        intercept: f64,
    },
    Uniform { lo: f64, hi: f64 },
    /// value = values.0 with probability `prob`, else values.1
    TwoPoint { values: (f64, f64), prob: f64 },
    /// value = category index 0..k-1 drawn from `probs`
    CategoricalIndicator { k: usize, probs: Vec<f64> },
    /// Explicit finite conditional table over discrete parents.
    Table { rows: Vec<TableRow> },
}

const SIMPLEX_TOL: f64 = 1e-12;

impl Mechanism {
    /// Constant mechanism, used by `do`-mutilation.
    pub fn constant(value: f64) -> Self {
        Mechanism::LinearGaussian {
            weights: BTreeMap::new(),
            intercept: value,
            noise_sd: 0.0,
        }
    }

    /// Validate internal invariants plus agreement with the node's parents.
    pub fn validate(&self, node: &str, parent_names: &[&str]) -> Result<()> {
        let want: std::collections::BTreeSet<&str> = parent_names.iter().copied().collect();
        let check_weights = |weights: &BTreeMap<String, f64>| -> Result<()> {
            let got: std::collections::BTreeSet<&str> =
                weights.keys().map(String::as_str).collect();
            if got != want {
                return Err(Error::Config(format!(
                    "mechanism for `{node}` has weights for {:?} but graph parents are {:?}",
                    got, want
                )));
            }
            if weights.values().any(|w| !w.is_finite()) {
                return Err(Error::Config(format!("non-finite weight on `{node}`")));
            }
            Ok(())
        };
        let require_exogenous = |form: &str| -> Result<()> {
            if !parent_names.is_empty() {
                return Err(Error::Config(format!(
                    "exogenous form `{form}` on `{node}` requires zero parents, got {:?}",
                    parent_names
                )));
            }
            Ok(())
        };
        match self {
            Mechanism::LinearGaussian {
                weights,
                intercept,
                noise_sd,
            } => {
                check_weights(weights)?;
                if !intercept.is_finite() || !noise_sd.is_finite() || *noise_sd < 0.0 {
                    return Err(Error::Config(format!(
                        "linear-gaussian on `{node}` needs finite intercept and noise_sd >= 0"
                    )));
                }
            }
            Mechanism::BernoulliLogistic { weights, intercept } => {
                check_weights(weights)?;
                if !intercept.is_finite() {
                    return Err(Error::Config(format!("non-finite intercept on `{node}`")));
                }
            }
            Mechanism::Uniform { lo, hi } => {
                require_exogenous("uniform")?;
                if !(hi > lo) {
                    return Err(Error::Config(format!(
                        "uniform on `{node}` requires hi > lo"
                    )));
                }
            }
            Mechanism::TwoPoint { values, prob } => {
                require_exogenous("two-point")?;
                if !values.0.is_finite() || !values.1.is_finite() {
                    return Err(Error::Config(format!("non-finite two-point value on `{node}`")));
                }
                if !(0.0..=1.0).contains(prob) {
                    return Err(Error::Config(format!(
                        "two-point prob on `{node}` must lie in [0,1]"
                    )));
                }
            }
            Mechanism::CategoricalIndicator { k, probs } => {
                require_exogenous("categorical-indicator")?;
                if *k < 2 || probs.len() != *k {
                    return Err(Error::Config(format!(
                        "categorical-indicator on `{node}` needs k >= 2 and k probabilities"
                    )));
                }
                check_simplex(node, probs)?;
            }
            Mechanism::Table { rows } => {
                if rows.is_empty() {
                    return Err(Error::Config(format!("empty table on `{node}`")));
                }
                for row in rows {
                    if row.parent_values.len() != parent_names.len() {
                        return Err(Error::Config(format!(
                            "table row on `{node}` has {} parent values, expected {}",
                            row.parent_values.len(),
                            parent_names.len()
                        )));
                    }
                    if row.values.len() != row.probs.len() || row.values.is_empty() {
                        return Err(Error::Config(format!(
                            "table row on `{node}` needs matching values/probs"
                        )));
                    }
                    check_simplex(node, &row.probs)?;
                }
            }
        }
        Ok(())
    }

    /// True when the mechanism's support is a finite point set, which licenses
    /// exact consistency matching.
    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            Mechanism::BernoulliLogistic { .. }
                | Mechanism::TwoPoint { .. }
                | Mechanism::CategoricalIndicator { .. }
                | Mechanism::Table { .. }
        ) || matches!(self, Mechanism::LinearGaussian { weights, noise_sd, .. }
                if weights.is_empty() && *noise_sd == 0.0)
    }

    /// True when the node's exogenous noise should be a standard normal draw;
    /// all other forms consume a standard uniform draw.
    pub fn wants_normal_noise(&self) -> bool {
        matches!(self, Mechanism::LinearGaussian { .. })
    }

    /// Evaluate the mechanism for one unit.
    ///
    /// `parents` are the parent values in the graph's sorted-parent order and
    /// `parent_names` the matching names; `noise` is the unit's exogenous draw
    /// (standard normal or standard uniform, see [`Self::wants_normal_noise`]).
    pub fn evaluate(
        &self,
        node: &str,
        parent_names: &[&str],
        parents: &[f64],
        noise: f64,
    ) -> Result<f64> {
        let weighted_sum = |weights: &BTreeMap<String, f64>, intercept: f64| -> f64 {
            let mut acc = intercept;
            for (name, value) in parent_names.iter().zip(parents) {
                acc += weights[*name] * value;
            }
            acc
        };
        Ok(match self {
            Mechanism::LinearGaussian {
                weights,
                intercept,
                noise_sd,
            } => weighted_sum(weights, *intercept) + noise_sd * noise,
            Mechanism::BernoulliLogistic { weights, intercept } => {
                let p = 1.0 / (1.0 + (-weighted_sum(weights, *intercept)).exp());
                f64::from(noise < p)
            }
            Mechanism::Uniform { lo, hi } => lo + (hi - lo) * noise,
            Mechanism::TwoPoint { values, prob } => {
                if noise < *prob {
                    values.0
                } else {
                    values.1
                }
            }
            Mechanism::CategoricalIndicator { probs, .. } => draw_index(probs, noise) as f64,
            Mechanism::Table { rows } => {
                let row = rows
                    .iter()
                    .find(|r| r.parent_values == parents)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "table on `{node}` has no row for parent values {:?}",
                            parents
                        ))
                    })?;
                row.values[draw_index(&row.probs, noise)]
            }
        })
    }
}

fn check_simplex(node: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config(format!(
            "probabilities on `{node}` must lie in [0,1]"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Config(format!(
            "probabilities on `{node}` sum to {total}, expected 1 within {SIMPLEX_TOL:e}"
        )));
    }
    Ok(())
}

fn draw_index(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}
