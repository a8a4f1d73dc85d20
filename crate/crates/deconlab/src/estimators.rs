//! Effect estimators (naive, adjusted, substitute-adjusted) and the
//! diagnostics around them: collinearity, overlap, and conditional
//! independence of candidate confounders.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::SubstituteConfounder;
use crate::rng::stream;
use crate::scm::Dataset;
use crate::stats;

/// One intervened cause with its contrast values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauseContrast {
    pub cause: String,
    pub a: f64,
    pub a_prime: f64,
}

/// Which causes enter the outcome regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum DesignCauses {
    /// All m causes (the default multi-cause outcome model).
    #[default]
    All,
    /// Only the intervened causes; pairs with adjustment sets certified for
    /// that treatment subset.
    TreatedOnly,
}

/// An estimand descriptor: the contrast do(a) vs do(a') on the listed causes,
/// with its analytic truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimand {
    pub label: String,
    pub targets: Vec<CauseContrast>,
    /// Path-traced true effect; bias is measured against this.
    pub truth: f64,
}

impl Estimand {
    /// Unit contrast do(cause=1) vs do(cause=0) on a single cause.
    pub fn unit(cause: &str, truth: f64) -> Self {
        Estimand {
            label: format!("{cause}:1v0"),
            targets: vec![CauseContrast {
                cause: cause.to_string(),
                a: 1.0,
                a_prime: 0.0,
            }],
            truth,
        }
    }

    /// Joint unit contrast on every cause in `causes`.
    pub fn joint(causes: &[String], truth: f64) -> Self {
        Estimand {
            label: "joint:1v0".into(),
            targets: causes
                .iter()
                .map(|c| CauseContrast {
                    cause: c.clone(),
                    a: 1.0,
                    a_prime: 0.0,
                })
                .collect(),
            truth,
        }
    }

    /// `(k, m)`: number of intervened causes out of m.
    pub fn subset_flag(&self, m: usize) -> (usize, usize) {
        (self.targets.len(), m)
    }
}

/// Which estimator produced an estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EstimatorKind {
    Naive,
    Adjusted,
    Substitute { family: String, k: usize },
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Naive => write!(f, "naive"),
            EstimatorKind::Adjusted => write!(f, "oracle-adjusted"),
            EstimatorKind::Substitute { family, k } => {
                write!(f, "substitute-adjusted({family},k={k})")
            }
        }
    }
}

/// A point estimate of a causal contrast with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub estimand: Estimand,
    pub estimator: EstimatorKind,
    pub point: f64,
    /// Bootstrap standard error; absent when the bootstrap is disabled.
    pub se: Option<f64>,
    pub truth: f64,
    /// point - truth, exactly.
    pub bias: f64,
    /// Bootstrap replicates behind `se` (0 when disabled).
    pub replicates: usize,
    /// Condition number of the fitted design.
    pub condition_number: f64,
}

/// Description of a (possibly rank-deficient) regression design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollinearityReport {
    /// Design column names, `[intercept | causes | covariates]`.
    pub columns: Vec<String>,
    pub condition_number: f64,
    pub threshold: f64,
    pub rank_deficient: bool,
    /// Variance inflation per column (1.0 for the intercept; infinite for
    /// columns inside an exact linear dependence).
    pub vif: Vec<f64>,
}

/// Bootstrap configuration: `reps = 0` disables resampling (the harness then
/// reports Monte Carlo SEs across replicates instead).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSpec {
    pub reps: usize,
    pub seed: u64,
}

impl BootstrapSpec {
    pub fn disabled() -> Self {
        BootstrapSpec { reps: 0, seed: 0 }
    }
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec { reps: 200, seed: 0 }
    }
}

/// Options for the adjusted estimator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdjustOptions {
    pub bootstrap: BootstrapSpec,
    /// Include cause-by-covariate interaction columns.
    pub interactions: bool,
    /// Which causes enter the regression (all by default).
    pub design: DesignCauses,
}

struct Design {
    x: DMatrix<f64>,
    columns: Vec<String>,
    /// Indices (into the design's cause block) of the estimand targets.
    cause_cols: Vec<usize>,
    cause_names: Vec<String>,
    n_cov: usize,
    interactions: bool,
}

fn build_design(
    data: &Dataset,
    covariates: Option<&DMatrix<f64>>,
    covariate_names: &[String],
    estimand: &Estimand,
    design_causes: DesignCauses,
    interactions: bool,
) -> Result<Design> {
    let n = data.n;
    let cause_names: Vec<String> = match design_causes {
        DesignCauses::All => data.cause_names.clone(),
        DesignCauses::TreatedOnly => estimand.targets.iter().map(|t| t.cause.clone()).collect(),
    };
    for t in &estimand.targets {
        if !cause_names.contains(&t.cause) {
            return Err(Error::UnknownNode(t.cause.clone()));
        }
    }
    let cause_idx: Vec<usize> = cause_names
        .iter()
        .map(|name| {
            data.cause_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::UnknownNode(name.clone()))
        })
        .collect::<Result<_>>()?;
    let n_cov = covariates.map_or(0, DMatrix::ncols);
    if let Some(cov) = covariates {
        if cov.nrows() != n {
            return Err(Error::Config(
                "covariates must be row-aligned with the data".into(),
            ));
        }
    }
    let inter_cols = if interactions {
        cause_idx.len() * n_cov
    } else {
        0
    };
    let p = 1 + cause_idx.len() + n_cov + inter_cols;
    let mut x = DMatrix::zeros(n, p);
    let mut columns = Vec::with_capacity(p);
    columns.push("intercept".to_string());
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    for (j, &ci) in cause_idx.iter().enumerate() {
        columns.push(cause_names[j].clone());
        for i in 0..n {
            x[(i, 1 + j)] = data.causes[(i, ci)];
        }
    }
    if let Some(cov) = covariates {
        for j in 0..n_cov {
            let name = covariate_names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("cov{j}"));
            columns.push(name);
            for i in 0..n {
                x[(i, 1 + cause_idx.len() + j)] = cov[(i, j)];
            }
        }
        if interactions {
            let base = 1 + cause_idx.len() + n_cov;
            let mut col = 0;
            for (j, name) in cause_names.iter().enumerate() {
                for c in 0..n_cov {
                    columns.push(format!("{name}*{}", columns[1 + cause_idx.len() + c].clone()));
                    for i in 0..n {
                        x[(i, base + col)] =
                            x[(i, 1 + j)] * cov[(i, c)];
                    }
                    col += 1;
                }
            }
        }
    }
    let cause_cols = estimand
        .targets
        .iter()
        .map(|t| cause_names.iter().position(|c| c == &t.cause).unwrap())
        .collect();
    Ok(Design {
        x,
        columns,
        cause_cols,
        cause_names,
        n_cov,
        interactions,
    })
}

/// Plug-in standardization: average over units of the fitted difference
/// E[Y | A=a, cov_i] - E[Y | A=a', cov_i].
fn standardized_contrast(design: &Design, fit: &stats::OlsFit, estimand: &Estimand) -> f64 {
    let n = design.x.nrows();
    let p = design.x.ncols();
    let mut total = 0.0;
    let mut row_a = DVector::zeros(p);
    let mut row_p = DVector::zeros(p);
    for i in 0..n {
        for j in 0..p {
            row_a[j] = design.x[(i, j)];
            row_p[j] = design.x[(i, j)];
        }
        for (t, target) in estimand.targets.iter().enumerate() {
            let col = 1 + design.cause_cols[t];
            row_a[col] = target.a;
            row_p[col] = target.a_prime;
        }
        if design.interactions {
            // Rebuild interaction columns under the intervened cause values.
            let base = 1 + design.cause_names.len() + design.n_cov;
            let mut col = 0;
            for j in 0..design.cause_names.len() {
                for c in 0..design.n_cov {
                    let cov_v = design.x[(i, 1 + design.cause_names.len() + c)];
                    row_a[base + col] = row_a[1 + j] * cov_v;
                    row_p[base + col] = row_p[1 + j] * cov_v;
                    col += 1;
                }
            }
        }
        total += fit.predict_row(&row_a) - fit.predict_row(&row_p);
    }
    total / n as f64
}

fn estimate_with_design(
    data: &Dataset,
    covariates: Option<&DMatrix<f64>>,
    covariate_names: &[String],
    estimand: &Estimand,
    options: &AdjustOptions,
    kind: EstimatorKind,
) -> Result<EffectEstimate> {
    let design = build_design(
        data,
        covariates,
        covariate_names,
        estimand,
        options.design,
        options.interactions,
    )?;
    let y = DVector::from_column_slice(data.outcome.as_slice());
    let fit = stats::ols(&design.x, &y, &design.columns)?;
    let point = standardized_contrast(&design, &fit, estimand);

    let se = if options.bootstrap.reps > 0 {
        let mut rng = stream(options.bootstrap.seed);
        let n = data.n;
        let mut points = Vec::with_capacity(options.bootstrap.reps);
        for _ in 0..options.bootstrap.reps {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let xb = DMatrix::from_fn(n, design.x.ncols(), |i, j| design.x[(idx[i], j)]);
            let yb = DVector::from_fn(n, |i, _| y[idx[i]]);
            // Resampling can degrade conditioning; skip degenerate draws.
            if let Ok(fit_b) = stats::ols(&xb, &yb, &design.columns) {
                let design_b = Design {
                    x: xb,
                    columns: design.columns.clone(),
                    cause_cols: design.cause_cols.clone(),
                    cause_names: design.cause_names.clone(),
                    n_cov: design.n_cov,
                    interactions: design.interactions,
                };
                points.push(standardized_contrast(&design_b, &fit_b, estimand));
            }
        }
        if points.len() > 1 {
            Some(stats::sd(&points))
        } else {
            None
        }
    } else {
        None
    };

    Ok(EffectEstimate {
        estimand: estimand.clone(),
        estimator: kind,
        point,
        se,
        truth: estimand.truth,
        bias: point - estimand.truth,
        replicates: options.bootstrap.reps,
        condition_number: fit.condition_number,
    })
}

/// Outcome regression of Y on (causes, covariates), then plug-in
/// standardization over the empirical covariate distribution. Rank-deficient
/// designs surface as [`Error::Collinear`] carrying the report.
pub fn estimate_adjusted(
    data: &Dataset,
    covariates: Option<&DMatrix<f64>>,
    covariate_names: &[String],
    estimand: &Estimand,
    options: &AdjustOptions,
) -> Result<EffectEstimate> {
    let empty = covariates.map_or(true, |c| c.ncols() == 0);
    let kind = if empty {
        EstimatorKind::Naive
    } else {
        EstimatorKind::Adjusted
    };
    let cov = covariates.filter(|c| c.ncols() > 0);
    estimate_with_design(data, cov, covariate_names, estimand, options, kind)
}

/// Regression of Y on the causes only.
pub fn estimate_naive(
    data: &Dataset,
    estimand: &Estimand,
    options: &AdjustOptions,
) -> Result<EffectEstimate> {
    estimate_adjusted(data, None, &[], estimand, options)
}

/// Adjusted estimate with covariates = the substitute confounder's columns.
/// The collinearity error propagates; with a zhat that is an exact linear
/// function of the causes that is the expected outcome.
pub fn estimate_substitute(
    data: &Dataset,
    sub: &SubstituteConfounder,
    estimand: &Estimand,
    options: &AdjustOptions,
) -> Result<EffectEstimate> {
    if sub.zhat.nrows() != data.n {
        return Err(Error::Config(
            "substitute confounder was not fit on this dataset".into(),
        ));
    }
    // Spot-check the mapping against the first cause row.
    if data.n > 0 {
        let row: Vec<f64> = data.causes.row(0).iter().copied().collect();
        let z = sub.evaluate(&row);
        for (j, zj) in z.iter().enumerate() {
            if (zj - sub.zhat[(0, j)]).abs() > 1e-8 {
                return Err(Error::Config(
                    "substitute confounder does not map this dataset's causes to its zhat".into(),
                ));
            }
        }
    }
    let cov = sub.covariate_columns();
    let names = sub.covariate_names();
    let mut est = estimate_with_design(
        data,
        if cov.ncols() > 0 { Some(&cov) } else { None },
        &names,
        estimand,
        options,
        EstimatorKind::Substitute {
            family: sub.family.to_string(),
            k: sub.k,
        },
    )?;
    // Preserve provenance even when the covariate block is empty (k=1).
    est.estimator = EstimatorKind::Substitute {
        family: sub.family.to_string(),
        k: sub.k,
    };
    Ok(est)
}

/// Describe the design matrix that `estimate_adjusted` would fit, without
/// estimating (used for report columns).
pub fn design_diagnostics(
    data: &Dataset,
    covariates: Option<&DMatrix<f64>>,
    covariate_names: &[String],
    estimand: &Estimand,
    design_causes: DesignCauses,
) -> Result<CollinearityReport> {
    let design = build_design(data, covariates, covariate_names, estimand, design_causes, false)?;
    Ok(stats::design_report(&design.x, design.columns, true))
}

// ---------------------------------------------------------------------------
// Overlap diagnostic

/// Occupancy of cause configurations within one zhat stratum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumCounts {
    pub stratum: String,
    pub total: usize,
    /// Configuration label -> count.
    pub config_counts: BTreeMap<String, usize>,
}

/// Cross-tabulation of cause-subset configurations within zhat strata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub strata: Vec<StratumCounts>,
    pub n: usize,
    pub min_stratum_occupancy: usize,
    /// Strata large enough to be held to the occupancy rule.
    pub occupancy_floor: f64,
    pub pass: bool,
    /// (stratum, configuration) with zero occupancy, when failing.
    pub witness: Option<(String, String)>,
}

/// Cross-tabulate configurations of `k_subset` causes within zhat strata.
///
/// Strata are hard cluster assignments for mixtures and per-column quantile
/// bins otherwise; continuous causes are quantile-binned (default 4 bins).
/// The verdict fails if any observed configuration has zero occupancy in a
/// stratum of size at least n / (10 * strata).
pub fn overlap_diagnostic(
    data: &Dataset,
    sub: &SubstituteConfounder,
    k_subset: &[String],
    bins: usize,
) -> Result<OverlapReport> {
    if bins < 2 {
        return Err(Error::Config("overlap needs at least 2 bins".into()));
    }
    let n = data.n;
    let cause_cols: Vec<Vec<f64>> = k_subset
        .iter()
        .map(|name| {
            data.cause_names
                .iter()
                .position(|c| c == name)
                .map(|j| data.causes.column(j).iter().copied().collect())
                .ok_or_else(|| Error::UnknownNode(name.clone()))
        })
        .collect::<Result<_>>()?;
    let binned: Vec<Vec<usize>> = cause_cols.iter().map(|c| discretize(c, bins)).collect();
    let config_of = |i: usize| -> String {
        binned
            .iter()
            .map(|col| col[i].to_string())
            .collect::<Vec<_>>()
            .join(",")
    };

    let strata_of: Vec<String> = match sub.hard_assignments() {
        Some(labels) => labels.iter().map(|c| format!("cluster{c}")).collect(),
        None => {
            let z_binned: Vec<Vec<usize>> = (0..sub.zhat.ncols())
                .map(|j| {
                    let col: Vec<f64> = sub.zhat.column(j).iter().copied().collect();
                    discretize(&col, bins)
                })
                .collect();
            (0..n)
                .map(|i| {
                    z_binned
                        .iter()
                        .map(|col| col[i].to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect()
        }
    };

    let mut all_configs: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..n {
        *all_configs.entry(config_of(i)).or_default() += 1;
    }
    let mut table: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for i in 0..n {
        *table
            .entry(strata_of[i].clone())
            .or_default()
            .entry(config_of(i))
            .or_default() += 1;
    }

    let n_strata = table.len().max(1);
    let floor = n as f64 / (10.0 * n_strata as f64);
    let mut witness = None;
    let mut min_occ = usize::MAX;
    let mut strata = Vec::new();
    for (stratum, counts) in &table {
        let total: usize = counts.values().sum();
        min_occ = min_occ.min(total);
        if total as f64 >= floor {
            for config in all_configs.keys() {
                if !counts.contains_key(config) && witness.is_none() {
                    witness = Some((stratum.clone(), config.clone()));
                }
            }
        }
        strata.push(StratumCounts {
            stratum: stratum.clone(),
            total,
            config_counts: counts.clone(),
        });
    }
    Ok(OverlapReport {
        strata,
        n,
        min_stratum_occupancy: if min_occ == usize::MAX { 0 } else { min_occ },
        occupancy_floor: floor,
        pass: witness.is_none(),
        witness,
    })
}

/// Quantile-bin a column into `bins` levels; columns with few distinct values
/// (binary causes) keep their natural levels.
fn discretize(col: &[f64], bins: usize) -> Vec<usize> {
    let mut distinct: Vec<f64> = col.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() <= bins {
        return col
            .iter()
            .map(|v| distinct.iter().position(|d| d == v).unwrap())
            .collect();
    }
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..bins)
        .map(|b| sorted[(b * col.len()) / bins])
        .collect();
    col.iter()
        .map(|v| cuts.iter().take_while(|c| v >= c).count())
        .collect()
}

// ---------------------------------------------------------------------------
// Conditional-independence test

/// Verdict of [`ci_test`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CiVerdict {
    /// Independence rejected at alpha (Bonferroni-combined).
    Dependent,
    NotRejected,
    /// Every tested column is an exact linear function of the conditioning
    /// columns, so the partial correlation is undefined.
    DegenerateCollinear,
}

impl std::fmt::Display for CiVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CiVerdict::Dependent => "dependent",
            CiVerdict::NotRejected => "not-rejected",
            CiVerdict::DegenerateCollinear => "degenerate: collinear",
        })
    }
}

/// Per-column outcome of [`ci_test`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiColumn {
    pub column: usize,
    /// Partial correlation with y given the conditioning set; `None` when the
    /// column is degenerate.
    pub partial_correlation: Option<f64>,
    pub p_value: Option<f64>,
    pub degenerate: bool,
}

/// Result of testing z _||_ y | conditioning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiTestResult {
    pub columns: Vec<CiColumn>,
    /// Largest |partial correlation| among non-degenerate columns.
    pub statistic: f64,
    /// Smallest Bonferroni-adjusted p-value among non-degenerate columns.
    pub p_value: f64,
    pub alpha: f64,
    pub verdict: CiVerdict,
}

/// Partial correlation of y with each z column given the conditioning
/// columns, Fisher-z p-values, Bonferroni-combined verdict. Columns that are
/// exact linear functions of the conditioning set come back degenerate, and
/// when every column is degenerate the verdict is `degenerate: collinear`.
pub fn ci_test(
    y: &[f64],
    z: &DMatrix<f64>,
    conditioning: &DMatrix<f64>,
    alpha: f64,
) -> Result<CiTestResult> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config("alpha must lie in (0, 1)".into()));
    }
    let n = y.len();
    if z.nrows() != n || conditioning.nrows() != n {
        return Err(Error::Config("row counts must align".into()));
    }
    if n <= z.ncols() + conditioning.ncols() + 3 {
        return Err(Error::Config(format!(
            "ci_test needs n > columns(z) + columns(conditioning) + 3, n={n}"
        )));
    }
    let cond: Vec<Vec<f64>> = (0..conditioning.ncols())
        .map(|j| conditioning.column(j).iter().copied().collect())
        .collect();
    let kept = stats::drop_dependent_columns(&cond);
    let cond: Vec<Vec<f64>> = kept.iter().map(|&j| cond[j].clone()).collect();

    let m = z.ncols();
    let mut columns = Vec::with_capacity(m);
    let mut statistic: f64 = 0.0;
    let mut min_adj_p: f64 = 1.0;
    let mut tested = 0usize;
    for j in 0..m {
        let col: Vec<f64> = z.column(j).iter().copied().collect();
        if stats::residual_variance_ratio(&col, &cond) < stats::DEGENERACY_TOL {
            columns.push(CiColumn {
                column: j,
                partial_correlation: None,
                p_value: None,
                degenerate: true,
            });
            continue;
        }
        let (r, q) = stats::partial_correlation(y, &col, &cond);
        let p = stats::fisher_z_pvalue(r, n, q);
        statistic = statistic.max(r.abs());
        tested += 1;
        columns.push(CiColumn {
            column: j,
            partial_correlation: Some(r),
            p_value: Some(p),
            degenerate: false,
        });
    }
    for c in &mut columns {
        if let Some(p) = c.p_value {
            min_adj_p = min_adj_p.min((p * tested as f64).min(1.0));
        }
    }
    let verdict = if tested == 0 {
        CiVerdict::DegenerateCollinear
    } else if min_adj_p < alpha {
        CiVerdict::Dependent
    } else {
        CiVerdict::NotRejected
    };
    Ok(CiTestResult {
        columns,
        statistic,
        p_value: min_adj_p,
        alpha,
        verdict,
    })
}
