//! Fit diagnostics: the pairwise conditional-independence check over the
//! causes and a held-out predictive score.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats;

use super::{FactorFamily, FactorModelSpec, SubstituteConfounder};

/// Partial correlation of one cause pair given the zhat columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairIndependence {
    pub i: usize,
    pub j: usize,
    pub partial_correlation: f64,
    pub p_value: f64,
    /// Bonferroni-adjusted p-value used for the verdict.
    pub p_adjusted: f64,
    pub rejected: bool,
}

/// Result of testing whether zhat renders the causes mutually independent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub pairs: Vec<PairIndependence>,
    /// Symmetric matrix of partial correlations (unit diagonal).
    pub statistics: DMatrix<f64>,
    pub max_abs_partial_correlation: f64,
    pub alpha: f64,
    /// No pair rejects at `alpha` after Bonferroni correction.
    pub renders_independent: bool,
    /// zhat column indices dropped as exact duplicates / collinear.
    pub dropped_z_columns: Vec<usize>,
}

/// Pairwise partial correlations of the causes given the zhat columns, with
/// Fisher-z p-values and a Bonferroni-combined verdict.
pub fn independence_check(
    causes: &DMatrix<f64>,
    zhat: &DMatrix<f64>,
    alpha: f64,
) -> Result<IndependenceReport> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config("alpha must lie in (0, 1)".into()));
    }
    let (n, m) = (causes.nrows(), causes.ncols());
    if zhat.nrows() != n {
        return Err(Error::Config("zhat rows must align with causes".into()));
    }
    let z_cols: Vec<Vec<f64>> = (0..zhat.ncols())
        .map(|j| zhat.column(j).iter().copied().collect())
        .collect();
    let kept = stats::drop_dependent_columns(&z_cols);
    let dropped: Vec<usize> = (0..zhat.ncols()).filter(|j| !kept.contains(j)).collect();
    let cond: Vec<Vec<f64>> = kept.iter().map(|&j| z_cols[j].clone()).collect();
    if n <= cond.len() + 3 {
        return Err(Error::Config(format!(
            "independence check needs n > k + 3 (n={n}, k={})",
            cond.len()
        )));
    }

    let n_pairs = m * (m - 1) / 2;
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut statistics = DMatrix::identity(m, m);
    let mut max_abs: f64 = 0.0;
    for i in 0..m {
        let a: Vec<f64> = causes.column(i).iter().copied().collect();
        for j in (i + 1)..m {
            let b: Vec<f64> = causes.column(j).iter().copied().collect();
            let (r, q) = stats::partial_correlation(&a, &b, &cond);
            let p = stats::fisher_z_pvalue(r, n, q);
            let p_adjusted = (p * n_pairs as f64).min(1.0);
            statistics[(i, j)] = r;
            statistics[(j, i)] = r;
            max_abs = max_abs.max(r.abs());
            pairs.push(PairIndependence {
                i,
                j,
                partial_correlation: r,
                p_value: p,
                p_adjusted,
                rejected: p_adjusted < alpha,
            });
        }
    }
    let renders_independent = pairs.iter().all(|p| !p.rejected);
    Ok(IndependenceReport {
        pairs,
        statistics,
        max_abs_partial_correlation: max_abs,
        alpha,
        renders_independent,
        dropped_z_columns: dropped,
    })
}

/// Per-row per-entry held-out log-likelihood of `rows` under a fitted model.
pub fn heldout_row_scores(sub: &SubstituteConfounder, rows: &DMatrix<f64>) -> Vec<f64> {
    match sub.family {
        FactorFamily::Ppca => super::ppca::row_scores(sub, rows),
        FactorFamily::Mixture => super::mixture::row_scores(sub, rows),
        FactorFamily::PoissonMf => super::poisson::row_scores(sub, rows),
    }
}

/// Fit on `causes_train`, score `causes_test`: mean held-out per-entry
/// log-likelihood. A report column only, never a validity gate.
pub fn heldout_predictive_check(
    causes_train: &DMatrix<f64>,
    causes_test: &DMatrix<f64>,
    spec: &FactorModelSpec,
) -> Result<f64> {
    if causes_train.ncols() != causes_test.ncols() {
        return Err(Error::Config(
            "train and test must have the same cause columns".into(),
        ));
    }
    let sub = SubstituteConfounder::fit(causes_train, spec)?;
    let scores = heldout_row_scores(&sub, causes_test);
    Ok(stats::mean(&scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn standard_normal_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed);
        DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn perfect_dependence_is_rejected_given_constant_zhat() {
        let n = 400;
        let mut causes = standard_normal_matrix(n, 2, 3);
        for i in 0..n {
            causes[(i, 1)] = causes[(i, 0)];
        }
        let zhat = DMatrix::from_element(n, 1, 1.0);
        let report = independence_check(&causes, &zhat, 0.05).unwrap();
        assert!(!report.renders_independent);
        assert_eq!(report.dropped_z_columns, vec![0]);
        assert!(report.max_abs_partial_correlation > 0.999);
    }

    #[test]
    fn shared_driver_is_removed_by_conditioning_on_it() {
        let n = 500;
        let mut rng = stream(9);
        let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let causes = DMatrix::from_fn(n, 2, |i, _| {
            z[i] + 0.3 * rng.sample::<f64, _>(StandardNormal)
        });
        let zhat = DMatrix::from_fn(n, 1, |i, _| z[i]);
        let marginal = independence_check(&causes, &DMatrix::from_element(n, 1, 0.0), 0.05);
        assert!(!marginal.unwrap().renders_independent);
        let given_z = independence_check(&causes, &zhat, 0.05).unwrap();
        assert!(given_z.renders_independent);
    }

    #[test]
    fn statistics_matrix_is_symmetric_with_p_values_in_range() {
        let causes = standard_normal_matrix(200, 4, 5);
        let zhat = standard_normal_matrix(200, 2, 6);
        let report = independence_check(&causes, &zhat, 0.05).unwrap();
        for p in &report.pairs {
            assert!((0.0..=1.0).contains(&p.p_value));
            assert_eq!(
                report.statistics[(p.i, p.j)],
                report.statistics[(p.j, p.i)]
            );
        }
    }

    #[test]
    fn misspecified_k_scores_lower_out_of_sample() {
        // Five-factor data: k=5 fits strictly better than k=1.
        let n = 600;
        let (m, k_true) = (12, 5);
        let mut rng = stream(31);
        let w = DMatrix::from_fn(m, k_true, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = DMatrix::from_fn(n, k_true, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.2);
        let data = &z * w.transpose() + noise;
        let train = data.rows(0, 400).into_owned();
        let test = data.rows(400, 200).into_owned();
        let mut spec1 = FactorModelSpec::new(FactorFamily::Ppca, 1, 7);
        spec1.max_iters = 300;
        let mut spec5 = FactorModelSpec::new(FactorFamily::Ppca, 5, 7);
        spec5.max_iters = 300;
        let s1 = heldout_predictive_check(&train, &test, &spec1).unwrap();
        let s5 = heldout_predictive_check(&train, &test, &spec5).unwrap();
        assert!(s5 > s1, "k=5 score {s5} should beat k=1 score {s1}");
    }

    #[test]
    fn iid_split_scores_agree_within_two_ses() {
        let n = 800;
        let mut rng = stream(41);
        let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = DMatrix::from_fn(n, 6, |i, _| {
            z[i] + 0.5 * rng.sample::<f64, _>(StandardNormal)
        });
        let train = data.rows(0, 500).into_owned();
        let test = data.rows(500, 300).into_owned();
        let mut spec = FactorModelSpec::new(FactorFamily::Ppca, 1, 3);
        spec.max_iters = 300;
        let sub = SubstituteConfounder::fit(&train, &spec).unwrap();
        let train_scores = heldout_row_scores(&sub, &train);
        let test_scores = heldout_row_scores(&sub, &test);
        let diff = crate::stats::mean(&train_scores) - crate::stats::mean(&test_scores);
        let se = (crate::stats::sem(&train_scores).powi(2)
            + crate::stats::sem(&test_scores).powi(2))
        .sqrt();
        assert!(diff.abs() < 2.0 * se, "diff {diff}, se {se}");
    }
}
