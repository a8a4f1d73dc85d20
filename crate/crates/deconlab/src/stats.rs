//! Shared numerics: least squares with rank diagnostics, partial
//! correlations, and Fisher-z p-values.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::CollinearityReport;

/// Documented condition-number cutoff for rank decisions.
pub const CONDITION_THRESHOLD: f64 = 1e10;

/// Residual-variance ratio below which a column counts as an exact linear
/// function of the conditioning columns.
pub const DEGENERACY_TOL: f64 = 1e-12;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Standard error of the mean.
pub fn sem(xs: &[f64]) -> f64 {
    sd(xs) / (xs.len() as f64).sqrt()
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() as f64 - 1.0)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    covariance(xs, ys) / (sd(xs) * sd(ys))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Two-sided Fisher-z p-value for a partial correlation `r` computed from
/// `n` units given `q` conditioning columns.
pub fn fisher_z_pvalue(r: f64, n: usize, q: usize) -> f64 {
    let df = n as f64 - q as f64 - 3.0;
    if df <= 0.0 {
        return 1.0;
    }
    let r = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln();
    let stat = z.abs() * df.sqrt();
    2.0 * (1.0 - normal_cdf(stat))
}

/// An ordinary least squares fit of y on x (x already contains any intercept
/// column).
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub condition_number: f64,
}

impl OlsFit {
    pub fn predict_row(&self, row: &DVector<f64>) -> f64 {
        self.coefficients.dot(row)
    }
}

/// Condition number of `x` (ratio of extreme singular values).
///
/// The cheap route squares through the normal matrix, which is accurate up to
/// roughly 1e7; beyond that the estimate is refined with a QR factorization
/// of `x` itself so that exact collinearity reports a condition number above
/// [`CONDITION_THRESHOLD`] instead of saturating low.
pub fn condition_number(x: &DMatrix<f64>) -> f64 {
    let xtx = x.transpose() * x;
    let eig = xtx.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    if max == 0.0 {
        return f64::INFINITY;
    }
    if min > max * 1e-14 {
        return (max / min).sqrt();
    }
    // Suspicious zone: refine through R of a QR factorization, whose singular
    // values match those of x without squaring.
    let r = x.clone().qr().r();
    let svd = r.svd(false, false);
    let smax = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smin <= 0.0 || !smin.is_finite() {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Variance inflation factors for the non-intercept columns of `x`.
///
/// Computed from the pseudo-inverse of the regressor correlation matrix;
/// columns participating in an exact linear dependence report infinity.
/// `has_intercept` marks column 0 as the constant (excluded, reported as 1).
pub fn variance_inflation(x: &DMatrix<f64>, has_intercept: bool) -> Vec<f64> {
    let p = x.ncols();
    let start = usize::from(has_intercept);
    let q = p - start;
    let mut vif = vec![1.0; p];
    if q < 2 {
        return vif;
    }
    // Correlation matrix of the regressors.
    let n = x.nrows();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(q);
    for j in start..p {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        cols.push(col);
    }
    let sds: Vec<f64> = cols.iter().map(|c| sd(c)).collect();
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let mut corr = DMatrix::identity(q, q);
    for a in 0..q {
        for b in (a + 1)..q {
            let c = if sds[a] == 0.0 || sds[b] == 0.0 {
                0.0
            } else {
                let cov = cols[a]
                    .iter()
                    .zip(&cols[b])
                    .map(|(x, y)| (x - means[a]) * (y - means[b]))
                    .sum::<f64>()
                    / (n as f64 - 1.0);
                cov / (sds[a] * sds[b])
            };
            corr[(a, b)] = c;
            corr[(b, a)] = c;
        }
    }
    let eig = corr.clone().symmetric_eigen();
    let lam_max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let null_tol = lam_max * 1e-12;
    // VIF_j = [corr^-1]_jj via the eigen pseudo-inverse; columns supported on
    // a null direction are flagged infinite.
    for a in 0..q {
        let mut diag = 0.0;
        let mut on_null = false;
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            let load = eig.eigenvectors[(a, k)];
            if lam <= null_tol {
                if load.abs() > 1e-8 {
                    on_null = true;
                }
            } else {
                diag += load * load / lam;
            }
        }
        vif[start + a] = if on_null { f64::INFINITY } else { diag };
    }
    vif
}

/// Describe the design and decide rank deficiency at the documented
/// threshold.
pub fn design_report(x: &DMatrix<f64>, columns: Vec<String>, has_intercept: bool) -> CollinearityReport {
    let cond = condition_number(x);
    CollinearityReport {
        columns,
        condition_number: cond,
        threshold: CONDITION_THRESHOLD,
        rank_deficient: cond > CONDITION_THRESHOLD,
        vif: variance_inflation(x, has_intercept),
    }
}

/// Least squares via the normal equations, guarded by the condition-number
/// threshold. `columns` names the design columns for the error report.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, columns: &[String]) -> Result<OlsFit> {
    assert_eq!(x.nrows(), y.len(), "design and response row counts differ");
    let cond = condition_number(x);
    if !cond.is_finite() || cond > CONDITION_THRESHOLD {
        return Err(Error::Collinear(Box::new(design_report(
            x,
            columns.to_vec(),
            true,
        ))));
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = xtx.clone().cholesky().ok_or_else(|| {
        Error::Collinear(Box::new(design_report(x, columns.to_vec(), true)))
    })?;
    let coefficients = chol.solve(&xty);
    Ok(OlsFit {
        coefficients,
        condition_number: cond,
    })
}

/// Residuals of y after least-squares projection on `[1 | cols]`.
///
/// Returns `None` when the projection is degenerate (the conditioning design
/// itself is rank deficient beyond repair); callers treat dropped columns
/// separately via [`drop_dependent_columns`].
pub fn residualize(y: &[f64], cols: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = y.len();
    let p = cols.len() + 1;
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            x[(i, j + 1)] = col[i];
        }
    }
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &yv;
    let chol = xtx.cholesky()?;
    let beta = chol.solve(&xty);
    let fitted = x * beta;
    Some((0..n).map(|i| y[i] - fitted[i]).collect())
}

/// Greedily keep a maximal linearly independent subset of `cols` (residual
/// variance relative to kept columns above [`DEGENERACY_TOL`]); returns the
/// kept column indices.
pub fn drop_dependent_columns(cols: &[Vec<f64>]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut kept_cols: Vec<Vec<f64>> = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        let total: f64 = {
            let m = mean(col);
            col.iter().map(|x| (x - m).powi(2)).sum()
        };
        if total <= 0.0 {
            continue; // constant column carries no information beyond the intercept
        }
        match residualize(col, &kept_cols) {
            Some(res) => {
                let rss: f64 = res.iter().map(|r| r * r).sum();
                if rss / total > DEGENERACY_TOL {
                    kept.push(j);
                    kept_cols.push(col.clone());
                }
            }
            None => continue,
        }
    }
    kept
}

/// Partial correlation of `a` and `b` given `cond` columns, with the count of
/// conditioning columns actually used (after dropping dependent ones).
pub fn partial_correlation(a: &[f64], b: &[f64], cond: &[Vec<f64>]) -> (f64, usize) {
    let kept_idx = drop_dependent_columns(cond);
    let kept: Vec<Vec<f64>> = kept_idx.iter().map(|&j| cond[j].clone()).collect();
    let ra = residualize(a, &kept).expect("independent conditioning columns");
    let rb = residualize(b, &kept).expect("independent conditioning columns");
    let var_a: f64 = ra.iter().map(|x| x * x).sum();
    let var_b: f64 = rb.iter().map(|x| x * x).sum();
    if var_a <= 0.0 || var_b <= 0.0 {
        return (0.0, kept.len());
    }
    let num: f64 = ra.iter().zip(&rb).map(|(x, y)| x * y).sum();
    (num / (var_a * var_b).sqrt(), kept.len())
}

/// Fraction of `y`'s variance left after projecting on `[1 | cols]`; near
/// zero means `y` is an exact linear function of the columns.
pub fn residual_variance_ratio(y: &[f64], cols: &[Vec<f64>]) -> f64 {
    let m = mean(y);
    let total: f64 = y.iter().map(|x| (x - m).powi(2)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let kept_idx = drop_dependent_columns(cols);
    let kept: Vec<Vec<f64>> = kept_idx.iter().map(|&j| cols[j].clone()).collect();
    match residualize(y, &kept) {
        Some(res) => res.iter().map(|r| r * r).sum::<f64>() / total,
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ols_recovers_exact_linear_data() {
        let n = 50;
        let mut x = DMatrix::zeros(n, 2);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let t = i as f64 / 10.0;
            x[(i, 0)] = 1.0;
            x[(i, 1)] = t;
            y[i] = 2.0 + 3.0 * t;
        }
        let fit = ols(&x, &y, &["1".into(), "t".into()]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], 3.0, epsilon = 1e-10);
    }

    #[test]
    fn exact_collinearity_reports_condition_above_threshold() {
        let n = 40;
        let mut x = DMatrix::zeros(n, 3);
        for i in 0..n {
            let t = (i as f64).sin() + 2.0;
            x[(i, 0)] = 1.0;
            x[(i, 1)] = t;
            x[(i, 2)] = 2.0 * t + 1.0; // exact linear function of the others
        }
        let y = DVector::from_element(n, 1.0);
        let err = ols(&x, &y, &["1".into(), "a".into(), "b".into()]).unwrap_err();
        match err {
            crate::error::Error::Collinear(report) => {
                assert!(report.rank_deficient);
                assert!(report.condition_number > CONDITION_THRESHOLD);
                assert!(report.vif[1].is_infinite());
                assert!(report.vif[2].is_infinite());
            }
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn partial_correlation_removes_a_common_driver() {
        // x and y are driven by z plus independent deterministic residues;
        // the partial correlation given z collapses toward zero.
        let n = 2000;
        let z: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let ex: Vec<f64> = (0..n).map(|i| ((i * 53 + 29) % 211) as f64 / 211.0 - 0.5).collect();
        let ey: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 101) as f64 / 101.0 - 0.5).collect();
        let x: Vec<f64> = z.iter().zip(&ex).map(|(v, e)| 2.0 * v + e).collect();
        let y: Vec<f64> = z.iter().zip(&ey).map(|(v, e)| v + e).collect();
        let marginal = correlation(&x, &y);
        assert!(marginal.abs() > 0.5);
        let (partial, used) = partial_correlation(&x, &y, &[z]);
        assert_eq!(used, 1);
        assert!(
            partial.abs() < 0.1 * marginal.abs(),
            "partial {partial} vs marginal {marginal}"
        );
    }

    #[test]
    fn dependent_conditioning_columns_are_dropped() {
        let z1: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let z2: Vec<f64> = z1.iter().map(|v| 3.0 * v - 2.0).collect();
        let kept = drop_dependent_columns(&[z1.clone(), z2, z1.clone()]);
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn fisher_z_pvalue_behaves_at_the_extremes() {
        assert!(fisher_z_pvalue(0.0, 100, 0) > 0.99);
        assert!(fisher_z_pvalue(0.9, 100, 0) < 1e-6);
        assert_eq!(fisher_z_pvalue(0.5, 4, 2), 1.0); // df <= 0
    }

    #[test]
    fn residual_variance_ratio_flags_exact_functions() {
        let a: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).cos()).collect();
        let exact: Vec<f64> = a.iter().map(|v| 5.0 * v - 4.0).collect();
        assert!(residual_variance_ratio(&exact, &[a.clone()]) < DEGENERACY_TOL);
        let noisy: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, v)| v + ((i % 7) as f64) * 0.1)
            .collect();
        assert!(residual_variance_ratio(&noisy, &[a]) > 1e-6);
    }
}
