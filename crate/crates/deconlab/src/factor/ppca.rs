//! Probabilistic PCA by EM.
//!
//! Model: a_i = W z_i + mu + eps with z ~ N(0, I_k) and isotropic noise
//! eps ~ N(0, s2 I_m). The E-step posterior is gaussian with mean
//! (W'W + s2 I)^-1 W' (a_i - mu); the M-step has the usual closed form.
//! Cause columns are standardized first unless the spec disables it.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream;

use super::{FactorFamily, FactorModelSpec, FitDiagnostics, FittedMapping, SubstituteConfounder};

const VAR_FLOOR: f64 = 1e-12;
const LN_2PI: f64 = 1.837877066409345_f64;

pub(super) fn fit(causes: &DMatrix<f64>, spec: &FactorModelSpec) -> Result<SubstituteConfounder> {
    let (n, m) = (causes.nrows(), causes.ncols());
    if spec.k >= m {
        return Err(Error::Config(format!(
            "ppca requires k < m for subspace identifiability (k={}, m={m})",
            spec.k
        )));
    }
    if n <= spec.k {
        return Err(Error::Config(format!(
            "ppca requires n > k (n={n}, k={})",
            spec.k
        )));
    }
    check_column_variance(causes)?;

    let standardizer = if spec.standardize {
        Some(column_standardizer(causes))
    } else {
        None
    };
    let x = apply_standardizer(causes, standardizer.as_deref());

    // Centering mean of the (possibly standardized) data.
    let mu: Vec<f64> = (0..m)
        .map(|j| x.column(j).iter().sum::<f64>() / n as f64)
        .collect();
    let mut centered = x.clone();
    for j in 0..m {
        for i in 0..n {
            centered[(i, j)] -= mu[j];
        }
    }
    let total_ss: f64 = centered.iter().map(|v| v * v).sum();
    // MLE covariance, used only through trace terms of the log-likelihood.
    let s_mle = centered.transpose() * &centered / n as f64;

    let mut rng = stream(spec.init_seed);
    let mut w = DMatrix::from_fn(m, spec.k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut sigma2: f64 = 1.0;

    let mut trace = Vec::new();
    for _ in 0..spec.max_iters {
        // E-step moments.
        let mk = w.transpose() * &w + DMatrix::identity(spec.k, spec.k) * sigma2;
        let mk_inv = mk
            .cholesky()
            .ok_or_else(|| Error::DegenerateInput("ppca posterior matrix not PD".into()))?
            .inverse();
        let ez = &centered * &w * &mk_inv; // n x k
        let sum_ezz = &mk_inv * (n as f64 * sigma2) + ez.transpose() * &ez;

        // M-step.
        let s1 = centered.transpose() * &ez; // m x k
        let sum_ezz_inv = sum_ezz
            .clone()
            .cholesky()
            .ok_or_else(|| Error::DegenerateInput("ppca moment matrix not PD".into()))?
            .inverse();
        let w_new = &s1 * &sum_ezz_inv;
        let term2: f64 = w_new.iter().zip(s1.iter()).map(|(a, b)| a * b).sum();
        let wtw = w_new.transpose() * &w_new;
        let term3: f64 = wtw.iter().zip(sum_ezz.iter()).map(|(a, b)| a * b).sum();
        sigma2 = ((total_ss - 2.0 * term2 + term3) / (n as f64 * m as f64)).max(VAR_FLOOR);
        w = w_new;

        let ll = log_likelihood(&w, sigma2, &s_mle, n, m);
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| (ll - prev).abs() <= spec.rel_tol * prev.abs().max(1.0));
        trace.push(ll);
        if converged {
            break;
        }
    }

    // Final posterior projection; zhat rows come from the mapping itself so
    // re-evaluation is bit-identical.
    let mk = w.transpose() * &w + DMatrix::identity(spec.k, spec.k) * sigma2;
    let mk_inv = mk
        .cholesky()
        .ok_or_else(|| Error::DegenerateInput("ppca posterior matrix not PD".into()))?
        .inverse();
    let projection = mk_inv * w.transpose(); // k x m
    let mapping = FittedMapping::Ppca {
        projection,
        mean: mu,
        noise_var: sigma2,
        loadings: w,
        standardizer,
    };
    let zhat = zhat_from_mapping(&mapping, causes, spec.k);

    Ok(SubstituteConfounder {
        family: FactorFamily::Ppca,
        k: spec.k,
        zhat,
        mapping,
        loglik_trace: trace,
        diagnostics: FitDiagnostics::default(),
    })
}

pub(super) fn evaluate(mapping: &FittedMapping, row: &[f64]) -> Vec<f64> {
    let FittedMapping::Ppca {
        projection,
        mean,
        standardizer,
        ..
    } = mapping
    else {
        unreachable!("ppca evaluate called with wrong mapping")
    };
    let m = mean.len();
    assert_eq!(row.len(), m, "cause row width mismatch");
    let mut x = vec![0.0; m];
    for j in 0..m {
        let v = match standardizer {
            Some(s) => (row[j] - s[j].0) / s[j].1,
            None => row[j],
        };
        x[j] = v - mean[j];
    }
    let k = projection.nrows();
    let mut z = vec![0.0; k];
    for (a, za) in z.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..m {
            acc += projection[(a, j)] * x[j];
        }
        *za = acc;
    }
    z
}

pub(super) fn zhat_from_mapping(
    mapping: &FittedMapping,
    causes: &DMatrix<f64>,
    k: usize,
) -> DMatrix<f64> {
    let n = causes.nrows();
    let mut zhat = DMatrix::zeros(n, k);
    let mut row = vec![0.0; causes.ncols()];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = causes[(i, j)];
        }
        let z = mapping.evaluate(&row);
        for (j, zj) in z.iter().enumerate() {
            zhat[(i, j)] = *zj;
        }
    }
    zhat
}

pub(super) fn check_column_variance(causes: &DMatrix<f64>) -> Result<()> {
    for j in 0..causes.ncols() {
        let col = causes.column(j);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        if var == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "cause column {j} has zero variance"
            )));
        }
    }
    Ok(())
}

pub(super) fn column_standardizer(causes: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let n = causes.nrows() as f64;
    (0..causes.ncols())
        .map(|j| {
            let col = causes.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        })
        .collect()
}

pub(super) fn apply_standardizer(
    causes: &DMatrix<f64>,
    standardizer: Option<&[(f64, f64)]>,
) -> DMatrix<f64> {
    match standardizer {
        None => causes.clone(),
        Some(s) => DMatrix::from_fn(causes.nrows(), causes.ncols(), |i, j| {
            (causes[(i, j)] - s[j].0) / s[j].1
        }),
    }
}

/// Marginal gaussian log-likelihood of the centered data under C = WW' + s2 I.
fn log_likelihood(w: &DMatrix<f64>, sigma2: f64, s_mle: &DMatrix<f64>, n: usize, m: usize) -> f64 {
    let c = w * w.transpose() + DMatrix::identity(m, m) * sigma2;
    let chol = c.cholesky().expect("covariance is PD by construction");
    let ln_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let c_inv_s = chol.solve(s_mle);
    let trace: f64 = c_inv_s.diagonal().iter().sum();
    -0.5 * n as f64 * (m as f64 * LN_2PI + ln_det + trace)
}

/// Per-row per-entry held-out log-density (standardized scale when the model
/// was fit with standardization).
pub(super) fn row_scores(sub: &SubstituteConfounder, rows: &DMatrix<f64>) -> Vec<f64> {
    let FittedMapping::Ppca {
        loadings,
        noise_var,
        mean,
        standardizer,
        ..
    } = &sub.mapping
    else {
        unreachable!()
    };
    let m = mean.len();
    let c = loadings * loadings.transpose() + DMatrix::identity(m, m) * *noise_var;
    let chol = c.cholesky().expect("covariance is PD");
    let ln_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let x = apply_standardizer(rows, standardizer.as_deref());
    (0..x.nrows())
        .map(|i| {
            let mut d = nalgebra::DVector::zeros(m);
            for j in 0..m {
                d[j] = x[(i, j)] - mean[j];
            }
            let solved = chol.solve(&d);
            let quad = d.dot(&solved);
            (-0.5 * (m as f64 * LN_2PI + ln_det + quad)) / m as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::trace_is_monotone;
    use crate::rng::mix64;
    use rand::Rng;

    fn sample_factor_data(n: usize, m: usize, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = stream(seed);
        let w_true = DMatrix::from_fn(m, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.3);
        (&z * w_true.transpose() + noise, w_true)
    }

    #[test]
    fn fit_is_deterministic() {
        let (data, _) = sample_factor_data(200, 8, 2, 5);
        let spec = FactorModelSpec::new(FactorFamily::Ppca, 2, 77);
        let a = SubstituteConfounder::fit(&data, &spec).unwrap();
        let b = SubstituteConfounder::fit(&data, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loglik_trace_is_monotone_and_mapping_reproduces_zhat() {
        let (data, _) = sample_factor_data(300, 10, 3, 6);
        let spec = FactorModelSpec::new(FactorFamily::Ppca, 3, 11);
        let sub = SubstituteConfounder::fit(&data, &spec).unwrap();
        assert!(trace_is_monotone(&sub.loglik_trace, 1e-9));
        assert!(sub.mapping_discrepancy(&data) <= 1e-10);
    }

    #[test]
    fn k_must_be_below_m_and_variance_positive() {
        let (data, _) = sample_factor_data(50, 4, 2, 3);
        let spec = FactorModelSpec::new(FactorFamily::Ppca, 4, 1);
        assert!(matches!(
            SubstituteConfounder::fit(&data, &spec),
            Err(Error::Config(_))
        ));
        let mut flat = data.clone();
        for i in 0..flat.nrows() {
            flat[(i, 1)] = 7.0;
        }
        let spec = FactorModelSpec::new(FactorFamily::Ppca, 2, 1);
        match SubstituteConfounder::fit(&flat, &spec) {
            Err(Error::DegenerateInput(msg)) => assert!(msg.contains("column 1")),
            other => panic!("expected degenerate-input error, got {other:?}"),
        }
    }

    #[test]
    fn rank_one_noiseless_recovery() {
        // All columns equal: zhat must track the common column almost exactly.
        let n = 200;
        let mut rng = stream(42);
        let common: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = DMatrix::from_fn(n, 4, |i, _| common[i]);
        let mut spec = FactorModelSpec::new(FactorFamily::Ppca, 1, 9);
        spec.max_iters = 300;
        let sub = SubstituteConfounder::fit(&data, &spec).unwrap();
        let z: Vec<f64> = sub.zhat.column(0).iter().copied().collect();
        let r = crate::stats::correlation(&z, &common);
        assert!(r.abs() > 0.999, "correlation {r}");
    }

    #[test]
    fn rescaling_a_column_leaves_zhat_unchanged_under_standardization() {
        let (data, _) = sample_factor_data(150, 6, 2, 8);
        let spec = FactorModelSpec::new(FactorFamily::Ppca, 2, 4);
        let base = SubstituteConfounder::fit(&data, &spec).unwrap();
        let mut scaled = data.clone();
        for i in 0..scaled.nrows() {
            scaled[(i, 2)] *= 250.0;
        }
        let other = SubstituteConfounder::fit(&scaled, &spec).unwrap();
        let delta = (&base.zhat - &other.zhat).abs().max();
        assert!(delta < 1e-8, "zhat moved by {delta}");
    }

    #[test]
    fn posterior_mean_matches_direct_numerical_maximization() {
        // 3 x 2 toy data, k = 1: the posterior mean maximizes the joint
        // density over z; golden-section search is the independent oracle.
        let data = DMatrix::from_row_slice(3, 2, &[1.0, 0.8, -0.6, -0.4, 0.2, 0.1]);
        let mut spec = FactorModelSpec::new(FactorFamily::Ppca, 1, 13);
        spec.max_iters = 200;
        spec.standardize = false;
        let sub = SubstituteConfounder::fit(&data, &spec).unwrap();
        let FittedMapping::Ppca {
            loadings,
            mean,
            noise_var,
            ..
        } = &sub.mapping
        else {
            unreachable!()
        };
        for i in 0..3 {
            let a = [data[(i, 0)], data[(i, 1)]];
            let joint = |z: f64| {
                let mut ll = -0.5 * z * z;
                for j in 0..2 {
                    let pred = loadings[(j, 0)] * z + mean[j];
                    ll -= 0.5 * (a[j] - pred).powi(2) / noise_var;
                }
                ll
            };
            // Golden-section over a wide bracket.
            let (mut lo, mut hi) = (-20.0_f64, 20.0_f64);
            let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let m1 = hi - phi * (hi - lo);
                let m2 = lo + phi * (hi - lo);
                if joint(m1) < joint(m2) {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            let numeric = 0.5 * (lo + hi);
            let closed = sub.zhat[(i, 0)];
            assert!(
                (numeric - closed).abs() < 1e-6,
                "row {i}: numeric {numeric} vs closed-form {closed}"
            );
        }
    }

    #[test]
    fn permuting_rows_permutes_zhat() {
        // Refitting on permuted rows permutes zhat identically: the EM
        // sufficient statistics are row-order invariant (up to float
        // summation order, hence the tolerance).
        let (data, _) = sample_factor_data(60, 5, 2, mix64(1, 2, 3));
        let spec = FactorModelSpec::new(FactorFamily::Ppca, 2, 21);
        let sub = SubstituteConfounder::fit(&data, &spec).unwrap();
        let perm: Vec<usize> = (0..60).rev().collect();
        let permuted = DMatrix::from_fn(60, 5, |i, j| data[(perm[i], j)]);
        let sub_p = SubstituteConfounder::fit(&permuted, &spec).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for j in 0..2 {
                let delta = (sub_p.zhat[(new_i, j)] - sub.zhat[(old_i, j)]).abs();
                assert!(delta < 1e-8, "row {new_i} col {j} moved by {delta}");
            }
        }
    }
}
