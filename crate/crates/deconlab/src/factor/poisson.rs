//! Poisson matrix factorization by multiplicative updates.
//!
//! A ~ Theta B' with nonnegative factors, maximizing the Poisson
//! log-likelihood sum_ij [a_ij ln(lambda_ij) - lambda_ij] (factorial terms
//! dropped from the objective trace; they do not depend on the factors).
//! After the joint fit, zhat rows are recomputed per row at the fixed basis,
//! which is exactly what the mapping evaluates for new rows.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;

use super::{FactorFamily, FactorModelSpec, FitDiagnostics, FittedMapping, SubstituteConfounder};

const EPS: f64 = 1e-12;
/// Per-row refit budget used by the mapping.
const ROW_ITERS: usize = 500;
const ROW_TOL: f64 = 1e-13;

pub(super) fn fit(causes: &DMatrix<f64>, spec: &FactorModelSpec) -> Result<SubstituteConfounder> {
    let (n, m) = (causes.nrows(), causes.ncols());
    for v in causes.iter() {
        if *v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
            return Err(Error::Config(format!(
                "poisson-mf requires non-negative integer entries, found {v}"
            )));
        }
    }
    let k = spec.k;
    let grand_mean = causes.iter().sum::<f64>() / (n * m) as f64;
    let scale = (grand_mean / k as f64).sqrt();

    let mut rng = stream(spec.init_seed);
    let mut theta = DMatrix::from_fn(n, k, |_, _| scale * (0.5 + rng.gen::<f64>()));
    let mut basis = DMatrix::from_fn(m, k, |_, _| scale * (0.5 + rng.gen::<f64>()));

    let mut trace = Vec::new();
    for _ in 0..spec.max_iters {
        // Theta update.
        let lambda = &theta * basis.transpose();
        let ratio = ratio_matrix(causes, &lambda);
        let numer = &ratio * &basis; // n x k
        let col_sums_b: Vec<f64> = (0..k).map(|c| basis.column(c).iter().sum()).collect();
        for i in 0..n {
            for c in 0..k {
                theta[(i, c)] *= numer[(i, c)] / col_sums_b[c].max(EPS);
            }
        }
        // Basis update.
        let lambda = &theta * basis.transpose();
        let ratio = ratio_matrix(causes, &lambda);
        let numer = ratio.transpose() * &theta; // m x k
        let col_sums_t: Vec<f64> = (0..k).map(|c| theta.column(c).iter().sum()).collect();
        for j in 0..m {
            for c in 0..k {
                basis[(j, c)] *= numer[(j, c)] / col_sums_t[c].max(EPS);
            }
        }

        let obj = objective(causes, &(&theta * basis.transpose()));
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| (obj - prev).abs() <= spec.rel_tol * prev.abs().max(1.0));
        trace.push(obj);
        if converged {
            break;
        }
    }

    let mapping = FittedMapping::PoissonMf {
        basis,
        max_iters: ROW_ITERS,
        rel_tol: ROW_TOL,
    };
    // Final scores come from the per-row mapping so re-evaluation is exact.
    let zhat = super::ppca::zhat_from_mapping(&mapping, causes, k);

    Ok(SubstituteConfounder {
        family: FactorFamily::PoissonMf,
        k,
        zhat,
        mapping,
        loglik_trace: trace,
        diagnostics: FitDiagnostics::default(),
    })
}

/// Maximize the row's Poisson likelihood over theta at a fixed basis, from a
/// deterministic row-derived start.
pub(super) fn evaluate(mapping: &FittedMapping, row: &[f64]) -> Vec<f64> {
    let FittedMapping::PoissonMf {
        basis,
        max_iters,
        rel_tol,
    } = mapping
    else {
        unreachable!("poisson evaluate called with wrong mapping")
    };
    let (m, k) = (basis.nrows(), basis.ncols());
    assert_eq!(row.len(), m, "cause row width mismatch");
    let row_sum: f64 = row.iter().sum();
    let col_sums: Vec<f64> = (0..k).map(|c| basis.column(c).iter().sum()).collect();
    let mut theta: Vec<f64> = col_sums
        .iter()
        .map(|&s| row_sum / (k as f64 * s.max(EPS)).max(EPS))
        .collect();
    if row_sum == 0.0 {
        return vec![0.0; k];
    }
    let mut prev_obj = f64::NEG_INFINITY;
    for _ in 0..*max_iters {
        let mut next = theta.clone();
        for (c, nc) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &aj) in row.iter().enumerate() {
                if aj > 0.0 {
                    let lam: f64 = (0..k).map(|d| theta[d] * basis[(j, d)]).sum();
                    acc += basis[(j, c)] * aj / lam.max(EPS);
                }
            }
            *nc = theta[c] * acc / col_sums[c].max(EPS);
        }
        theta = next;
        let obj = row_objective(row, &theta, basis);
        if (obj - prev_obj).abs() <= rel_tol * prev_obj.abs().max(1.0) {
            break;
        }
        prev_obj = obj;
    }
    theta
}

fn ratio_matrix(a: &DMatrix<f64>, lambda: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        if a[(i, j)] > 0.0 {
            a[(i, j)] / lambda[(i, j)].max(EPS)
        } else {
            0.0
        }
    })
}

fn objective(a: &DMatrix<f64>, lambda: &DMatrix<f64>) -> f64 {
    let mut obj = 0.0;
    for (av, lv) in a.iter().zip(lambda.iter()) {
        if *av > 0.0 {
            obj += av * lv.max(EPS).ln();
        }
        obj -= lv;
    }
    obj
}

fn row_objective(row: &[f64], theta: &[f64], basis: &DMatrix<f64>) -> f64 {
    let k = theta.len();
    let mut obj = 0.0;
    for (j, &aj) in row.iter().enumerate() {
        let lam: f64 = (0..k).map(|d| theta[d] * basis[(j, d)]).sum();
        if aj > 0.0 {
            obj += aj * lam.max(EPS).ln();
        }
        obj -= lam;
    }
    obj
}

/// Per-row per-entry held-out Poisson log-likelihood (factorial included so
/// scores are comparable across fits).
pub(super) fn row_scores(sub: &SubstituteConfounder, rows: &DMatrix<f64>) -> Vec<f64> {
    let FittedMapping::PoissonMf { basis, .. } = &sub.mapping else {
        unreachable!()
    };
    let m = basis.nrows();
    (0..rows.nrows())
        .map(|i| {
            let row: Vec<f64> = rows.row(i).iter().copied().collect();
            let theta = sub.mapping.evaluate(&row);
            let mut ll = 0.0;
            for (j, &aj) in row.iter().enumerate() {
                let lam: f64 = (0..theta.len())
                    .map(|d| theta[d] * basis[(j, d)])
                    .sum::<f64>()
                    .max(EPS);
                ll += aj * lam.ln() - lam - statrs::function::gamma::ln_gamma(aj + 1.0);
            }
            ll / m as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::trace_is_monotone;
    use rand_distr::{Distribution, Poisson};

    fn poisson_data(n: usize, m: usize, rate: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed);
        let pois = Poisson::new(rate).unwrap();
        DMatrix::from_fn(n, m, |_, _| pois.sample(&mut rng).round())
    }

    #[test]
    fn rank_one_reconstruction_recovers_the_mean() {
        // Theta = 2s, B = 3s: every entry of A is exactly 6.
        let a = DMatrix::from_element(40, 6, 6.0);
        let mut spec = FactorModelSpec::new(FactorFamily::PoissonMf, 1, 3);
        spec.max_iters = 500;
        let sub = SubstituteConfounder::fit(&a, &spec).unwrap();
        let FittedMapping::PoissonMf { basis, .. } = &sub.mapping else {
            unreachable!()
        };
        let recon = &sub.zhat * basis.transpose();
        for v in recon.iter() {
            assert!((v - 6.0).abs() / 6.0 < 0.10, "entry {v}");
        }
    }

    #[test]
    fn all_zero_matrix_gives_zero_scores_and_flat_trace() {
        let a = DMatrix::zeros(20, 5);
        let spec = FactorModelSpec::new(FactorFamily::PoissonMf, 2, 7);
        let sub = SubstituteConfounder::fit(&a, &spec).unwrap();
        assert!(sub.zhat.iter().all(|&z| z == 0.0));
        assert!(sub.loglik_trace.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn objective_is_non_decreasing_on_random_data() {
        let a = poisson_data(80, 12, 4.0, 21);
        let spec = FactorModelSpec::new(FactorFamily::PoissonMf, 3, 9);
        let sub = SubstituteConfounder::fit(&a, &spec).unwrap();
        assert!(trace_is_monotone(&sub.loglik_trace, 1e-9));
    }

    #[test]
    fn mapping_reproduces_zhat_exactly() {
        let a = poisson_data(60, 8, 3.0, 5);
        let spec = FactorModelSpec::new(FactorFamily::PoissonMf, 2, 13);
        let sub = SubstituteConfounder::fit(&a, &spec).unwrap();
        assert!(sub.mapping_discrepancy(&a) <= 1e-10);
    }

    #[test]
    fn negative_or_fractional_entries_are_rejected() {
        let mut a = poisson_data(10, 4, 2.0, 1);
        a[(0, 0)] = -1.0;
        let spec = FactorModelSpec::new(FactorFamily::PoissonMf, 2, 1);
        assert!(SubstituteConfounder::fit(&a, &spec).is_err());
        a[(0, 0)] = 1.5;
        assert!(SubstituteConfounder::fit(&a, &spec).is_err());
    }
}
