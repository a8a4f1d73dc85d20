//! Gaussian mixture with shared diagonal covariance, fit by EM.
//!
//! zhat is the responsibility vector, a deterministic function of the unit's
//! cause row given the fitted parameters. Initialization is k-means++-style
//! seeding from the spec's `init_seed`; an empty component triggers one
//! reseed and then a degenerate-fit warning.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::Result;
use crate::rng::{mix64, stream};

use super::{FactorFamily, FactorModelSpec, FitDiagnostics, FittedMapping, SubstituteConfounder};

const VAR_FLOOR: f64 = 1e-12;
const LN_2PI: f64 = 1.837877066409345_f64;

pub(super) fn fit(causes: &DMatrix<f64>, spec: &FactorModelSpec) -> Result<SubstituteConfounder> {
    let n = causes.nrows();
    if spec.k == 1 {
        // Single component: responsibilities are identically one.
        let mapping = FittedMapping::Mixture {
            weights: vec![1.0],
            means: mean_row(causes),
            variances: column_variances(causes, &mean_row(causes)),
        };
        return Ok(SubstituteConfounder {
            family: FactorFamily::Mixture,
            k: 1,
            zhat: DMatrix::from_element(n, 1, 1.0),
            mapping,
            loglik_trace: Vec::new(),
            diagnostics: FitDiagnostics::default(),
        });
    }

    let first = fit_once(causes, spec, spec.init_seed)?;
    if !first.empty_component {
        return Ok(finish(causes, spec, first, false, None));
    }
    // Reseed once, then report if still degenerate.
    let retry_seed = mix64(spec.init_seed, 0x5eed, 1);
    let second = fit_once(causes, spec, retry_seed)?;
    let warning = second.empty_component.then(|| {
        "empty mixture component after reseed; responsibilities remain degenerate".to_string()
    });
    Ok(finish(causes, spec, second, true, warning))
}

struct MixtureFit {
    weights: Vec<f64>,
    means: DMatrix<f64>,
    variances: Vec<f64>,
    trace: Vec<f64>,
    empty_component: bool,
}

fn finish(
    causes: &DMatrix<f64>,
    spec: &FactorModelSpec,
    fit: MixtureFit,
    reseeded: bool,
    degenerate_fit: Option<String>,
) -> SubstituteConfounder {
    let mapping = FittedMapping::Mixture {
        weights: fit.weights,
        means: fit.means,
        variances: fit.variances,
    };
    let zhat = super::ppca::zhat_from_mapping(&mapping, causes, spec.k);
    SubstituteConfounder {
        family: FactorFamily::Mixture,
        k: spec.k,
        zhat,
        mapping,
        loglik_trace: fit.trace,
        diagnostics: FitDiagnostics {
            reseeded,
            degenerate_fit,
        },
    }
}

fn fit_once(causes: &DMatrix<f64>, spec: &FactorModelSpec, seed: u64) -> Result<MixtureFit> {
    let (n, m) = (causes.nrows(), causes.ncols());
    let k = spec.k;
    let mut rng = stream(seed);

    // k-means++-style seeding: centers are data rows, later centers chosen
    // with probability proportional to squared distance to the nearest one.
    let mut centers: Vec<usize> = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| row_sq_dist(causes, i, centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(pick);
        for i in 0..n {
            d2[i] = d2[i].min(row_sq_dist(causes, i, pick));
        }
    }

    let mut means = DMatrix::from_fn(k, m, |c, j| causes[(centers[c], j)]);
    let mut weights = vec![1.0 / k as f64; k];
    let grand_mean = mean_row(causes);
    let mut variances = column_variances(causes, &grand_mean);

    let mut resp = DMatrix::zeros(n, k);
    let mut trace: Vec<f64> = Vec::new();
    let mut empty_component = false;
    for _ in 0..spec.max_iters {
        // E-step (and the log-likelihood under the current parameters).
        let mut ll = 0.0;
        for i in 0..n {
            let mut logs = vec![0.0; k];
            for (c, l) in logs.iter_mut().enumerate() {
                *l = weights[c].ln() + log_gauss_row(causes, i, &means, c, &variances);
            }
            let lse = log_sum_exp(&logs);
            ll += lse;
            for c in 0..k {
                resp[(i, c)] = (logs[c] - lse).exp();
            }
        }
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| (ll - prev).abs() <= spec.rel_tol * prev.abs().max(1.0));
        trace.push(ll);
        if converged {
            break;
        }

        // M-step.
        let mass: Vec<f64> = (0..k).map(|c| resp.column(c).iter().sum()).collect();
        empty_component = mass.iter().any(|&mc| mc < 1.0 / n as f64);
        if empty_component {
            break;
        }
        for c in 0..k {
            weights[c] = mass[c] / n as f64;
            for j in 0..m {
                let s: f64 = (0..n).map(|i| resp[(i, c)] * causes[(i, j)]).sum();
                means[(c, j)] = s / mass[c];
            }
        }
        for (j, var) in variances.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                for c in 0..k {
                    s += resp[(i, c)] * (causes[(i, j)] - means[(c, j)]).powi(2);
                }
            }
            *var = (s / n as f64).max(VAR_FLOOR);
        }
    }

    Ok(MixtureFit {
        weights,
        means,
        variances,
        trace,
        empty_component,
    })
}

pub(super) fn evaluate(mapping: &FittedMapping, row: &[f64]) -> Vec<f64> {
    let FittedMapping::Mixture {
        weights,
        means,
        variances,
    } = mapping
    else {
        unreachable!("mixture evaluate called with wrong mapping")
    };
    let k = weights.len();
    if k == 1 {
        return vec![1.0];
    }
    let mut logs = vec![0.0; k];
    for (c, l) in logs.iter_mut().enumerate() {
        let mut acc = weights[c].ln();
        for (j, &x) in row.iter().enumerate() {
            let var = variances[j];
            acc += -0.5 * ((x - means[(c, j)]).powi(2) / var + var.ln() + LN_2PI);
        }
        *l = acc;
    }
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// Per-row per-entry held-out log-density.
pub(super) fn row_scores(sub: &SubstituteConfounder, rows: &DMatrix<f64>) -> Vec<f64> {
    let FittedMapping::Mixture {
        weights,
        means,
        variances,
    } = &sub.mapping
    else {
        unreachable!()
    };
    let m = variances.len();
    (0..rows.nrows())
        .map(|i| {
            let logs: Vec<f64> = (0..weights.len())
                .map(|c| {
                    let mut acc = weights[c].ln();
                    for j in 0..m {
                        let var = variances[j];
                        acc += -0.5
                            * ((rows[(i, j)] - means[(c, j)]).powi(2) / var + var.ln() + LN_2PI);
                    }
                    acc
                })
                .collect();
            log_sum_exp(&logs) / m as f64
        })
        .collect()
}

fn row_sq_dist(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (0..x.ncols()).map(|j| (x[(a, j)] - x[(b, j)]).powi(2)).sum()
}

fn mean_row(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    DMatrix::from_fn(1, x.ncols(), |_, j| x.column(j).iter().sum::<f64>() / n)
}

fn column_variances(x: &DMatrix<f64>, means: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| {
            let v = x
                .column(j)
                .iter()
                .map(|&xi| (xi - means[(0, j)]).powi(2))
                .sum::<f64>()
                / n;
            v.max(VAR_FLOOR)
        })
        .collect()
}

fn log_gauss_row(
    x: &DMatrix<f64>,
    i: usize,
    means: &DMatrix<f64>,
    c: usize,
    variances: &[f64],
) -> f64 {
    let mut acc = 0.0;
    for (j, &var) in variances.iter().enumerate() {
        acc += -0.5 * ((x[(i, j)] - means[(c, j)]).powi(2) / var + var.ln() + LN_2PI);
    }
    acc
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::trace_is_monotone;
    use rand_distr::StandardNormal;

    /// Two spherical clusters centered at +c and -c per coordinate.
    fn two_clusters(n: usize, m: usize, c: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = stream(seed);
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i % 2 == 0)).collect();
        let data = DMatrix::from_fn(n, m, |i, _| {
            let center = if labels[i] == 1 { c } else { -c };
            center + rng.sample::<f64, _>(StandardNormal)
        });
        (data, labels)
    }

    #[test]
    fn separated_clusters_are_recovered() {
        let (data, labels) = two_clusters(600, 10, 5.0, 3);
        let spec = FactorModelSpec::new(FactorFamily::Mixture, 2, 17);
        let sub = SubstituteConfounder::fit(&data, &spec).unwrap();
        let hard = sub.hard_assignments().unwrap();
        let agree = hard.iter().zip(&labels).filter(|(a, b)| a == b).count();
        let acc = (agree.max(600 - agree)) as f64 / 600.0;
        assert!(acc > 0.99, "accuracy {acc}");
        assert!(trace_is_monotone(&sub.loglik_trace, 1e-9));
        assert!(sub.mapping_discrepancy(&data) <= 1e-10);
    }

    #[test]
    fn k_one_gives_constant_ones() {
        let (data, _) = two_clusters(50, 3, 1.0, 5);
        let spec = FactorModelSpec::new(FactorFamily::Mixture, 1, 1);
        let sub = SubstituteConfounder::fit(&data, &spec).unwrap();
        assert!(sub.zhat.iter().all(|&z| z == 1.0));
        assert_eq!(sub.covariate_columns().ncols(), 0);
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let (data, _) = two_clusters(200, 4, 2.0, 9);
        let spec = FactorModelSpec::new(FactorFamily::Mixture, 3, 23);
        let sub = SubstituteConfounder::fit(&data, &spec).unwrap();
        for i in 0..200 {
            let s: f64 = (0..3).map(|c| sub.zhat[(i, c)]).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (data, _) = two_clusters(150, 5, 3.0, 11);
        let spec = FactorModelSpec::new(FactorFamily::Mixture, 2, 29);
        let a = SubstituteConfounder::fit(&data, &spec).unwrap();
        let b = SubstituteConfounder::fit(&data, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hard_assignment_ties_break_toward_lower_index() {
        let sub = SubstituteConfounder {
            family: FactorFamily::Mixture,
            k: 2,
            zhat: DMatrix::from_row_slice(1, 2, &[0.5, 0.5]),
            mapping: FittedMapping::Mixture {
                weights: vec![0.5, 0.5],
                means: DMatrix::zeros(2, 1),
                variances: vec![1.0],
            },
            loglik_trace: vec![],
            diagnostics: FitDiagnostics::default(),
        };
        assert_eq!(sub.hard_assignments().unwrap(), vec![0]);
    }
}
