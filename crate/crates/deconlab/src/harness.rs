//! Experiment configuration, Monte Carlo sweep execution, result
//! persistence, and summaries.
//!
//! Determinism: every (scenario, n, m) cell derives its seed from the base
//! seed and a hash of the cell descriptor alone, so a cell's rows do not
//! depend on which other cells share the run or on the worker count. Rows are
//! sorted on their keys before writing.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    design_diagnostics, estimate_adjusted, estimate_naive, estimate_substitute,
    overlap_diagnostic, AdjustOptions, BootstrapSpec,
};
use crate::factor::{independence_check, FactorModelSpec, SubstituteConfounder};
use crate::rng::{cell_key, mix64};
use crate::scenarios::{build_scenario, EstimatorRoute, Scenario, ScenarioParams};
use crate::scm::{mask_observed, FullData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_bins() -> usize {
    4
}

/// One experiment: a scenario swept over (n, m) with a set of estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario id, "a".."g".
    pub scenario: char,
    /// Mechanism weight/noise overrides and the dashed-edge flag.
    #[serde(default)]
    pub params: ScenarioParams,
    pub n_grid: Vec<usize>,
    /// Cause-count grid for the A_1..A_m families; omit for the scenario
    /// default.
    #[serde(default)]
    pub m_grid: Option<Vec<usize>>,
    /// Factor-model specs; a spec whose family matches a substitute
    /// estimator label replaces the scenario's registered spec.
    #[serde(default)]
    pub factor_models: Vec<FactorModelSpec>,
    /// Estimator labels from the scenario battery, or "all".
    pub estimators: Vec<String>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    /// Bootstrap replicates per estimate (0 = report Monte Carlo SEs across
    /// replicates instead).
    #[serde(default)]
    pub bootstrap_reps: usize,
    /// Level for the independence diagnostic on substitute rows.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Quantile bins for the overlap diagnostic.
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must be non-empty".into()));
        }
        if self
            .m_grid
            .as_ref()
            .is_some_and(|grid| grid.is_empty())
        {
            return Err(Error::Config("m_grid, when given, must be non-empty".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators must be non-empty".into()));
        }
        for spec in &self.factor_models {
            spec.validate()?;
        }
        // Scenario id and estimator labels resolve on a probe build.
        let probe = build_scenario(self.scenario, &self.base_params(None))?;
        for label in &self.estimators {
            if label != "all" {
                resolve_route(&probe, &self.factor_models, label)?;
            }
        }
        Ok(())
    }

    fn base_params(&self, m: Option<usize>) -> ScenarioParams {
        let mut params = self.params.clone();
        if m.is_some() {
            params.m = m;
        }
        params
    }

    /// A stable hash of the canonical config JSON.
    pub fn config_hash(&self) -> u64 {
        cell_key(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }
}

/// One estimate (or recorded failure) of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: char,
    pub n: usize,
    pub m: usize,
    pub replicate: usize,
    pub estimator: String,
    pub family: Option<String>,
    pub k: Option<usize>,
    pub estimand: String,
    pub point: Option<f64>,
    pub se: Option<f64>,
    pub truth: f64,
    pub bias: Option<f64>,
    /// Independence-check verdict for substitute rows.
    pub independence: Option<String>,
    /// Overlap verdict for substitute rows.
    pub overlap: Option<String>,
    pub condition_number: Option<f64>,
    /// "ok", "degenerate: collinear", or "error: ...". Failed cells are
    /// recorded, never dropped.
    pub status: String,
}

/// All rows of a sweep, sorted on (scenario, n, m, replicate, estimator,
/// estimand).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

const CSV_HEADER: [&str; 16] = [
    "scenario",
    "n",
    "m",
    "replicate",
    "estimator",
    "family",
    "k",
    "estimand",
    "point",
    "se",
    "truth",
    "bias",
    "independence",
    "overlap",
    "condition_number",
    "status",
];

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl ResultsTable {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.to_string(),
                r.n.to_string(),
                r.m.to_string(),
                r.replicate.to_string(),
                r.estimator.clone(),
                r.family.clone().unwrap_or_default(),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                r.estimand.clone(),
                fmt_opt_f64(r.point),
                fmt_opt_f64(r.se),
                format!("{}", r.truth),
                fmt_opt_f64(r.bias),
                r.independence.clone().unwrap_or_default(),
                r.overlap.clone().unwrap_or_default(),
                fmt_opt_f64(r.condition_number),
                r.status.clone(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Config(format!("csv flush failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.rows)?;
        s.push('\n');
        Ok(s)
    }

    /// Parse a results CSV produced by [`ResultsTable::to_csv_string`].
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<ResultsTable> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        let parse_opt = |s: &str| -> Option<f64> {
            if s.is_empty() {
                None
            } else {
                s.parse().ok()
            }
        };
        for record in rdr.records() {
            let r = record.map_err(|e| Error::Config(format!("bad csv row: {e}")))?;
            let field = |i: usize| r.get(i).unwrap_or("").to_string();
            rows.push(ResultRow {
                scenario: field(0).chars().next().unwrap_or('?'),
                n: field(1).parse().unwrap_or(0),
                m: field(2).parse().unwrap_or(0),
                replicate: field(3).parse().unwrap_or(0),
                estimator: field(4),
                family: Some(field(5)).filter(|s| !s.is_empty()),
                k: field(6).parse().ok(),
                estimand: field(7),
                point: parse_opt(&field(8)),
                se: parse_opt(&field(9)),
                truth: field(10).parse().unwrap_or(f64::NAN),
                bias: parse_opt(&field(11)),
                independence: Some(field(12)).filter(|s| !s.is_empty()),
                overlap: Some(field(13)).filter(|s| !s.is_empty()),
                condition_number: parse_opt(&field(14)),
                status: field(15),
            });
        }
        Ok(ResultsTable { rows })
    }
}

struct ResolvedRoute {
    route: EstimatorRoute,
    family: Option<String>,
    k: Option<usize>,
    factor_spec: Option<FactorModelSpec>,
}

fn resolve_route(
    scenario: &Scenario,
    factor_models: &[FactorModelSpec],
    label: &str,
) -> Result<ResolvedRoute> {
    let battery = scenario.estimators.iter().find(|e| e.label == label);
    let route = match battery {
        Some(e) => e.route.clone(),
        None => {
            if let Some(rest) = label.strip_prefix("adjust:") {
                EstimatorRoute::AdjustNodes {
                    nodes: rest.split('+').map(|s| s.trim().to_string()).collect(),
                    design: crate::estimators::DesignCauses::All,
                }
            } else {
                return Err(Error::Config(format!(
                    "scenario {} has no estimator labeled `{label}`",
                    scenario.id
                )));
            }
        }
    };
    Ok(match route {
        EstimatorRoute::Substitute { family, k } => {
            // A config-level spec for the same family overrides the battery's.
            let spec = factor_models
                .iter()
                .find(|s| s.family == family)
                .cloned()
                .unwrap_or_else(|| FactorModelSpec::new(family, k, 0));
            ResolvedRoute {
                route: EstimatorRoute::Substitute {
                    family,
                    k: spec.k,
                },
                family: Some(family.to_string()),
                k: Some(spec.k),
                factor_spec: Some(spec),
            }
        }
        other => ResolvedRoute {
            route: other,
            family: None,
            k: None,
            factor_spec: None,
        },
    })
}

fn expand_labels(scenario: &Scenario, labels: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for label in labels {
        if label == "all" {
            for e in &scenario.estimators {
                if !out.contains(&e.label) {
                    out.push(e.label.clone());
                }
            }
        } else if !out.contains(label) {
            out.push(label.clone());
        }
    }
    out
}

fn covariate_matrix(full: &FullData, nodes: &[String]) -> Result<DMatrix<f64>> {
    let n = full.n;
    let mut m = DMatrix::zeros(n, nodes.len());
    for (j, name) in nodes.iter().enumerate() {
        let col = full
            .column(name)
            .ok_or_else(|| Error::UnknownNode(name.clone()))?;
        for (i, &v) in col.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Run the full sweep. Deterministic for a fixed config and seed, regardless
/// of thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let m_grid: Vec<Option<usize>> = match &config.m_grid {
        Some(grid) => grid.iter().map(|&m| Some(m)).collect(),
        None => vec![None],
    };

    // Build scenario variants per m up front (cheap, keeps workers read-only).
    let mut cells: Vec<(Scenario, usize, usize)> = Vec::new();
    for m in &m_grid {
        let scenario = build_scenario(config.scenario, &config.base_params(*m))?;
        let m_actual = scenario.scm.graph().cause_order().len();
        for &n in &config.n_grid {
            if n == 0 {
                return Err(Error::Config("n must be >= 1".into()));
            }
            cells.push((scenario.clone(), n, m_actual));
        }
    }

    let labels: Vec<String> = expand_labels(&cells[0].0, &config.estimators);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.replicates).map(move |r| (c, r)))
        .collect();

    let results: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(cell_idx, replicate)| {
            let (scenario, n, m) = &cells[cell_idx];
            run_cell_replicate(config, scenario, *n, *m, replicate, &labels)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<ResultRow> = results.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.scenario, a.n, a.m, a.replicate, &a.estimator, &a.estimand).cmp(&(
            b.scenario, b.n, b.m, b.replicate, &b.estimator, &b.estimand,
        ))
    });
    Ok(ResultsTable { rows })
}

fn run_cell_replicate(
    config: &ExperimentConfig,
    scenario: &Scenario,
    n: usize,
    m: usize,
    replicate: usize,
    labels: &[String],
) -> Result<Vec<ResultRow>> {
    // Cell-local seed: depends only on the cell descriptor and base seed.
    let descriptor = format!("{}:{}:{}", scenario.id, n, m);
    let cell_seed = mix64(config.seed, cell_key(descriptor.as_bytes()), 0);
    let scm = scenario.scm.clone().with_seed(cell_seed);
    let full = scm.sample_full_data(n, &[], replicate as u64)?;
    let data = mask_observed(&full);

    let mut rows = Vec::new();
    for (est_idx, label) in labels.iter().enumerate() {
        let resolved = resolve_route(scenario, &config.factor_models, label)?;
        // Fit the factor model once per (cell, replicate, estimator).
        let fitted: Option<std::result::Result<SubstituteConfounder, Error>> =
            if let Some(spec) = &resolved.factor_spec {
                let mut spec = spec.clone();
                spec.init_seed = mix64(cell_seed, replicate as u64, spec.init_seed ^ 0xFAC7);
                Some(SubstituteConfounder::fit(&data.causes, &spec))
            } else {
                None
            };
        let (independence, overlap) = match &fitted {
            Some(Ok(sub)) => {
                let ind = independence_check(&data.causes, &sub.zhat, config.alpha)
                    .map(|r| {
                        if r.renders_independent {
                            "renders-independent".to_string()
                        } else {
                            "dependent".to_string()
                        }
                    })
                    .unwrap_or_else(|e| format!("error: {e}"));
                let subset: Vec<String> = scenario
                    .primary_estimand()
                    .targets
                    .iter()
                    .map(|t| t.cause.clone())
                    .collect();
                let ov = overlap_diagnostic(&data, sub, &subset, config.bins)
                    .map(|r| if r.pass { "pass".to_string() } else { "fail".to_string() })
                    .unwrap_or_else(|e| format!("error: {e}"));
                (Some(ind), Some(ov))
            }
            _ => (None, None),
        };

        for estimand in &scenario.estimands {
            let options = AdjustOptions {
                bootstrap: BootstrapSpec {
                    reps: config.bootstrap_reps,
                    seed: mix64(cell_seed, replicate as u64, est_idx as u64 ^ 0xB007),
                },
                interactions: false,
                design: match &resolved.route {
                    EstimatorRoute::AdjustNodes { design, .. } => *design,
                    _ => crate::estimators::DesignCauses::All,
                },
            };
            let outcome = match &resolved.route {
                EstimatorRoute::Naive => estimate_naive(&data, estimand, &options),
                EstimatorRoute::AdjustNodes { nodes, .. } => {
                    let cov = covariate_matrix(&full, nodes)?;
                    estimate_adjusted(
                        &data,
                        if cov.ncols() > 0 { Some(&cov) } else { None },
                        nodes,
                        estimand,
                        &options,
                    )
                }
                EstimatorRoute::Substitute { .. } => match &fitted {
                    Some(Ok(sub)) => estimate_substitute(&data, sub, estimand, &options),
                    Some(Err(e)) => Err(Error::Config(format!("factor fit failed: {e}"))),
                    None => unreachable!("substitute route always fits"),
                },
            };
            let row = match outcome {
                Ok(est) => ResultRow {
                    scenario: scenario.id,
                    n,
                    m,
                    replicate,
                    estimator: label.clone(),
                    family: resolved.family.clone(),
                    k: resolved.k,
                    estimand: estimand.label.clone(),
                    point: Some(est.point),
                    se: est.se,
                    truth: estimand.truth,
                    bias: Some(est.bias),
                    independence: independence.clone(),
                    overlap: overlap.clone(),
                    condition_number: Some(est.condition_number),
                    status: "ok".into(),
                },
                Err(Error::Collinear(report)) => ResultRow {
                    scenario: scenario.id,
                    n,
                    m,
                    replicate,
                    estimator: label.clone(),
                    family: resolved.family.clone(),
                    k: resolved.k,
                    estimand: estimand.label.clone(),
                    point: None,
                    se: None,
                    truth: estimand.truth,
                    bias: None,
                    independence: independence.clone(),
                    overlap: overlap.clone(),
                    condition_number: Some(report.condition_number),
                    status: "degenerate: collinear".into(),
                },
                Err(e) => ResultRow {
                    scenario: scenario.id,
                    n,
                    m,
                    replicate,
                    estimator: label.clone(),
                    family: resolved.family.clone(),
                    k: resolved.k,
                    estimand: estimand.label.clone(),
                    point: None,
                    se: None,
                    truth: estimand.truth,
                    bias: None,
                    independence: independence.clone(),
                    overlap: overlap.clone(),
                    condition_number: None,
                    status: format!("error: {e}"),
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Design diagnostics for one representative draw of a cell (used for the
/// condition-number trajectory reports).
pub fn cell_design_condition(
    config: &ExperimentConfig,
    label: &str,
    n: usize,
    m: Option<usize>,
) -> Result<f64> {
    let scenario = build_scenario(config.scenario, &config.base_params(m))?;
    let m_actual = scenario.scm.graph().cause_order().len();
    let descriptor = format!("{}:{}:{}", scenario.id, n, m_actual);
    let cell_seed = mix64(config.seed, cell_key(descriptor.as_bytes()), 0);
    let scm = scenario.scm.clone().with_seed(cell_seed);
    let full = scm.sample_full_data(n, &[], 0)?;
    let data = mask_observed(&full);
    let resolved = resolve_route(&scenario, &config.factor_models, label)?;
    let estimand = scenario.primary_estimand();
    match (&resolved.route, &resolved.factor_spec) {
        (EstimatorRoute::Substitute { .. }, Some(spec)) => {
            let mut spec = spec.clone();
            spec.init_seed = mix64(cell_seed, 0, spec.init_seed ^ 0xFAC7);
            let sub = SubstituteConfounder::fit(&data.causes, &spec)?;
            let cov = sub.covariate_columns();
            let names = sub.covariate_names();
            let report = design_diagnostics(
                &data,
                if cov.ncols() > 0 { Some(&cov) } else { None },
                &names,
                estimand,
                crate::estimators::DesignCauses::All,
            )?;
            Ok(report.condition_number)
        }
        _ => {
            let report = design_diagnostics(
                &data,
                None,
                &[],
                estimand,
                crate::estimators::DesignCauses::All,
            )?;
            Ok(report.condition_number)
        }
    }
}

// ---------------------------------------------------------------------------
// Summaries

/// Aggregate of one (scenario, n, m, estimator, estimand) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scenario: char,
    pub n: usize,
    pub m: usize,
    pub estimator: String,
    pub estimand: String,
    pub replicates: usize,
    pub degenerate: usize,
    pub errors: usize,
    pub truth: f64,
    pub mean_point: Option<f64>,
    pub mean_bias: Option<f64>,
    pub mean_abs_bias: Option<f64>,
    /// Monte Carlo SE of the mean point across replicates.
    pub mc_se: Option<f64>,
    /// unbiased | biased | indeterminate | degenerate | error
    pub verdict: String,
    pub expected: Option<String>,
    /// PASS / FAIL / n/a against the expected verdict.
    pub result: String,
}

/// A rendered summary: one block per scenario, sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
}

impl Summary {
    pub fn any_fail(&self) -> bool {
        self.cells.iter().any(|c| c.result == "FAIL")
    }

    /// Plain-text table, one line per cell.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:>8} {:>4} {:<22} {:<12} {:>5} {:>12} {:>12} {:>13} {:<13} {:<10} {:<6}\n",
            "scenario", "n", "m", "estimator", "estimand", "reps", "mean_bias", "mc_se",
            "mean_abs_bias", "verdict", "expected", "result"
        ));
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "n/a".to_string(),
        };
        for c in &self.cells {
            out.push_str(&format!(
                "{:<8} {:>8} {:>4} {:<22} {:<12} {:>5} {:>12} {:>12} {:>13} {:<13} {:<10} {:<6}\n",
                c.scenario,
                c.n,
                c.m,
                c.estimator,
                c.estimand,
                c.replicates,
                fmt(c.mean_bias),
                fmt(c.mc_se),
                fmt(c.mean_abs_bias),
                c.verdict,
                c.expected.clone().unwrap_or_else(|| "-".into()),
                c.result,
            ));
        }
        out
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Per-cell mean bias, Monte Carlo SE, and verdicts against the scenario
/// expectations (primary estimand only).
pub fn summarize(table: &ResultsTable) -> Result<Summary> {
    if table.rows.is_empty() {
        return Err(Error::Config("cannot summarize an empty table".into()));
    }
    let mut groups: BTreeMap<(char, usize, usize, String, String), Vec<&ResultRow>> =
        BTreeMap::new();
    for row in &table.rows {
        groups
            .entry((
                row.scenario,
                row.n,
                row.m,
                row.estimator.clone(),
                row.estimand.clone(),
            ))
            .or_default()
            .push(row);
    }
    let mut cells = Vec::new();
    for ((scenario, n, m, estimator, estimand), rows) in groups {
        let points: Vec<f64> = rows.iter().filter_map(|r| r.point).collect();
        let biases: Vec<f64> = rows.iter().filter_map(|r| r.bias).collect();
        let degenerate = rows
            .iter()
            .filter(|r| r.status.starts_with("degenerate"))
            .count();
        let errors = rows
            .iter()
            .filter(|r| r.status.starts_with("error"))
            .count();
        let truth = rows[0].truth;
        let mean_point = (!points.is_empty()).then(|| crate::stats::mean(&points));
        let mean_bias = (!biases.is_empty()).then(|| crate::stats::mean(&biases));
        let mean_abs_bias = (!biases.is_empty()).then(|| {
            biases.iter().map(|b| b.abs()).sum::<f64>() / biases.len() as f64
        });
        let mc_se = (points.len() > 1).then(|| crate::stats::sem(&points));
        let verdict = if degenerate == rows.len() {
            "degenerate".to_string()
        } else if errors == rows.len() {
            "error".to_string()
        } else {
            match (mean_bias, mc_se) {
                (Some(b), Some(se)) if se > 0.0 => {
                    if b.abs() <= 3.0 * se {
                        "unbiased".to_string()
                    } else if b.abs() > 5.0 * se {
                        "biased".to_string()
                    } else {
                        "indeterminate".to_string()
                    }
                }
                _ => "indeterminate".to_string(),
            }
        };
        // Expectations are registered for the primary estimand of the
        // scenario's default build.
        let expected = crate::scenarios::expected_verdict(scenario, &estimator)
            .ok()
            .filter(|_| {
                build_scenario(scenario, &ScenarioParams::default())
                    .map(|s| s.primary_estimand().label == estimand)
                    .unwrap_or(false)
            })
            .map(|v| v.to_string());
        let result = match &expected {
            None => "n/a".to_string(),
            Some(exp) => {
                if verdict == "indeterminate" && mc_se.is_none() {
                    "n/a".to_string()
                } else if &verdict == exp {
                    "PASS".to_string()
                } else {
                    "FAIL".to_string()
                }
            }
        };
        cells.push(CellSummary {
            scenario,
            n,
            m,
            estimator,
            estimand,
            replicates: rows.len(),
            degenerate,
            errors,
            truth,
            mean_point,
            mean_bias,
            mean_abs_bias,
            mc_se,
            verdict,
            expected,
            result,
        });
    }
    Ok(Summary { cells })
}

/// Mean |bias| of a (scenario-default) estimator at one (n, m) cell.
pub fn mean_abs_bias(table: &ResultsTable, estimator: &str, n: usize, m: usize) -> Option<f64> {
    let biases: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.estimator == estimator && r.n == n && r.m == m)
        .filter_map(|r| r.bias)
        .collect();
    (!biases.is_empty()).then(|| biases.iter().map(|b| b.abs()).sum::<f64>() / biases.len() as f64)
}

/// Write the table (and a metadata sidecar) to `path` in the given format.
pub fn write_outputs(
    table: &ResultsTable,
    config: &ExperimentConfig,
    path: &Path,
    format: OutputFormat,
) -> Result<()> {
    let body = match format {
        OutputFormat::Csv => table.to_csv_string()?,
        OutputFormat::Json => table.to_json_string()?,
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(body.as_bytes())?;

    let meta = serde_json::json!({
        "config": config,
        "config_hash": format!("{:016x}", config.config_hash()),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "rows": table.rows.len(),
        "wall_clock_unix_seconds": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
    });
    let meta_path = path.with_extension("meta.json");
    let mut f = std::fs::File::create(meta_path)?;
    f.write_all(serde_json::to_string_pretty(&meta)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Expected verdict lookup re-exported for the assertion path of the CLI.
pub fn assert_summary(summary: &Summary) -> std::result::Result<(), String> {
    if summary.any_fail() {
        let failing: Vec<String> = summary
            .cells
            .iter()
            .filter(|c| c.result == "FAIL")
            .map(|c| {
                format!(
                    "{}:{} {} ({} vs expected {})",
                    c.scenario,
                    c.estimator,
                    c.estimand,
                    c.verdict,
                    c.expected.clone().unwrap_or_default()
                )
            })
            .collect();
        Err(format!("verdict failures: {}", failing.join("; ")))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario: 'd',
            params: ScenarioParams::default(),
            n_grid: vec![400],
            m_grid: None,
            factor_models: vec![],
            estimators: vec!["naive".into(), "adjust:M".into()],
            replicates: 3,
            seed: 42,
            output: None,
            format: OutputFormat::Csv,
            bootstrap_reps: 0,
            alpha: 0.05,
            bins: 4,
        }
    }

    #[test]
    fn row_cardinality_matches_the_grid() {
        let config = small_config();
        let table = run_experiment(&config).unwrap();
        // 1 cell x 3 replicates x 2 estimators x 1 estimand.
        assert_eq!(table.rows.len(), 6);
        let single = ExperimentConfig {
            replicates: 1,
            estimators: vec!["naive".into()],
            ..small_config()
        };
        let table = run_experiment(&single).unwrap();
        assert_eq!(table.rows.len(), 1);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let config = small_config();
        let a = run_experiment(&config).unwrap().to_csv_string().unwrap();
        let b = run_experiment(&config).unwrap().to_csv_string().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cell_rows_do_not_depend_on_other_cells() {
        let lone = ExperimentConfig {
            n_grid: vec![400],
            ..small_config()
        };
        let paired = ExperimentConfig {
            n_grid: vec![400, 200],
            ..small_config()
        };
        let a = run_experiment(&lone).unwrap();
        let b = run_experiment(&paired).unwrap();
        let shared_a: Vec<_> = a.rows.iter().filter(|r| r.n == 400).collect();
        let shared_b: Vec<_> = b.rows.iter().filter(|r| r.n == 400).collect();
        assert_eq!(shared_a, shared_b);
    }

    #[test]
    fn unknown_keys_and_labels_are_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"scenario":"d","n_grid":[10],"estimators":["naive"],"replicates":1,"seed":1,"bogus":2}"#,
        );
        assert!(err.is_err());
        let err = ExperimentConfig::from_json(
            r#"{"scenario":"d","n_grid":[10],"estimators":["nope"],"replicates":1,"seed":1}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn csv_round_trips_through_the_parser() {
        let table = run_experiment(&small_config()).unwrap();
        let csv = table.to_csv_string().unwrap();
        let back = ResultsTable::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn summarize_groups_and_reports_single_row_se_as_unavailable() {
        let config = ExperimentConfig {
            replicates: 1,
            estimators: vec!["naive".into()],
            ..small_config()
        };
        let table = run_experiment(&config).unwrap();
        let summary = summarize(&table).unwrap();
        assert_eq!(summary.cells.len(), 1);
        assert!(summary.cells[0].mc_se.is_none());
        assert_eq!(summary.cells[0].result, "n/a");
    }
}
