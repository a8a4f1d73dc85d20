//! Pre-registered SCM configurations a-g: graph families with fixed default
//! parameterizations, analytic truths, and the qualitative verdict each
//! estimator is expected to produce on them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DesignCauses, Estimand};
use crate::factor::FactorFamily;
use crate::graph::{CausalGraph, NodeRole};
use crate::mechanism::Mechanism;
use crate::scm::{AceMethod, Intervention, Scm};

/// Qualitative expectation for one estimator on one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Unbiased,
    Biased,
    /// The estimator is expected to fail with a collinear design.
    Degenerate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Unbiased => "unbiased",
            Verdict::Biased => "biased",
            Verdict::Degenerate => "degenerate",
        })
    }
}

/// How an estimator row obtains its covariates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EstimatorRoute {
    Naive,
    /// Adjust for named columns pulled from the full data (latents allowed:
    /// this is the oracle route).
    AdjustNodes {
        nodes: Vec<String>,
        design: DesignCauses,
    },
    /// Fit a factor model on the causes and adjust for its zhat.
    Substitute { family: FactorFamily, k: usize },
}

/// One pre-registered estimator of a scenario's battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioEstimator {
    pub label: String,
    pub route: EstimatorRoute,
}

/// A fully parameterized scenario: model, estimands with analytic truths,
/// estimator battery, and expected verdicts for the primary estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: char,
    pub description: String,
    pub scm: Scm,
    /// Primary estimand first.
    pub estimands: Vec<Estimand>,
    pub estimators: Vec<ScenarioEstimator>,
    /// Estimator label -> expected verdict on the primary estimand.
    pub expected: BTreeMap<String, Verdict>,
}

impl Scenario {
    pub fn primary_estimand(&self) -> &Estimand {
        &self.estimands[0]
    }

    /// The oracle adjustment route of this scenario (label "oracle").
    pub fn oracle(&self) -> &ScenarioEstimator {
        self.estimators
            .iter()
            .find(|e| e.label == "oracle")
            .expect("every scenario registers an oracle")
    }
}

fn default_dashed() -> bool {
    false
}

/// Construction knobs: `m` resizes the cause family where the graph is drawn
/// as A_1..A_m, `dashed` toggles the optional latent edge of scenarios b/c,
/// and the override maps touch mechanism weights and noise only (never the
/// graph shape).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub m: Option<usize>,
    #[serde(default = "default_dashed")]
    pub dashed: bool,
    /// "Parent->Child" -> new weight; the edge must already exist.
    pub weights: BTreeMap<String, f64>,
    /// Node -> new noise standard deviation (linear-gaussian nodes only).
    pub noise_sd: BTreeMap<String, f64>,
}

pub const SCENARIO_IDS: [char; 7] = ['a', 'b', 'c', 'd', 'e', 'f', 'g'];

/// Build every scenario with default parameters.
pub fn catalog() -> Vec<Scenario> {
    SCENARIO_IDS
        .iter()
        .map(|&id| build_scenario(id, &ScenarioParams::default()).expect("default scenario"))
        .collect()
}

/// Expected verdict of `estimator_label` on the scenario's primary estimand.
pub fn expected_verdict(id: char, estimator_label: &str) -> Result<Verdict> {
    let scenario = build_scenario(id, &ScenarioParams::default())?;
    scenario
        .expected
        .get(estimator_label)
        .copied()
        .ok_or_else(|| {
            Error::Config(format!(
                "scenario {id} has no estimator labeled `{estimator_label}`"
            ))
        })
}

/// Build one scenario by id with parameter overrides.
pub fn build_scenario(id: char, params: &ScenarioParams) -> Result<Scenario> {
    let mut scenario = match id {
        'a' => scenario_a(params),
        'b' => scenario_b(params),
        'c' => scenario_c(params),
        'd' => scenario_d(params),
        'e' => scenario_e(params),
        'f' => scenario_f(params),
        'g' => scenario_g(params),
        other => Err(Error::Config(format!("unknown scenario `{other}`"))),
    }?;
    // Truths are recomputed from the (possibly overridden) model, so the
    // catalog never carries stale constants.
    for estimand in &mut scenario.estimands {
        estimand.truth = path_traced_truth(&scenario.scm, estimand)?;
    }
    Ok(scenario)
}

/// Exact truth for an estimand via path tracing.
pub fn path_traced_truth(scm: &Scm, estimand: &Estimand) -> Result<f64> {
    let a = Intervention::new(
        estimand
            .targets
            .iter()
            .map(|t| (t.cause.clone(), t.a)),
    );
    let a_prime = Intervention::new(
        estimand
            .targets
            .iter()
            .map(|t| (t.cause.clone(), t.a_prime)),
    );
    Ok(scm.true_ace(&a, &a_prime, AceMethod::PathTrace)?.value)
}

// ---------------------------------------------------------------------------
// Builders

struct ModelBuilder {
    nodes: Vec<(String, NodeRole)>,
    edges: Vec<(String, String)>,
    causes: Vec<String>,
    mechanisms: BTreeMap<String, Mechanism>,
}

impl ModelBuilder {
    fn new() -> Self {
        ModelBuilder {
            nodes: Vec::new(),
            edges: Vec::new(),
            causes: Vec::new(),
            mechanisms: BTreeMap::new(),
        }
    }

    fn node(&mut self, name: &str, role: NodeRole, mech: Mechanism) -> &mut Self {
        self.nodes.push((name.to_string(), role));
        if role == NodeRole::Cause {
            self.causes.push(name.to_string());
        }
        self.mechanisms.insert(name.to_string(), mech);
        self
    }

    fn linear(&mut self, name: &str, role: NodeRole, weights: &[(&str, f64)], noise_sd: f64) {
        for (parent, _) in weights {
            self.edges.push(((*parent).to_string(), name.to_string()));
        }
        self.node(
            name,
            role,
            Mechanism::LinearGaussian {
                weights: weights
                    .iter()
                    .map(|&(p, w)| (p.to_string(), w))
                    .collect(),
                intercept: 0.0,
                noise_sd,
            },
        );
    }

    fn build(mut self, params: &ScenarioParams) -> Result<Scm> {
        apply_overrides(&mut self.mechanisms, params)?;
        // Canonical order: nodes and edges sorted by name, so the serialized
        // scenario files are stable.
        self.nodes.sort_by(|a, b| a.0.cmp(&b.0));
        self.edges.sort();
        let graph = CausalGraph::new(self.nodes, self.edges, self.causes)?;
        Scm::new(graph, self.mechanisms, 0)
    }
}

fn apply_overrides(
    mechanisms: &mut BTreeMap<String, Mechanism>,
    params: &ScenarioParams,
) -> Result<()> {
    for (key, value) in &params.weights {
        let (parent, child) = key
            .split_once("->")
            .ok_or_else(|| Error::Config(format!("weight override key `{key}` is not Parent->Child")))?;
        let mech = mechanisms
            .get_mut(child.trim())
            .ok_or_else(|| Error::UnknownNode(child.trim().to_string()))?;
        match mech {
            Mechanism::LinearGaussian { weights, .. }
            | Mechanism::BernoulliLogistic { weights, .. } => {
                let slot = weights.get_mut(parent.trim()).ok_or_else(|| {
                    Error::Config(format!(
                        "no edge `{}` -> `{}` to override; the graph shape is frozen",
                        parent.trim(),
                        child.trim()
                    ))
                })?;
                *slot = *value;
            }
            _ => {
                return Err(Error::Config(format!(
                    "node `{}` has no weights to override",
                    child.trim()
                )))
            }
        }
    }
    for (node, value) in &params.noise_sd {
        let mech = mechanisms
            .get_mut(node)
            .ok_or_else(|| Error::UnknownNode(node.clone()))?;
        match mech {
            Mechanism::LinearGaussian { noise_sd, .. } => {
                if *value < 0.0 {
                    return Err(Error::Config("noise_sd override must be >= 0".into()));
                }
                *noise_sd = *value;
            }
            _ => {
                return Err(Error::Config(format!(
                    "node `{node}` has no noise_sd to override"
                )))
            }
        }
    }
    Ok(())
}

fn resolve_m(params: &ScenarioParams, default: usize, id: char) -> Result<usize> {
    let m = params.m.unwrap_or(default);
    if m < 2 {
        return Err(Error::Config(format!("scenario {id} needs m >= 2, got {m}")));
    }
    Ok(m)
}

fn cause_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("A{i}")).collect()
}

fn ppca_row(k: usize) -> ScenarioEstimator {
    ScenarioEstimator {
        label: "substitute:ppca".into(),
        route: EstimatorRoute::Substitute {
            family: FactorFamily::Ppca,
            k,
        },
    }
}

fn mixture_row(k: usize) -> ScenarioEstimator {
    ScenarioEstimator {
        label: "substitute:mixture".into(),
        route: EstimatorRoute::Substitute {
            family: FactorFamily::Mixture,
            k,
        },
    }
}

fn naive_row() -> ScenarioEstimator {
    ScenarioEstimator {
        label: "naive".into(),
        route: EstimatorRoute::Naive,
    }
}

fn adjust_row(label: &str, nodes: &[&str], design: DesignCauses) -> ScenarioEstimator {
    ScenarioEstimator {
        label: label.into(),
        route: EstimatorRoute::AdjustNodes {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            design,
        },
    }
}

fn expectations(pairs: &[(&str, Verdict)]) -> BTreeMap<String, Verdict> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// Causally dependent causes: A1 -> R -> A2 with R also a mediator of A1 on Y
/// and V confounding R and Y. Controlling for R both blocks mediation and
/// opens the V path.
fn scenario_a(params: &ScenarioParams) -> Result<Scenario> {
    if params.m.is_some() {
        return Err(Error::Config("scenario a has a fixed cause set A1..A3".into()));
    }
    let mut b = ModelBuilder::new();
    b.linear("U", NodeRole::Latent, &[], 1.0);
    b.linear("V", NodeRole::Latent, &[], 1.0);
    b.linear("A1", NodeRole::Cause, &[("U", 1.0)], 1.0);
    b.linear("R", NodeRole::Auxiliary, &[("A1", 1.0), ("V", 1.0)], 1.0);
    b.linear("A2", NodeRole::Cause, &[("U", 1.0), ("R", 1.0)], 1.0);
    b.linear("A3", NodeRole::Cause, &[("R", 1.0)], 1.0);
    b.linear(
        "Y",
        NodeRole::Outcome,
        &[("U", 1.0), ("R", 1.0), ("V", 1.0)],
        1.0,
    );
    let scm = b.build(params)?;
    let causes = cause_names(3);
    Ok(Scenario {
        id: 'a',
        description: "causally dependent causes via an observed intermediate R \
                      (A1 -> R -> A2), with latent U on causes and outcome and \
                      latent V on R and outcome"
            .into(),
        scm,
        estimands: vec![Estimand::unit("A1", 0.0), Estimand::joint(&causes, 0.0)],
        estimators: vec![
            naive_row(),
            adjust_row("oracle", &["U"], DesignCauses::TreatedOnly),
            adjust_row("adjust:R", &["R"], DesignCauses::TreatedOnly),
            ppca_row(1),
        ],
        expected: expectations(&[
            ("naive", Verdict::Biased),
            ("oracle", Verdict::Unbiased),
            ("adjust:R", Verdict::Biased),
            ("substitute:ppca", Verdict::Degenerate),
        ]),
    })
}

/// Single-cause mediator: U confounds all causes and Y; the last cause acts
/// on Y only through the observed mediator D.
fn scenario_b(params: &ScenarioParams) -> Result<Scenario> {
    let m = resolve_m(params, 3, 'b')?;
    let am = format!("A{m}");
    let mut b = ModelBuilder::new();
    b.linear("U", NodeRole::Latent, &[], 1.0);
    for name in cause_names(m) {
        b.linear(&name, NodeRole::Cause, &[("U", 1.0)], 1.0);
    }
    let mut d_weights: Vec<(&str, f64)> = vec![(am.as_str(), 1.0)];
    if params.dashed {
        d_weights.push(("U", 1.0));
    }
    b.linear("D", NodeRole::Auxiliary, &d_weights, 1.0);
    b.linear("Y", NodeRole::Outcome, &[("U", 1.0), ("D", 1.0)], 1.0);
    let scm = b.build(params)?;
    Ok(Scenario {
        id: 'b',
        description: format!(
            "single-cause mediator: latent U drives A1..A{m} and Y; {am} acts on \
             Y only through the observed mediator D{}",
            if params.dashed { " (with U -> D)" } else { "" }
        ),
        scm,
        estimands: vec![Estimand::unit(&am, 0.0)],
        estimators: vec![
            naive_row(),
            adjust_row("oracle", &["U"], DesignCauses::All),
            adjust_row("adjust:U+D", &["U", "D"], DesignCauses::All),
            ppca_row(1),
        ],
        expected: expectations(&[
            ("naive", Verdict::Biased),
            ("oracle", Verdict::Unbiased),
            ("adjust:U+D", Verdict::Biased),
            ("substitute:ppca", Verdict::Degenerate),
        ]),
    })
}

/// Single-cause collider: C is a common effect of the last cause and Y.
fn scenario_c(params: &ScenarioParams) -> Result<Scenario> {
    let m = resolve_m(params, 3, 'c')?;
    let am = format!("A{m}");
    let mut b = ModelBuilder::new();
    b.linear("U", NodeRole::Latent, &[], 1.0);
    for name in cause_names(m) {
        b.linear(&name, NodeRole::Cause, &[("U", 1.0)], 1.0);
    }
    let mut c_weights: Vec<(&str, f64)> = vec![(am.as_str(), 1.0), ("Y", 1.0)];
    if params.dashed {
        c_weights.push(("U", 1.0));
    }
    b.linear("Y", NodeRole::Outcome, &[("U", 1.0)], 1.0);
    b.linear("C", NodeRole::Auxiliary, &c_weights, 1.0);
    let scm = b.build(params)?;
    Ok(Scenario {
        id: 'c',
        description: format!(
            "single-cause collider: latent U drives A1..A{m} and Y; C is a \
             common effect of {am} and Y{}",
            if params.dashed { " (with U -> C)" } else { "" }
        ),
        scm,
        estimands: vec![Estimand::unit(&am, 0.0)],
        estimators: vec![
            naive_row(),
            adjust_row("oracle", &["U"], DesignCauses::All),
            adjust_row("adjust:U+C", &["U", "C"], DesignCauses::All),
            ppca_row(1),
        ],
        expected: expectations(&[
            ("naive", Verdict::Biased),
            ("oracle", Verdict::Unbiased),
            ("adjust:U+C", Verdict::Biased),
            ("substitute:ppca", Verdict::Degenerate),
        ]),
    })
}

/// M-bias: U drives the causes and M, V drives M and Y; no causal paths to Y,
/// so the unadjusted estimator is exact and adjusting for M opens the path.
fn scenario_d(params: &ScenarioParams) -> Result<Scenario> {
    let m = resolve_m(params, 3, 'd')?;
    let am = format!("A{m}");
    let mut b = ModelBuilder::new();
    b.linear("U", NodeRole::Latent, &[], 1.0);
    b.linear("V", NodeRole::Latent, &[], 1.0);
    for name in cause_names(m) {
        b.linear(&name, NodeRole::Cause, &[("U", 1.0)], 1.0);
    }
    b.linear("M", NodeRole::Auxiliary, &[("U", 1.0), ("V", 1.0)], 1.0);
    b.linear("Y", NodeRole::Outcome, &[("V", 1.0)], 1.0);
    let scm = b.build(params)?;
    Ok(Scenario {
        id: 'd',
        description: format!(
            "M-bias collider: U drives A1..A{m} and M, V drives M and Y; the \
             true effect of every cause is zero"
        ),
        scm,
        estimands: vec![Estimand::unit(&am, 0.0)],
        estimators: vec![
            naive_row(),
            adjust_row("oracle", &[], DesignCauses::All),
            adjust_row("adjust:M", &["M"], DesignCauses::All),
            ppca_row(1),
        ],
        expected: expectations(&[
            ("naive", Verdict::Unbiased),
            ("oracle", Verdict::Unbiased),
            ("adjust:M", Verdict::Biased),
            ("substitute:ppca", Verdict::Degenerate),
        ]),
    })
}

/// Decomposable confounder: U = V + W is uniform on (0,1); A1 loads only on
/// V, A2 only on W, Y only on U. The causes are conditionally independent
/// given Z (vacuous by default; the stratified variant sets the Z weights to
/// one), yet nothing observable controls for U. Cause noise is 0.25 so the
/// confounding signal is decisive against the small variance of V and W.
fn scenario_e(params: &ScenarioParams) -> Result<Scenario> {
    if params.m.is_some() {
        return Err(Error::Config("scenario e has a fixed cause pair A1, A2".into()));
    }
    let mut b = ModelBuilder::new();
    b.node(
        "V",
        NodeRole::Latent,
        Mechanism::TwoPoint {
            values: (0.0, 0.5),
            prob: 0.5,
        },
    );
    b.node("W", NodeRole::Latent, Mechanism::Uniform { lo: 0.0, hi: 0.5 });
    b.node(
        "Z",
        NodeRole::Auxiliary,
        Mechanism::TwoPoint {
            values: (0.0, 1.0),
            prob: 0.5,
        },
    );
    b.edges.push(("V".into(), "U".into()));
    b.edges.push(("W".into(), "U".into()));
    b.node(
        "U",
        NodeRole::Latent,
        Mechanism::LinearGaussian {
            weights: [("V".to_string(), 1.0), ("W".to_string(), 1.0)]
                .into_iter()
                .collect(),
            intercept: 0.0,
            noise_sd: 0.0,
        },
    );
    b.linear("A1", NodeRole::Cause, &[("V", 1.0), ("Z", 0.0)], 0.25);
    b.linear("A2", NodeRole::Cause, &[("W", 1.0), ("Z", 0.0)], 0.25);
    b.linear("Y", NodeRole::Outcome, &[("U", 1.0)], 1.0);
    let scm = b.build(params)?;
    Ok(Scenario {
        id: 'e',
        description: "decomposable confounder: U = V + W ~ Unif(0,1), A1 loads on V, \
                      A2 on W, Y on U; conditioning that separates the causes does \
                      not control U (stratified variant: override Z->A1, Z->A2 to 1)"
            .into(),
        scm,
        estimands: vec![Estimand::unit("A1", 0.0)],
        estimators: vec![
            naive_row(),
            adjust_row("oracle", &["U"], DesignCauses::All),
            mixture_row(2),
            ppca_row(1),
        ],
        expected: expectations(&[
            ("naive", Verdict::Biased),
            ("oracle", Verdict::Unbiased),
            ("substitute:mixture", Verdict::Biased),
            ("substitute:ppca", Verdict::Degenerate),
        ]),
    })
}

/// Clustering positive control: a two-group indicator G shifts every cause
/// and the outcome; A1 carries a real unit effect. A mixture fit on the
/// causes recovers G increasingly well as m grows.
fn scenario_f(params: &ScenarioParams) -> Result<Scenario> {
    let m = resolve_m(params, 50, 'f')?;
    let mut b = ModelBuilder::new();
    b.node(
        "G",
        NodeRole::Latent,
        Mechanism::CategoricalIndicator {
            k: 2,
            probs: vec![0.5, 0.5],
        },
    );
    for name in cause_names(m) {
        b.linear(&name, NodeRole::Cause, &[("G", 2.0)], 1.0);
    }
    b.linear("Y", NodeRole::Outcome, &[("A1", 1.0), ("G", 2.0)], 1.0);
    let scm = b.build(params)?;
    Ok(Scenario {
        id: 'f',
        description: format!(
            "clustering positive control: latent two-group indicator G shifts \
             A1..A{m} and Y by 2; A1 has a unit direct effect on Y"
        ),
        scm,
        estimands: vec![Estimand::unit("A1", 0.0)],
        estimators: vec![
            naive_row(),
            adjust_row("oracle", &["G"], DesignCauses::All),
            mixture_row(2),
        ],
        expected: expectations(&[
            ("naive", Verdict::Biased),
            ("oracle", Verdict::Unbiased),
            ("substitute:mixture", Verdict::Unbiased),
        ]),
    })
}

/// Fully parametric control: a single gaussian latent loads on every cause
/// and the outcome; A1 carries the only direct effect. The PPCA posterior
/// mean is an exact linear function of the causes, so the substitute route
/// is expected to surface the collinear-design failure.
fn scenario_g(params: &ScenarioParams) -> Result<Scenario> {
    let m = resolve_m(params, 50, 'g')?;
    let mut b = ModelBuilder::new();
    b.linear("U", NodeRole::Latent, &[], 1.0);
    for name in cause_names(m) {
        b.linear(&name, NodeRole::Cause, &[("U", 1.0)], 1.0);
    }
    b.linear("Y", NodeRole::Outcome, &[("A1", 1.0), ("U", 2.0)], 1.0);
    let scm = b.build(params)?;
    Ok(Scenario {
        id: 'g',
        description: format!(
            "parametric control: gaussian latent U loads on A1..A{m} and Y \
             (weight 2); A1 has a unit direct effect"
        ),
        scm,
        estimands: vec![Estimand::unit("A1", 0.0)],
        estimators: vec![
            naive_row(),
            adjust_row("oracle", &["U"], DesignCauses::All),
            ppca_row(3.min(m - 1)),
        ],
        expected: expectations(&[
            ("naive", Verdict::Biased),
            ("oracle", Verdict::Unbiased),
            ("substitute:ppca", Verdict::Degenerate),
        ]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{check_assumptions_names, is_valid_adjustment_names};
    use crate::scm::ScmFile;

    #[test]
    fn catalog_builds_and_truths_match_structure() {
        let cat = catalog();
        assert_eq!(cat.len(), 7);
        let by_id = |id: char| cat.iter().find(|s| s.id == id).unwrap();
        // a: A1 -> R -> Y with unit weights.
        assert_eq!(by_id('a').primary_estimand().truth, 1.0);
        assert_eq!(by_id('a').estimands[1].truth, 1.0);
        // b: A_m -> D -> Y.
        assert_eq!(by_id('b').primary_estimand().truth, 1.0);
        // c, d, e: no directed path from the target cause to Y.
        assert_eq!(by_id('c').primary_estimand().truth, 0.0);
        assert_eq!(by_id('d').primary_estimand().truth, 0.0);
        assert_eq!(by_id('e').primary_estimand().truth, 0.0);
        // f, g: direct unit effect of A1.
        assert_eq!(by_id('f').primary_estimand().truth, 1.0);
        assert_eq!(by_id('g').primary_estimand().truth, 1.0);
    }

    #[test]
    fn weight_overrides_reprice_truths_but_cannot_touch_shape() {
        let mut params = ScenarioParams::default();
        params.weights.insert("R->Y".into(), 2.0);
        let s = build_scenario('a', &params).unwrap();
        assert_eq!(s.primary_estimand().truth, 2.0);

        let mut bad = ScenarioParams::default();
        bad.weights.insert("A1->Y".into(), 1.0);
        assert!(build_scenario('a', &bad).is_err());
    }

    #[test]
    fn m_override_respects_family_limits() {
        let mut params = ScenarioParams::default();
        params.m = Some(5);
        let s = build_scenario('f', &params).unwrap();
        assert_eq!(s.scm.graph().cause_order().len(), 5);
        assert!(build_scenario('a', &params).is_err());
        params.m = Some(1);
        assert!(build_scenario('f', &params).is_err());
    }

    #[test]
    fn oracle_sets_are_certified_by_the_adjustment_criterion() {
        for s in catalog() {
            let g = s.scm.graph();
            let EstimatorRoute::AdjustNodes { nodes, design } = &s.oracle().route else {
                panic!("oracle must be an adjustment route");
            };
            let causes: Vec<String> = match design {
                DesignCauses::All => g.cause_names(),
                DesignCauses::TreatedOnly => s
                    .primary_estimand()
                    .targets
                    .iter()
                    .map(|t| t.cause.clone())
                    .collect(),
            };
            let verdict = is_valid_adjustment_names(g, nodes, &causes, "Y").unwrap();
            assert!(verdict.valid, "scenario {} oracle not certified", s.id);
        }
    }

    #[test]
    fn checklist_matches_scenario_structure() {
        let cat = catalog();
        let a = cat.iter().find(|s| s.id == 'a').unwrap();
        let report = check_assumptions_names(
            a.scm.graph(),
            &a.scm.graph().cause_names(),
            "Y",
            &[],
        )
        .unwrap();
        let c4 = report.conditions.iter().find(|c| c.id == 4).unwrap();
        assert!(!c4.satisfied);
        assert_eq!(c4.witness.as_deref(), Some("A1 -> R -> A2"));

        let d = cat.iter().find(|s| s.id == 'd').unwrap();
        let report = check_assumptions_names(
            d.scm.graph(),
            &d.scm.graph().cause_names(),
            "Y",
            &[],
        )
        .unwrap();
        let c3 = report.conditions.iter().find(|c| c.id == 3).unwrap();
        assert!(!c3.satisfied);
        assert_eq!(c3.witness.as_deref(), Some("M-pattern (U, M, V)"));
    }

    #[test]
    fn dashed_variants_add_the_latent_edge() {
        let mut params = ScenarioParams::default();
        params.dashed = true;
        let b = build_scenario('b', &params).unwrap();
        let g = b.scm.graph();
        let (u, d) = (g.node_id("U").unwrap(), g.node_id("D").unwrap());
        assert!(g.parents_of(d).contains(&u));
        let plain = build_scenario('b', &ScenarioParams::default()).unwrap();
        let g = plain.scm.graph();
        let (u, d) = (g.node_id("U").unwrap(), g.node_id("D").unwrap());
        assert!(!g.parents_of(d).contains(&u));
    }

    #[test]
    fn scenario_files_round_trip_bit_exactly() {
        for s in catalog() {
            let json = ScmFile::from_scm(&s.scm).to_json().unwrap();
            let back = crate::scm::parse_scm_json(&json).unwrap();
            assert_eq!(back, s.scm, "scenario {}", s.id);
            assert_eq!(ScmFile::from_scm(&back).to_json().unwrap(), json);
        }
    }

    #[test]
    fn expected_verdict_lookup() {
        assert_eq!(expected_verdict('a', "adjust:R").unwrap(), Verdict::Biased);
        assert_eq!(
            expected_verdict('f', "substitute:mixture").unwrap(),
            Verdict::Unbiased
        );
        assert_eq!(
            expected_verdict('e', "oracle").unwrap(),
            Verdict::Unbiased
        );
        assert!(expected_verdict('a', "bogus").is_err());
        assert!(build_scenario('q', &ScenarioParams::default()).is_err());
    }
}
