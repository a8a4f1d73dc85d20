//! Structural causal models: sampling, interventions, and analytic effects.
//!
//! Sampling contract: the exogenous noise of node `v` for replicate `r` is an
//! independent ChaCha8 stream seeded with `mix64(base_seed, r, idx(v))`, where
//! `idx(v)` is the node's position in the lexicographically sorted node list.
//! Potential outcomes reuse each unit's noise draws across grid interventions
//! (shared-noise counterfactuals), which makes the consistency property exact.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, NodeRole};
use crate::mechanism::Mechanism;
use crate::rng::{mix64, stream};

/// A do-assignment: cause name -> forced value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Intervention {
    pub assignments: BTreeMap<String, f64>,
}

impl Intervention {
    pub fn new<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Intervention {
            assignments: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn single(name: &str, value: f64) -> Self {
        Self::new([(name, value)])
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Stable text form, e.g. `do(A_1=1,A_2=0)`.
    pub fn label(&self) -> String {
        let body: Vec<String> = self
            .assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("do({})", body.join(","))
    }
}

/// A structural causal model: validated graph plus one mechanism per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Scm {
    graph: CausalGraph,
    mechanisms: Vec<Mechanism>,
    base_seed: u64,
}

impl Scm {
    pub fn new(
        graph: CausalGraph,
        mechanisms: BTreeMap<String, Mechanism>,
        base_seed: u64,
    ) -> Result<Self> {
        if mechanisms.len() != graph.node_count() {
            return Err(Error::Config(format!(
                "expected {} mechanisms, got {}",
                graph.node_count(),
                mechanisms.len()
            )));
        }
        let mut by_id = Vec::with_capacity(graph.node_count());
        for id in 0..graph.node_count() {
            let name = graph.name(id);
            let mech = mechanisms
                .get(name)
                .ok_or_else(|| Error::Config(format!("missing mechanism for `{name}`")))?;
            let parent_names: Vec<&str> = graph
                .parents_of(id)
                .iter()
                .map(|&p| graph.name(p))
                .collect();
            mech.validate(name, &parent_names)?;
            by_id.push(mech.clone());
        }
        Ok(Scm {
            graph,
            mechanisms: by_id,
            base_seed,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn mechanism(&self, id: usize) -> &Mechanism {
        &self.mechanisms[id]
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    fn validate_intervention(&self, itv: &Intervention) -> Result<Vec<(usize, f64)>> {
        let causes: BTreeSet<usize> = self.graph.cause_order().iter().copied().collect();
        let mut out = Vec::with_capacity(itv.assignments.len());
        for (name, value) in &itv.assignments {
            let id = self.graph.node_id(name)?;
            if !causes.contains(&id) {
                return Err(Error::Config(format!(
                    "intervention target `{name}` is not a cause"
                )));
            }
            if !value.is_finite() {
                return Err(Error::Config(format!(
                    "intervention value for `{name}` must be finite"
                )));
            }
            out.push((id, *value));
        }
        Ok(out)
    }

    /// Graph mutilation: intervened nodes lose their incoming edges and get a
    /// degenerate constant mechanism; everything else is unchanged.
    pub fn apply_do(&self, itv: &Intervention) -> Result<Scm> {
        let targets = self.validate_intervention(itv)?;
        if targets.is_empty() {
            return Ok(self.clone());
        }
        let ids: Vec<usize> = targets.iter().map(|&(id, _)| id).collect();
        let graph = self.graph.without_incoming(&ids);
        let mut mechanisms: BTreeMap<String, Mechanism> = self
            .graph
            .names()
            .iter()
            .enumerate()
            .map(|(id, name)| (name.clone(), self.mechanisms[id].clone()))
            .collect();
        for (id, value) in targets {
            mechanisms.insert(self.graph.name(id).to_string(), Mechanism::constant(value));
        }
        Scm::new(graph, mechanisms, self.base_seed)
    }

    /// Per-node exogenous noise for one replicate: `noises[id][unit]`.
    fn draw_noises(&self, n: usize, replicate: u64) -> Vec<Vec<f64>> {
        let mut noises = vec![Vec::new(); self.graph.node_count()];
        for (stream_idx, &node_id) in self.graph.stream_index().iter().enumerate() {
            let seed = mix64(self.base_seed, replicate, stream_idx as u64);
            let mut rng = stream(seed);
            let normal = self.mechanisms[node_id].wants_normal_noise();
            let column: Vec<f64> = (0..n)
                .map(|_| {
                    if normal {
                        rng.sample(StandardNormal)
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect();
            noises[node_id] = column;
        }
        noises
    }

    /// Evaluate all columns for given noises; `forced` maps node id -> value.
    fn evaluate_columns(
        &self,
        n: usize,
        noises: &[Vec<f64>],
        forced: &BTreeMap<usize, f64>,
    ) -> Result<Vec<Vec<f64>>> {
        let mut columns = vec![vec![0.0; n]; self.graph.node_count()];
        let mut parent_buf: Vec<f64> = Vec::new();
        for &id in self.graph.topo_order() {
            if let Some(&v) = forced.get(&id) {
                columns[id].iter_mut().for_each(|x| *x = v);
                continue;
            }
            let parent_ids = self.graph.parents_of(id);
            let mech = &self.mechanisms[id];
            // Fast path for the dominant linear-gaussian case: weights are
            // pre-resolved to the parent order once, not per unit.
            if let Mechanism::LinearGaussian {
                weights,
                intercept,
                noise_sd,
            } = mech
            {
                let w: Vec<f64> = parent_ids
                    .iter()
                    .map(|&p| weights[self.graph.name(p)])
                    .collect();
                let noise_col = &noises[id];
                let mut out = vec![0.0; n];
                for (unit, slot) in out.iter_mut().enumerate() {
                    let mut acc = *intercept;
                    for (wj, &p) in w.iter().zip(parent_ids) {
                        acc += wj * columns[p][unit];
                    }
                    *slot = acc + noise_sd * noise_col[unit];
                }
                columns[id] = out;
                continue;
            }
            let parent_names: Vec<&str> =
                parent_ids.iter().map(|&p| self.graph.name(p)).collect();
            let name = self.graph.name(id);
            for unit in 0..n {
                parent_buf.clear();
                parent_buf.extend(parent_ids.iter().map(|&p| columns[p][unit]));
                columns[id][unit] =
                    mech.evaluate(name, &parent_names, &parent_buf, noises[id][unit])?;
            }
        }
        Ok(columns)
    }

    /// Sample `n` units of full data: every node column (latents included)
    /// plus the potential-outcome table over `grid`.
    ///
    /// Deterministic given `(base_seed, replicate)`; identical inputs
    /// reproduce bit-identical output.
    pub fn sample_full_data(
        &self,
        n: usize,
        grid: &[Intervention],
        replicate: u64,
    ) -> Result<FullData> {
        if n == 0 {
            return Err(Error::Config("sample size must be >= 1".into()));
        }
        for itv in grid {
            self.validate_intervention(itv)?;
        }
        let noises = self.draw_noises(n, replicate);
        let observed = self.evaluate_columns(n, &noises, &BTreeMap::new())?;

        let outcome = self.graph.outcome();
        let mut po_values = Vec::with_capacity(grid.len());
        for itv in grid {
            let forced: BTreeMap<usize, f64> = self
                .validate_intervention(itv)?
                .into_iter()
                .collect();
            let cols = self.evaluate_columns(n, &noises, &forced)?;
            po_values.push(cols[outcome].clone());
        }

        Ok(FullData {
            names: self.graph.names().to_vec(),
            roles: (0..self.graph.node_count())
                .map(|i| self.graph.role(i))
                .collect(),
            cause_order: self.graph.cause_names(),
            outcome_name: self.graph.name(outcome).to_string(),
            n,
            columns: observed,
            potential_outcomes: PotentialOutcomeTable {
                grid: grid.to_vec(),
                values: po_values,
            },
        })
    }

    /// True if every cause named by `itv` has a finite-support mechanism.
    pub fn intervention_is_discrete(&self, itv: &Intervention) -> Result<bool> {
        let targets = self.validate_intervention(itv)?;
        Ok(targets
            .iter()
            .all(|&(id, _)| self.mechanisms[id].is_discrete()))
    }

    /// Check the consistency invariant on sampled full data: whenever a
    /// unit's realized values of the intervened causes exactly match a grid
    /// intervention (discrete causes only), the observed outcome equals the
    /// table entry bit-for-bit. Returns the number of violations.
    pub fn consistency_violations(&self, full: &FullData) -> Result<usize> {
        let mut violations = 0;
        let y = full.column(&full.outcome_name).expect("outcome column");
        for (gi, itv) in full.potential_outcomes.grid.iter().enumerate() {
            if !self.intervention_is_discrete(itv)? {
                continue;
            }
            let targets: Vec<(&str, f64)> = itv
                .assignments
                .iter()
                .map(|(k, v)| (k.as_str(), *v))
                .collect();
            let cols: Vec<&[f64]> = targets
                .iter()
                .map(|(name, _)| full.column(name).expect("cause column"))
                .collect();
            for unit in 0..full.n {
                let on_grid = targets
                    .iter()
                    .zip(&cols)
                    .all(|((_, v), col)| col[unit] == *v);
                if on_grid && full.potential_outcomes.values[gi][unit] != y[unit] {
                    violations += 1;
                }
            }
        }
        Ok(violations)
    }

    /// Average causal effect of `a` versus `a_prime`.
    pub fn true_ace(
        &self,
        a: &Intervention,
        a_prime: &Intervention,
        method: AceMethod,
    ) -> Result<AceEstimate> {
        let ta = self.validate_intervention(a)?;
        let tp = self.validate_intervention(a_prime)?;
        let keys_a: BTreeSet<usize> = ta.iter().map(|&(id, _)| id).collect();
        let keys_p: BTreeSet<usize> = tp.iter().map(|&(id, _)| id).collect();
        if keys_a != keys_p {
            return Err(Error::Config(
                "contrast interventions must target the same causes".into(),
            ));
        }
        match method {
            AceMethod::PathTrace => {
                let effects = self.path_trace_effects(&keys_a)?;
                let pa: BTreeMap<usize, f64> = ta.into_iter().collect();
                let pp: BTreeMap<usize, f64> = tp.into_iter().collect();
                let value = keys_a
                    .iter()
                    .map(|id| effects[id] * (pa[id] - pp[id]))
                    .sum();
                Ok(AceEstimate { value, se: None })
            }
            AceMethod::MonteCarlo { n, replicates } => {
                if n == 0 || replicates == 0 {
                    return Err(Error::Config(
                        "monte-carlo ACE needs n >= 1 and replicates >= 1".into(),
                    ));
                }
                let scm_a = self.apply_do(a)?;
                let scm_p = self.apply_do(a_prime)?;
                let y = self.graph.node_id(self.graph.name(self.graph.outcome()))?;
                let mut diffs = Vec::with_capacity(replicates);
                let mut unit_sd = 0.0;
                for r in 0..replicates {
                    let fa = scm_a.sample_full_data(n, &[], r as u64)?;
                    let fp = scm_p.sample_full_data(n, &[], r as u64)?;
                    let ya = &fa.columns[y];
                    let yp = &fp.columns[y];
                    let per_unit: Vec<f64> =
                        ya.iter().zip(yp).map(|(&u, &v)| u - v).collect();
                    let mean = per_unit.iter().sum::<f64>() / n as f64;
                    if replicates == 1 {
                        let var = per_unit
                            .iter()
                            .map(|d| (d - mean).powi(2))
                            .sum::<f64>()
                            / (n as f64 - 1.0).max(1.0);
                        unit_sd = var.sqrt();
                    }
                    diffs.push(mean);
                }
                let point = diffs.iter().sum::<f64>() / replicates as f64;
                let se = if replicates > 1 {
                    let var = diffs
                        .iter()
                        .map(|d| (d - point).powi(2))
                        .sum::<f64>()
                        / (replicates as f64 - 1.0);
                    (var / replicates as f64).sqrt()
                } else {
                    unit_sd / (n as f64).sqrt()
                };
                Ok(AceEstimate {
                    value: point,
                    se: Some(se),
                })
            }
        }
    }

    /// Per-cause total effects on the outcome under joint intervention on
    /// `targets`: the sum over directed paths (in the graph mutilated at all
    /// targets) of products of linear-gaussian edge weights. Computed by
    /// dynamic programming over the DAG.
    fn path_trace_effects(&self, targets: &BTreeSet<usize>) -> Result<BTreeMap<usize, f64>> {
        let ids: Vec<usize> = targets.iter().copied().collect();
        let cut = self.graph.without_incoming(&ids);
        let outcome = cut.outcome();

        // Nodes with a directed path to the outcome in the mutilated graph.
        let to_outcome = cut.ancestors_mask(&[outcome]);
        // Every non-source node on any target->outcome path must be
        // linear-gaussian, otherwise the closed form does not apply.
        let from_targets = cut.descendants_mask(&ids);
        for id in 0..cut.node_count() {
            if from_targets[id] && to_outcome[id] && !targets.contains(&id) {
                if !matches!(self.mechanisms[id], Mechanism::LinearGaussian { .. }) {
                    return Err(Error::UnsupportedAnalytic(format!(
                        "node `{}` on a causal path is not linear-gaussian; \
                         fall back to the monte-carlo method",
                        cut.name(id)
                    )));
                }
            }
        }

        // contrib[v] = sum over directed v->outcome paths of weight products.
        let mut contrib = vec![0.0_f64; cut.node_count()];
        contrib[outcome] = 1.0;
        for &v in cut.topo_order().iter().rev() {
            if v == outcome {
                continue;
            }
            let mut acc = 0.0;
            for &c in cut.children_of(v) {
                if contrib[c] == 0.0 {
                    continue;
                }
                if let Mechanism::LinearGaussian { weights, .. } = &self.mechanisms[c] {
                    acc += weights[cut.name(v)] * contrib[c];
                }
            }
            contrib[v] = acc;
        }
        Ok(ids.into_iter().map(|id| (id, contrib[id])).collect())
    }
}

/// How to compute a true ACE.
#[derive(Debug, Clone, Copy)]
pub enum AceMethod {
    /// Exact sum over directed paths of linear-gaussian weight products.
    PathTrace,
    /// Sample the mutilated models with shared noise and average.
    MonteCarlo { n: usize, replicates: usize },
}

/// A true-effect value with an optional Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AceEstimate {
    pub value: f64,
    pub se: Option<f64>,
}

/// Potential outcomes Y(a) for each unit and each grid intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeTable {
    pub grid: Vec<Intervention>,
    /// `values[g][unit]` = Y(grid[g]) for that unit.
    pub values: Vec<Vec<f64>>,
}

impl PotentialOutcomeTable {
    pub fn empty() -> Self {
        PotentialOutcomeTable {
            grid: Vec::new(),
            values: Vec::new(),
        }
    }
}

/// Simulated units with every node column (latents included) plus the
/// potential-outcome table.
#[derive(Debug, Clone, PartialEq)]
pub struct FullData {
    pub names: Vec<String>,
    pub roles: Vec<NodeRole>,
    pub cause_order: Vec<String>,
    pub outcome_name: String,
    pub n: usize,
    /// `columns[node][unit]`, indexed like `names`.
    pub columns: Vec<Vec<f64>>,
    pub potential_outcomes: PotentialOutcomeTable,
}

impl FullData {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Wrap an observed dataset as full data with an empty latent set and no
    /// potential outcomes (used to state the masking idempotence property).
    pub fn from_observed(data: &Dataset) -> FullData {
        let mut names = Vec::new();
        let mut roles = Vec::new();
        let mut columns = Vec::new();
        for (j, name) in data.cause_names.iter().enumerate() {
            names.push(name.clone());
            roles.push(NodeRole::Cause);
            columns.push(data.causes.column(j).iter().copied().collect());
        }
        for (name, col) in &data.extras {
            names.push(name.clone());
            roles.push(NodeRole::Auxiliary);
            columns.push(col.clone());
        }
        names.push(data.outcome_name.clone());
        roles.push(NodeRole::Outcome);
        columns.push(data.outcome.iter().copied().collect());
        FullData {
            names,
            roles,
            cause_order: data.cause_names.clone(),
            outcome_name: data.outcome_name.clone(),
            n: data.n,
            columns,
            potential_outcomes: PotentialOutcomeTable::empty(),
        }
    }
}

/// The observed coarsening: causes, outcome, auxiliary columns; latent-role
/// columns and the potential-outcome table are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub cause_names: Vec<String>,
    /// n x m, columns in `cause_names` order.
    pub causes: DMatrix<f64>,
    pub outcome_name: String,
    pub outcome: DVector<f64>,
    /// Observed auxiliary columns in graph node order.
    pub extras: Vec<(String, Vec<f64>)>,
}

impl Dataset {
    pub fn m(&self) -> usize {
        self.cause_names.len()
    }

    pub fn extra(&self, name: &str) -> Option<&[f64]> {
        self.extras
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
    }

    /// Column by name, searching causes, extras, then the outcome.
    pub fn any_column(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(j) = self.cause_names.iter().position(|n| n == name) {
            return Some(self.causes.column(j).iter().copied().collect());
        }
        if let Some(c) = self.extra(name) {
            return Some(c.to_vec());
        }
        if name == self.outcome_name {
            return Some(self.outcome.iter().copied().collect());
        }
        None
    }
}

/// Project full data onto the observed data: drop latent columns and the
/// potential-outcome table, preserving row order.
pub fn mask_observed(full: &FullData) -> Dataset {
    let n = full.n;
    let m = full.cause_order.len();
    let mut causes = DMatrix::zeros(n, m);
    for (j, name) in full.cause_order.iter().enumerate() {
        let col = full.column(name).expect("cause column present");
        for (i, &v) in col.iter().enumerate() {
            causes[(i, j)] = v;
        }
    }
    let outcome = DVector::from_vec(
        full.column(&full.outcome_name)
            .expect("outcome column present")
            .to_vec(),
    );
    let extras = full
        .names
        .iter()
        .zip(&full.roles)
        .zip(&full.columns)
        .filter(|((_, role), _)| **role == NodeRole::Auxiliary)
        .map(|((name, _), col)| (name.clone(), col.clone()))
        .collect();
    Dataset {
        n,
        cause_names: full.cause_order.clone(),
        causes,
        outcome_name: full.outcome_name.clone(),
        outcome,
        extras,
    }
}

// ---------------------------------------------------------------------------
// JSON schema

/// One node entry of the SCM definition file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFile {
    pub name: String,
    pub role: NodeRole,
    pub mechanism: Mechanism,
}

/// On-disk SCM definition: `nodes`, `edges`, `cause_order`, `seed`.
/// Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmFile {
    pub nodes: Vec<NodeFile>,
    pub edges: Vec<(String, String)>,
    pub cause_order: Vec<String>,
    pub seed: u64,
}

impl ScmFile {
    pub fn from_scm(scm: &Scm) -> ScmFile {
        let g = scm.graph();
        ScmFile {
            nodes: (0..g.node_count())
                .map(|id| NodeFile {
                    name: g.name(id).to_string(),
                    role: g.role(id),
                    mechanism: scm.mechanism(id).clone(),
                })
                .collect(),
            edges: g
                .edges()
                .iter()
                .map(|&(p, c)| (g.name(p).to_string(), g.name(c).to_string()))
                .collect(),
            cause_order: g.cause_names(),
            seed: scm.base_seed(),
        }
    }

    pub fn into_scm(self) -> Result<Scm> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| (n.name.clone(), n.role))
            .collect();
        let mechanisms: BTreeMap<String, Mechanism> = self
            .nodes
            .into_iter()
            .map(|n| (n.name, n.mechanism))
            .collect();
        let graph = CausalGraph::new(nodes, self.edges, self.cause_order)?;
        Scm::new(graph, mechanisms, self.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<ScmFile> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn parse_scm_json(text: &str) -> Result<Scm> {
    ScmFile::from_json(text)?.into_scm()
}
