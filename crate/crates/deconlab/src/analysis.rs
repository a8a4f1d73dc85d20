//! Symbolic graph analysis: d-separation, node classification, the
//! generalized adjustment criterion, and the assumption checklist.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::CausalGraph;

/// Causal role of a node relative to a cause set and outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeLabel {
    MultiCauseConfounder,
    SingleCauseConfounder,
    Mediator,
    Collider,
    MBiasCollider,
    Neutral,
}

impl std::fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NodeLabel::MultiCauseConfounder => "multi-cause-confounder",
            NodeLabel::SingleCauseConfounder => "single-cause-confounder",
            NodeLabel::Mediator => "mediator",
            NodeLabel::Collider => "collider",
            NodeLabel::MBiasCollider => "m-bias-collider",
            NodeLabel::Neutral => "neutral",
        };
        f.write_str(s)
    }
}

/// Classification of one node relative to `(causes, outcome)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeClassification {
    pub node: String,
    pub label: NodeLabel,
    pub causes: Vec<String>,
    pub outcome: String,
}

/// d-separation of `x` and `y` given `z` by the linear-time reachability
/// ("Bayes-ball") method: true iff every path between `x` and `y` is blocked
/// given `z` (a collider is open iff it or one of its descendants is in `z`).
pub fn d_separated(g: &CausalGraph, x: &[usize], y: &[usize], z: &[usize]) -> Result<bool> {
    validate_disjoint(g, x, y, z)?;
    let n = g.node_count();
    let mut in_y = vec![false; n];
    for &v in y {
        in_y[v] = true;
    }
    let mut in_z = vec![false; n];
    for &v in z {
        in_z[v] = true;
    }
    // v is in z or has a descendant in z <=> collider at v can be open.
    let anc_z = g.ancestors_mask(z);

    // Direction encodes where the ball came from: FromChild means the trail
    // reached v against an edge v -> child, FromParent along parent -> v.
    let mut seen_from_child = vec![false; n];
    let mut seen_from_parent = vec![false; n];
    let mut stack: Vec<(usize, bool)> = x.iter().map(|&v| (v, true)).collect();
    while let Some((v, from_child)) = stack.pop() {
        let seen = if from_child {
            &mut seen_from_child
        } else {
            &mut seen_from_parent
        };
        if seen[v] {
            continue;
        }
        seen[v] = true;
        if in_y[v] {
            return Ok(false);
        }
        if from_child {
            if !in_z[v] {
                for &p in g.parents_of(v) {
                    stack.push((p, true));
                }
                for &c in g.children_of(v) {
                    stack.push((c, false));
                }
            }
        } else {
            if !in_z[v] {
                for &c in g.children_of(v) {
                    stack.push((c, false));
                }
            }
            if anc_z[v] {
                for &p in g.parents_of(v) {
                    stack.push((p, true));
                }
            }
        }
    }
    Ok(true)
}

/// Name-based convenience wrapper around [`d_separated`].
pub fn d_separated_names(
    g: &CausalGraph,
    x: &[String],
    y: &[String],
    z: &[String],
) -> Result<bool> {
    d_separated(g, &g.resolve(x)?, &g.resolve(y)?, &g.resolve(z)?)
}

fn validate_disjoint(g: &CausalGraph, x: &[usize], y: &[usize], z: &[usize]) -> Result<()> {
    let n = g.node_count();
    for &v in x.iter().chain(y).chain(z) {
        if v >= n {
            return Err(Error::Config(format!("node id {v} out of range")));
        }
    }
    let xs: BTreeSet<usize> = x.iter().copied().collect();
    let ys: BTreeSet<usize> = y.iter().copied().collect();
    let zs: BTreeSet<usize> = z.iter().copied().collect();
    if !xs.is_disjoint(&ys) || !xs.is_disjoint(&zs) || !ys.is_disjoint(&zs) {
        return Err(Error::Config("x, y, z must be disjoint".into()));
    }
    Ok(())
}

/// Classify `node` relative to `(causes, outcome)`.
///
/// Labels overlap in principle, so the checks apply in a fixed precedence:
/// mediator, then post-treatment collider, then m-bias collider, then
/// confounders, else neutral.
pub fn classify_node(
    g: &CausalGraph,
    node: usize,
    causes: &[usize],
    outcome: usize,
) -> Result<NodeClassification> {
    if causes.contains(&node) || node == outcome {
        return Err(Error::Config(format!(
            "cannot classify `{}`: it is a cause or the outcome",
            g.name(node)
        )));
    }
    let de_causes = g.descendants_mask(causes);
    let de_outcome = g.descendants_mask(&[outcome]);
    let an_outcome = g.ancestors_mask(&[outcome]);

    let label = if de_causes[node] && an_outcome[node] {
        // On a directed path from some cause to the outcome.
        NodeLabel::Mediator
    } else if post_treatment_collider(g, node, causes, outcome, &de_causes, &de_outcome) {
        NodeLabel::Collider
    } else if m_bias_collider(g, node, causes, outcome, &de_causes) {
        NodeLabel::MBiasCollider
    } else {
        match confounded_cause_count(g, node, causes, outcome, &de_causes) {
            Some(k) if k >= 2 => NodeLabel::MultiCauseConfounder,
            Some(1) => NodeLabel::SingleCauseConfounder,
            _ => NodeLabel::Neutral,
        }
    };
    Ok(NodeClassification {
        node: g.name(node).to_string(),
        label,
        causes: causes.iter().map(|&c| g.name(c).to_string()).collect(),
        outcome: g.name(outcome).to_string(),
    })
}

/// Name-based convenience wrapper around [`classify_node`].
pub fn classify_node_names(
    g: &CausalGraph,
    node: &str,
    causes: &[String],
    outcome: &str,
) -> Result<NodeClassification> {
    classify_node(g, g.node_id(node)?, &g.resolve(causes)?, g.node_id(outcome)?)
}

/// Collider whose colliding parents sit inside causes, outcome, or their
/// descendants (a post-treatment collider such as a common effect of a cause
/// and the outcome).
fn post_treatment_collider(
    g: &CausalGraph,
    node: usize,
    causes: &[usize],
    outcome: usize,
    de_causes: &[bool],
    de_outcome: &[bool],
) -> bool {
    let _ = causes;
    let hits = g
        .parents_of(node)
        .iter()
        .filter(|&&p| de_causes[p] || de_outcome[p] || p == outcome)
        .count();
    hits >= 2
}

/// Pre-treatment collider on an openable cause <- P1 -> K <- P2 -> outcome
/// pattern: P1 an ancestor of some cause and parent of K, P2 a distinct
/// parent of K and ancestor of the outcome, K a non-descendant of all causes.
fn m_bias_collider(
    g: &CausalGraph,
    node: usize,
    causes: &[usize],
    outcome: usize,
    de_causes: &[bool],
) -> bool {
    m_bias_witness(g, node, causes, outcome, de_causes).is_some()
}

fn m_bias_witness(
    g: &CausalGraph,
    node: usize,
    causes: &[usize],
    outcome: usize,
    de_causes: &[bool],
) -> Option<(usize, usize)> {
    if de_causes[node] {
        return None;
    }
    let an_outcome = g.ancestors_mask(&[outcome]);
    let an_causes: Vec<bool> = {
        let mut mask = vec![false; g.node_count()];
        for &c in causes {
            for (i, hit) in g.ancestors_mask(&[c]).iter().enumerate() {
                if *hit && i != c {
                    mask[i] = true;
                }
            }
        }
        mask
    };
    let parents = g.parents_of(node);
    let mut best: Option<(usize, usize)> = None;
    for &p1 in parents {
        if !an_causes[p1] {
            continue;
        }
        for &p2 in parents {
            if p2 == p1 || !an_outcome[p2] || p2 == outcome {
                continue;
            }
            let cand = (p1, p2);
            let better = match best {
                None => true,
                Some(b) => (g.name(cand.0), g.name(cand.1)) < (g.name(b.0), g.name(b.1)),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best
}

/// If `node` is a pre-treatment ancestor of the outcome via cause-free paths,
/// the number of causes it is an ancestor of; `None` otherwise.
fn confounded_cause_count(
    g: &CausalGraph,
    node: usize,
    causes: &[usize],
    outcome: usize,
    de_causes: &[bool],
) -> Option<usize> {
    if de_causes[node] {
        return None; // post-treatment
    }
    let cause_set: BTreeSet<usize> = causes.iter().copied().collect();
    // Ancestor of the outcome along directed paths avoiding the causes.
    let reaches_outcome = {
        let mut mask = vec![false; g.node_count()];
        let mut stack = vec![outcome];
        mask[outcome] = true;
        while let Some(v) = stack.pop() {
            for &p in g.parents_of(v) {
                if !mask[p] && !cause_set.contains(&p) {
                    mask[p] = true;
                    stack.push(p);
                }
            }
        }
        mask
    };
    if !reaches_outcome[node] {
        return None;
    }
    let de_node = g.descendants_mask(&[node]);
    Some(causes.iter().filter(|&&c| de_node[c]).count())
}

// ---------------------------------------------------------------------------
// Generalized adjustment criterion

/// Why an adjustment set was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum AdjustmentWitness {
    /// A member of z descends from a node on a proper causal path.
    ForbiddenNode { node: String },
    /// A proper non-causal path left open by z (node names in order).
    OpenPath { path: Vec<String> },
}

impl std::fmt::Display for AdjustmentWitness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdjustmentWitness::ForbiddenNode { node } => {
                write!(f, "forbidden node {node}")
            }
            AdjustmentWitness::OpenPath { path } => {
                write!(f, "open path {}", path.join(" -> "))
            }
        }
    }
}

/// Verdict of the generalized adjustment criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdjustmentVerdict {
    pub valid: bool,
    pub witness: Option<AdjustmentWitness>,
}

/// Generalized adjustment criterion (proper-causal-path form): `z` is valid
/// for `(causes, outcome)` iff (i) no member of z is in the forbidden set
/// (descendants of non-cause nodes on proper causal paths, plus the causes)
/// and (ii) z blocks every proper non-causal path from a cause to the
/// outcome. False verdicts carry the lexicographically least witness.
pub fn is_valid_adjustment(
    g: &CausalGraph,
    z: &[usize],
    causes: &[usize],
    outcome: usize,
) -> Result<AdjustmentVerdict> {
    let zset: BTreeSet<usize> = z.iter().copied().collect();
    let cause_set: BTreeSet<usize> = causes.iter().copied().collect();
    if zset.contains(&outcome) || !zset.is_disjoint(&cause_set) {
        return Err(Error::Config(
            "adjustment set must be disjoint from causes and outcome".into(),
        ));
    }

    // Condition (i): forbidden-set membership.
    let cn = proper_causal_nodes(g, causes, outcome);
    let cn_ids: Vec<usize> = cn
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect();
    let forbidden = g.descendants_mask(&cn_ids);
    let mut offenders: Vec<&str> = z
        .iter()
        .filter(|&&v| forbidden[v])
        .map(|&v| g.name(v))
        .collect();
    offenders.sort_unstable();
    if let Some(node) = offenders.first() {
        return Ok(AdjustmentVerdict {
            valid: false,
            witness: Some(AdjustmentWitness::ForbiddenNode {
                node: (*node).to_string(),
            }),
        });
    }

    // Condition (ii): every open proper non-causal path is a counterexample.
    let mut open = open_proper_noncausal_paths(g, causes, outcome, &zset);
    open.sort();
    if let Some(path) = open.into_iter().next() {
        return Ok(AdjustmentVerdict {
            valid: false,
            witness: Some(AdjustmentWitness::OpenPath {
                path: path.into_iter().map(|v| g.name(v).to_string()).collect(),
            }),
        });
    }
    Ok(AdjustmentVerdict {
        valid: true,
        witness: None,
    })
}

/// Name-based convenience wrapper around [`is_valid_adjustment`].
pub fn is_valid_adjustment_names(
    g: &CausalGraph,
    z: &[String],
    causes: &[String],
    outcome: &str,
) -> Result<AdjustmentVerdict> {
    is_valid_adjustment(g, &g.resolve(z)?, &g.resolve(causes)?, g.node_id(outcome)?)
}

/// Mask of non-cause nodes on proper causal paths from `causes` to `outcome`
/// (reachable forward from a cause without passing through causes, and
/// reaching the outcome without passing through causes). Includes the
/// outcome itself when some proper causal path exists.
fn proper_causal_nodes(g: &CausalGraph, causes: &[usize], outcome: usize) -> Vec<bool> {
    let cause_set: BTreeSet<usize> = causes.iter().copied().collect();
    let n = g.node_count();
    // Forward from causes, never expanding through a cause.
    let mut fwd = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for &c in causes {
        for &ch in g.children_of(c) {
            if !cause_set.contains(&ch) && !fwd[ch] {
                fwd[ch] = true;
                stack.push(ch);
            }
        }
    }
    while let Some(v) = stack.pop() {
        for &ch in g.children_of(v) {
            if !cause_set.contains(&ch) && !fwd[ch] {
                fwd[ch] = true;
                stack.push(ch);
            }
        }
    }
    // Backward from outcome, never expanding through a cause.
    let mut bwd = vec![false; n];
    bwd[outcome] = true;
    let mut stack = vec![outcome];
    while let Some(v) = stack.pop() {
        for &p in g.parents_of(v) {
            if !cause_set.contains(&p) && !bwd[p] {
                bwd[p] = true;
                stack.push(p);
            }
        }
    }
    (0..n).map(|v| fwd[v] && bwd[v]).collect()
}

/// All proper non-causal paths from a cause to the outcome left open by z.
///
/// Paths are enumerated explicitly (the pre-registered graphs are small);
/// properness excludes paths through another cause, and fully directed
/// cause-to-outcome paths are causal hence skipped.
fn open_proper_noncausal_paths(
    g: &CausalGraph,
    causes: &[usize],
    outcome: usize,
    z: &BTreeSet<usize>,
) -> Vec<Vec<usize>> {
    let anc_z: Vec<bool> = {
        let ids: Vec<usize> = z.iter().copied().collect();
        g.ancestors_mask(&ids)
    };
    let cause_set: BTreeSet<usize> = causes.iter().copied().collect();
    let mut found = Vec::new();
    let mut sorted_causes: Vec<usize> = causes.to_vec();
    sorted_causes.sort_by_key(|&c| g.name(c).to_string());
    for &start in &sorted_causes {
        // Walk over edges in both directions; `dirs[i]` records whether step i
        // was along an edge (true = forward parent->child).
        let mut path = vec![start];
        let mut dirs: Vec<bool> = Vec::new();
        walk(
            g,
            start,
            outcome,
            &cause_set,
            z,
            &anc_z,
            &mut path,
            &mut dirs,
            &mut found,
        );
    }
    found
}

#[allow(clippy::too_many_arguments)]
fn walk(
    g: &CausalGraph,
    v: usize,
    outcome: usize,
    causes: &BTreeSet<usize>,
    z: &BTreeSet<usize>,
    anc_z: &[bool],
    path: &mut Vec<usize>,
    dirs: &mut Vec<bool>,
    found: &mut Vec<Vec<usize>>,
) {
    if v == outcome {
        if dirs.iter().any(|&forward| !forward) && path_open(path, dirs, g, z, anc_z) {
            found.push(path.clone());
        }
        return;
    }
    let neighbors: Vec<(usize, bool)> = g
        .children_of(v)
        .iter()
        .map(|&c| (c, true))
        .chain(g.parents_of(v).iter().map(|&p| (p, false)))
        .collect();
    for (w, forward) in neighbors {
        if path.contains(&w) {
            continue;
        }
        if causes.contains(&w) {
            continue; // proper paths meet the cause set only at the start
        }
        path.push(w);
        dirs.push(forward);
        walk(g, w, outcome, causes, z, anc_z, path, dirs, found);
        path.pop();
        dirs.pop();
    }
}

/// d-separation blocking rules applied to one explicit path.
fn path_open(
    path: &[usize],
    dirs: &[bool],
    g: &CausalGraph,
    z: &BTreeSet<usize>,
    anc_z: &[bool],
) -> bool {
    let _ = g;
    for i in 1..path.len() - 1 {
        let v = path[i];
        let collider = dirs[i - 1] && !dirs[i];
        if collider {
            if !anc_z[v] {
                return false;
            }
        } else if z.contains(&v) {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Assumption checklist

/// One checklist condition with its verdict and witness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConditionVerdict {
    /// Condition number in the checklist (1, 3, 4, 5).
    pub id: u8,
    pub description: String,
    pub satisfied: bool,
    pub witness: Option<String>,
}

/// Symbolic checklist over the identification conditions that a causal graph
/// can be screened for: no unmeasured single-cause confounders (1), no M
/// structures (3), causes not causally dependent (4), no post-treatment
/// variables in z (5).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChecklistReport {
    pub conditions: Vec<ConditionVerdict>,
}

impl ChecklistReport {
    pub fn all_satisfied(&self) -> bool {
        self.conditions.iter().all(|c| c.satisfied)
    }
}

/// Evaluate checklist conditions 1, 3, 4, 5 symbolically.
pub fn check_assumptions(
    g: &CausalGraph,
    causes: &[usize],
    outcome: usize,
    z: &[usize],
) -> Result<ChecklistReport> {
    let de_causes = g.descendants_mask(causes);
    let cause_set: BTreeSet<usize> = causes.iter().copied().collect();

    // Condition 1: no unmeasured (latent) single-cause confounder.
    let mut single_cause: Vec<&str> = (0..g.node_count())
        .filter(|&v| {
            g.role(v) == crate::graph::NodeRole::Latent
                && !cause_set.contains(&v)
                && v != outcome
                && confounded_cause_count(g, v, causes, outcome, &de_causes) == Some(1)
        })
        .map(|v| g.name(v))
        .collect();
    single_cause.sort_unstable();
    let c1 = ConditionVerdict {
        id: 1,
        description: "no unmeasured single-cause confounders".into(),
        satisfied: single_cause.is_empty(),
        witness: single_cause.first().map(|s| (*s).to_string()),
    };

    // Condition 3: no M structure between the causes and the outcome.
    let mut m_patterns: Vec<(String, String, String)> = (0..g.node_count())
        .filter(|&v| !cause_set.contains(&v) && v != outcome)
        .filter_map(|k| {
            m_bias_witness(g, k, causes, outcome, &de_causes).map(|(p1, p2)| {
                (
                    g.name(p1).to_string(),
                    g.name(k).to_string(),
                    g.name(p2).to_string(),
                )
            })
        })
        .collect();
    m_patterns.sort();
    let c3 = ConditionVerdict {
        id: 3,
        description: "no M structures between the causes and the outcome".into(),
        satisfied: m_patterns.is_empty(),
        witness: m_patterns
            .first()
            .map(|(p1, k, p2)| format!("M-pattern ({p1}, {k}, {p2})")),
    };

    // Condition 4: no directed path between any two causes.
    let mut cause_paths: Vec<Vec<String>> = Vec::new();
    for &a in causes {
        for &b in causes {
            if a == b {
                continue;
            }
            if let Some(path) = shortest_directed_path(g, a, b) {
                cause_paths.push(path.into_iter().map(|v| g.name(v).to_string()).collect());
            }
        }
    }
    cause_paths.sort();
    let c4 = ConditionVerdict {
        id: 4,
        description: "causes are not causally dependent".into(),
        satisfied: cause_paths.is_empty(),
        witness: cause_paths.first().map(|p| p.join(" -> ")),
    };

    // Condition 5: no post-treatment variable in z.
    let mut post: Vec<&str> = z
        .iter()
        .filter(|&&v| de_causes[v] && !cause_set.contains(&v))
        .map(|&v| g.name(v))
        .collect();
    post.sort_unstable();
    let c5 = ConditionVerdict {
        id: 5,
        description: "no post-treatment variables in the adjustment set".into(),
        satisfied: post.is_empty(),
        witness: post.first().map(|s| (*s).to_string()),
    };

    Ok(ChecklistReport {
        conditions: vec![c1, c3, c4, c5],
    })
}

/// Name-based convenience wrapper around [`check_assumptions`].
pub fn check_assumptions_names(
    g: &CausalGraph,
    causes: &[String],
    outcome: &str,
    z: &[String],
) -> Result<ChecklistReport> {
    check_assumptions(g, &g.resolve(causes)?, g.node_id(outcome)?, &g.resolve(z)?)
}

/// Lexicographically least shortest directed path from `a` to `b`, if any.
fn shortest_directed_path(g: &CausalGraph, a: usize, b: usize) -> Option<Vec<usize>> {
    // BFS layered by depth, expanding children in name order, keeps the
    // returned witness deterministic.
    let mut prev: Vec<Option<usize>> = vec![None; g.node_count()];
    let mut visited = vec![false; g.node_count()];
    visited[a] = true;
    let mut frontier = vec![a];
    while !frontier.is_empty() && !visited[b] {
        let mut next = Vec::new();
        frontier.sort_by_key(|&v| g.name(v).to_string());
        for &v in &frontier {
            let mut kids: Vec<usize> = g.children_of(v).to_vec();
            kids.sort_by_key(|&c| g.name(c).to_string());
            for c in kids {
                if !visited[c] {
                    visited[c] = true;
                    prev[c] = Some(v);
                    next.push(c);
                }
            }
        }
        frontier = next;
    }
    if !visited[b] {
        return None;
    }
    let mut path = vec![b];
    let mut cur = b;
    while let Some(p) = prev[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Some(path)
}
