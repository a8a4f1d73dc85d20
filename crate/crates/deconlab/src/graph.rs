//! Causal graphs: validated DAGs with node roles and a designated cause order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a node in the structural model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    /// One of the treatment variables A_1..A_m.
    Cause,
    /// The single outcome node Y.
    Outcome,
    /// Unobserved; dropped when the observed dataset is extracted.
    Latent,
    /// Observed non-cause, non-outcome variable.
    Auxiliary,
}

/// A validated directed acyclic graph over named nodes.
///
/// Construction enforces: acyclicity, exactly one outcome node, a cause order
/// listing exactly the cause-role nodes, and edge endpoints that resolve.
/// The evaluation order is Kahn's algorithm with lexicographic-name
/// tie-breaking, so it is unique and reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    names: Vec<String>,
    roles: Vec<NodeRole>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    /// Edges in insertion order (kept for faithful serialization).
    edges: Vec<(usize, usize)>,
    cause_order: Vec<usize>,
    outcome: usize,
    topo: Vec<usize>,
    index: BTreeMap<String, usize>,
}

impl CausalGraph {
    pub fn new(
        nodes: Vec<(String, NodeRole)>,
        edges: Vec<(String, String)>,
        cause_order: Vec<String>,
    ) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut names = Vec::with_capacity(nodes.len());
        let mut roles = Vec::with_capacity(nodes.len());
        for (name, role) in nodes {
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(Error::Config(format!("duplicate node `{name}`")));
            }
            names.push(name);
            roles.push(role);
        }

        let mut parents = vec![Vec::new(); names.len()];
        let mut children = vec![Vec::new(); names.len()];
        let mut edge_ids = Vec::with_capacity(edges.len());
        let mut seen = BTreeSet::new();
        for (p, c) in &edges {
            let pi = *index
                .get(p)
                .ok_or_else(|| Error::UnknownNode(p.clone()))?;
            let ci = *index
                .get(c)
                .ok_or_else(|| Error::UnknownNode(c.clone()))?;
            if pi == ci {
                return Err(Error::Cycle(p.clone()));
            }
            if !seen.insert((pi, ci)) {
                return Err(Error::Config(format!("duplicate edge {p} -> {c}")));
            }
            parents[ci].push(pi);
            children[pi].push(ci);
            edge_ids.push((pi, ci));
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }

        let outcomes: Vec<usize> = roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == NodeRole::Outcome)
            .map(|(i, _)| i)
            .collect();
        if outcomes.len() != 1 {
            return Err(Error::Config(format!(
                "expected exactly one outcome node, found {}",
                outcomes.len()
            )));
        }

        let declared_causes: BTreeSet<&str> = cause_order.iter().map(String::as_str).collect();
        if declared_causes.len() != cause_order.len() {
            return Err(Error::Config("cause_order has duplicates".into()));
        }
        let role_causes: BTreeSet<&str> = names
            .iter()
            .zip(&roles)
            .filter(|(_, r)| **r == NodeRole::Cause)
            .map(|(n, _)| n.as_str())
            .collect();
        if declared_causes != role_causes {
            return Err(Error::Config(
                "cause_order must list exactly the nodes with role cause".into(),
            ));
        }
        let cause_ids = cause_order
            .iter()
            .map(|n| index[n.as_str()])
            .collect::<Vec<_>>();

        let topo = kahn_lexicographic(&names, &parents, &children)?;

        Ok(Self {
            names,
            roles,
            parents,
            children,
            edges: edge_ids,
            cause_order: cause_ids,
            outcome: outcomes[0],
            topo,
            index,
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn role(&self, id: usize) -> NodeRole {
        self.roles[id]
    }

    pub fn node_id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn parents_of(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn children_of(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Cause node ids in declared order.
    pub fn cause_order(&self) -> &[usize] {
        &self.cause_order
    }

    pub fn cause_names(&self) -> Vec<String> {
        self.cause_order
            .iter()
            .map(|&i| self.names[i].clone())
            .collect()
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    /// Unique topological evaluation order (lexicographic tie-break).
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// Mask of nodes that are `seeds` or have a directed path to a seed.
    pub fn ancestors_mask(&self, seeds: &[usize]) -> Vec<bool> {
        self.reach_mask(seeds, |v| &self.parents[v])
    }

    /// Mask of nodes that are `seeds` or are reachable from a seed.
    pub fn descendants_mask(&self, seeds: &[usize]) -> Vec<bool> {
        self.reach_mask(seeds, |v| &self.children[v])
    }

    fn reach_mask<'a, F>(&'a self, seeds: &[usize], next: F) -> Vec<bool>
    where
        F: Fn(usize) -> &'a [usize],
    {
        let mut mask = vec![false; self.names.len()];
        let mut stack: Vec<usize> = seeds.to_vec();
        for &s in seeds {
            mask[s] = true;
        }
        while let Some(v) = stack.pop() {
            for &w in next(v) {
                if !mask[w] {
                    mask[w] = true;
                    stack.push(w);
                }
            }
        }
        mask
    }

    /// Copy of this graph with all edges into `targets` removed.
    pub fn without_incoming(&self, targets: &[usize]) -> Self {
        let target_mask = {
            let mut m = vec![false; self.names.len()];
            for &t in targets {
                m[t] = true;
            }
            m
        };
        let edges: Vec<(String, String)> = self
            .edges
            .iter()
            .filter(|(_, c)| !target_mask[*c])
            .map(|&(p, c)| (self.names[p].clone(), self.names[c].clone()))
            .collect();
        let nodes = self
            .names
            .iter()
            .cloned()
            .zip(self.roles.iter().copied())
            .collect();
        // Removing edges cannot introduce cycles or change roles.
        Self::new(nodes, edges, self.cause_names()).expect("edge removal preserves validity")
    }

    /// Copy of this graph with the listed directed edges removed.
    pub fn without_edges(&self, remove: &BTreeSet<(usize, usize)>) -> Self {
        let edges: Vec<(String, String)> = self
            .edges
            .iter()
            .filter(|e| !remove.contains(e))
            .map(|&(p, c)| (self.names[p].clone(), self.names[c].clone()))
            .collect();
        let nodes = self
            .names
            .iter()
            .cloned()
            .zip(self.roles.iter().copied())
            .collect();
        Self::new(nodes, edges, self.cause_names()).expect("edge removal preserves validity")
    }

    /// Node ids sorted by name; position in this list indexes the node's
    /// random stream, independent of insertion order.
    pub fn stream_index(&self) -> Vec<usize> {
        self.index.values().copied().collect()
    }

    /// Resolve a list of names to ids.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.node_id(n)).collect()
    }
}

fn kahn_lexicographic(
    names: &[String],
    parents: &[Vec<usize>],
    children: &[Vec<usize>],
) -> Result<Vec<usize>> {
    let n = names.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    // Ready set keyed by name for the deterministic tie-break.
    let mut ready: BTreeSet<(&str, usize)> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(|i| (names[i].as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&(name, id)) = ready.iter().next() {
        ready.remove(&(name, id));
        order.push(id);
        for &c in &children[id] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert((names[c].as_str(), c));
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n)
            .find(|&i| indegree[i] > 0)
            .map(|i| names[i].clone())
            .unwrap_or_default();
        return Err(Error::Cycle(stuck));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> CausalGraph {
        CausalGraph::new(
            vec![
                ("A".into(), NodeRole::Cause),
                ("B".into(), NodeRole::Auxiliary),
                ("Y".into(), NodeRole::Outcome),
            ],
            vec![("A".into(), "B".into()), ("B".into(), "Y".into())],
            vec!["A".into()],
        )
        .unwrap()
    }

    #[test]
    fn topo_order_is_lexicographic_among_ready_nodes() {
        let g = CausalGraph::new(
            vec![
                ("B".into(), NodeRole::Cause),
                ("A".into(), NodeRole::Cause),
                ("Y".into(), NodeRole::Outcome),
            ],
            vec![("A".into(), "Y".into()), ("B".into(), "Y".into())],
            vec!["B".into(), "A".into()],
        )
        .unwrap();
        let order: Vec<&str> = g.topo_order().iter().map(|&i| g.name(i)).collect();
        assert_eq!(order, vec!["A", "B", "Y"]);
    }

    #[test]
    fn cycle_is_rejected() {
        let err = CausalGraph::new(
            vec![
                ("A".into(), NodeRole::Cause),
                ("Y".into(), NodeRole::Outcome),
            ],
            vec![("A".into(), "Y".into()), ("Y".into(), "A".into())],
            vec!["A".into()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Cycle(_)));
    }

    #[test]
    fn outcome_must_be_unique() {
        let err = CausalGraph::new(
            vec![
                ("A".into(), NodeRole::Cause),
                ("Y".into(), NodeRole::Outcome),
                ("Z".into(), NodeRole::Outcome),
            ],
            vec![],
            vec!["A".into()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn cause_order_must_match_roles() {
        let err = CausalGraph::new(
            vec![
                ("A".into(), NodeRole::Cause),
                ("B".into(), NodeRole::Cause),
                ("Y".into(), NodeRole::Outcome),
            ],
            vec![],
            vec!["A".into()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_edge_endpoint_is_rejected() {
        let err = CausalGraph::new(
            vec![
                ("A".into(), NodeRole::Cause),
                ("Y".into(), NodeRole::Outcome),
            ],
            vec![("A".into(), "Q".into())],
            vec!["A".into()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownNode(_)));
    }

    #[test]
    fn ancestor_and_descendant_masks() {
        let g = chain();
        let y = g.node_id("Y").unwrap();
        let a = g.node_id("A").unwrap();
        let anc = g.ancestors_mask(&[y]);
        assert!(anc.iter().all(|&b| b));
        let desc = g.descendants_mask(&[a]);
        assert!(desc.iter().all(|&b| b));
    }

    #[test]
    fn without_incoming_removes_only_targeted_edges() {
        let g = chain();
        let b = g.node_id("B").unwrap();
        let cut = g.without_incoming(&[b]);
        assert!(cut.parents_of(b).is_empty());
        assert_eq!(cut.children_of(b).len(), 1);
    }
}
