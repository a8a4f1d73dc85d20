//! Property tests for the graph-analysis algorithms.

mod common;

use common::{dsep_brute_force, random_dag, raw_to_graph};
use deconlab::analysis::{classify_node, d_separated, is_valid_adjustment};
use deconlab::graph::{CausalGraph, NodeRole};
use deconlab::scenarios::{build_scenario, ScenarioParams};
use proptest::prelude::*;

/// Enumerate all z subsets (as index vectors) of the nodes excluding x, y.
fn z_subsets(n: usize, x: usize, y: usize) -> Vec<Vec<usize>> {
    let others: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
    let mut subsets = Vec::with_capacity(1 << others.len());
    for mask in 0..(1u32 << others.len()) {
        subsets.push(
            others
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &v)| v)
                .collect(),
        );
    }
    subsets
}

#[test]
fn reachability_agrees_with_brute_force_on_random_dags() {
    // A fast slice of the full AC-7 sweep (which runs in the acceptance
    // suite): every pair and every conditioning subset on 100 random DAGs.
    let mut checked = 0usize;
    for seed in 0..100u64 {
        let dag = random_dag(6, 0.3, seed);
        let g = raw_to_graph(&dag);
        for x in 0..dag.n {
            for y in (x + 1)..dag.n {
                for z in z_subsets(dag.n, x, y) {
                    let fast = d_separated(&g, &[x], &[y], &z).unwrap();
                    let slow = dsep_brute_force(&dag, &[x], &[y], &z);
                    assert_eq!(fast, slow, "seed {seed}, x {x}, y {y}, z {z:?}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000);
}

proptest! {
    /// Blocking monotonicity: when exactly one open path connects x and y
    /// given z, adding any non-collider interior node of it to z separates.
    #[test]
    fn conditioning_on_a_noncollider_of_the_only_open_path_blocks(seed in 0u64..500) {
        let dag = random_dag(7, 0.25, seed ^ 0xb10c);
        let g = raw_to_graph(&dag);
        'pairs: for x in 0..dag.n {
            for y in (x + 1)..dag.n {
                let paths = dag.all_paths(x, y);
                // Open paths given the empty set: colliders block themselves.
                let open: Vec<&(Vec<usize>, Vec<bool>)> = paths
                    .iter()
                    .filter(|(path, dirs)| {
                        (1..path.len() - 1).all(|i| !(dirs[i - 1] && !dirs[i]))
                    })
                    .collect();
                if open.len() != 1 || open[0].0.len() < 3 {
                    continue;
                }
                let (path, dirs) = open[0];
                prop_assert!(!d_separated(&g, &[x], &[y], &[]).unwrap());
                for i in 1..path.len() - 1 {
                    let collider = dirs[i - 1] && !dirs[i];
                    if !collider {
                        let z = vec![path[i]];
                        let fast = d_separated(&g, &[x], &[y], &z).unwrap();
                        let slow = dsep_brute_force(&dag, &[x], &[y], &z);
                        prop_assert_eq!(fast, slow);
                        // With a single open path, blocking it separates.
                        prop_assert!(slow, "seed {} x {} y {} via {:?}", seed, x, y, z);
                    }
                }
                break 'pairs;
            }
        }
    }
}

#[test]
fn classification_is_invariant_to_relabeling() {
    // Permute scenario node names through a prefix bijection and check that
    // the classification of each mapped node is unchanged.
    for id in ['a', 'b', 'c', 'd'] {
        let scenario = build_scenario(id, &ScenarioParams::default()).unwrap();
        let g = scenario.scm.graph();
        let rename = |name: &str| format!("QQ{name}");
        let nodes: Vec<(String, NodeRole)> = (0..g.node_count())
            .map(|i| (rename(g.name(i)), g.role(i)))
            .collect();
        let edges: Vec<(String, String)> = g
            .edges()
            .iter()
            .map(|&(p, c)| (rename(g.name(p)), rename(g.name(c))))
            .collect();
        let cause_names: Vec<String> = g.cause_names().iter().map(|n| rename(n)).collect();
        let renamed = CausalGraph::new(nodes, edges, cause_names).unwrap();

        let causes: Vec<usize> = g.cause_order().to_vec();
        let outcome = g.outcome();
        let causes_r: Vec<usize> = g
            .cause_order()
            .iter()
            .map(|&c| renamed.node_id(&rename(g.name(c))).unwrap())
            .collect();
        let outcome_r = renamed.node_id(&rename(g.name(outcome))).unwrap();
        for v in 0..g.node_count() {
            if causes.contains(&v) || v == outcome {
                continue;
            }
            let original = classify_node(g, v, &causes, outcome).unwrap();
            let vr = renamed.node_id(&rename(g.name(v))).unwrap();
            let mapped = classify_node(&renamed, vr, &causes_r, outcome_r).unwrap();
            assert_eq!(original.label, mapped.label, "scenario {id}, node {}", g.name(v));
        }
    }
}

#[test]
fn scenario_adjustment_examples() {
    // Scenario a: R sits on the proper causal path from A1, so {R} is
    // rejected for the full cause set with R itself as the witness.
    let a = build_scenario('a', &ScenarioParams::default()).unwrap();
    let g = a.scm.graph();
    let causes: Vec<usize> = g.cause_order().to_vec();
    let y = g.outcome();
    let r = g.node_id("R").unwrap();
    let verdict = is_valid_adjustment(g, &[r], &causes, y).unwrap();
    assert!(!verdict.valid);

    // For the single treatment A1, {U} is valid but {R} still is not.
    let a1 = vec![g.node_id("A1").unwrap()];
    let u = g.node_id("U").unwrap();
    assert!(is_valid_adjustment(g, &[u], &a1, y).unwrap().valid);
    assert!(!is_valid_adjustment(g, &[r], &a1, y).unwrap().valid);
}
