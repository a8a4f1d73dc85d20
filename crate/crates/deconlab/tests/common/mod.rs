//! Independent oracles for the integration suite: brute-force d-separation,
//! explicit directed-path tracing, random DAG generation, and small numeric
//! helpers. These deliberately avoid the library's own algorithms wherever
//! they are used to check one.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deconlab::graph::{CausalGraph, NodeRole};
use deconlab::mechanism::Mechanism;
use deconlab::scm::Scm;

/// A bare DAG over indices 0..n as an adjacency matrix (edge i -> j).
#[derive(Debug, Clone)]
pub struct RawDag {
    pub n: usize,
    pub edge: Vec<Vec<bool>>,
}

impl RawDag {
    pub fn parents(&self, v: usize) -> Vec<usize> {
        (0..self.n).filter(|&p| self.edge[p][v]).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.n).filter(|&c| self.edge[v][c]).collect()
    }

    /// Descendants of `v`, including `v`.
    pub fn descendants(&self, v: usize) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        mask[v] = true;
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for c in self.children(u) {
                if !mask[c] {
                    mask[c] = true;
                    stack.push(c);
                }
            }
        }
        mask
    }

    /// All simple undirected paths from x to y as (nodes, step-directions)
    /// where direction true = traversed parent->child.
    pub fn all_paths(&self, x: usize, y: usize) -> Vec<(Vec<usize>, Vec<bool>)> {
        let mut found = Vec::new();
        let mut path = vec![x];
        let mut dirs = Vec::new();
        self.walk(x, y, &mut path, &mut dirs, &mut found);
        found
    }

    fn walk(
        &self,
        v: usize,
        y: usize,
        path: &mut Vec<usize>,
        dirs: &mut Vec<bool>,
        found: &mut Vec<(Vec<usize>, Vec<bool>)>,
    ) {
        if v == y {
            found.push((path.clone(), dirs.clone()));
            return;
        }
        for c in self.children(v) {
            if !path.contains(&c) {
                path.push(c);
                dirs.push(true);
                self.walk(c, y, path, dirs, found);
                path.pop();
                dirs.pop();
            }
        }
        for p in self.parents(v) {
            if !path.contains(&p) {
                path.push(p);
                dirs.push(false);
                self.walk(p, y, path, dirs, found);
                path.pop();
                dirs.pop();
            }
        }
    }
}

/// Random DAG with the given edge probability; edges only i -> j for i < j,
/// so acyclicity holds by construction.
pub fn random_dag(n: usize, edge_prob: f64, seed: u64) -> RawDag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edge = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < edge_prob {
                edge[i][j] = true;
            }
        }
    }
    RawDag { n, edge }
}

/// Brute-force d-separation: enumerate every simple path between every
/// (x, y) pair and apply the blocking rules path by path.
pub fn dsep_brute_force(dag: &RawDag, xs: &[usize], ys: &[usize], z: &[usize]) -> bool {
    let in_z = |v: usize| z.contains(&v);
    let opens = |v: usize| {
        // Collider open iff v or a descendant of v is in z.
        let desc = dag.descendants(v);
        z.iter().any(|&w| desc[w])
    };
    for &x in xs {
        for &y in ys {
            for (path, dirs) in dag.all_paths(x, y) {
                let mut blocked = false;
                for i in 1..path.len() - 1 {
                    let v = path[i];
                    let collider = dirs[i - 1] && !dirs[i];
                    if collider {
                        if !opens(v) {
                            blocked = true;
                            break;
                        }
                    } else if in_z(v) {
                        blocked = true;
                        break;
                    }
                }
                if !blocked {
                    return false;
                }
            }
        }
    }
    true
}

/// Convert a raw DAG into a [`CausalGraph`] with node `i` named `N{i:02}`.
/// Roles: the lexicographically last node is the outcome, the first is a
/// cause (roles are irrelevant to d-separation).
pub fn raw_to_graph(dag: &RawDag) -> CausalGraph {
    let names: Vec<String> = (0..dag.n).map(|i| format!("N{i:02}")).collect();
    let nodes: Vec<(String, NodeRole)> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let role = if i == dag.n - 1 {
                NodeRole::Outcome
            } else if i == 0 {
                NodeRole::Cause
            } else {
                NodeRole::Auxiliary
            };
            (name.clone(), role)
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..dag.n {
        for j in 0..dag.n {
            if dag.edge[i][j] {
                edges.push((names[i].clone(), names[j].clone()));
            }
        }
    }
    CausalGraph::new(nodes, edges, vec![names[0].clone()]).expect("valid random DAG")
}

/// Explicit directed-path enumeration oracle for linear path tracing: the
/// sum over all directed `from -> ... -> to` paths (avoiding `blocked`
/// nodes) of the products of linear-gaussian edge weights.
pub fn path_sum_oracle(scm: &Scm, from: &str, to: &str, blocked: &[String]) -> f64 {
    let g = scm.graph();
    let from = g.node_id(from).unwrap();
    let to = g.node_id(to).unwrap();
    let blocked: Vec<usize> = blocked.iter().map(|b| g.node_id(b).unwrap()).collect();
    let mut total = 0.0;
    let mut stack: Vec<(usize, f64)> = vec![(from, 1.0)];
    while let Some((v, w)) = stack.pop() {
        if v == to {
            total += w;
            continue;
        }
        for &c in g.children_of(v) {
            if blocked.contains(&c) {
                continue;
            }
            if let Mechanism::LinearGaussian { weights, .. } = scm.mechanism(c) {
                stack.push((c, w * weights[g.name(v)]));
            }
        }
    }
    total
}

/// Kolmogorov-Smirnov statistic of a sample against Unif(0,1).
pub fn ks_vs_uniform01(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = x.clamp(0.0, 1.0);
        d = d.max(((i + 1) as f64 / n - cdf).abs());
        d = d.max((i as f64 / n - cdf).abs());
    }
    d
}

/// Largest principal angle (degrees) between the column spaces of a and b.
pub fn largest_principal_angle_deg(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let svd = (qa.transpose() * qb).svd(false, false);
    let min_sv = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .clamp(-1.0, 1.0);
    min_sv.acos().to_degrees()
}

fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    // Gram-Schmidt, sufficient for well-conditioned test inputs.
    let (n, k) = (a.nrows(), a.ncols());
    let mut q = DMatrix::zeros(n, k);
    for j in 0..k {
        let mut v = a.column(j).into_owned();
        for i in 0..j {
            let qi = q.column(i);
            let proj = qi.dot(&a.column(j));
            v -= qi * proj;
        }
        let norm = v.norm();
        assert!(norm > 1e-12, "rank-deficient basis input");
        q.set_column(j, &(v / norm));
    }
    q
}

/// The confounded triangle U -> A (w=1), A -> Y (w=beta), U -> Y (w=gamma),
/// all unit noise, built through the public API.
pub fn triangle_scm(beta: f64, gamma: f64, seed: u64) -> Scm {
    let graph = CausalGraph::new(
        vec![
            ("A".into(), NodeRole::Cause),
            ("U".into(), NodeRole::Latent),
            ("Y".into(), NodeRole::Outcome),
        ],
        vec![
            ("U".into(), "A".into()),
            ("A".into(), "Y".into()),
            ("U".into(), "Y".into()),
        ],
        vec!["A".into()],
    )
    .unwrap();
    let lg = |weights: &[(&str, f64)], noise: f64| Mechanism::LinearGaussian {
        weights: weights
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect::<BTreeMap<_, _>>(),
        intercept: 0.0,
        noise_sd: noise,
    };
    let mut mechs = BTreeMap::new();
    mechs.insert("U".to_string(), lg(&[], 1.0));
    mechs.insert("A".to_string(), lg(&[("U", 1.0)], 1.0));
    mechs.insert("Y".to_string(), lg(&[("A", beta), ("U", gamma)], 1.0));
    Scm::new(graph, mechs, seed).unwrap()
}

/// Mean and standard error of a slice.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
