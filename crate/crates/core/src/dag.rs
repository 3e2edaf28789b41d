//! Directed acyclic graphs over named variables and path-sum total effects.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed edge `(from, to)` by node index.
pub type Edge = (usize, usize);

/// A DAG over named nodes. Edges are kept sorted lexicographically by
/// `(from, to)`; that order is the canonical edge order used everywhere else
/// in the crate (edge weights, enumeration masks, K2 scans).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDag", into = "RawDag")]
pub struct Dag {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawDag {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

impl TryFrom<RawDag> for Dag {
    type Error = Error;

    fn try_from(raw: RawDag) -> Result<Self> {
        Dag::new(raw.nodes, raw.edges)
    }
}

impl From<Dag> for RawDag {
    fn from(dag: Dag) -> Self {
        RawDag {
            nodes: dag.nodes,
            edges: dag.edges,
        }
    }
}

impl Dag {
    pub fn new<I>(nodes: Vec<String>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = Edge>,
    {
        let m = nodes.len();
        for (i, name) in nodes.iter().enumerate() {
            if nodes[..i].contains(name) {
                return Err(Error::InvalidGraph(format!("duplicate node name `{name}`")));
            }
        }

        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort_unstable();
        edges.dedup();
        for &(from, to) in &edges {
            if from >= m || to >= m {
                return Err(Error::InvalidGraph(format!(
                    "edge ({from}, {to}) references a node outside 0..{m}"
                )));
            }
            if from == to {
                return Err(Error::Cyclic(nodes[from].clone()));
            }
            if edges.binary_search(&(to, from)).is_ok() {
                return Err(Error::InvalidGraph(format!(
                    "edge between `{}` and `{}` appears in both orientations",
                    nodes[from], nodes[to]
                )));
            }
        }

        let mut parents = vec![Vec::new(); m];
        let mut children = vec![Vec::new(); m];
        for &(from, to) in &edges {
            parents[to].push(from);
            children[from].push(to);
        }
        for p in &mut parents {
            p.sort_unstable();
        }

        // Kahn's algorithm, smallest ready index first so the order is stable.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| std::cmp::Reverse(i))
            .collect();
        let mut topo = Vec::with_capacity(m);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            topo.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(std::cmp::Reverse(c));
                }
            }
        }
        if topo.len() != m {
            let stuck = (0..m).find(|&v| indegree[v] > 0).unwrap_or(0);
            return Err(Error::Cyclic(nodes[stuck].clone()));
        }

        Ok(Dag {
            nodes,
            edges,
            parents,
            children,
            topo,
        })
    }

    /// Same node set, different edges.
    pub fn with_edges<I>(&self, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = Edge>,
    {
        Dag::new(self.nodes.clone(), edges)
    }

    pub fn empty(nodes: Vec<String>) -> Result<Self> {
        Dag::new(nodes, std::iter::empty())
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Position of `edge` in the canonical edge order, if present.
    pub fn edge_index(&self, edge: Edge) -> Option<usize> {
        self.edges.binary_search(&edge).ok()
    }

    pub fn contains_edge(&self, edge: Edge) -> bool {
        self.edge_index(edge).is_some()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    /// Sorted parent indices of node `j`.
    pub fn parents(&self, j: usize) -> &[usize] {
        &self.parents[j]
    }

    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} edges",
                weights.len(),
                self.edges.len()
            )));
        }
        Ok(())
    }

    fn check_pair(&self, x: &str, y: &str) -> Result<(usize, usize)> {
        let xi = self.index_of(x)?;
        let yi = self.index_of(y)?;
        if xi == yi {
            return Err(Error::InvalidParameter(format!(
                "treatment and outcome must differ (both `{x}`)"
            )));
        }
        Ok((xi, yi))
    }

    /// Sum over directed paths from `x` to `y` of the product of edge weights,
    /// by depth-first path enumeration. `weights` follows [`Dag::edges`].
    pub fn path_sum(&self, weights: &[f64], x: usize, y: usize) -> f64 {
        let mut out_edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nodes.len()];
        for (&(from, to), &w) in self.edges.iter().zip(weights) {
            out_edges[from].push((to, w));
        }

        fn walk(out_edges: &[Vec<(usize, f64)>], v: usize, y: usize, acc: f64) -> f64 {
            if v == y {
                return acc;
            }
            out_edges[v]
                .iter()
                .map(|&(next, w)| walk(out_edges, next, y, acc * w))
                .sum()
        }

        if x == y {
            return 0.0;
        }
        walk(&out_edges, x, y, 1.0)
    }
}

/// Total causal effect coefficient of `x` on `y`: the sum over all directed
/// paths of the product of path coefficients. The mean intervention effect at
/// `do(x = v)` is this coefficient times `v`.
pub fn total_effect(dag: &Dag, weights: &[f64], x: &str, y: &str) -> Result<f64> {
    dag.check_weights(weights)?;
    let (xi, yi) = dag.check_pair(x, y)?;
    Ok(dag.path_sum(weights, xi, yi))
}

/// Closed form of [`total_effect`]: entry `(x, y)` of `(I - Θ)^{-1}` where
/// `Θ[i][j]` is the weight of edge `i -> j`. For a DAG the Neumann series
/// `I + Θ + Θ² + …` terminates, so the two agree exactly up to rounding.
pub fn total_effect_closed(dag: &Dag, weights: &[f64], x: &str, y: &str) -> Result<f64> {
    dag.check_weights(weights)?;
    let (xi, yi) = dag.check_pair(x, y)?;
    let m = dag.node_count();
    let mut a = DMatrix::<f64>::identity(m, m);
    for (&(from, to), &w) in dag.edges().iter().zip(weights) {
        a[(from, to)] -= w;
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I - Θ is singular".into()))?;
    Ok(inv[(xi, yi)])
}
