//! Candidate graph spaces: every subgraph of a fixed "full" DAG, with an
//! independent Bernoulli prior on each possible edge.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dag::{Dag, Edge};
use crate::error::{Error, Result};

/// Default limit on `|E_full|` for exhaustive enumeration (about 10⁶ graphs).
pub const ENUMERATION_CAP: usize = 20;

/// Subset of the full edge set, bit `k` set iff the `k`-th edge of the full
/// graph (canonical order) is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeSet(pub u64);

impl EdgeSet {
    pub fn contains(self, k: usize) -> bool {
        self.0 >> k & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&k| self.contains(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpace {
    full: Dag,
    edge_prob: Vec<f64>,
}

impl CandidateSpace {
    /// `edge_prob[k]` is the prior inclusion probability of `full.edges()[k]`.
    pub fn new(full: Dag, edge_prob: Vec<f64>) -> Result<Self> {
        if edge_prob.len() != full.edge_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} edge probabilities for {} edges",
                edge_prob.len(),
                full.edge_count()
            )));
        }
        if let Some(p) = edge_prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter(format!(
                "edge probability {p} outside [0, 1]"
            )));
        }
        Ok(CandidateSpace { full, edge_prob })
    }

    pub fn uniform(full: Dag, p: f64) -> Result<Self> {
        let n = full.edge_count();
        Self::new(full, vec![p; n])
    }

    pub fn full_graph(&self) -> &Dag {
        &self.full
    }

    pub fn edge_probs(&self) -> &[f64] {
        &self.edge_prob
    }

    pub fn edge_count(&self) -> usize {
        self.full.edge_count()
    }

    pub fn nodes(&self) -> &[String] {
        self.full.nodes()
    }

    /// Parents node `j` may have in some candidate graph.
    pub fn allowed_parents(&self, j: usize) -> &[usize] {
        self.full.parents(j)
    }

    pub fn check_enumerable(&self, cap: usize) -> Result<()> {
        let edges = self.edge_count();
        if edges > cap || edges >= 64 {
            return Err(Error::EnumerationCap {
                edges,
                cap: cap.min(63),
            });
        }
        Ok(())
    }

    /// The candidate graph with exactly the edges in `set`.
    pub fn subgraph(&self, set: EdgeSet) -> Dag {
        let edges: Vec<Edge> = set.iter().map(|k| self.full.edges()[k]).collect();
        self.full
            .with_edges(edges)
            .expect("subgraph of a DAG is a DAG")
    }

    /// The edge set of `g` relative to the full graph.
    pub fn edge_set_of(&self, g: &Dag) -> Result<EdgeSet> {
        if g.nodes() != self.full.nodes() {
            return Err(Error::InvalidGraph(
                "graph nodes differ from the candidate space nodes".into(),
            ));
        }
        let mut bits = 0u64;
        for &e in g.edges() {
            let k = self.full.edge_index(e).ok_or_else(|| {
                Error::InvalidGraph(format!(
                    "edge {} -> {} is not a possible edge",
                    g.nodes()[e.0],
                    g.nodes()[e.1]
                ))
            })?;
            bits |= 1 << k;
        }
        Ok(EdgeSet(bits))
    }

    /// Every edge subset in binary-counting order: mask 0 (empty graph) first,
    /// bit `k` toggling with period `2^(k+1)`.
    pub fn edge_sets(&self) -> Result<impl Iterator<Item = EdgeSet>> {
        self.edge_sets_capped(ENUMERATION_CAP)
    }

    pub fn edge_sets_capped(&self, cap: usize) -> Result<impl Iterator<Item = EdgeSet>> {
        self.check_enumerable(cap)?;
        Ok((0..1u64 << self.edge_count()).map(EdgeSet))
    }

    pub fn log_prior_of_set(&self, set: EdgeSet) -> f64 {
        self.edge_prob
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                if set.contains(k) {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum()
    }

    pub fn prior_of_set(&self, set: EdgeSet) -> f64 {
        self.edge_prob
            .iter()
            .enumerate()
            .map(|(k, &p)| if set.contains(k) { p } else { 1.0 - p })
            .product()
    }

    /// Reads a graph-space document:
    /// `{"nodes": [...], "edges": [{"from": .., "to": .., "prob": ..}, ...]}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SpaceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpaceFile::from(self))?)
    }
}

/// Every candidate graph of `space`, in binary-counting order over the
/// canonical edge order. Refuses spaces with more than [`ENUMERATION_CAP`]
/// possible edges.
pub fn enumerate_candidates(space: &CandidateSpace) -> Result<impl Iterator<Item = Dag> + '_> {
    Ok(space.edge_sets()?.map(move |s| space.subgraph(s)))
}

/// Prior probability of candidate `g`: the product over possible edges of
/// `p_e` when present and `1 - p_e` when absent.
pub fn graph_prior(space: &CandidateSpace, g: &Dag) -> Result<f64> {
    Ok(space.prior_of_set(space.edge_set_of(g)?))
}

#[derive(Serialize, Deserialize)]
struct SpaceFile {
    nodes: Vec<String>,
    edges: Vec<SpaceEdge>,
}

#[derive(Serialize, Deserialize)]
struct SpaceEdge {
    from: String,
    to: String,
    prob: f64,
}

impl TryFrom<SpaceFile> for CandidateSpace {
    type Error = Error;

    fn try_from(file: SpaceFile) -> Result<Self> {
        let lookup = |name: &str| {
            file.nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownNode(name.to_string()))
        };
        let mut edges = Vec::with_capacity(file.edges.len());
        for e in &file.edges {
            edges.push(((lookup(&e.from)?, lookup(&e.to)?), e.prob));
        }
        let mut sorted = edges.clone();
        sorted.sort_by_key(|e| e.0);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidGraph(
                "duplicate edge in graph-space file".into(),
            ));
        }
        let full = Dag::new(file.nodes.clone(), sorted.iter().map(|e| e.0))?;
        CandidateSpace::new(full, sorted.iter().map(|e| e.1).collect())
    }
}

impl From<&CandidateSpace> for SpaceFile {
    fn from(space: &CandidateSpace) -> Self {
        let nodes = space.nodes().to_vec();
        let edges = space
            .full
            .edges()
            .iter()
            .zip(&space.edge_prob)
            .map(|(&(f, t), &prob)| SpaceEdge {
                from: nodes[f].clone(),
                to: nodes[t].clone(),
                prob,
            })
            .collect();
        SpaceFile { nodes, edges }
    }
}
