//! Comparison estimators: K2 greedy structure search, the single-graph
//! plug-in (including the full-graph model), and inverse probability
//! weighting with an ℓ1-penalised logistic propensity model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dag::{total_effect, Dag, Edge};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::posterior::{fit_node, PriorConfig, SuffStats};
use crate::space::CandidateSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K2Step {
    pub node: usize,
    pub edge: Edge,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct K2Trace {
    pub selected: Dag,
    /// Unnormalised log posterior of the current graph: the starting graph
    /// first, then one entry after each tried edge.
    pub score_history: Vec<f64>,
    pub steps: Vec<K2Step>,
}

/// Greedy K2 search over the candidate space. Edges with probability 1 start
/// in the graph and edges with probability 0 are never tried. Nodes are
/// visited in topological order of the full graph; each node's possible
/// incoming edges are tried once, in canonical order, and kept iff the
/// node's log evidence plus the edge's log prior odds strictly increases.
pub fn k2_search(space: &CandidateSpace, data: &Dataset, prior: &PriorConfig) -> Result<K2Trace> {
    prior.validate()?;
    let stats = SuffStats::new(data, space.nodes())?;
    let full = space.full_graph();
    let probs = space.edge_probs();
    let edge_prob = |e: Edge| probs[full.edge_index(e).expect("full-graph edge")];

    let m = full.node_count();
    let mut parents: Vec<Vec<usize>> = (0..m)
        .map(|j| {
            full.parents(j)
                .iter()
                .copied()
                .filter(|&i| edge_prob((i, j)) >= 1.0)
                .collect()
        })
        .collect();
    let mut node_score = (0..m)
        .map(|j| fit_node(&stats, j, &parents[j], prior).map(|f| f.log_evidence))
        .collect::<Result<Vec<f64>>>()?;
    let mut log_prior: f64 = full
        .edges()
        .iter()
        .zip(probs)
        .map(|(&(i, j), &p)| {
            if parents[j].contains(&i) {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();

    let mut score_history = vec![node_score.iter().sum::<f64>() + log_prior];
    let mut steps = Vec::new();

    for &j in full.topological_order() {
        for &i in full.parents(j) {
            let p = edge_prob((i, j));
            if p <= 0.0 || p >= 1.0 {
                continue;
            }
            let mut trial = parents[j].clone();
            trial.push(i);
            trial.sort_unstable();
            let score = fit_node(&stats, j, &trial, prior)?.log_evidence;
            let log_odds = p.ln() - (1.0 - p).ln();
            let accepted = score + log_odds > node_score[j];
            if accepted {
                parents[j] = trial;
                node_score[j] = score;
                log_prior += log_odds;
            }
            steps.push(K2Step {
                node: j,
                edge: (i, j),
                accepted,
            });
            score_history.push(node_score.iter().sum::<f64>() + log_prior);
        }
    }

    let edges = (0..m).flat_map(|j| parents[j].iter().map(move |&i| (i, j)));
    Ok(K2Trace {
        selected: full.with_edges(edges)?,
        score_history,
        steps,
    })
}

/// Posterior-mean coefficients of every edge of `g`, in canonical edge order.
pub fn posterior_mean_weights(g: &Dag, data: &Dataset, prior: &PriorConfig) -> Result<Vec<f64>> {
    prior.validate()?;
    let stats = SuffStats::new(data, g.nodes())?;
    let mut means = Vec::with_capacity(g.node_count());
    for j in 0..g.node_count() {
        means.push(fit_node(&stats, j, g.parents(j), prior)?.mean);
    }
    Ok(g.edges()
        .iter()
        .map(|&(i, j)| {
            let pos = g
                .parents(j)
                .binary_search(&i)
                .expect("parent of edge target");
            means[j][pos]
        })
        .collect())
}

/// Plug-in effect under a single graph with posterior-mean coefficients.
/// With the full graph of a space this is the full-model baseline.
pub fn estimate_via_graph(
    g: &Dag,
    data: &Dataset,
    prior: &PriorConfig,
    x: &str,
    y: &str,
    x_value: f64,
) -> Result<f64> {
    let weights = posterior_mean_weights(g, data, prior)?;
    Ok(total_effect(g, &weights, x, y)? * x_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub max_iter: usize,
    /// Stop once the norm of the proximal gradient map falls below this.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub penalty: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalised objective after every accepted step, starting point first.
    pub objective_history: Vec<f64>,
}

impl PropensityModel {
    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<f64> {
        let beta = DVector::from_column_slice(&self.coefficients);
        (features * beta)
            .iter()
            .map(|eta| sigmoid(eta + self.intercept))
            .collect()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

struct Logistic<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    lambda: f64,
}

impl Logistic<'_> {
    fn linear(&self, w: &DVector<f64>) -> DVector<f64> {
        let k = self.x.ncols();
        self.x * w.rows(1, k) + DVector::from_element(self.x.nrows(), w[0])
    }

    fn smooth(&self, w: &DVector<f64>) -> f64 {
        let eta = self.linear(w);
        let n = self.y.len() as f64;
        eta.iter()
            .zip(self.y)
            .map(|(&e, &y)| softplus(e) - y * e)
            .sum::<f64>()
            / n
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let eta = self.linear(w);
        let n = self.y.len() as f64;
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.y).map(|(&e, &y)| (sigmoid(e) - y) / n),
        );
        let mut g = DVector::zeros(w.len());
        g[0] = resid.sum();
        g.rows_mut(1, self.x.ncols())
            .copy_from(&self.x.tr_mul(&resid));
        g
    }

    fn penalty(&self, w: &DVector<f64>) -> f64 {
        self.lambda * w.iter().skip(1).map(|v| v.abs()).sum::<f64>()
    }

    /// Gradient step followed by soft-thresholding of the non-intercept terms.
    fn prox_step(&self, w: &DVector<f64>, g: &DVector<f64>, step: f64) -> DVector<f64> {
        let mut z = w - g * step;
        let thresh = self.lambda * step;
        for v in z.iter_mut().skip(1) {
            *v = v.signum() * (v.abs() - thresh).max(0.0);
        }
        z
    }
}

/// Minimises mean logistic loss plus `λ Σ|β_k|` (intercept unpenalised) by
/// proximal gradient descent with backtracking. Labels must be 0 or 1 and
/// both classes must be present.
pub fn logistic_l1_fit(
    features: &DMatrix<f64>,
    labels: &[f64],
    lambda: f64,
    config: &LogisticConfig,
) -> Result<PropensityModel> {
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(Error::DegenerateInput(format!("label {bad} is not 0 or 1")));
    }
    let positives = labels.iter().filter(|&&l| l == 1.0).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateInput(
            "labels contain a single class".into(),
        ));
    }

    let problem = Logistic {
        x: features,
        y: labels,
        lambda,
    };
    let mut w = DVector::zeros(features.ncols() + 1);
    let mut f = problem.smooth(&w);
    let mut objective = f + problem.penalty(&w);
    let mut history = vec![objective];
    let mut lipschitz = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    'outer: for _ in 0..config.max_iter {
        iterations += 1;
        let g = problem.gradient(&w);
        loop {
            let z = problem.prox_step(&w, &g, 1.0 / lipschitz);
            let d = &z - &w;
            let fz = problem.smooth(&z);
            let bound = f + g.dot(&d) + 0.5 * lipschitz * d.norm_squared();
            let obj_z = fz + problem.penalty(&z);
            if fz <= bound && obj_z <= objective {
                let map_norm = lipschitz * d.norm();
                w = z;
                f = fz;
                objective = obj_z;
                history.push(objective);
                if map_norm < config.tol {
                    converged = true;
                    break 'outer;
                }
                lipschitz = (lipschitz * 0.5).max(1e-8);
                break;
            }
            lipschitz *= 2.0;
            if lipschitz > 1e16 {
                // No representable decrease left: w is optimal to precision.
                converged = true;
                break 'outer;
            }
        }
    }

    Ok(PropensityModel {
        intercept: w[0],
        coefficients: w.iter().skip(1).copied().collect(),
        penalty: lambda,
        iterations,
        converged,
        objective_history: history,
    })
}

/// Columns scaled to zero mean and unit variance; constant columns are only
/// centred.
pub(crate) fn standardize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / col.len() as f64).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    out
}

pub const PROPENSITY_CLIP: f64 = 0.01;

/// Horvitz–Thompson IPW estimate of the average treatment effect of a binary
/// `treatment` on `outcome`. Propensities come from an ℓ1-penalised logistic
/// fit on the standardised covariates (`lambda` defaults to `1/√N`) and are
/// clipped to `[0.01, 0.99]`.
pub fn ipw_ate<S: AsRef<str>>(
    data: &Dataset,
    treatment: &str,
    outcome: &str,
    covariates: &[S],
    lambda: Option<f64>,
) -> Result<f64> {
    let t: Vec<f64> = data.column(treatment)?.iter().copied().collect();
    let y = data.column(outcome)?;
    let n = t.len() as f64;
    let features = if covariates.is_empty() {
        DMatrix::zeros(t.len(), 0)
    } else {
        standardize(data.select(covariates)?.values())
    };
    let lambda = lambda.unwrap_or(1.0 / n.sqrt());
    let model = logistic_l1_fit(&features, &t, lambda, &LogisticConfig::default())?;
    let propensity = model.predict(&features);

    let total: f64 = t
        .iter()
        .zip(y.iter())
        .zip(&propensity)
        .map(|((&ti, &yi), &e)| {
            let e = e.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP);
            ti * yi / e - (1.0 - ti) * yi / (1.0 - e)
        })
        .sum();
    Ok(total / n)
}
