//! Variational Bayes for the Gaussian-scale-mixture relaxation of the
//! spike-and-slab coefficient prior.
//!
//! Each node's incoming coefficients get a hierarchical prior
//! `θ_i | τ_i ~ N(0, τ_i)`, `τ_i | α_i ~ Exp`, `α_i ~ Gamma(κ, ν)`, and the
//! factorised posterior `q(θ) q(τ) q(α)` is fitted by coordinate ascent:
//!
//! * `q(θ) = N(θ̄, Σ̃)` with `Σ̃ = (s_ε XᵀX + diag(s̄))⁻¹`, `θ̄ = s_ε Σ̃ Xᵀx`;
//! * `q(τ_i) = GIG(ᾱ_i, θ̄_i² + Σ̃_ii, ½)`, giving `τ̄_i` and `s̄_i = ⟨τ_i⁻¹⟩`;
//! * `q(α_i) = Gamma(κ + 1, ν + τ̄_i / 2)`, giving `ᾱ_i`.
//!
//! Nodes are independent given the data, so each is fitted on its own.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::posterior::SuffStats;
use crate::space::CandidateSpace;

/// Mixing distribution of the local coefficient variances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingModel {
    /// Exponential mixing with a gamma hyperprior on its rate.
    #[default]
    ExponentialGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    pub kappa: f64,
    pub nu: f64,
    pub noise_precision: f64,
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute change of any
    /// variational parameter over one sweep.
    pub tol: f64,
    #[serde(default)]
    pub mixing: MixingModel,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig {
            kappa: 1e-6,
            nu: 1e-6,
            noise_precision: 1.0,
            max_iter: 500,
            tol: 1e-6,
            mixing: MixingModel::ExponentialGamma,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nu must be > 0, got {}",
                self.nu
            )));
        }
        if !(self.noise_precision > 0.0 && self.noise_precision.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise precision must be > 0, got {}",
                self.noise_precision
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbExpectations {
    /// `E[τ]` under `GIG(a, b, ½)`.
    pub gig_mean: f64,
    /// `E[τ⁻¹]` under `GIG(a, b, ½)`.
    pub gig_inv_mean: f64,
    /// Mean of `Gamma(κ + 1, ν + τ̄/2)`.
    pub gamma_mean: f64,
}

/// `(E[τ], E[τ⁻¹])` of `GIG(a, b, ½)`. At `ρ = ½` the Bessel ratios reduce
/// to `K_{3/2}(z)/K_{1/2}(z) = 1 + 1/z`, which gives the closed forms.
pub fn gig_half_moments(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "GIG parameters must be positive, got a={a}, b={b}"
        )));
    }
    Ok(((1.0 + (a * b).sqrt()) / a, (a / b).sqrt()))
}

/// Mean `(κ + 1)/(ν + τ̄/2)` of the gamma posterior of a mixing rate.
pub fn gamma_rate_mean(kappa: f64, nu: f64, tau_mean: f64) -> Result<f64> {
    let rate = nu + 0.5 * tau_mean;
    if !(rate > 0.0 && rate.is_finite()) || kappa < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma posterior needs kappa >= 0 and nu + tau/2 > 0, got kappa={kappa}, rate={rate}"
        )));
    }
    Ok((kappa + 1.0) / rate)
}

pub fn vb_expectations(
    a: f64,
    b: f64,
    kappa: f64,
    nu: f64,
    tau_mean: f64,
) -> Result<VbExpectations> {
    let (gig_mean, gig_inv_mean) = gig_half_moments(a, b)?;
    Ok(VbExpectations {
        gig_mean,
        gig_inv_mean,
        gamma_mean: gamma_rate_mean(kappa, nu, tau_mean)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VbNodeState {
    pub node: usize,
    pub parents: Vec<usize>,
    pub theta_mean: DVector<f64>,
    pub theta_cov: DMatrix<f64>,
    pub tau_mean: DVector<f64>,
    pub inv_tau_mean: DVector<f64>,
    pub alpha_mean: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl VbNodeState {
    /// Starting point: `s̄ = 1`, `τ̄ = 1`, `ᾱ = (κ + 1)/ν` (the prior mean of
    /// the rate), coefficients at zero.
    pub fn initial(node: usize, parents: &[usize], config: &VbConfig) -> Self {
        let k = parents.len();
        VbNodeState {
            node,
            parents: parents.to_vec(),
            theta_mean: DVector::zeros(k),
            theta_cov: DMatrix::zeros(k, k),
            tau_mean: DVector::from_element(k, 1.0),
            inv_tau_mean: DVector::from_element(k, 1.0),
            alpha_mean: DVector::from_element(k, (config.kappa + 1.0) / config.nu),
            iterations: 0,
            converged: k == 0,
        }
    }

    /// Largest absolute difference between any two corresponding parameters.
    pub fn max_change(&self, other: &VbNodeState) -> f64 {
        fn diff<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
            a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        }
        [
            diff(self.theta_mean.iter(), other.theta_mean.iter()),
            diff(self.theta_cov.iter(), other.theta_cov.iter()),
            diff(self.tau_mean.iter(), other.tau_mean.iter()),
            diff(self.inv_tau_mean.iter(), other.inv_tau_mean.iter()),
            diff(self.alpha_mean.iter(), other.alpha_mean.iter()),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn non_finite(what: &str, iteration: usize) -> Error {
    Error::NonFinite {
        what: what.to_string(),
        iteration,
    }
}

/// One coordinate-ascent sweep (θ, then τ/s̄, then α) on precomputed
/// sufficient statistics. `iteration` is only used for error reporting.
fn sweep_stats(
    stats: &SuffStats,
    state: &VbNodeState,
    config: &VbConfig,
    iteration: usize,
) -> Result<VbNodeState> {
    let s = config.noise_precision;
    let parents = &state.parents;
    let k = parents.len();
    let mut next = state.clone();
    if k == 0 {
        return Ok(next);
    }

    let mut precision = stats.block(parents, parents) * s;
    for i in 0..k {
        precision[(i, i)] += state.inv_tau_mean[i];
    }
    let chol = precision
        .cholesky()
        .ok_or_else(|| non_finite("coefficient precision factorisation", iteration))?;
    next.theta_cov = chol.inverse();
    next.theta_mean = chol.solve(&(stats.cross(parents, state.node) * s));
    if next.theta_mean.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("coefficient mean", iteration));
    }

    for i in 0..k {
        let second_moment = next.theta_mean[i].powi(2) + next.theta_cov[(i, i)];
        let (tau, inv_tau) = gig_half_moments(state.alpha_mean[i], second_moment)
            .map_err(|_| non_finite("local variance moments", iteration))?;
        let alpha = gamma_rate_mean(config.kappa, config.nu, tau)
            .map_err(|_| non_finite("mixing rate", iteration))?;
        if !(tau.is_finite() && inv_tau.is_finite() && alpha.is_finite()) {
            return Err(non_finite("local variance moments", iteration));
        }
        next.tau_mean[i] = tau;
        next.inv_tau_mean[i] = inv_tau;
        next.alpha_mean[i] = alpha;
    }
    Ok(next)
}

/// Applies one full sweep to `state`; returns the new state and the largest
/// parameter change.
pub fn vb_sweep(
    data: &Dataset,
    state: &VbNodeState,
    config: &VbConfig,
) -> Result<(VbNodeState, f64)> {
    config.validate()?;
    let stats = SuffStats::from_dataset(data);
    stats.check_node(state.node, &state.parents)?;
    let mut next = sweep_stats(&stats, state, config, state.iterations + 1)?;
    next.iterations = state.iterations + 1;
    let change = next.max_change(state);
    Ok((next, change))
}

pub(crate) fn fit_node_stats(
    stats: &SuffStats,
    node: usize,
    parents: &[usize],
    config: &VbConfig,
) -> Result<VbNodeState> {
    let mut state = VbNodeState::initial(node, parents, config);
    if parents.is_empty() {
        return Ok(state);
    }
    for iteration in 1..=config.max_iter {
        let mut next = sweep_stats(stats, &state, config, iteration)?;
        next.iterations = iteration;
        let change = next.max_change(&state);
        state = next;
        if change < config.tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Fits column `node` on candidate parent columns `allowed_parents` until
/// the largest parameter change drops below `tol` or `max_iter` sweeps.
pub fn vb_fit_node(
    data: &Dataset,
    node: usize,
    allowed_parents: &[usize],
    config: &VbConfig,
) -> Result<VbNodeState> {
    config.validate()?;
    let stats = SuffStats::from_dataset(data);
    stats.check_node(node, allowed_parents)?;
    fit_node_stats(&stats, node, allowed_parents, config)
}

/// Fits every node of `space` that has at least one possible parent. Keys are
/// node indices of the space; dataset columns are matched by name.
pub fn vb_fit_all(
    data: &Dataset,
    space: &CandidateSpace,
    config: &VbConfig,
) -> Result<BTreeMap<usize, VbNodeState>> {
    config.validate()?;
    let stats = SuffStats::new(data, space.nodes())?;
    (0..space.nodes().len())
        .filter(|&j| !space.allowed_parents(j).is_empty())
        .map(|j| {
            Ok((
                j,
                fit_node_stats(&stats, j, space.allowed_parents(j), config)?,
            ))
        })
        .collect()
}

/// Plug-in effect over the full graph with the variational posterior means.
pub fn vb_mie(
    states: &BTreeMap<usize, VbNodeState>,
    space: &CandidateSpace,
    x: &str,
    y: &str,
    x_value: f64,
) -> Result<f64> {
    let full = space.full_graph();
    let mut weights = Vec::with_capacity(full.edge_count());
    for &(from, to) in full.edges() {
        let state = states
            .get(&to)
            .ok_or_else(|| Error::MissingState(full.nodes()[to].clone()))?;
        let pos = state
            .parents
            .iter()
            .position(|&p| p == from)
            .ok_or_else(|| Error::MissingState(full.nodes()[to].clone()))?;
        weights.push(state.theta_mean[pos]);
    }
    Ok(crate::dag::total_effect(full, &weights, x, y)? * x_value)
}
