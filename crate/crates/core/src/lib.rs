//! Bayesian model averaging of causal effects in linear Gaussian structural
//! causal models, with a variational shrinkage alternative and baselines.

pub mod baselines;
pub mod dag;
pub mod data;
pub mod error;
pub mod experiments;
pub mod posterior;
pub mod scm;
pub mod space;
pub mod vb;

pub use baselines::{estimate_via_graph, ipw_ate, k2_search, logistic_l1_fit, K2Trace};
pub use dag::{total_effect, total_effect_closed, Dag, Edge};
pub use data::Dataset;
pub use error::{Error, Result};
pub use experiments::{
    emit_report, estimate_ate, estimate_mie, load_csv_dataset, run_benchmark, BenchmarkReport,
    Estimator, EstimatorSettings, ExperimentConfig,
};
pub use posterior::{
    bma_mie_mc, bma_mie_quasi, graph_posterior, log_marginal_graph, node_log_evidence,
    node_posterior, GraphPosterior, McEstimate, NodePosterior, PriorConfig,
};
pub use scm::{derive_seed, sample_model, simulate, LinearScm};
pub use space::{enumerate_candidates, graph_prior, CandidateSpace, EdgeSet, ENUMERATION_CAP};
pub use vb::{vb_fit_all, vb_fit_node, vb_mie, VbConfig, VbNodeState};
