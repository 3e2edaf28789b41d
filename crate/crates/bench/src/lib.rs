//! Fixtures shared by the criterion benchmarks.

use causal_bma::experiments::build_wz_space;
use causal_bma::{sample_model, simulate, CandidateSpace, Dataset};

/// Benchmark-family space with one dataset drawn from its prior.
pub fn wz_problem(n1: usize, n2: usize, p: f64, n: usize, seed: u64) -> (CandidateSpace, Dataset) {
    let space = build_wz_space(n1, n2, p, true).expect("valid benchmark space");
    let scm = sample_model(&space, 1.0, 1.0, seed).expect("valid prior");
    let data = simulate(&scm, n, seed.wrapping_add(1)).expect("positive sample size");
    (space, data)
}
