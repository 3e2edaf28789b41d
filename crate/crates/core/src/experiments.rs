//! Synthetic benchmarks, dataset ingestion and effect estimation entry points.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{estimate_via_graph, ipw_ate, k2_search};
use crate::dag::Dag;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::posterior::{bma_mie_mc, bma_mie_quasi, PriorConfig};
use crate::scm::{derive_seed, sample_model, simulate, LinearScm};
use crate::space::{CandidateSpace, ENUMERATION_CAP};
use crate::vb::{vb_fit_all, vb_mie, VbConfig};

pub const TREATMENT: &str = "X";
pub const OUTCOME: &str = "Y";

/// Effect estimators. The declaration order is the alphabetical order of
/// their names, which is also the report row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Full,
    Ipw,
    K2,
    Mc,
    Quasi,
    Vb,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Full,
        Estimator::Ipw,
        Estimator::K2,
        Estimator::Mc,
        Estimator::Quasi,
        Estimator::Vb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Full => "full",
            Estimator::Ipw => "ipw",
            Estimator::K2 => "k2",
            Estimator::Mc => "mc",
            Estimator::Quasi => "quasi",
            Estimator::Vb => "vb",
        }
    }

    /// Needs all `2^|E_full|` candidates.
    pub fn enumerates(self) -> bool {
        matches!(self, Estimator::Quasi | Estimator::Mc)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator `{s}`")))
    }
}

/// Knobs shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub prior: PriorConfig,
    pub vb: VbConfig,
    /// Posterior draws per candidate graph for `mc`.
    pub mc_samples: usize,
    pub mc_seed: u64,
    /// ℓ1 penalty of the IPW propensity model; `None` means `1/√N`.
    pub lambda: Option<f64>,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            prior: PriorConfig::default(),
            vb: VbConfig::default(),
            mc_samples: 1000,
            mc_seed: 0,
            lambda: None,
        }
    }
}

/// Estimate of the mean intervention effect of `x` on `y` at `do(x = x_value)`.
/// `ipw` treats the possible parents of `x` as the adjustment covariates and
/// scales the binary-treatment contrast by `x_value`.
pub fn estimate_mie(
    method: Estimator,
    space: &CandidateSpace,
    data: &Dataset,
    x: &str,
    y: &str,
    x_value: f64,
    settings: &EstimatorSettings,
) -> Result<f64> {
    match method {
        Estimator::Quasi => bma_mie_quasi(space, data, &settings.prior, x, y, x_value),
        Estimator::Mc => bma_mie_mc(
            space,
            data,
            &settings.prior,
            x,
            y,
            x_value,
            settings.mc_samples,
            settings.mc_seed,
        )
        .map(|e| e.estimate),
        Estimator::Vb => {
            let states = vb_fit_all(data, space, &settings.vb)?;
            vb_mie(&states, space, x, y, x_value)
        }
        Estimator::K2 => {
            let trace = k2_search(space, data, &settings.prior)?;
            estimate_via_graph(&trace.selected, data, &settings.prior, x, y, x_value)
        }
        Estimator::Full => {
            estimate_via_graph(space.full_graph(), data, &settings.prior, x, y, x_value)
        }
        Estimator::Ipw => {
            let full = space.full_graph();
            let xi = full.index_of(x)?;
            let covariates: Vec<&str> = full
                .parents(xi)
                .iter()
                .map(|&i| full.nodes()[i].as_str())
                .collect();
            Ok(ipw_ate(data, x, y, &covariates, settings.lambda)? * x_value)
        }
    }
}

/// Covariate/treatment/mediator/outcome benchmark space: nodes
/// `W1..Wn1, X, Z1..Zn2, Y` with possible edges `Wi→X`, `Wi→Y`, `X→Zj`,
/// `Zj→Y`, `Wi→Zj`, and `X→Y` when `include_direct_xy`; all with
/// probability `p`.
pub fn build_wz_space(
    n1: usize,
    n2: usize,
    p: f64,
    include_direct_xy: bool,
) -> Result<CandidateSpace> {
    let mut nodes: Vec<String> = (1..=n1).map(|i| format!("W{i}")).collect();
    let x = nodes.len();
    nodes.push(TREATMENT.to_string());
    nodes.extend((1..=n2).map(|j| format!("Z{j}")));
    let y = nodes.len();
    nodes.push(OUTCOME.to_string());
    let z = |j: usize| x + 1 + j;

    let mut edges = Vec::new();
    for w in 0..n1 {
        edges.push((w, x));
        edges.push((w, y));
        edges.extend((0..n2).map(|j| (w, z(j))));
    }
    for j in 0..n2 {
        edges.push((x, z(j)));
        edges.push((z(j), y));
    }
    if include_direct_xy {
        edges.push((x, y));
    }
    CandidateSpace::uniform(Dag::new(nodes, edges)?, p)
}

/// Possible-common-cause space for treatment-effect estimation: every
/// covariate may affect both treatment and outcome, and the treatment may
/// affect the outcome.
pub fn build_ate_space<S: AsRef<str>>(
    covariates: &[S],
    treatment: &str,
    outcome: &str,
    p: f64,
) -> Result<CandidateSpace> {
    let mut nodes: Vec<String> = covariates.iter().map(|c| c.as_ref().to_string()).collect();
    let t = nodes.len();
    nodes.push(treatment.to_string());
    nodes.push(outcome.to_string());
    let o = t + 1;
    let mut edges: Vec<(usize, usize)> = (0..t).flat_map(|w| [(w, t), (w, o)]).collect();
    edges.push((t, o));
    CandidateSpace::uniform(Dag::new(nodes, edges)?, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n1: usize,
    pub n2: usize,
    pub edge_prob: f64,
    #[serde(default = "default_true")]
    pub include_direct_xy: bool,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub vb: VbConfig,
    #[serde(default = "default_x_value")]
    pub x_value: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn default_true() -> bool {
    true
}

fn default_x_value() -> f64 {
    1.0
}

fn default_mc_samples() -> usize {
    1000
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n1: 2,
            n2: 2,
            edge_prob: 0.5,
            include_direct_xy: true,
            sample_sizes: vec![25, 50, 100, 200],
            trials: 1000,
            master_seed: 0,
            estimators: vec![
                Estimator::Quasi,
                Estimator::Vb,
                Estimator::K2,
                Estimator::Full,
            ],
            prior: PriorConfig::default(),
            vb: VbConfig::default(),
            x_value: 1.0,
            mc_samples: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidParameter(format!(
                "sample size {n} is below 2"
            )));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(Error::InvalidParameter(format!(
                "edge probability {} outside [0, 1]",
                self.edge_prob
            )));
        }
        self.prior.validate()?;
        self.vb.validate()
    }

    pub fn space(&self) -> Result<CandidateSpace> {
        build_wz_space(self.n1, self.n2, self.edge_prob, self.include_direct_xy)
    }

    fn estimators_sorted(&self) -> Vec<Estimator> {
        let mut e = self.estimators.clone();
        e.sort();
        e.dedup();
        e
    }

    fn sizes_sorted(&self) -> Vec<usize> {
        let mut s = self.sample_sizes.clone();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Outcome of one estimator on one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub estimator: Estimator,
    pub n: usize,
    pub truth: f64,
    pub estimate: std::result::Result<f64, String>,
}

impl TrialRecord {
    pub fn squared_error(&self) -> Option<f64> {
        self.estimate
            .as_ref()
            .ok()
            .map(|e| (e - self.truth).powi(2))
    }
}

/// Seed of trial `t`; the only input every random draw of the trial derives from.
pub fn trial_seed(master_seed: u64, t: usize) -> u64 {
    master_seed.wrapping_add(t as u64)
}

const MODEL_STREAM: u64 = 0;
const DATA_STREAM: u64 = 1 << 32;
const MC_STREAM: u64 = 2 << 32;

/// The true model of trial `t`, drawn from the prior over the benchmark space.
pub fn trial_model(
    config: &ExperimentConfig,
    space: &CandidateSpace,
    t: usize,
) -> Result<LinearScm> {
    let seed = derive_seed(trial_seed(config.master_seed, t), MODEL_STREAM);
    sample_model(
        space,
        config.prior.coeff_var,
        config.prior.noise_precision,
        seed,
    )
}

/// Runs every configured estimator at every sample size for trial `t`.
pub fn run_trial(
    config: &ExperimentConfig,
    space: &CandidateSpace,
    t: usize,
) -> Result<Vec<TrialRecord>> {
    let seed = trial_seed(config.master_seed, t);
    let scm = trial_model(config, space, t)?;
    let truth = scm.total_effect(TREATMENT, OUTCOME)? * config.x_value;
    let mut records = Vec::new();
    for n in config.sizes_sorted() {
        let data = simulate(&scm, n, derive_seed(seed, DATA_STREAM + n as u64))?;
        let settings = EstimatorSettings {
            prior: config.prior,
            vb: VbConfig {
                noise_precision: config.prior.noise_precision,
                ..config.vb
            },
            mc_samples: config.mc_samples,
            mc_seed: derive_seed(seed, MC_STREAM + n as u64),
            lambda: None,
        };
        for estimator in config.estimators_sorted() {
            let estimate = estimate_mie(
                estimator,
                space,
                &data,
                TREATMENT,
                OUTCOME,
                config.x_value,
                &settings,
            )
            .map_err(|e| e.to_string());
            records.push(TrialRecord {
                estimator,
                n,
                truth,
                estimate,
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimator: String,
    pub n: usize,
    pub mse: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    /// Failed trials per estimator; excluded from that estimator's rows.
    pub failures: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct Provenance<'a> {
    master_seed: u64,
    failures: &'a BTreeMap<String, usize>,
    config: &'a ExperimentConfig,
}

pub const REPORT_HEADER: &str = "estimator,N,mse,stderr,trials";

impl BenchmarkReport {
    pub fn row(&self, estimator: Estimator, n: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator.name() && r.n == n)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let provenance = Provenance {
            master_seed: self.config.master_seed,
            failures: &self.failures,
            config: &self.config,
        };
        let mut out = format!(
            "# {}\n{REPORT_HEADER}\n",
            serde_json::to_string(&provenance)?
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.estimator, r.n, r.mse, r.stderr, r.trials
            ));
        }
        Ok(out)
    }

    /// Parses the rows of a report written by [`emit_report`].
    pub fn parse_rows(text: &str) -> Result<Vec<ReportRow>> {
        let body: String = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != REPORT_HEADER {
            return Err(Error::Malformed(format!(
                "unexpected report header {header:?}"
            )));
        }
        rdr.records()
            .map(|rec| {
                let rec = rec?;
                let field = |i: usize| rec.get(i).unwrap_or_default();
                let num = |i: usize| -> Result<f64> {
                    field(i)
                        .parse()
                        .map_err(|_| Error::Malformed(format!("bad number `{}`", field(i))))
                };
                let int = |i: usize| -> Result<usize> {
                    field(i)
                        .parse()
                        .map_err(|_| Error::Malformed(format!("bad count `{}`", field(i))))
                };
                Ok(ReportRow {
                    estimator: field(0).to_string(),
                    n: int(1)?,
                    mse: num(2)?,
                    stderr: num(3)?,
                    trials: int(4)?,
                })
            })
            .collect()
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Aggregates per-trial records into one row per (estimator, N).
pub fn aggregate(config: &ExperimentConfig, trials: &[Vec<TrialRecord>]) -> BenchmarkReport {
    let mut rows = Vec::new();
    let mut failures = BTreeMap::new();
    for estimator in config.estimators_sorted() {
        let failed_trials = trials
            .iter()
            .filter(|records| {
                records
                    .iter()
                    .any(|r| r.estimator == estimator && r.estimate.is_err())
            })
            .count();
        failures.insert(estimator.name().to_string(), failed_trials);
        for n in config.sizes_sorted() {
            let errors: Vec<f64> = trials
                .iter()
                .flatten()
                .filter(|r| r.estimator == estimator && r.n == n)
                .filter_map(TrialRecord::squared_error)
                .collect();
            let (mse, stderr) = mean_and_stderr(&errors);
            rows.push(ReportRow {
                estimator: estimator.name().to_string(),
                n,
                mse,
                stderr,
                trials: errors.len(),
            });
        }
    }
    BenchmarkReport {
        config: config.clone(),
        rows,
        failures,
    }
}

/// Runs every trial (in parallel; the result does not depend on scheduling)
/// and aggregates squared errors against the true path-sum effect.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let space = config.space()?;
    if config.estimators.iter().any(|e| e.enumerates()) {
        space.check_enumerable(ENUMERATION_CAP)?;
    }
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, &space, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(config, &trials))
}

/// Writes the report as CSV: one `#` comment line with the configuration and
/// master seed, the fixed header, then rows ordered by estimator name and N.
pub fn emit_report(report: &BenchmarkReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(report.to_csv_string()?.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Centering {
    #[default]
    None,
    All,
    Columns(Vec<String>),
}

/// Which columns to load, in which order, and which to centre.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnSpec {
    /// `None` keeps every column in file order.
    pub columns: Option<Vec<String>>,
    pub center: Centering,
}

pub fn load_csv_dataset(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<Dataset> {
    let full = Dataset::read_csv(File::open(path)?)?;
    let mut data = match &spec.columns {
        Some(cols) => full.select(cols)?,
        None => full,
    };
    match &spec.center {
        Centering::None => {}
        Centering::All => data.center_all(),
        Centering::Columns(cols) => data.center_columns(cols)?,
    }
    Ok(data)
}

/// Average treatment effect `ȳ₁ − ȳ₀` of `treatment` on `outcome`. SCM
/// methods use the possible-common-cause space over `covariates` with edge
/// probability `edge_prob`; `ipw` uses the covariates as propensity inputs.
pub fn estimate_ate<S: AsRef<str>>(
    data: &Dataset,
    treatment: &str,
    outcome: &str,
    covariates: &[S],
    method: Estimator,
    edge_prob: f64,
    settings: &EstimatorSettings,
) -> Result<f64> {
    if method == Estimator::Mc {
        return Err(Error::InvalidParameter(
            "mc is not an average-treatment-effect method; use quasi".into(),
        ));
    }
    if method == Estimator::Ipw {
        return ipw_ate(data, treatment, outcome, covariates, settings.lambda);
    }
    let space = build_ate_space(covariates, treatment, outcome, edge_prob)?;
    estimate_mie(method, &space, data, treatment, outcome, 1.0, settings)
}
