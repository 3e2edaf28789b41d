use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use causal_bma::experiments::{Centering, ColumnSpec};
use causal_bma::{
    derive_seed, emit_report, estimate_ate, estimate_mie, load_csv_dataset, run_benchmark,
    sample_model, simulate, CandidateSpace, Estimator, EstimatorSettings, ExperimentConfig,
    PriorConfig, VbConfig,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "causal-bma",
    version,
    about = "Bayesian model averaging of causal effects in linear Gaussian models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a model from a graph space and simulate a dataset from it.
    Gen(GenArgs),
    /// Run the synthetic benchmark and write a report CSV.
    Bench(BenchArgs),
    /// Estimate the mean intervention effect of one variable on another.
    Estimate(EstimateArgs),
    /// Estimate the average treatment effect of a binary treatment.
    Ate(AteArgs),
}

#[derive(Args)]
struct PriorArgs {
    /// Prior variance of each coefficient.
    #[arg(long)]
    coeff_var: Option<f64>,
    /// Precision of the Gaussian noise.
    #[arg(long)]
    noise_precision: Option<f64>,
}

impl PriorArgs {
    fn apply(&self, mut prior: PriorConfig) -> PriorConfig {
        if let Some(v) = self.coeff_var {
            prior.coeff_var = v;
        }
        if let Some(s) = self.noise_precision {
            prior.noise_precision = s;
        }
        prior
    }
}

#[derive(Args)]
struct VbArgs {
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

impl VbArgs {
    fn apply(&self, mut vb: VbConfig) -> VbConfig {
        if let Some(v) = self.kappa {
            vb.kappa = v;
        }
        if let Some(v) = self.nu {
            vb.nu = v;
        }
        if let Some(v) = self.max_iter {
            vb.max_iter = v;
        }
        if let Some(v) = self.tol {
            vb.tol = v;
        }
        vb
    }
}

#[derive(Args)]
struct GenArgs {
    /// Graph-space JSON file.
    #[arg(long)]
    space: PathBuf,
    /// Number of rows.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    prior: PriorArgs,
    /// Dataset CSV destination; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the drawn model as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    edge_prob: Option<f64>,
    /// Leave out the direct X→Y edge.
    #[arg(long)]
    no_direct_xy: bool,
    #[arg(long, value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of quasi, mc, vb, k2, full, ipw.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long)]
    x_value: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    vb: VbArgs,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Subtract each column's mean before fitting (the treatment column is
    /// left as is for ipw).
    #[arg(long)]
    center: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Graph-space JSON file.
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long, default_value_t = 1.0)]
    x_value: f64,
    #[arg(long, default_value_t = 1000)]
    mc_samples: usize,
    /// Seed for the mc method.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ℓ1 penalty for ipw; defaults to 1/√N.
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    vb: VbArgs,
}

#[derive(Args)]
struct AteArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    treatment: String,
    #[arg(long)]
    outcome: String,
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    #[arg(long)]
    method: String,
    /// Edge probability of the covariate graph space.
    #[arg(long, default_value_t = 0.5)]
    edge_prob: f64,
    /// ℓ1 penalty for ipw; defaults to 1/√N.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    vb: VbArgs,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_space(path: &PathBuf) -> Result<CandidateSpace> {
    CandidateSpace::load(path).with_context(|| format!("reading graph space {}", path.display()))
}

fn settings(
    prior: &PriorArgs,
    vb: &VbArgs,
    mc_samples: usize,
    seed: u64,
    lambda: Option<f64>,
) -> EstimatorSettings {
    let prior = prior.apply(PriorConfig::default());
    EstimatorSettings {
        prior,
        vb: vb.apply(VbConfig {
            noise_precision: prior.noise_precision,
            ..VbConfig::default()
        }),
        mc_samples,
        mc_seed: seed,
        lambda,
    }
}

fn load_data(
    args: &DataArgs,
    columns: Option<Vec<String>>,
    keep_uncentered: Option<&str>,
) -> Result<causal_bma::Dataset> {
    let center = match (args.center, keep_uncentered, &columns) {
        (false, _, _) => Centering::None,
        (true, Some(keep), Some(cols)) => {
            Centering::Columns(cols.iter().filter(|c| *c != keep).cloned().collect())
        }
        (true, _, _) => Centering::All,
    };
    let spec = ColumnSpec { columns, center };
    load_csv_dataset(&args.data, &spec).with_context(|| format!("reading {}", args.data.display()))
}

fn gen(args: GenArgs) -> Result<()> {
    let space = load_space(&args.space)?;
    let prior = args.prior.apply(PriorConfig::default());
    prior.validate()?;
    let scm = sample_model(
        &space,
        prior.coeff_var,
        prior.noise_precision,
        derive_seed(args.seed, 0),
    )?;
    let data = simulate(&scm, args.n, derive_seed(args.seed, 1))?;
    if let Some(path) = &args.model_out {
        let json = serde_json::to_string_pretty(&scm)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    let mut out = output(args.out.as_ref())?;
    data.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    config.master_seed = args.seed;
    if let Some(v) = args.n1 {
        config.n1 = v;
    }
    if let Some(v) = args.n2 {
        config.n2 = v;
    }
    if let Some(v) = args.edge_prob {
        config.edge_prob = v;
    }
    if args.no_direct_xy {
        config.include_direct_xy = false;
    }
    if let Some(v) = args.sample_sizes {
        config.sample_sizes = v;
    }
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.estimators {
        config.estimators = v
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse())
            .collect::<causal_bma::Result<_>>()?;
    }
    if let Some(v) = args.x_value {
        config.x_value = v;
    }
    if let Some(v) = args.mc_samples {
        config.mc_samples = v;
    }
    config.prior = args.prior.apply(config.prior);
    config.vb = args.vb.apply(config.vb);
    let report = run_benchmark(&config)?;
    emit_report(&report, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let method: Estimator = args.method.parse()?;
    let space = load_space(&args.space)?;
    let data = load_data(&args.data, Some(space.nodes().to_vec()), None)?;
    let settings = settings(
        &args.prior,
        &args.vb,
        args.mc_samples,
        args.seed,
        args.lambda,
    );
    let value = estimate_mie(
        method,
        &space,
        &data,
        &args.x,
        &args.y,
        args.x_value,
        &settings,
    )?;
    println!("{value}");
    Ok(())
}

fn ate(args: AteArgs) -> Result<()> {
    let method: Estimator = args.method.parse()?;
    let mut columns = args.covariates.clone();
    columns.push(args.treatment.clone());
    columns.push(args.outcome.clone());
    // IPW needs the treatment to stay binary.
    let keep = (method == Estimator::Ipw).then_some(args.treatment.as_str());
    let data = load_data(&args.data, Some(columns), keep)?;
    let settings = settings(
        &args.prior,
        &args.vb,
        args.mc_samples,
        args.seed,
        args.lambda,
    );
    let value = estimate_ate(
        &data,
        &args.treatment,
        &args.outcome,
        &args.covariates,
        method,
        args.edge_prob,
        &settings,
    )?;
    println!("{value}");
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => gen(a),
        Command::Bench(a) => bench(a),
        Command::Estimate(a) => estimate(a),
        Command::Ate(a) => ate(a),
    }
}
