use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpvb::dpmech::privatize;
use dpvb::estimators::{
    bayes_estimate, naive_estimate_with, rounded_marginals, squared_error, vb_estimate, Estimator, NaiveMode,
};
use dpvb::expharness::{
    emit_plot_data, outer_rep_means, read_records_file, run_experiment_parallel, summarize, write_outer_means_csv,
    write_records_file, write_summary_csv, ConfigFile, ExperimentConfig, LevelsSpec,
};
use dpvb::io::{read_json, write_json, DatasetDoc, NoisyDoc, PosteriorDoc};
use dpvb::nbmodel::{sample_counts, sample_model_params, ModelShape, PriorSpec, TrueMarginals};
use dpvb::statdist::RngStream;
use dpvb::vbengine::{FitConfig, InitMode};
use dpvb::{Error, Result};

#[derive(Parser)]
#[command(name = "dpvb", version, about = "Bayesian inference for naive Bayes from Laplace-noised marginals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw true parameters and counts.
    Simulate(SimulateArgs),
    /// Release Laplace-noised copies of every class-by-feature table.
    Privatize(PrivatizeArgs),
    /// Estimate parameters from a noisy release (or, for bayes, true counts).
    Fit(FitArgs),
    /// Run the simulation study and write one CSV row per estimate.
    Experiment(ExperimentArgs),
    /// Box statistics per (N, ε, estimator) from an experiment CSV.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    features: usize,
    #[arg(long)]
    levels: usize,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Dirichlet concentration for the true parameters.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Args)]
struct PrivatizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Budget per released table.
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    method: Estimator,
    /// Noisy release; for bayes, either a dataset or a noisy release whose
    /// counts are rounded.
    #[arg(long = "in")]
    input: PathBuf,
    /// Dataset with true parameters, to report squared error.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = FitConfig::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = FitConfig::default().max_iter)]
    max_iter: usize,
    #[arg(long, default_value = "from-naive")]
    init: InitMode,
    #[arg(long, default_value_t = 1.0)]
    prior_alpha: f64,
    #[arg(long, default_value = "frequency")]
    naive_mode: NaiveMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file of flat keys; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    epsilon_grid: Option<Vec<f64>>,
    #[arg(long)]
    outer_reps: Option<usize>,
    #[arg(long)]
    inner_reps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    init: Option<InitMode>,
    #[arg(long)]
    naive_mode: Option<NaiveMode>,
    #[arg(long)]
    prior_alpha: Option<f64>,
    #[arg(long)]
    generator_alpha: Option<f64>,
    #[arg(long)]
    resample_params: Option<bool>,
    #[arg(long)]
    record_timing: Option<bool>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Box-plot table; an SVG is written beside it.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Per-outer-replicate means.
    #[arg(long)]
    outer_means: Option<PathBuf>,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let shape = ModelShape::uniform(a.classes, a.features, a.levels, a.n)?;
    let prior = PriorSpec::symmetric(&shape, a.alpha)?;
    let mut rng = RngStream::new(a.seed, 0);
    let params = sample_model_params(&shape, &prior, &mut rng)?;
    let truth = sample_counts(&params, &shape, &mut rng)?;
    write_json(&a.out, &DatasetDoc::new(&truth, Some(&params)))
}

fn privatize_cmd(a: PrivatizeArgs) -> Result<()> {
    let doc: DatasetDoc = read_json(&a.input)?;
    let truth = doc.to_marginals()?;
    let noisy = privatize(&truth, a.epsilon, &mut RngStream::new(a.seed, 0))?;
    write_json(&a.out, &NoisyDoc::from(&noisy))
}

fn bayes_input(path: &Path) -> Result<TrueMarginals> {
    match read_json::<DatasetDoc>(path) {
        Ok(doc) => doc.to_marginals(),
        Err(Error::Parse(_)) => rounded_marginals(&read_json::<NoisyDoc>(path)?.to_marginals()?),
        Err(e) => Err(e),
    }
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let cfg = FitConfig {
        tol: a.tol,
        max_iter: a.max_iter,
        init_mode: a.init,
        ..FitConfig::default()
    };
    cfg.validate()?;
    let mut doc = match a.method {
        Estimator::Bayes => {
            let truth = bayes_input(&a.input)?;
            let prior = PriorSpec::symmetric(&truth.shape, a.prior_alpha)?;
            PosteriorDoc::new(&bayes_estimate(&truth, &prior)?)
        }
        method => {
            let noisy = read_json::<NoisyDoc>(&a.input)?.to_marginals()?;
            let prior = PriorSpec::symmetric(noisy.shape(), a.prior_alpha)?;
            if method == Estimator::Vb {
                let (est, fitted) = vb_estimate(&noisy, &prior, &cfg)?;
                PosteriorDoc::new(&est).with_fit(&fitted, &cfg)
            } else {
                PosteriorDoc::new(&naive_estimate_with(&noisy, a.naive_mode, &prior)?)
            }
        }
    };
    if let Some(path) = &a.truth {
        let truth: DatasetDoc = read_json(path)?;
        let params = truth
            .params
            .ok_or_else(|| Error::Usage(format!("{} has no true parameters", path.display())))?;
        doc.squared_error = Some(squared_error(&doc.point, &params)?);
    }
    write_json(&a.out, &doc)
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let file = match &a.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        classes: a.classes,
        features: a.features,
        levels: a.levels.map(LevelsSpec::Same),
        n_grid: a.n_grid,
        epsilon_grid: a.epsilon_grid,
        outer_reps: a.outer_reps,
        inner_reps: a.inner_reps,
        seed: a.seed,
        generator_alpha: a.generator_alpha,
        prior_alpha: a.prior_alpha,
        tol: a.tol,
        max_iter: a.max_iter,
        init: a.init,
        naive_mode: a.naive_mode,
        resample_params: a.resample_params,
        record_timing: a.record_timing,
        ..ConfigFile::default()
    };
    let mut merged = file.merge(flags);
    // `--features 3` on top of a file listing levels per feature keeps their first value.
    if a.features.is_some() && a.levels.is_none() {
        if let Some(LevelsSpec::Each(v)) = &merged.levels {
            merged.levels = v.first().copied().map(LevelsSpec::Same);
        }
    }
    let cfg = merged.apply(&ExperimentConfig::default())?;
    let records = run_experiment_parallel(&cfg, a.jobs.max(1))?;
    write_records_file(&records, &a.out_csv)
}

fn summarize_cmd(a: SummarizeArgs) -> Result<()> {
    let records = read_records_file(&a.input)?;
    let rows = summarize(&records)?;
    write_summary_csv(&rows, std::fs::File::create(&a.out)?)?;
    if let Some(path) = &a.plot {
        emit_plot_data(&rows, path)?;
    }
    if let Some(path) = &a.outer_means {
        write_outer_means_csv(&outer_rep_means(&records)?, std::fs::File::create(path)?)?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::Numeric(_) => 4,
        Error::Domain(_) | Error::Config(_) | Error::Usage(_) | Error::Parse(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Privatize(a) => privatize_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Summarize(a) => summarize_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpvb: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
