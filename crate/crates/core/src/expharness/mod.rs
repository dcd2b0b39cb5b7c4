//! The simulation study: generate → privatize → estimate → score, over a
//! grid of privacy budgets and sample sizes.
//!
//! Random streams are keyed by what they generate rather than by loop
//! position:
//!
//! * true parameters: `(outer_rep)`, or one shared stream when
//!   `resample_params` is off;
//! * true counts: `(N, outer_rep)`;
//! * noise: `(ε, N, outer_rep, inner_rep)`.
//!
//! So reordering or subsetting the grids never changes a cell's records,
//! and the non-private `bayes` rows are identical across ε.

mod config;
mod plot;
mod summary;

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ConfigFile, LevelsSpec};
pub use plot::{emit_plot_data, render_svg, PLOT_DATA_HEADER};
pub use summary::{outer_rep_means, summarize, write_outer_means_csv, write_summary_csv, OuterMeanRow, SummaryRow};

use crate::dpmech::privatize;
use crate::error::{Error, Result};
use crate::estimators::{bayes_estimate, naive_estimate_with, squared_error, vb_estimate, Estimator, NaiveMode};
use crate::nbmodel::{sample_counts, sample_model_params, ModelShape, PriorSpec};
use crate::statdist::RngStream;
use crate::vbengine::FitConfig;

const TAG_PARAMS: u64 = 1;
const TAG_COUNTS: u64 = 2;
const TAG_NOISE: u64 = 3;
const SHARED_PARAMS: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub classes: usize,
    /// `J_k` per feature.
    pub levels: Vec<usize>,
    pub n_grid: Vec<u64>,
    pub epsilon_grid: Vec<f64>,
    pub outer_reps: usize,
    pub inner_reps: usize,
    pub seed: u64,
    /// Dirichlet concentration used to draw the true parameters.
    pub generator_alpha: f64,
    /// Dirichlet concentration of the estimation prior.
    pub prior_alpha: f64,
    pub fit: FitConfig,
    pub naive_mode: NaiveMode,
    /// Draw fresh true parameters for every outer replicate.
    pub resample_params: bool,
    /// Fill `wall_ms`; off by default because timings are not reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            classes: 2,
            levels: vec![2; 5],
            n_grid: vec![50, 100, 200, 500],
            epsilon_grid: vec![0.0001, 0.001, 0.01, 0.1, 1.0],
            outer_reps: 10,
            inner_reps: 5,
            seed: 20_160_101,
            generator_alpha: 1.0,
            prior_alpha: 1.0,
            fit: FitConfig::default(),
            naive_mode: NaiveMode::Frequency,
            resample_params: false,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ModelShape::new(self.classes, self.levels.clone(), 1)?;
        if self.n_grid.is_empty() || self.epsilon_grid.is_empty() {
            return Err(Error::config("N and epsilon grids must be nonempty"));
        }
        if self.epsilon_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::config("epsilon grid values must be positive"));
        }
        if self.outer_reps == 0 || self.inner_reps == 0 {
            return Err(Error::config("replicate counts must be at least 1"));
        }
        if !(self.generator_alpha > 0.0) || !(self.prior_alpha > 0.0) {
            return Err(Error::config("Dirichlet concentrations must be positive"));
        }
        self.fit.validate()
    }

    pub fn shape(&self, n: u64) -> Result<ModelShape> {
        ModelShape::new(self.classes, self.levels.clone(), n)
    }

    pub fn record_count(&self) -> usize {
        self.epsilon_grid.len() * self.n_grid.len() * self.outer_reps * self.inner_reps * Estimator::ALL.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub outer_rep: usize,
    pub inner_rep: usize,
    pub epsilon: f64,
    pub n: u64,
    pub estimator: Estimator,
    pub sq_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str = "outer_rep,inner_rep,epsilon,n,estimator,sq_error,iterations,converged,wall_ms";

#[derive(Clone, Copy, Debug)]
struct Unit {
    epsilon: f64,
    n: u64,
    outer: usize,
    inner: usize,
}

fn run_unit(cfg: &ExperimentConfig, unit: Unit) -> Result<[ExperimentRecord; 3]> {
    let shape = cfg.shape(unit.n)?;
    let gen_prior = PriorSpec::symmetric(&shape, cfg.generator_alpha)?;
    let est_prior = PriorSpec::symmetric(&shape, cfg.prior_alpha)?;

    let params_key = if cfg.resample_params { unit.outer as u64 } else { SHARED_PARAMS };
    let mut rng = RngStream::derived(cfg.seed, &[TAG_PARAMS, params_key]);
    let params = sample_model_params(&shape, &gen_prior, &mut rng)?;
    let mut rng = RngStream::derived(cfg.seed, &[TAG_COUNTS, unit.n, unit.outer as u64]);
    let truth = sample_counts(&params, &shape, &mut rng)?;
    let mut rng = RngStream::derived(
        cfg.seed,
        &[TAG_NOISE, unit.epsilon.to_bits(), unit.n, unit.outer as u64, unit.inner as u64],
    );
    let noisy = privatize(&truth, unit.epsilon, &mut rng)?;

    let record = |estimator, sq_error, iterations, converged, started: Instant| ExperimentRecord {
        outer_rep: unit.outer,
        inner_rep: unit.inner,
        epsilon: unit.epsilon,
        n: unit.n,
        estimator,
        sq_error,
        iterations,
        converged,
        wall_ms: if cfg.record_timing { started.elapsed().as_millis() as u64 } else { 0 },
    };

    let t0 = Instant::now();
    let naive = naive_estimate_with(&noisy, cfg.naive_mode, &est_prior)?;
    let naive = record(Estimator::Naive, squared_error(&naive.point, &params)?, 0, true, t0);

    let t0 = Instant::now();
    let (vb, fitted) = vb_estimate(&noisy, &est_prior, &cfg.fit)?;
    let vb = record(
        Estimator::Vb,
        squared_error(&vb.point, &params)?,
        fitted.state.iteration,
        fitted.converged,
        t0,
    );

    let t0 = Instant::now();
    let bayes = bayes_estimate(&truth, &est_prior)?;
    let bayes = record(Estimator::Bayes, squared_error(&bayes.point, &params)?, 0, true, t0);

    Ok([naive, vb, bayes])
}

fn units(cfg: &ExperimentConfig) -> Vec<Unit> {
    let mut out = Vec::with_capacity(cfg.record_count() / 3);
    for &epsilon in &cfg.epsilon_grid {
        for &n in &cfg.n_grid {
            for outer in 0..cfg.outer_reps {
                for inner in 0..cfg.inner_reps {
                    out.push(Unit { epsilon, n, outer, inner });
                }
            }
        }
    }
    out
}

/// Runs the whole grid on the current thread.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    run_experiment_parallel(cfg, 1)
}

/// Runs the grid on `jobs` worker threads. Records come back in grid order
/// (ε, then N, then outer and inner replicate, then estimator) whatever the
/// thread count.
pub fn run_experiment_parallel(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let units = units(cfg);
    let results: Vec<[ExperimentRecord; 3]> = if jobs <= 1 {
        units.iter().map(|u| run_unit(cfg, *u)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| units.par_iter().map(|u| run_unit(cfg, *u)).collect::<Result<_>>())?
    };
    Ok(results.into_iter().flatten().collect())
}

pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header {:?}", header.join(","))));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_records_file(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_records_csv(records, std::io::BufWriter::new(file))
}

pub fn read_records_file(path: &Path) -> Result<Vec<ExperimentRecord>> {
    read_records_csv(std::fs::File::open(path)?)
}
