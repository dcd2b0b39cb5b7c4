//! Mean-field variational Bayes for naive Bayes parameters observed only
//! through Laplace-noised marginal tables.
//!
//! The missing counts get `q(n_□) = Multinomial(N, θ_□)` and
//! `q(n_i□^k | n_i) = Multinomial(n_i, θ_i□^k)`; the parameters get free-form
//! factors that come out Dirichlet; each Laplace term is written as a
//! Gaussian scale mixture whose mixing variable `β_ijk` gets an
//! inverse-Gaussian factor. One sweep of [`fit`] updates, in order,
//! `q(β)`, `q(p_i□^k)`, `q(p_□)`, every `θ_i□^k` and then `θ_□`.
//!
//! The monitored objective ([`monitored_bound`]) collapses the β block to
//! `−√s_ijk / b` with `s_ijk = E_q[(m_ij^k − n_ij^k)²]`. That is the tight
//! value of the quadratic minorizer of `−|m − n| / b` and a lower bound on
//! its expectation (Jensen), so the θ updates, which maximize the quadratic
//! minorizer built from the current `E[β] = b/√s`, can never lower it.
//!
//! The prior normalizing constants are left out of the bound; they do not
//! depend on any variational parameter.

use serde::{Deserialize, Serialize};

use crate::dpmech::NoisyMarginals;
use crate::error::{Error, Result};
use crate::estimators::naive_point;
use crate::nbmodel::ModelParams;
pub use crate::nbmodel::PriorSpec;
use crate::simplexopt::{maximize, LineSearchConfig, SimplexObjective};
use crate::statdist::{dirichlet_entropy, dirichlet_expected_log, DirichletParams};

/// Floor on `E[(m − n)²]` before taking its square root.
pub const SQ_DEVIATION_FLOOR: f64 = 1e-12;
/// Floor on θ inside the `log θ` coefficient terms.
pub const THETA_LOG_FLOOR: f64 = 1e-10;
/// Weight of the uniform distribution mixed into the naive starting point.
pub const INIT_UNIFORM_WEIGHT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    FromNaive,
    Uniform,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "from-naive" => Ok(InitMode::FromNaive),
            "uniform" => Ok(InitMode::Uniform),
            other => Err(Error::Usage(format!("unknown init mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop once `|M_{t+1} − M_t| / (1 + |M_t|)` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub line_search: LineSearchConfig,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub init_mode: InitMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tol: 1e-6,
            max_iter: 500,
            line_search: LineSearchConfig::default(),
            solver_tol: 1e-8,
            solver_max_iter: 200,
            init_mode: InitMode::FromNaive,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::config("fit needs tol > 0 and max_iter >= 1"));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::config("solver tolerance must be positive"));
        }
        self.line_search.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    /// θ_□, the class probabilities of `q(n_□)`.
    pub theta_class: Vec<f64>,
    /// θ_i□^k, indexed `[k][i][j]`.
    pub theta_cond: Vec<Vec<Vec<f64>>>,
    /// Parameters of `q(p_□)`.
    pub gamma_class: DirichletParams,
    /// Parameters of `q(p_i□^k)`, indexed `[k][i]`.
    pub gamma_cond: Vec<Vec<DirichletParams>>,
    /// `E[β_ijk]`, indexed `[k][i][j]`.
    pub beta_mean: Vec<Vec<Vec<f64>>>,
    pub bound: f64,
    pub iteration: usize,
}

impl VariationalState {
    /// Posterior means of `q(p_□)` and every `q(p_i□^k)`.
    pub fn posterior_means(&self) -> ModelParams {
        ModelParams {
            class_probs: self.gamma_class.mean(),
            cond_probs: self
                .gamma_cond
                .iter()
                .map(|blocks| blocks.iter().map(DirichletParams::mean).collect())
                .collect(),
        }
    }
}

/// `E[(m − n)²]` when `n_i ~ Binomial(N, θ_i)` and
/// `n | n_i ~ Binomial(n_i, θ_ij)`:
/// `N(N−1)θ_i²θ_ij² + Nθ_iθ_ij + m² − 2mNθ_iθ_ij`.
pub fn expected_sq_deviation(theta_i: f64, theta_ij: f64, m: f64, n_total: u64) -> f64 {
    let n = n_total as f64;
    let t = theta_i * theta_ij;
    let value = n * (n - 1.0) * t * t + n * t + m * m - 2.0 * m * n * t;
    // mathematically (m − Nt)² + Nt(1 − t) >= 0
    value.max(0.0)
}

/// `−((m − n)² / (b·α) + α / b) / 2`, which lies below `−|m − n| / b` and
/// touches it at `α = |m − n|`.
pub fn quadratic_minorizer(m: f64, n: f64, alpha: f64, b: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(b > 0.0) {
        return Err(Error::domain("quadratic minorizer needs alpha > 0 and b > 0"));
    }
    Ok(-0.5 * ((m - n).powi(2) / (b * alpha) + alpha / b))
}

fn sq_deviations(state: &VariationalState, noisy: &NoisyMarginals) -> Vec<Vec<Vec<f64>>> {
    let n = noisy.shape().total;
    noisy
        .values()
        .iter()
        .zip(&state.theta_cond)
        .map(|(table, theta_k)| {
            table
                .iter()
                .zip(theta_k)
                .enumerate()
                .map(|(i, (row, theta_ik))| {
                    row.iter()
                        .zip(theta_ik)
                        .map(|(&m, &t)| expected_sq_deviation(state.theta_class[i], t, m, n))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `E[β_ijk] = b / √s_ijk`, the mean of `InverseGaussian(1, b/√s_ijk)`.
pub fn update_q_beta(state: &VariationalState, noisy: &NoisyMarginals) -> Vec<Vec<Vec<f64>>> {
    let b = noisy.scale();
    sq_deviations(state, noisy)
        .into_iter()
        .map(|table| {
            table
                .into_iter()
                .map(|row| row.into_iter().map(|s| b / s.max(SQ_DEVIATION_FLOOR).sqrt()).collect())
                .collect()
        })
        .collect()
}

/// `q(p_i□^k) = Dirichlet(N θ_i θ_ij^k + α_ij^k)`.
pub fn update_q_p_cond(
    state: &VariationalState,
    priors: &PriorSpec,
    n_total: u64,
) -> Result<Vec<Vec<DirichletParams>>> {
    let n = n_total as f64;
    state
        .theta_cond
        .iter()
        .zip(&priors.alpha_cond)
        .map(|(theta_k, prior_k)| {
            theta_k
                .iter()
                .zip(prior_k)
                .enumerate()
                .map(|(i, (theta_ik, prior))| {
                    let alpha = theta_ik
                        .iter()
                        .zip(prior.alpha())
                        .map(|(t, a)| n * state.theta_class[i] * t + a)
                        .collect();
                    DirichletParams::new(alpha)
                })
                .collect()
        })
        .collect()
}

/// `q(p_□) = Dirichlet(N θ_i + α_i)`.
pub fn update_q_p_class(state: &VariationalState, priors: &PriorSpec, n_total: u64) -> Result<DirichletParams> {
    let n = n_total as f64;
    DirichletParams::new(
        state
            .theta_class
            .iter()
            .zip(priors.alpha_class.alpha())
            .map(|(t, a)| n * t + a)
            .collect(),
    )
}

/// The θ_i□^k subproblem: coefficients of `Σ_j A_j θ² + B_j θ + C_j θ log θ`.
pub fn theta_cond_objective(
    state: &VariationalState,
    noisy: &NoisyMarginals,
    i: usize,
    k: usize,
) -> Result<SimplexObjective> {
    let n = noisy.shape().total as f64;
    let b2 = noisy.scale().powi(2);
    let theta_i = state.theta_class[i];
    let elog = dirichlet_expected_log(&state.gamma_cond[k][i])?;
    let m = &noisy.values()[k][i];
    let beta = &state.beta_mean[k][i];
    let levels = m.len();
    let mut a = Vec::with_capacity(levels);
    let mut lin = Vec::with_capacity(levels);
    for j in 0..levels {
        a.push(-n * (n - 1.0) * theta_i * theta_i * beta[j] / (2.0 * b2));
        lin.push(
            -n * theta_i * beta[j] / (2.0 * b2)
                + n * m[j] * theta_i * beta[j] / b2
                + n * theta_i * elog[j],
        );
    }
    SimplexObjective::new(a, lin, vec![-n * theta_i; levels])
}

/// The θ_□ subproblem: coefficients of `Σ_i D_i θ² + E_i θ + F_i θ log θ`.
pub fn theta_class_objective(state: &VariationalState, noisy: &NoisyMarginals) -> Result<SimplexObjective> {
    let n = noisy.shape().total as f64;
    let b2 = noisy.scale().powi(2);
    let classes = state.theta_class.len();
    let mut d = vec![0.0; classes];
    let mut e = vec![0.0; classes];
    for (k, table) in noisy.values().iter().enumerate() {
        for (i, m) in table.iter().enumerate() {
            let elog = dirichlet_expected_log(&state.gamma_cond[k][i])?;
            let theta_ik = &state.theta_cond[k][i];
            let beta = &state.beta_mean[k][i];
            for j in 0..m.len() {
                let t = theta_ik[j];
                d[i] -= n * (n - 1.0) * t * t * beta[j] / (2.0 * b2);
                e[i] += n
                    * t
                    * (-beta[j] / (2.0 * b2) + m[j] * beta[j] / b2 + elog[j]
                        - t.max(THETA_LOG_FLOOR).ln());
            }
        }
    }
    let elog_class = dirichlet_expected_log(&state.gamma_class)?;
    for i in 0..classes {
        e[i] += n * elog_class[i];
    }
    SimplexObjective::new(d, e, vec![-n; classes])
}

pub fn theta_cond_step(
    state: &VariationalState,
    noisy: &NoisyMarginals,
    i: usize,
    k: usize,
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    let obj = theta_cond_objective(state, noisy, i, k)?;
    let sol = maximize(
        &obj,
        &state.theta_cond[k][i],
        &cfg.line_search,
        cfg.solver_tol,
        cfg.solver_max_iter,
    )?;
    Ok(sol.theta)
}

pub fn theta_class_step(state: &VariationalState, noisy: &NoisyMarginals, cfg: &FitConfig) -> Result<Vec<f64>> {
    let obj = theta_class_objective(state, noisy)?;
    let sol = maximize(
        &obj,
        &state.theta_class,
        &cfg.line_search,
        cfg.solver_tol,
        cfg.solver_max_iter,
    )?;
    Ok(sol.theta)
}

fn entropy_term(theta: f64) -> f64 {
    theta * theta.max(THETA_LOG_FLOOR).ln()
}

/// The collapsed variational lower bound (see the module docs).
pub fn monitored_bound(state: &VariationalState, noisy: &NoisyMarginals, priors: &PriorSpec) -> Result<f64> {
    let n = noisy.shape().total as f64;
    let b = noisy.scale();
    let mut bound = 0.0;
    for table in sq_deviations(state, noisy) {
        for row in table {
            bound -= row.iter().map(|s| s.sqrt()).sum::<f64>() / b;
        }
    }
    for (k, theta_k) in state.theta_cond.iter().enumerate() {
        for (i, theta_ik) in theta_k.iter().enumerate() {
            let gamma = &state.gamma_cond[k][i];
            let elog = dirichlet_expected_log(gamma)?;
            let alpha = priors.alpha_cond[k][i].alpha();
            let theta_i = state.theta_class[i];
            for (j, &t) in theta_ik.iter().enumerate() {
                let mass = n * theta_i * t;
                bound += (mass + alpha[j] - 1.0) * elog[j] - n * theta_i * entropy_term(t);
            }
            bound += dirichlet_entropy(gamma)?;
        }
    }
    let elog = dirichlet_expected_log(&state.gamma_class)?;
    for (i, &t) in state.theta_class.iter().enumerate() {
        bound += (n * t + priors.alpha_class.alpha()[i] - 1.0) * elog[i] - n * entropy_term(t);
    }
    bound += dirichlet_entropy(&state.gamma_class)?;
    if !bound.is_finite() {
        return Err(Error::Numeric("variational bound is not finite".into()));
    }
    Ok(bound)
}

fn blend_with_uniform(p: &[f64]) -> Vec<f64> {
    let u = 1.0 / p.len() as f64;
    p.iter()
        .map(|x| (1.0 - INIT_UNIFORM_WEIGHT) * x + INIT_UNIFORM_WEIGHT * u)
        .collect()
}

/// Starting state: θ from the naive estimate (nudged inside the simplex) or
/// uniform; Dirichlet factors at the prior; `E[β]` from one update.
pub fn initialize(noisy: &NoisyMarginals, priors: &PriorSpec, mode: InitMode) -> Result<VariationalState> {
    let shape = noisy.shape();
    priors.check(shape)?;
    let start = match mode {
        InitMode::FromNaive => naive_point(noisy),
        InitMode::Uniform => ModelParams::uniform(shape),
    };
    let mut state = VariationalState {
        theta_class: blend_with_uniform(&start.class_probs),
        theta_cond: start
            .cond_probs
            .iter()
            .map(|t| t.iter().map(|row| blend_with_uniform(row)).collect())
            .collect(),
        gamma_class: priors.alpha_class.clone(),
        gamma_cond: priors.alpha_cond.clone(),
        beta_mean: Vec::new(),
        bound: f64::NAN,
        iteration: 0,
    };
    state.beta_mean = update_q_beta(&state, noisy);
    state.bound = monitored_bound(&state, noisy, priors)?;
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub state: VariationalState,
    pub converged: bool,
    /// Bound after initialization and after every sweep.
    pub trace: Vec<f64>,
}

/// One full coordinate-ascent sweep.
pub fn sweep(
    state: &mut VariationalState,
    noisy: &NoisyMarginals,
    priors: &PriorSpec,
    cfg: &FitConfig,
) -> Result<()> {
    let n = noisy.shape().total;
    state.beta_mean = update_q_beta(state, noisy);
    state.gamma_cond = update_q_p_cond(state, priors, n)?;
    state.gamma_class = update_q_p_class(state, priors, n)?;
    for k in 0..state.theta_cond.len() {
        for i in 0..state.theta_class.len() {
            state.theta_cond[k][i] = theta_cond_step(state, noisy, i, k, cfg)?;
        }
    }
    state.theta_class = theta_class_step(state, noisy, cfg)?;
    state.bound = monitored_bound(state, noisy, priors)?;
    state.iteration += 1;
    Ok(())
}

/// Coordinate ascent until the relative bound increase drops below
/// `cfg.tol` or `cfg.max_iter` sweeps have run.
pub fn fit(noisy: &NoisyMarginals, priors: &PriorSpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let mut state = initialize(noisy, priors, cfg.init_mode)?;
    let mut trace = vec![state.bound];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let previous = state.bound;
        sweep(&mut state, noisy, priors, cfg)?;
        trace.push(state.bound);
        if (state.bound - previous).abs() / (1.0 + previous.abs()) < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        state,
        converged,
        trace,
    })
}
