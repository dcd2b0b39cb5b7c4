//! The three estimators of the simulation study and the squared-error metric.
//!
//! The private estimators (`naive`, `vb`) take [`NoisyMarginals`] only; the
//! non-private reference (`bayes`) takes [`TrueMarginals`] only.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dpmech::NoisyMarginals;
use crate::error::{Error, Result};
use crate::nbmodel::{ModelParams, PriorSpec, TrueMarginals};
use crate::statdist::DirichletParams;
use crate::vbengine::{fit, FitConfig, FitResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Naive,
    Vb,
    Bayes,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Naive, Estimator::Vb, Estimator::Bayes];

    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Naive => "naive",
            Estimator::Vb => "vb",
            Estimator::Bayes => "bayes",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Estimator::Naive),
            "vb" => Ok(Estimator::Vb),
            "bayes" => Ok(Estimator::Bayes),
            other => Err(Error::Usage(format!("unknown estimator {other:?}"))),
        }
    }
}

/// How the naive estimator turns clamped noisy counts into a posterior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaiveMode {
    /// Renormalized clamped counts as a point estimate.
    #[default]
    Frequency,
    /// Clamped counts plugged into the conjugate Dirichlet update.
    Conjugate,
}

impl std::str::FromStr for NaiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" => Ok(NaiveMode::Frequency),
            "conjugate" => Ok(NaiveMode::Conjugate),
            other => Err(Error::Usage(format!("unknown naive mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Posterior {
    Dirichlet(DirichletParams),
    Point(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEstimate {
    pub method: Estimator,
    pub class_posterior: Posterior,
    /// Indexed `[k][i]`.
    pub cond_posterior: Vec<Vec<Posterior>>,
    /// Posterior means (or the point estimate itself).
    pub point: ModelParams,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

fn normalize_or_uniform(x: &[f64]) -> Vec<f64> {
    let total: f64 = x.iter().sum();
    if total > 0.0 {
        x.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / x.len() as f64; x.len()]
    }
}

struct Clamped {
    /// `[k][i][j]`, each value in `[0, N]`.
    cells: Vec<Vec<Vec<f64>>>,
    /// Row totals `r_i^k`, indexed `[k][i]`.
    rows: Vec<Vec<f64>>,
}

fn clamp_counts(noisy: &NoisyMarginals) -> Clamped {
    let n = noisy.shape().total as f64;
    let cells: Vec<Vec<Vec<f64>>> = noisy
        .values()
        .iter()
        .map(|t| t.iter().map(|r| r.iter().map(|m| m.clamp(0.0, n)).collect()).collect())
        .collect();
    let rows = cells
        .iter()
        .map(|t| t.iter().map(|r: &Vec<f64>| r.iter().sum()).collect())
        .collect();
    Clamped { cells, rows }
}

/// Class totals pooled over features, `Σ_k r_i^k`.
fn pooled_class_totals(clamped: &Clamped, classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|i| clamped.rows.iter().map(|r| r[i]).sum())
        .collect()
}

/// Treats the noisy counts as real counts: clamp each to `[0, N]`, normalize
/// each row, and estimate `p(y)` from the row totals pooled over features.
/// Empty rows (or an empty table) fall back to uniform.
pub fn naive_point(noisy: &NoisyMarginals) -> ModelParams {
    let clamped = clamp_counts(noisy);
    let classes = noisy.shape().classes;
    ModelParams {
        class_probs: normalize_or_uniform(&pooled_class_totals(&clamped, classes)),
        cond_probs: clamped
            .cells
            .iter()
            .map(|t| t.iter().map(|r| normalize_or_uniform(r)).collect())
            .collect(),
    }
}

pub fn naive_estimate(noisy: &NoisyMarginals) -> PosteriorEstimate {
    let point = naive_point(noisy);
    PosteriorEstimate {
        method: Estimator::Naive,
        class_posterior: Posterior::Point(point.class_probs.clone()),
        cond_posterior: point
            .cond_probs
            .iter()
            .map(|t| t.iter().map(|r| Posterior::Point(r.clone())).collect())
            .collect(),
        point,
        iterations: None,
        converged: None,
    }
}

/// Naive estimate in either mode. The conjugate mode uses
/// `Dirichlet(clamped + α)` per row and `Dirichlet(mean_k r_i^k + α_i)` for
/// the classes.
pub fn naive_estimate_with(noisy: &NoisyMarginals, mode: NaiveMode, priors: &PriorSpec) -> Result<PosteriorEstimate> {
    match mode {
        NaiveMode::Frequency => Ok(naive_estimate(noisy)),
        NaiveMode::Conjugate => {
            let shape = noisy.shape();
            priors.check(shape)?;
            let clamped = clamp_counts(noisy);
            let features = shape.features() as f64;
            let class_alpha = pooled_class_totals(&clamped, shape.classes)
                .iter()
                .zip(priors.alpha_class.alpha())
                .map(|(r, a)| r / features + a)
                .collect();
            let class = DirichletParams::new(class_alpha)?;
            let cond = clamped
                .cells
                .iter()
                .zip(&priors.alpha_cond)
                .map(|(t, pk)| {
                    t.iter()
                        .zip(pk)
                        .map(|(r, a)| DirichletParams::new(r.iter().zip(a.alpha()).map(|(c, a)| c + a).collect()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(from_dirichlets(Estimator::Naive, class, cond, None, None))
        }
    }
}

fn from_dirichlets(
    method: Estimator,
    class: DirichletParams,
    cond: Vec<Vec<DirichletParams>>,
    iterations: Option<usize>,
    converged: Option<bool>,
) -> PosteriorEstimate {
    let point = ModelParams {
        class_probs: class.mean(),
        cond_probs: cond.iter().map(|t| t.iter().map(DirichletParams::mean).collect()).collect(),
    };
    PosteriorEstimate {
        method,
        class_posterior: Posterior::Dirichlet(class),
        cond_posterior: cond
            .into_iter()
            .map(|t| t.into_iter().map(Posterior::Dirichlet).collect())
            .collect(),
        point,
        iterations,
        converged,
    }
}

/// Variational posterior; the point estimate is the posterior mean.
pub fn vb_estimate(noisy: &NoisyMarginals, priors: &PriorSpec, cfg: &FitConfig) -> Result<(PosteriorEstimate, FitResult)> {
    let result = fit(noisy, priors, cfg)?;
    let est = from_dirichlets(
        Estimator::Vb,
        result.state.gamma_class.clone(),
        result.state.gamma_cond.clone(),
        Some(result.state.iteration),
        Some(result.converged),
    );
    Ok((est, result))
}

/// Conjugate posterior from the true counts.
pub fn bayes_estimate(truth: &TrueMarginals, priors: &PriorSpec) -> Result<PosteriorEstimate> {
    if !truth.check_consistency() {
        return Err(Error::domain("true marginals are not consistent"));
    }
    priors.check(&truth.shape)?;
    let class = DirichletParams::new(
        truth
            .class_counts
            .iter()
            .zip(priors.alpha_class.alpha())
            .map(|(&n, a)| n as f64 + a)
            .collect(),
    )?;
    let cond = truth
        .counts
        .iter()
        .zip(&priors.alpha_cond)
        .map(|(t, pk)| {
            t.iter()
                .zip(pk)
                .map(|(r, a)| DirichletParams::new(r.iter().zip(a.alpha()).map(|(&n, a)| n as f64 + a).collect()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(from_dirichlets(Estimator::Bayes, class, cond, None, None))
}

/// Noisy counts rounded to the nearest nonnegative integer, with class totals
/// read off the first feature. Fails unless every feature then agrees on the
/// class totals and they add up to `N`, which holds once the noise is far
/// below one half.
pub fn rounded_marginals(noisy: &NoisyMarginals) -> Result<TrueMarginals> {
    let counts: Vec<Vec<Vec<u64>>> = noisy
        .values()
        .iter()
        .map(|t| t.iter().map(|r| r.iter().map(|&m| m.round().max(0.0) as u64).collect()).collect())
        .collect();
    let shape = noisy.shape().clone();
    let class_counts = match counts.first() {
        Some(t) => t.iter().map(|r| r.iter().sum()).collect(),
        None => vec![0; shape.classes],
    };
    let truth = TrueMarginals { shape, counts, class_counts };
    if !truth.check_consistency() {
        return Err(Error::domain("rounded noisy counts are not consistent marginals"));
    }
    Ok(truth)
}

/// `Σ_i (p̂_i − p_i)² + Σ_{ijk} (p̂_ij^k − p_ij^k)²`.
pub fn squared_error(estimate: &ModelParams, truth: &ModelParams) -> Result<f64> {
    let mismatch = || Error::domain("estimate and truth have different shapes");
    if estimate.class_probs.len() != truth.class_probs.len() || estimate.cond_probs.len() != truth.cond_probs.len() {
        return Err(mismatch());
    }
    let sq = |a: &[f64], b: &[f64]| -> Result<f64> {
        if a.len() != b.len() {
            return Err(mismatch());
        }
        Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum())
    };
    let mut total = sq(&estimate.class_probs, &truth.class_probs)?;
    for (te, tt) in estimate.cond_probs.iter().zip(&truth.cond_probs) {
        if te.len() != tt.len() {
            return Err(mismatch());
        }
        for (re, rt) in te.iter().zip(tt) {
            total += sq(re, rt)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbmodel::{sample_counts, sample_model_params, ModelShape};
    use crate::statdist::RngStream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn naive_reproduces_frequencies_on_noiseless_input() {
        let s = ModelShape::new(3, vec![2, 4], 60).unwrap();
        let mut rng = RngStream::new(2, 2);
        let p = sample_model_params(&s, &PriorSpec::uniform(&s).unwrap(), &mut rng).unwrap();
        let t = sample_counts(&p, &s, &mut rng).unwrap();
        let values = s.tables(|k, i, j| t.counts[k][i][j] as f64);
        let noisy = NoisyMarginals::new(s.clone(), values, 1.0).unwrap();
        let est = naive_estimate(&noisy);
        for i in 0..3 {
            assert_abs_diff_eq!(est.point.class_probs[i], t.class_counts[i] as f64 / 60.0, epsilon = 1e-15);
            for k in 0..2 {
                let n_i = t.class_counts[i] as f64;
                for j in 0..s.levels[k] {
                    let expected = if n_i > 0.0 { t.counts[k][i][j] as f64 / n_i } else { 1.0 / s.levels[k] as f64 };
                    assert_abs_diff_eq!(est.point.cond_probs[k][i][j], expected, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn naive_hand_example() {
        let s = ModelShape::new(2, vec![2], 20).unwrap();
        let noisy = NoisyMarginals::new(s, vec![vec![vec![-3.0, 12.0], vec![6.0, 4.0]]], 1.0).unwrap();
        let p = naive_estimate(&noisy).point;
        assert_eq!(p.cond_probs[0][0], vec![0.0, 1.0]);
        assert_abs_diff_eq!(p.cond_probs[0][1][0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.cond_probs[0][1][1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(p.class_probs[0], 12.0 / 22.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.class_probs[1], 10.0 / 22.0, epsilon = 1e-15);
    }

    #[test]
    fn naive_clamps_above_n_and_falls_back_to_uniform() {
        let s = ModelShape::new(2, vec![3], 5).unwrap();
        let noisy = NoisyMarginals::new(s.clone(), vec![vec![vec![-1.0, -2.0, -0.5], vec![-9.0, 0.0, -3.0]]], 1.0).unwrap();
        let p = naive_estimate(&noisy).point;
        assert_eq!(p, ModelParams::uniform(&s));
        let noisy = NoisyMarginals::new(s, vec![vec![vec![40.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]]], 1.0).unwrap();
        let p = naive_estimate(&noisy).point;
        assert_abs_diff_eq!(p.cond_probs[0][0][0], 5.0 / 6.0, epsilon = 1e-15);
        assert_eq!(p.class_probs, vec![1.0, 0.0]);
    }

    #[test]
    fn naive_conjugate_mode() {
        let s = ModelShape::new(2, vec![2], 20).unwrap();
        let noisy = NoisyMarginals::new(s.clone(), vec![vec![vec![-3.0, 12.0], vec![6.0, 4.0]]], 1.0).unwrap();
        let est = naive_estimate_with(&noisy, NaiveMode::Conjugate, &PriorSpec::uniform(&s).unwrap()).unwrap();
        assert_eq!(est.cond_posterior[0][0], Posterior::Dirichlet(DirichletParams::new(vec![1.0, 13.0]).unwrap()));
        assert_eq!(est.class_posterior, Posterior::Dirichlet(DirichletParams::new(vec![13.0, 11.0]).unwrap()));
    }

    #[test]
    fn bayes_examples() {
        let s = ModelShape::new(2, vec![2], 10).unwrap();
        let mut t = TrueMarginals::zeros(&s);
        t.class_counts = vec![10, 0];
        t.counts[0][0] = vec![3, 7];
        let est = bayes_estimate(&t, &PriorSpec::uniform(&s).unwrap()).unwrap();
        assert_eq!(est.cond_posterior[0][0], Posterior::Dirichlet(DirichletParams::new(vec![4.0, 8.0]).unwrap()));
        assert_abs_diff_eq!(est.point.cond_probs[0][0][0], 1.0 / 3.0, epsilon = 1e-15);
        // no data for class 1: posterior = prior
        assert_eq!(est.cond_posterior[0][1], Posterior::Dirichlet(DirichletParams::new(vec![1.0, 1.0]).unwrap()));
        t.counts[0][0][0] += 1;
        assert!(matches!(bayes_estimate(&t, &PriorSpec::uniform(&s).unwrap()), Err(Error::Domain(_))));
    }

    #[test]
    fn bayes_is_consistent_for_large_n() {
        let s = ModelShape::new(2, vec![2, 3, 2], 100_000).unwrap();
        let prior = PriorSpec::uniform(&s).unwrap();
        let mut rng = RngStream::new(31, 0);
        for _ in 0..5 {
            let p = sample_model_params(&s, &prior, &mut rng).unwrap();
            let t = sample_counts(&p, &s, &mut rng).unwrap();
            let est = bayes_estimate(&t, &prior).unwrap();
            // 6 standard errors of the empirical frequency, plus the prior's pull
            let check = |est: f64, truth: f64, n: u64| {
                let se = (truth * (1.0 - truth) / n.max(1) as f64).sqrt();
                assert!((est - truth).abs() <= 6.0 * se + 5.0 / n.max(1) as f64, "{est} vs {truth} (n = {n})");
            };
            for (a, b) in est.point.class_probs.iter().zip(&p.class_probs) {
                check(*a, *b, s.total);
            }
            for (k, table) in est.point.cond_probs.iter().enumerate() {
                for (i, row) in table.iter().enumerate() {
                    for (a, b) in row.iter().zip(&p.cond_probs[k][i]) {
                        check(*a, *b, t.class_counts[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn rounding_recovers_counts_under_tiny_noise() {
        let s = ModelShape::new(2, vec![2, 3], 60).unwrap();
        let mut rng = RngStream::new(8, 0);
        let p = sample_model_params(&s, &PriorSpec::uniform(&s).unwrap(), &mut rng).unwrap();
        let t = sample_counts(&p, &s, &mut rng).unwrap();
        let m = crate::dpmech::privatize(&t, 1e6, &mut rng).unwrap();
        assert_eq!(rounded_marginals(&m).unwrap(), t);
        let loud = crate::dpmech::privatize(&t, 0.01, &mut rng).unwrap();
        assert!(matches!(rounded_marginals(&loud), Err(Error::Domain(_))));
    }

    #[test]
    fn squared_error_examples() {
        let a = ModelParams { class_probs: vec![0.6, 0.4], cond_probs: vec![] };
        let b = ModelParams { class_probs: vec![0.5, 0.5], cond_probs: vec![] };
        assert_abs_diff_eq!(squared_error(&a, &b).unwrap(), 0.02, epsilon = 1e-15);
        assert_eq!(squared_error(&a, &a).unwrap(), 0.0);
        assert_eq!(squared_error(&a, &b).unwrap(), squared_error(&b, &a).unwrap());
        let c = ModelParams { class_probs: vec![0.5, 0.3, 0.2], cond_probs: vec![] };
        assert!(squared_error(&a, &c).is_err());
    }

    proptest! {
        #[test]
        fn naive_point_is_always_on_the_simplex(
            raw in prop::collection::vec(-500.0f64..500.0, 12),
            n in 0u64..200,
        ) {
            let s = ModelShape::new(2, vec![2, 4], n).unwrap();
            let mut it = raw.into_iter();
            let values = s.tables(|_, _, _| it.next().unwrap());
            let noisy = NoisyMarginals::new(s.clone(), values, 0.1).unwrap();
            naive_estimate(&noisy).point.validate(&s).unwrap();
            let conj = naive_estimate_with(&noisy, NaiveMode::Conjugate, &PriorSpec::uniform(&s).unwrap()).unwrap();
            conj.point.validate(&s).unwrap();
        }
    }
}
