//! JSON documents exchanged by the command-line tools: true datasets, noisy
//! releases and fitted posteriors.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dpmech::NoisyMarginals;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, Posterior, PosteriorEstimate};
use crate::nbmodel::{ModelParams, ModelShape, TrueMarginals};
use crate::statdist::DirichletParams;
use crate::vbengine::{FitConfig, FitResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeDoc {
    #[serde(rename = "I")]
    pub classes: usize,
    #[serde(rename = "K")]
    pub features: usize,
    pub levels: Vec<usize>,
    #[serde(rename = "N")]
    pub total: u64,
}

impl From<&ModelShape> for ShapeDoc {
    fn from(s: &ModelShape) -> Self {
        ShapeDoc {
            classes: s.classes,
            features: s.features(),
            levels: s.levels.clone(),
            total: s.total,
        }
    }
}

impl TryFrom<&ShapeDoc> for ModelShape {
    type Error = Error;

    fn try_from(d: &ShapeDoc) -> Result<Self> {
        if d.levels.len() != d.features {
            return Err(Error::Parse(format!(
                "shape lists {} levels for K = {}",
                d.levels.len(),
                d.features
            )));
        }
        ModelShape::new(d.classes, d.levels.clone(), d.total)
    }
}

/// True counts, optionally with the parameters that generated them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDoc {
    pub shape: ShapeDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    /// `n_ij^k`, one `I × J_k` array per feature.
    pub counts: Vec<Vec<Vec<u64>>>,
    pub class_counts: Vec<u64>,
}

impl DatasetDoc {
    pub fn new(truth: &TrueMarginals, params: Option<&ModelParams>) -> Self {
        DatasetDoc {
            shape: (&truth.shape).into(),
            params: params.cloned(),
            counts: truth.counts.clone(),
            class_counts: truth.class_counts.clone(),
        }
    }

    pub fn to_marginals(&self) -> Result<TrueMarginals> {
        let shape = ModelShape::try_from(&self.shape)?;
        shape.check_tables("counts", &self.counts)?;
        if let Some(p) = &self.params {
            p.validate(&shape)?;
        }
        let truth = TrueMarginals {
            shape,
            counts: self.counts.clone(),
            class_counts: self.class_counts.clone(),
        };
        if !truth.check_consistency() {
            return Err(Error::domain("dataset counts are not consistent with the class counts"));
        }
        Ok(truth)
    }
}

/// A noisy release: real-valued counts plus the privacy accounting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyDoc {
    pub shape: ShapeDoc,
    /// `m_ij^k`, one `I × J_k` array per feature.
    pub counts: Vec<Vec<Vec<f64>>>,
    pub epsilon_per_query: f64,
    pub scale: f64,
    pub total_epsilon: f64,
}

impl From<&NoisyMarginals> for NoisyDoc {
    fn from(m: &NoisyMarginals) -> Self {
        NoisyDoc {
            shape: m.shape().into(),
            counts: m.values().to_vec(),
            epsilon_per_query: m.privacy().epsilon_per_query(),
            scale: m.scale(),
            total_epsilon: m.total_epsilon(),
        }
    }
}

impl NoisyDoc {
    pub fn to_marginals(&self) -> Result<NoisyMarginals> {
        let shape = ModelShape::try_from(&self.shape)?;
        let m = NoisyMarginals::new(shape, self.counts.clone(), self.epsilon_per_query)?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !close(m.scale(), self.scale) || !close(m.total_epsilon(), self.total_epsilon) {
            return Err(Error::Parse(
                "scale or total_epsilon disagree with epsilon_per_query".into(),
            ));
        }
        Ok(m)
    }
}

/// Output of `fit`. The variational fields are present for the `vb` method only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDoc {
    pub method: Estimator,
    pub class_posterior: Posterior,
    pub cond_posterior: Vec<Vec<Posterior>>,
    pub point: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_class: Option<DirichletParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cond: Option<Vec<Vec<DirichletParams>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_class: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_cond: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_mean: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_trace: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<FitConfig>,
    /// Squared error against known true parameters, when supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub squared_error: Option<f64>,
}

impl PosteriorDoc {
    pub fn new(est: &PosteriorEstimate) -> Self {
        PosteriorDoc {
            method: est.method,
            class_posterior: est.class_posterior.clone(),
            cond_posterior: est.cond_posterior.clone(),
            point: est.point.clone(),
            gamma_class: None,
            gamma_cond: None,
            theta_class: None,
            theta_cond: None,
            beta_mean: None,
            bound_trace: None,
            converged: est.converged,
            iterations: est.iterations,
            config: None,
            squared_error: None,
        }
    }

    pub fn with_fit(mut self, fit: &FitResult, cfg: &FitConfig) -> Self {
        let s = &fit.state;
        self.gamma_class = Some(s.gamma_class.clone());
        self.gamma_cond = Some(s.gamma_cond.clone());
        self.theta_class = Some(s.theta_class.clone());
        self.theta_cond = Some(s.theta_cond.clone());
        self.beta_mean = Some(s.beta_mean.clone());
        self.bound_trace = Some(fit.trace.clone());
        self.converged = Some(fit.converged);
        self.iterations = Some(s.iteration);
        self.config = Some(*cfg);
        self
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
