//! Flat TOML experiment files. Every key is optional; missing keys keep the
//! value of the base configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimators::NaiveMode;
use crate::vbengine::InitMode;

/// `levels = 3` gives every feature three levels; `levels = [2, 4]` lists them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelsSpec {
    Same(usize),
    Each(Vec<usize>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub classes: Option<usize>,
    pub features: Option<usize>,
    pub levels: Option<LevelsSpec>,
    pub n_grid: Option<Vec<u64>>,
    pub epsilon_grid: Option<Vec<f64>>,
    pub outer_reps: Option<usize>,
    pub inner_reps: Option<usize>,
    pub seed: Option<u64>,
    pub generator_alpha: Option<f64>,
    pub prior_alpha: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub solver_tol: Option<f64>,
    pub solver_max_iter: Option<usize>,
    pub armijo_sigma: Option<f64>,
    pub armijo_nu: Option<f64>,
    pub max_backtracks: Option<usize>,
    pub boundary_fraction: Option<f64>,
    pub init: Option<InitMode>,
    pub naive_mode: Option<NaiveMode>,
    pub resample_params: Option<bool>,
    pub record_timing: Option<bool>,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Keys set in `other` win.
    pub fn merge(self, other: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            classes, features, levels, n_grid, epsilon_grid, outer_reps, inner_reps, seed,
            generator_alpha, prior_alpha, tol, max_iter, solver_tol, solver_max_iter,
            armijo_sigma, armijo_nu, max_backtracks, boundary_fraction, init, naive_mode,
            resample_params, record_timing
        )
    }

    pub fn apply(&self, base: &ExperimentConfig) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),*) => {
                $(if let Some(v) = self.$src.clone() { c.$($dst).+ = v; })*
            };
        }
        set!(
            classes => classes, n_grid => n_grid, epsilon_grid => epsilon_grid,
            outer_reps => outer_reps, inner_reps => inner_reps, seed => seed,
            generator_alpha => generator_alpha, prior_alpha => prior_alpha,
            tol => fit.tol, max_iter => fit.max_iter, solver_tol => fit.solver_tol,
            solver_max_iter => fit.solver_max_iter, armijo_sigma => fit.line_search.sigma,
            armijo_nu => fit.line_search.nu, max_backtracks => fit.line_search.max_backtracks,
            boundary_fraction => fit.line_search.boundary_fraction, init => fit.init_mode,
            naive_mode => naive_mode, resample_params => resample_params,
            record_timing => record_timing
        );
        match (&self.levels, self.features) {
            (Some(LevelsSpec::Each(v)), f) => {
                if f.is_some_and(|f| f != v.len()) {
                    return Err(Error::config("features disagrees with the length of levels"));
                }
                c.levels = v.clone();
            }
            (Some(LevelsSpec::Same(j)), f) => c.levels = vec![*j; f.unwrap_or(c.levels.len())],
            (None, Some(f)) => {
                let j = c.levels.first().copied().unwrap_or(2);
                c.levels = vec![j; f];
            }
            (None, None) => {}
        }
        c.validate()?;
        Ok(c)
    }
}
