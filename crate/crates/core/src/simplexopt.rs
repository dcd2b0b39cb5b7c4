//! First-order interior-point ascent for separable objectives
//!
//! ```text
//! f(θ) = Σ_i A_i θ_i² + B_i θ_i + C_i θ_i log θ_i,   A_i ≤ 0, C_i ≤ 0
//! ```
//!
//! over the open probability simplex. Each step moves along the scaled
//! direction `d_i = θ_i (∇_i f − ⟨θ, ∇f⟩)`, which sums to zero and is an
//! ascent direction, with an Armijo backtracking search whose first trial
//! step stays strictly inside the simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates that fall below this are lifted back before the next step.
pub const COORDINATE_FLOOR: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexObjective {
    quadratic: Vec<f64>,
    linear: Vec<f64>,
    entropy: Vec<f64>,
}

impl SimplexObjective {
    /// `quadratic` (A) and `entropy` (C) must be nonpositive.
    pub fn new(quadratic: Vec<f64>, linear: Vec<f64>, entropy: Vec<f64>) -> Result<Self> {
        let d = quadratic.len();
        if d < 2 || linear.len() != d || entropy.len() != d {
            return Err(Error::domain(
                "objective needs equal-length coefficient vectors of dimension >= 2",
            ));
        }
        let all = quadratic.iter().chain(&linear).chain(&entropy);
        if all.into_iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("objective coefficients must be finite"));
        }
        if quadratic.iter().chain(&entropy).any(|c| *c > 0.0) {
            return Err(Error::domain("quadratic and entropy coefficients must be <= 0"));
        }
        Ok(SimplexObjective {
            quadratic,
            linear,
            entropy,
        })
    }

    pub fn dim(&self) -> usize {
        self.quadratic.len()
    }

    pub fn quadratic(&self) -> &[f64] {
        &self.quadratic
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn entropy(&self) -> &[f64] {
        &self.entropy
    }

    fn check_point(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::domain("point has the wrong dimension"));
        }
        if theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::domain("point must be strictly inside the simplex"));
        }
        let total: f64 = theta.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("point sums to {total}, not 1")));
        }
        Ok(())
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check_point(theta)?;
        Ok(self.eval(theta))
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_point(theta)?;
        Ok(self.grad(theta))
    }

    pub fn search_direction(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_point(theta)?;
        Ok(direction(theta, &self.grad(theta)))
    }

    fn eval(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                self.quadratic[i] * t * t + self.linear[i] * t + self.entropy[i] * t * t.ln()
            })
            .sum()
    }

    fn grad(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| 2.0 * self.quadratic[i] * t + self.linear[i] + self.entropy[i] * (1.0 + t.ln()))
            .collect()
    }
}

fn direction(theta: &[f64], grad: &[f64]) -> Vec<f64> {
    let avg: f64 = theta.iter().zip(grad).map(|(t, g)| t * g).sum();
    theta.iter().zip(grad).map(|(t, g)| t * (g - avg)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Armijo sufficient-increase fraction σ.
    pub sigma: f64,
    /// Backtracking factor ν.
    pub nu: f64,
    pub max_backtracks: usize,
    /// First trial step as a fraction of the distance to the boundary.
    pub boundary_fraction: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            sigma: 1e-4,
            nu: 0.5,
            max_backtracks: 50,
            boundary_fraction: 0.99,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.sigma) || !open_unit(self.nu) || !open_unit(self.boundary_fraction) {
            return Err(Error::config(
                "line search needs sigma, nu and boundary_fraction in (0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexSolution {
    pub theta: Vec<f64>,
    /// Objective value at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl SimplexSolution {
    pub fn value(&self) -> f64 {
        *self.trace.last().expect("trace holds at least the start value")
    }
}

/// Largest step keeping `theta + s d` strictly positive, or infinity.
fn step_cap(theta: &[f64], d: &[f64]) -> f64 {
    let min_ratio = theta
        .iter()
        .zip(d)
        .map(|(t, dj)| dj / t)
        .fold(f64::INFINITY, f64::min);
    if min_ratio < 0.0 {
        -1.0 / min_ratio
    } else {
        f64::INFINITY
    }
}

fn floor_and_normalize(theta: &mut [f64]) {
    for t in theta.iter_mut() {
        if *t < COORDINATE_FLOOR {
            *t = COORDINATE_FLOOR;
        }
    }
    let total: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|t| *t /= total);
}

/// Maximizes `obj` over the simplex from the interior point `theta0`.
///
/// Stops when `max_i |d_i| < tol`, when `max_iter` steps were taken, or when
/// the line search cannot find an Armijo step; only the first counts as
/// converged. The returned trace never decreases.
pub fn maximize(
    obj: &SimplexObjective,
    theta0: &[f64],
    cfg: &LineSearchConfig,
    tol: f64,
    max_iter: usize,
) -> Result<SimplexSolution> {
    obj.check_point(theta0)?;
    cfg.validate()?;
    if !(tol > 0.0) {
        return Err(Error::config("solver tolerance must be positive"));
    }
    let mut theta = theta0.to_vec();
    let mut value = obj.eval(&theta);
    let mut trace = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    let mut candidate = vec![0.0; theta.len()];

    while iterations < max_iter {
        let grad = obj.grad(&theta);
        let d = direction(&theta, &grad);
        if d.iter().all(|x| x.abs() < tol) {
            converged = true;
            break;
        }
        let slope: f64 = grad.iter().zip(&d).map(|(g, x)| g * x).sum();
        if !(slope > 0.0) {
            // direction vanished up to rounding
            converged = true;
            break;
        }
        let mut step = f64::min(1.0, cfg.boundary_fraction * step_cap(&theta, &d));
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            for ((c, t), dj) in candidate.iter_mut().zip(&theta).zip(&d) {
                *c = t + step * dj;
            }
            if candidate.iter().all(|c| *c > 0.0) {
                floor_and_normalize(&mut candidate);
                let trial = obj.eval(&candidate);
                if trial >= value + cfg.sigma * step * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= cfg.nu;
        }
        let Some(trial) = accepted else {
            break;
        };
        std::mem::swap(&mut theta, &mut candidate);
        value = trial;
        trace.push(value);
        iterations += 1;
    }
    Ok(SimplexSolution {
        theta,
        trace,
        converged,
        iterations,
    })
}
