//! Special functions, seeded random streams and the handful of probability
//! distributions the rest of the crate samples from or evaluates.

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha20, whose 64-bit stream selector gives every `stream_id`
/// its own keystream under the same seed, so sub-streams never share state.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    /// Stream keyed by a sequence of tags under the same master seed.
    pub fn derived(seed: u64, tags: &[u64]) -> Self {
        RngStream::new(seed, stream_id_for(tags))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes an ordered tag sequence into a single stream id.
pub fn stream_id_for(tags: &[u64]) -> u64 {
    tags.iter()
        .fold(0x2545_f491_4f6c_dd1d, |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Concentration parameters of a Dirichlet distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::domain(format!(
                "dirichlet needs at least 2 cells, got {}",
                alpha.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::domain(format!(
                "dirichlet concentration must be positive, got {a}"
            )));
        }
        Ok(DirichletParams(alpha))
    }

    /// `Dirichlet(value, ..., value)` over `len` cells.
    pub fn symmetric(len: usize, value: f64) -> Result<Self> {
        DirichletParams::new(vec![value; len])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let total = self.total();
        self.0.iter().map(|a| a / total).collect()
    }
}

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        DirichletParams::new(v)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(d: DirichletParams) -> Self {
        d.0
    }
}

/// Inverse-Gaussian distribution with shape `lambda` and mean `mu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseGaussianParams {
    lambda: f64,
    mu: f64,
}

impl InverseGaussianParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) || !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::domain(format!(
                "inverse gaussian needs lambda > 0 and mu > 0, got ({lambda}, {mu})"
            )));
        }
        Ok(InverseGaussianParams { lambda, mu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (l, m) = (self.lambda, self.mu);
        0.5 * (l / (2.0 * std::f64::consts::PI * x.powi(3))).ln()
            - l * (x - m).powi(2) / (2.0 * m * m * x)
    }
}

// Asymptotic coefficients B_{2k} / (2k), k = 1..7.
const DIGAMMA_ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

const DIGAMMA_SHIFT: f64 = 6.0;

/// Digamma function ψ(x) for x > 0.
///
/// Arguments below 6 are shifted up with ψ(x) = ψ(x + 1) − 1/x, then a
/// seven-term asymptotic series is applied.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("digamma needs x > 0, got {x}")));
    }
    let mut z = x;
    let mut shifts = Vec::new();
    while z < DIGAMMA_SHIFT {
        shifts.push(z);
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut series = 0.0;
    let mut pow = inv2;
    for c in DIGAMMA_ASYMPTOTIC {
        series += c * pow;
        pow *= inv2;
    }
    let mut value = z.ln() - 0.5 / z - series;
    // smallest reciprocals first
    for s in shifts.iter().rev() {
        value -= 1.0 / s;
    }
    Ok(value)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma needs x > 0, got {x}")));
    }
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the Lanczos argument in range
        return Ok(ln_gamma(x + 1.0)? - x.ln());
    }
    let z = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = z + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    Ok(0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln())
}

/// E[log p_j] under Dirichlet(alpha): ψ(alpha_j) − ψ(Σ alpha).
pub fn dirichlet_expected_log(params: &DirichletParams) -> Result<Vec<f64>> {
    let psi_total = digamma(params.total())?;
    params
        .alpha()
        .iter()
        .map(|&a| Ok(digamma(a)? - psi_total))
        .collect()
}

/// Differential entropy of a Dirichlet distribution.
pub fn dirichlet_entropy(params: &DirichletParams) -> Result<f64> {
    let alpha = params.alpha();
    let total = params.total();
    let mut ln_beta = -ln_gamma(total)?;
    let mut tail = 0.0;
    for &a in alpha {
        ln_beta += ln_gamma(a)?;
        tail += (a - 1.0) * digamma(a)?;
    }
    Ok(ln_beta + (total - alpha.len() as f64) * digamma(total)? - tail)
}

pub fn sample_dirichlet(params: &DirichletParams, rng: &mut RngStream) -> Vec<f64> {
    let mut draws: Vec<f64> = params
        .alpha()
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("dirichlet concentration validated positive")
                .sample(rng)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        // every gamma draw underflowed; fall back to the mean
        draws = params.mean();
    }
    draws
}

fn check_probability_vector(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::domain("empty probability vector"));
    }
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::domain("probabilities must be finite and nonnegative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "probabilities must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// Multinomial draw by sequential conditional binomials.
pub fn sample_multinomial(n: u64, p: &[f64], rng: &mut RngStream) -> Result<Vec<u64>> {
    check_probability_vector(p)?;
    let mut out = vec![0u64; p.len()];
    let mut remaining = n;
    let mut mass: f64 = p.iter().sum();
    let last = p.len() - 1;
    for (j, &pj) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j == last {
            out[j] = remaining;
            break;
        }
        let q = if mass > 0.0 { (pj / mass).clamp(0.0, 1.0) } else { 0.0 };
        let x = Binomial::new(remaining, q)
            .map_err(|e| Error::Numeric(format!("binomial({remaining}, {q}): {e}")))?
            .sample(rng);
        out[j] = x;
        remaining -= x;
        mass -= pj;
    }
    Ok(out)
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::domain(format!("scale must be positive, got {scale}")));
    }
    Ok(())
}

/// Laplace(location, scale) by inversion.
pub fn sample_laplace(location: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    check_scale(scale)?;
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    Ok(location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

pub fn laplace_log_density(x: f64, location: f64, scale: f64) -> Result<f64> {
    check_scale(scale)?;
    Ok(-(2.0 * scale).ln() - (x - location).abs() / scale)
}

pub fn laplace_cdf(x: f64, location: f64, scale: f64) -> Result<f64> {
    check_scale(scale)?;
    let z = (x - location) / scale;
    Ok(if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    })
}

pub fn sample_rayleigh(scale: f64, rng: &mut RngStream) -> Result<f64> {
    check_scale(scale)?;
    let u: f64 = rng.sample(Open01);
    Ok(scale * (-2.0 * u.ln()).sqrt())
}

/// Laplace(0, scale) drawn as a Gaussian scale mixture: the standard
/// deviation is Rayleigh(scale), then the value is Normal(0, sd²).
pub fn sample_laplace_by_mixture(scale: f64, rng: &mut RngStream) -> Result<f64> {
    let sd = sample_rayleigh(scale, rng)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(sd * z)
}
