//! Laplace-mechanism release of the K two-way marginal tables.
//!
//! Each table is a histogram query with L1 sensitivity 2 when `N` is public,
//! so per-cell Laplace noise of scale `2/ε` makes one table ε-DP and the K
//! tables together Kε-DP. Estimators downstream only ever see
//! [`NoisyMarginals`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nbmodel::{ModelShape, TrueMarginals};
use crate::statdist::{laplace_log_density, sample_laplace, RngStream};

/// L1 sensitivity of one two-way table when the total is fixed.
pub const HISTOGRAM_SENSITIVITY: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    epsilon_per_query: f64,
    sensitivity: f64,
    scale: f64,
}

impl PrivacySpec {
    pub fn new(epsilon_per_query: f64) -> Result<Self> {
        Ok(PrivacySpec {
            epsilon_per_query,
            sensitivity: HISTOGRAM_SENSITIVITY,
            scale: laplace_scale(epsilon_per_query)?,
        })
    }

    pub fn epsilon_per_query(&self) -> f64 {
        self.epsilon_per_query
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// Laplace scale `b`.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Released tables `m_ij^k = n_ij^k + e_ijk`. Values are raw reals and may
/// be negative or exceed `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyMarginals {
    shape: ModelShape,
    values: Vec<Vec<Vec<f64>>>,
    privacy: PrivacySpec,
}

impl NoisyMarginals {
    pub fn new(shape: ModelShape, values: Vec<Vec<Vec<f64>>>, epsilon_per_query: f64) -> Result<Self> {
        shape.validate()?;
        shape.check_tables("noisy values", &values)?;
        if values.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("noisy values must be finite"));
        }
        Ok(NoisyMarginals {
            shape,
            values,
            privacy: PrivacySpec::new(epsilon_per_query)?,
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    /// `m_ij^k`, indexed `[k][i][j]`.
    pub fn values(&self) -> &[Vec<Vec<f64>>] {
        &self.values
    }

    pub fn privacy(&self) -> &PrivacySpec {
        &self.privacy
    }

    pub fn scale(&self) -> f64 {
        self.privacy.scale
    }

    /// Budget spent by releasing all K tables.
    pub fn total_epsilon(&self) -> f64 {
        self.shape.features() as f64 * self.privacy.epsilon_per_query
    }

    /// Same release with the classes listed in `perm` order
    /// (`new class c` is old class `perm[c]`).
    pub fn permute_classes(&self, perm: &[usize]) -> Result<NoisyMarginals> {
        check_permutation(perm, self.shape.classes)?;
        let values = self
            .values
            .iter()
            .map(|table| perm.iter().map(|&i| table[i].clone()).collect())
            .collect();
        Ok(NoisyMarginals {
            shape: self.shape.clone(),
            values,
            privacy: self.privacy,
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    if perm.len() != len {
        return Err(Error::domain("permutation has the wrong length"));
    }
    for &p in perm {
        if p >= len || std::mem::replace(&mut seen[p], true) {
            return Err(Error::domain("not a permutation"));
        }
    }
    Ok(())
}

/// Laplace scale for one histogram query: `2 / ε`.
pub fn laplace_scale(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(HISTOGRAM_SENSITIVITY / epsilon)
}

/// Adds independent Laplace(0, 2/ε) noise to every cell of every table.
pub fn privatize(truth: &TrueMarginals, epsilon: f64, rng: &mut RngStream) -> Result<NoisyMarginals> {
    let privacy = PrivacySpec::new(epsilon)?;
    let b = privacy.scale;
    let values = truth
        .counts
        .iter()
        .map(|table| {
            table
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&n| sample_laplace(n as f64, b, rng))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoisyMarginals {
        shape: truth.shape.clone(),
        values,
        privacy,
    })
}

/// `log P(probe | t1) − log P(probe | t2)` under the mechanism with per-table
/// budget `epsilon`.
pub fn dp_log_ratio_bound(
    t1: &TrueMarginals,
    t2: &TrueMarginals,
    epsilon: f64,
    probe: &[Vec<Vec<f64>>],
) -> Result<f64> {
    if t1.shape.classes != t2.shape.classes || t1.shape.levels != t2.shape.levels {
        return Err(Error::domain("marginals have different shapes"));
    }
    t1.shape.check_tables("t1", &t1.counts)?;
    t2.shape.check_tables("t2", &t2.counts)?;
    t1.shape.check_tables("probe", probe)?;
    let b = laplace_scale(epsilon)?;
    let mut ratio = 0.0;
    for ((tab1, tab2), tabp) in t1.counts.iter().zip(&t2.counts).zip(probe) {
        for ((r1, r2), rp) in tab1.iter().zip(tab2).zip(tabp) {
            for ((&n1, &n2), &x) in r1.iter().zip(r2).zip(rp) {
                ratio += laplace_log_density(x, n1 as f64, b)? - laplace_log_density(x, n2 as f64, b)?;
            }
        }
    }
    Ok(ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbmodel::{sample_counts, sample_model_params, PriorSpec, Record};
    use rand::Rng;

    fn truth(seed: u64) -> TrueMarginals {
        let s = ModelShape::new(2, vec![2, 3], 30).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let p = sample_model_params(&s, &PriorSpec::uniform(&s).unwrap(), &mut rng).unwrap();
        sample_counts(&p, &s, &mut rng).unwrap()
    }

    #[test]
    fn scale_examples() {
        assert_eq!(laplace_scale(1.0).unwrap(), 2.0);
        assert!((laplace_scale(0.1).unwrap() - 20.0).abs() < 1e-12);
        assert!((laplace_scale(0.0001).unwrap() - 20000.0).abs() < 1e-9);
        assert!(laplace_scale(0.0).is_err());
        assert!(laplace_scale(-1.0).is_err());
    }

    #[test]
    fn release_carries_budget_and_is_deterministic() {
        let t = truth(1);
        let a = privatize(&t, 0.5, &mut RngStream::new(2, 0)).unwrap();
        let b = privatize(&t, 0.5, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scale(), 4.0);
        assert_eq!(a.total_epsilon(), 1.0);
        assert_eq!(a.privacy().sensitivity(), 2.0);
    }

    #[test]
    fn noise_is_centred_with_laplace_variance() {
        let s = ModelShape::new(2, vec![2], 10).unwrap();
        let mut t = TrueMarginals::zeros(&s);
        t.class_counts = vec![4, 6];
        t.counts = vec![vec![vec![1, 3], vec![6, 0]]];
        let eps = 0.8;
        let b = laplace_scale(eps).unwrap();
        let reps = 100_000;
        let mut rng = RngStream::new(5, 0);
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..reps {
            let m = privatize(&t, eps, &mut rng).unwrap();
            let e = m.values()[0][0][1] - 3.0;
            sum += e;
            sumsq += e * e;
        }
        let var = 2.0 * b * b;
        let mean = sum / reps as f64;
        assert!(mean.abs() < 3.0 * (var / reps as f64).sqrt());
        let emp_var = sumsq / reps as f64 - mean * mean;
        let var_se = ((24.0 * b.powi(4) - var * var) / reps as f64).sqrt();
        assert!((emp_var - var).abs() < 3.0 * var_se);
    }

    #[test]
    fn ratio_is_zero_for_identical_inputs() {
        let t = truth(3);
        let m = privatize(&t, 1.0, &mut RngStream::new(9, 9)).unwrap();
        assert_eq!(dp_log_ratio_bound(&t, &t, 1.0, m.values()).unwrap(), 0.0);
    }

    #[test]
    fn single_table_ratio_bounded_by_epsilon() {
        let s = ModelShape::new(2, vec![2], 10).unwrap();
        let t1 = TrueMarginals::from_records(
            &s,
            &[
                Record { class: 0, features: vec![0] },
                Record { class: 1, features: vec![1] },
            ],
        )
        .unwrap();
        let t2 = t1
            .replace_record(&Record { class: 0, features: vec![0] }, &Record { class: 1, features: vec![0] })
            .unwrap();
        for a in -20..20 {
            for c in -20..20 {
                let probe = vec![vec![vec![a as f64 * 0.25, 0.3], vec![c as f64 * 0.25, 1.1]]];
                let r = dp_log_ratio_bound(&t1, &t2, 1.0, &probe).unwrap();
                assert!(r.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn neighbouring_tables_bounded_by_k_epsilon() {
        let mut rng = RngStream::new(44, 0);
        for seed in 0..20 {
            let t1 = truth(seed);
            let old = t1.pick_record(&mut rng).unwrap();
            let new = Record {
                class: rng.random_range(0..2),
                features: vec![rng.random_range(0..2), rng.random_range(0..3)],
            };
            let t2 = t1.replace_record(&old, &new).unwrap();
            let eps = 0.3;
            let probe = privatize(&t1, eps, &mut rng).unwrap();
            let r = dp_log_ratio_bound(&t1, &t2, eps, probe.values()).unwrap();
            assert!(r.abs() <= 2.0 * eps + 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let t1 = truth(0);
        let t2 = TrueMarginals::zeros(&ModelShape::new(2, vec![2, 2], 30).unwrap());
        assert!(dp_log_ratio_bound(&t1, &t2, 1.0, &t2.shape.tables(|_, _, _| 0.0)).is_err());
    }

    #[test]
    fn noisy_constructor_validates() {
        let s = ModelShape::new(2, vec![2], 10).unwrap();
        assert!(NoisyMarginals::new(s.clone(), vec![vec![vec![1.0, 2.0]]], 1.0).is_err());
        assert!(NoisyMarginals::new(s.clone(), vec![vec![vec![1.0, 2.0], vec![0.0, f64::NAN]]], 1.0).is_err());
        assert!(NoisyMarginals::new(s.clone(), vec![vec![vec![1.0, 2.0], vec![0.0, 0.0]]], 0.0).is_err());
        let m = NoisyMarginals::new(s, vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]]], 1.0).unwrap();
        let p = m.permute_classes(&[1, 0]).unwrap();
        assert_eq!(p.values()[0], vec![vec![3.0, 4.0], vec![1.0, 2.0]]);
        assert!(m.permute_classes(&[0, 0]).is_err());
    }
}
