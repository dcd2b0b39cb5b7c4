//! The naive Bayes (conditional independence) model: dimensions, parameters,
//! sufficient statistics and the synthetic data generator.
//!
//! All per-feature arrays are indexed `[k][i][j]`: feature, class, level.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statdist::{sample_dirichlet, sample_multinomial, DirichletParams, RngStream};

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    /// Number of classes `I`.
    pub classes: usize,
    /// Levels `J_k` of each feature; its length is `K`.
    pub levels: Vec<usize>,
    /// Total record count `N`, treated as public.
    pub total: u64,
}

impl ModelShape {
    pub fn new(classes: usize, levels: Vec<usize>, total: u64) -> Result<Self> {
        let shape = ModelShape {
            classes,
            levels,
            total,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// `K` features with the same number of levels.
    pub fn uniform(classes: usize, features: usize, levels: usize, total: u64) -> Result<Self> {
        ModelShape::new(classes, vec![levels; features], total)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::config("need at least one feature"));
        }
        if let Some(j) = self.levels.iter().find(|j| **j < 2) {
            return Err(Error::config(format!(
                "every feature needs at least 2 levels, got {j}"
            )));
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        self.levels.len()
    }

    /// Number of cells across all K two-way tables.
    pub fn cells(&self) -> usize {
        self.classes * self.levels.iter().sum::<usize>()
    }

    /// Builds a `[k][i][j]` array filled by `f(k, i, j)`.
    pub fn tables<T>(&self, mut f: impl FnMut(usize, usize, usize) -> T) -> Vec<Vec<Vec<T>>> {
        self.levels
            .iter()
            .enumerate()
            .map(|(k, &levels)| {
                (0..self.classes)
                    .map(|i| (0..levels).map(|j| f(k, i, j)).collect())
                    .collect()
            })
            .collect()
    }

    /// Checks that a `[k][i][j]` array has this shape.
    pub fn check_tables<T>(&self, what: &str, tables: &[Vec<Vec<T>>]) -> Result<()> {
        if tables.len() != self.features() {
            return Err(Error::domain(format!(
                "{what}: expected {} feature tables, got {}",
                self.features(),
                tables.len()
            )));
        }
        for (k, table) in tables.iter().enumerate() {
            if table.len() != self.classes {
                return Err(Error::domain(format!(
                    "{what}: feature {k} has {} class rows, expected {}",
                    table.len(),
                    self.classes
                )));
            }
            if let Some(row) = table.iter().find(|r| r.len() != self.levels[k]) {
                return Err(Error::domain(format!(
                    "{what}: feature {k} row has {} levels, expected {}",
                    row.len(),
                    self.levels[k]
                )));
            }
        }
        Ok(())
    }
}

/// Dirichlet hyperparameters for the class simplex and each conditional
/// simplex. Used both by the data generator and as the estimation prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha_class: DirichletParams,
    /// Indexed `[k][i]`.
    pub alpha_cond: Vec<Vec<DirichletParams>>,
}

impl PriorSpec {
    /// The same concentration `value` in every cell of every block.
    pub fn symmetric(shape: &ModelShape, value: f64) -> Result<Self> {
        let alpha_cond = shape
            .levels
            .iter()
            .map(|&levels| {
                (0..shape.classes)
                    .map(|_| DirichletParams::symmetric(levels, value))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PriorSpec {
            alpha_class: DirichletParams::symmetric(shape.classes, value)?,
            alpha_cond,
        })
    }

    pub fn uniform(shape: &ModelShape) -> Result<Self> {
        PriorSpec::symmetric(shape, 1.0)
    }

    pub fn check(&self, shape: &ModelShape) -> Result<()> {
        let mismatch = || Error::config("prior blocks do not match the model shape");
        if self.alpha_class.len() != shape.classes || self.alpha_cond.len() != shape.features() {
            return Err(mismatch());
        }
        for (k, blocks) in self.alpha_cond.iter().enumerate() {
            if blocks.len() != shape.classes || blocks.iter().any(|b| b.len() != shape.levels[k]) {
                return Err(mismatch());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `p_i = P(Y = i)`.
    pub class_probs: Vec<f64>,
    /// `p_ij^k = P(X_k = j | Y = i)`, indexed `[k][i][j]`.
    pub cond_probs: Vec<Vec<Vec<f64>>>,
}

fn check_simplex(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::domain(format!("{what}: entries must lie in [0, 1]")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::domain(format!("{what}: sums to {total}, not 1")));
    }
    Ok(())
}

impl ModelParams {
    pub fn validate(&self, shape: &ModelShape) -> Result<()> {
        if self.class_probs.len() != shape.classes {
            return Err(Error::domain("class_probs length does not match shape"));
        }
        check_simplex("class_probs", &self.class_probs)?;
        shape.check_tables("cond_probs", &self.cond_probs)?;
        for table in &self.cond_probs {
            for row in table {
                check_simplex("cond_probs", row)?;
            }
        }
        Ok(())
    }

    /// Uniform distribution over every simplex.
    pub fn uniform(shape: &ModelShape) -> Self {
        ModelParams {
            class_probs: vec![1.0 / shape.classes as f64; shape.classes],
            cond_probs: shape.tables(|k, _, _| 1.0 / shape.levels[k] as f64),
        }
    }
}

/// The exact sufficient statistics: K two-way tables and the class margin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueMarginals {
    pub shape: ModelShape,
    /// `n_ij^k`, indexed `[k][i][j]`.
    pub counts: Vec<Vec<Vec<u64>>>,
    /// `n_i`.
    pub class_counts: Vec<u64>,
}

/// One data point: a class label and a level per feature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub class: usize,
    pub features: Vec<usize>,
}

impl TrueMarginals {
    pub fn zeros(shape: &ModelShape) -> Self {
        TrueMarginals {
            shape: shape.clone(),
            counts: shape.tables(|_, _, _| 0),
            class_counts: vec![0; shape.classes],
        }
    }

    /// Tabulates a list of records; `shape.total` is replaced by the record count.
    pub fn from_records(shape: &ModelShape, records: &[Record]) -> Result<Self> {
        let mut shape = shape.clone();
        shape.total = records.len() as u64;
        let mut out = TrueMarginals::zeros(&shape);
        for r in records {
            out.check_record(r)?;
            out.class_counts[r.class] += 1;
            for (k, &j) in r.features.iter().enumerate() {
                out.counts[k][r.class][j] += 1;
            }
        }
        Ok(out)
    }

    fn check_record(&self, r: &Record) -> Result<()> {
        let ok = r.class < self.shape.classes
            && r.features.len() == self.shape.features()
            && r.features.iter().zip(&self.shape.levels).all(|(j, l)| j < l);
        if ok {
            Ok(())
        } else {
            Err(Error::domain("record does not fit the model shape"))
        }
    }

    /// True iff every table row sums to its class count and the class counts
    /// sum to `N`.
    pub fn check_consistency(&self) -> bool {
        if self.shape.validate().is_err()
            || self.class_counts.len() != self.shape.classes
            || self.shape.check_tables("counts", &self.counts).is_err()
        {
            return false;
        }
        if self.class_counts.iter().sum::<u64>() != self.shape.total {
            return false;
        }
        self.counts.iter().all(|table| {
            table
                .iter()
                .zip(&self.class_counts)
                .all(|(row, &n_i)| row.iter().sum::<u64>() == n_i)
        })
    }

    /// Draws a record that some dataset with these marginals contains.
    pub fn pick_record(&self, rng: &mut RngStream) -> Option<Record> {
        let class = pick_weighted(&self.class_counts, rng)?;
        let features = self
            .counts
            .iter()
            .map(|table| pick_weighted(&table[class], rng))
            .collect::<Option<Vec<_>>>()?;
        Some(Record { class, features })
    }

    /// Marginals after replacing one record by another (a Hamming-distance-1
    /// neighbour when `old != new`).
    pub fn replace_record(&self, old: &Record, new: &Record) -> Result<TrueMarginals> {
        self.check_record(old)?;
        self.check_record(new)?;
        let mut out = self.clone();
        if out.class_counts[old.class] == 0 {
            return Err(Error::domain("no record of that class to remove"));
        }
        out.class_counts[old.class] -= 1;
        out.class_counts[new.class] += 1;
        for k in 0..self.shape.features() {
            let cell = &mut out.counts[k][old.class][old.features[k]];
            if *cell == 0 {
                return Err(Error::domain("no record with that level to remove"));
            }
            *cell -= 1;
            out.counts[k][new.class][new.features[k]] += 1;
        }
        Ok(out)
    }
}

fn pick_weighted(weights: &[u64], rng: &mut RngStream) -> Option<usize> {
    let total: u64 = weights.iter().sum();
    if total == 0 {
        return None;
    }
    let mut u = rng.random_range(0..total);
    for (idx, &w) in weights.iter().enumerate() {
        if u < w {
            return Some(idx);
        }
        u -= w;
    }
    None
}

/// Draws the class simplex and every conditional simplex from their
/// Dirichlet priors.
pub fn sample_model_params(
    shape: &ModelShape,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<ModelParams> {
    shape.validate()?;
    prior.check(shape)?;
    let class_probs = sample_dirichlet(&prior.alpha_class, rng);
    let cond_probs = prior
        .alpha_cond
        .iter()
        .map(|blocks| blocks.iter().map(|a| sample_dirichlet(a, rng)).collect())
        .collect();
    Ok(ModelParams {
        class_probs,
        cond_probs,
    })
}

/// One multinomial draw of the class counts, then one conditional draw per
/// (class, feature) from that shared class margin.
pub fn sample_counts(
    params: &ModelParams,
    shape: &ModelShape,
    rng: &mut RngStream,
) -> Result<TrueMarginals> {
    params.validate(shape)?;
    let class_counts = sample_multinomial(shape.total, &params.class_probs, rng)?;
    let counts = params
        .cond_probs
        .iter()
        .map(|table| {
            table
                .iter()
                .zip(&class_counts)
                .map(|(p, &n_i)| sample_multinomial(n_i, p, rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrueMarginals {
        shape: shape.clone(),
        counts,
        class_counts,
    })
}
