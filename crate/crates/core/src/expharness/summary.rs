use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::ExperimentRecord;
use crate::error::{Error, Result};
use crate::estimators::Estimator;

/// Box statistics of squared error for one (N, ε, estimator) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: u64,
    pub epsilon: f64,
    pub estimator: Estimator,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OuterMeanRow {
    pub n: u64,
    pub epsilon: f64,
    pub estimator: Estimator,
    pub outer_rep: usize,
    pub count: usize,
    pub mean_sq_error: f64,
}

/// Grouping key ordered by N, then ε, then estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Cell {
    n: u64,
    // Positive finite floats order like their bit patterns.
    epsilon_bits: u64,
    estimator: Estimator,
}

fn cell(r: &ExperimentRecord) -> Cell {
    Cell {
        n: r.n,
        epsilon_bits: r.epsilon.to_bits(),
        estimator: r.estimator,
    }
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

// Sorting before summing makes the mean independent of record order.
fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn summarize(records: &[ExperimentRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Usage("no records to summarize".into()));
    }
    let mut groups: BTreeMap<Cell, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(cell(r)).or_default().push(r.sq_error);
    }
    Ok(groups
        .into_iter()
        .map(|(c, mut v)| {
            let mean = sorted_mean(&mut v);
            SummaryRow {
                n: c.n,
                epsilon: f64::from_bits(c.epsilon_bits),
                estimator: c.estimator,
                count: v.len(),
                mean,
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
                min: v[0],
                max: v[v.len() - 1],
            }
        })
        .collect())
}

/// Mean squared error per outer replicate, averaging over the inner
/// (noise-only) replicates.
pub fn outer_rep_means(records: &[ExperimentRecord]) -> Result<Vec<OuterMeanRow>> {
    if records.is_empty() {
        return Err(Error::Usage("no records to summarize".into()));
    }
    let mut groups: BTreeMap<(Cell, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry((cell(r), r.outer_rep)).or_default().push(r.sq_error);
    }
    Ok(groups
        .into_iter()
        .map(|((c, outer_rep), mut v)| OuterMeanRow {
            n: c.n,
            epsilon: f64::from_bits(c.epsilon_bits),
            estimator: c.estimator,
            outer_rep,
            count: v.len(),
            mean_sq_error: sorted_mean(&mut v),
        })
        .collect())
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    write_rows(rows, out)
}

pub fn write_outer_means_csv<W: Write>(rows: &[OuterMeanRow], out: W) -> Result<()> {
    write_rows(rows, out)
}
