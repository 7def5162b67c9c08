//! Solution-set quality: peak ratio and averaged Hausdorff distance.

use crate::domain::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub pr: f64,
    pub ahd: f64,
    /// Number of minima found.
    pub l: usize,
    /// Number of true minima.
    pub h: usize,
}

impl MetricRecord {
    pub fn compute(found: &[Point], truth: &[Point], r: f64) -> Result<Self> {
        Ok(Self {
            pr: peak_ratio(found.len(), truth.len())?,
            ahd: ahd(found, truth, r)?,
            l: found.len(),
            h: truth.len(),
        })
    }
}

pub fn chebyshev(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(chebyshev_unchecked(a, b))
}

pub(crate) fn chebyshev_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `l / h`. Values above one mean more minima were reported than exist.
pub fn peak_ratio(l: usize, h: usize) -> Result<f64> {
    if h == 0 {
        return Err(Error::InvalidArgument("peak ratio needs h >= 1".into()));
    }
    Ok(l as f64 / h as f64)
}

/// Mean of nearest-neighbour distances from `from` into `to`, raised to `r`,
/// then taken to the power `1/r`.
fn directed(from: &[Point], to: &[Point], r: f64) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|a| to.iter().map(|b| euclidean(a, b)).fold(f64::INFINITY, f64::min).powf(r))
        .sum();
    (sum / from.len() as f64).powf(1.0 / r)
}

/// Averaged Hausdorff distance of order `r` between a found set and a
/// reference set: the larger of the two directed mean nearest-neighbour terms.
pub fn ahd(found: &[Point], reference: &[Point], r: f64) -> Result<f64> {
    if found.is_empty() || reference.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("ahd order must be >= 1, got {r}")));
    }
    let dim = reference[0].len();
    if let Some(bad) = found.iter().chain(reference).find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    Ok(directed(found, reference, r).max(directed(reference, found, r)))
}
