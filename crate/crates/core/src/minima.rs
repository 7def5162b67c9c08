//! Local-minimum extraction: multistart bounded descent on a smooth field,
//! followed by single-linkage agglomeration under the Chebyshev distance.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::domain::{BoxDomain, Point};
use crate::error::{Error, Result};
use crate::lhs::lhs_sample;
use crate::metrics::chebyshev_unchecked;
use crate::optim::{minimize, DescentResult, MinimizeOptions};
use crate::random::RandomStream;

/// Agglomeration threshold used in the experiments.
pub const DEFAULT_DELTA: f64 = 1e-3;

/// Number of descent starts for a `p`-dimensional domain:
/// `200^(log3(p + 2))`, rounded to the nearest integer.
pub fn sample_size(p: usize) -> usize {
    assert!(p >= 1, "dimension must be positive");
    let exponent = ((p + 2) as f64).ln() / 3f64.ln();
    200f64.powf(exponent).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub descent: MinimizeOptions,
    /// Results closer than `boundary_tolerance * width` to a bound are skipped.
    pub boundary_tolerance: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            descent: MinimizeOptions {
                max_step: Some(0.05),
                ..MinimizeOptions::default()
            },
            boundary_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    /// Converged interior descents, in start order.
    pub results: Vec<DescentResult>,
    pub skipped_boundary: usize,
    /// Descents that hit the iteration cap, stalled, or failed numerically.
    pub dropped: usize,
}

/// Descend from `n` LHS starts and keep the converged results that stay
/// away from the domain boundary.
///
/// Descents run on the rayon pool; the result order follows the start order,
/// so the outcome does not depend on the number of threads.
pub fn extract<F>(
    field: &F,
    domain: &BoxDomain,
    n: usize,
    stream: &mut RandomStream,
    opts: &ExtractOptions,
) -> Result<Extraction>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    let starts = lhs_sample(domain, n, stream)?.into_points();
    let outcomes: Vec<Result<DescentResult>> = starts
        .par_iter()
        .map(|x0| minimize(|x: &[f64], g: &mut [f64]| field(x, g), x0, domain, &opts.descent))
        .collect();

    let mut out = Extraction::default();
    for outcome in outcomes {
        match outcome {
            Ok(r) if near_boundary(&r.x, domain, opts.boundary_tolerance) => out.skipped_boundary += 1,
            Ok(r) if r.converged => out.results.push(r),
            Ok(_) | Err(Error::NumericFailure { .. }) => out.dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn near_boundary(x: &[f64], domain: &BoxDomain, tol: f64) -> bool {
    x.iter().enumerate().any(|(j, &v)| {
        let tau = tol * domain.width(j);
        v - domain.lower()[j] <= tau || domain.upper()[j] - v <= tau
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Lowest-valued member.
    pub representative: Point,
    pub value: f64,
    pub members: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinimaSet {
    /// Sorted by representative value, lowest first.
    pub clusters: Vec<Cluster>,
    pub skipped_boundary: usize,
    pub raw_converged: usize,
}

impl MinimaSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn representatives(&self) -> Vec<Point> {
        self.clusters.iter().map(|c| c.representative.clone()).collect()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller index as root so the labelling is order-stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage clustering of `(point, value)` pairs: two points share a
/// cluster iff a chain of steps of Chebyshev length `<= delta` joins them.
pub fn agglomerate_points(points: &[(Point, f64)], delta: f64) -> Result<Vec<Cluster>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let n = points.len();
    let mut sets = DisjointSet::new(n);

    // Bucket points into a grid of side delta. Two points in one cell are
    // within delta of each other; linked points sit in neighbouring cells.
    let mut cells: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (i, (x, _)) in points.iter().enumerate() {
        let key = x.iter().map(|v| (v / delta).floor() as i64).collect();
        cells.entry(key).or_default().push(i);
    }
    for members in cells.values() {
        for &i in &members[1..] {
            sets.union(members[0], i);
        }
    }

    // Sweep cells along the first key component.
    let cells: Vec<(Vec<i64>, Vec<usize>)> = cells.into_iter().collect();
    for (k, (key_a, members_a)) in cells.iter().enumerate() {
        for (key_b, members_b) in &cells[k + 1..] {
            if key_b[0] - key_a[0] > 1 {
                break;
            }
            let adjacent = key_a.iter().zip(key_b).all(|(a, b)| (a - b).abs() <= 1);
            if !adjacent || sets.find(members_a[0]) == sets.find(members_b[0]) {
                continue;
            }
            let linked = members_a.iter().any(|&i| {
                members_b
                    .iter()
                    .any(|&j| chebyshev_unchecked(&points[i].0, &points[j].0) <= delta)
            });
            if linked {
                sets.union(members_a[0], members_b[0]);
            }
        }
    }

    let mut best: Vec<Option<(usize, usize)>> = vec![None; n];
    for i in 0..n {
        let root = sets.find(i);
        match &mut best[root] {
            Some((rep, count)) => {
                *count += 1;
                if points[i].1 < points[*rep].1 {
                    *rep = i;
                }
            }
            slot @ None => *slot = Some((i, 1)),
        }
    }
    let mut clusters: Vec<Cluster> = best
        .into_iter()
        .flatten()
        .map(|(rep, members)| Cluster {
            representative: points[rep].0.clone(),
            value: points[rep].1,
            members,
        })
        .collect();
    clusters.sort_by(|a, b| {
        a.value.total_cmp(&b.value).then_with(|| {
            a.representative
                .partial_cmp(&b.representative)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok(clusters)
}

/// Agglomerate an extraction into a [`MinimaSet`].
pub fn agglomerate(extraction: &Extraction, delta: f64) -> Result<MinimaSet> {
    let points: Vec<(Point, f64)> = extraction.results.iter().map(|r| (r.x.clone(), r.f)).collect();
    Ok(MinimaSet {
        clusters: agglomerate_points(&points, delta)?,
        skipped_boundary: extraction.skipped_boundary,
        raw_converged: extraction.results.len(),
    })
}
