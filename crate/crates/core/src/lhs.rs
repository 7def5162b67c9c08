//! Randomized Latin Hypercube sampling.
//!
//! Draw order per call: for each dimension in turn, one permutation of the
//! strata followed by one jitter per point.

use crate::domain::{BoxDomain, Design, Point};
use crate::error::{Error, Result};
use crate::random::RandomStream;

/// `n` points in `[0, 1]^dim`, one per stratum on every axis.
pub fn lhs_unit(dim: usize, n: usize, stream: &mut RandomStream) -> Vec<Point> {
    let mut points = vec![vec![0.0; dim]; n];
    let inv_n = 1.0 / n as f64;
    for j in 0..dim {
        let perm = stream.permutation(n);
        for (i, point) in points.iter_mut().enumerate() {
            let u = (perm[i] as f64 + stream.uniform()) * inv_n;
            // Rounding can push u onto the next stratum's edge; keep it inside.
            let hi = (perm[i] + 1) as f64 * inv_n;
            point[j] = if u >= hi { f64_prev(hi) } else { u };
        }
    }
    points
}

/// Latin Hypercube Sample of `n` points in `domain`.
pub fn lhs_sample(domain: &BoxDomain, n: usize, stream: &mut RandomStream) -> Result<Design> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let points = lhs_unit(domain.dim(), n, stream)
        .into_iter()
        .map(|z| domain.denormalize_unchecked(&z))
        .collect();
    Design::new(domain, points)
}

fn f64_prev(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}
