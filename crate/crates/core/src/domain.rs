//! Box domains, design points and evaluated designs.

use crate::error::{Error, Result};

/// A point in the input space, in domain units.
pub type Point = Vec<f64>;

/// Axis-aligned box `[lower, upper]` with strictly positive width on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidDomain(format!(
                    "axis {j}: lower {l} must be finite and strictly below upper {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval on every axis.
    pub fn cube(lower: f64, upper: f64, dim: usize) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn unit(dim: usize) -> Self {
        Self::cube(0.0, 1.0, dim).expect("unit cube is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.width(j)).collect()
    }

    pub fn center(&self) -> Point {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.check(x).is_ok()
    }

    /// Errors if `x` has the wrong length or any coordinate lies outside the box.
    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        for (j, &v) in x.iter().enumerate() {
            // NaN fails both comparisons and is reported as a violation.
            if !(v >= self.lower[j] && v <= self.upper[j]) {
                return Err(Error::DomainViolation {
                    index: j,
                    value: v,
                    lower: self.lower[j],
                    upper: self.upper[j],
                });
            }
        }
        Ok(())
    }

    /// Clamp every coordinate into the box.
    pub fn clamp(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    /// Map `x` into unit-cube coordinates.
    pub fn normalize(&self, x: &[f64]) -> Result<Point> {
        self.check(x)?;
        Ok(self.normalize_unchecked(x))
    }

    /// Inverse of [`normalize`](Self::normalize).
    pub fn denormalize(&self, z: &[f64]) -> Result<Point> {
        BoxDomain::unit(self.dim()).check(z)?;
        Ok(self.denormalize_unchecked(z))
    }

    pub(crate) fn normalize_unchecked(&self, x: &[f64]) -> Point {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.lower[j]) / self.width(j))
            .collect()
    }

    /// Result is clamped so that `z = 0` and `z = 1` land exactly on the bounds.
    pub(crate) fn denormalize_unchecked(&self, z: &[f64]) -> Point {
        z.iter()
            .enumerate()
            .map(|(j, v)| (self.lower[j] + v * self.width(j)).clamp(self.lower[j], self.upper[j]))
            .collect()
    }
}

/// An ordered, non-empty set of points inside a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: Vec<Point>,
}

impl Design {
    pub fn new(domain: &BoxDomain, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        for p in &points {
            domain.check(p)?;
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// Design points together with their observed responses.
///
/// The incumbent is the lowest response; ties resolve to the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedDesign {
    points: Vec<Point>,
    responses: Vec<f64>,
    incumbent: usize,
}

impl EvaluatedDesign {
    pub fn new(design: Design, responses: Vec<f64>) -> Result<Self> {
        let points = design.into_points();
        if points.len() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                actual: responses.len(),
            });
        }
        if let Some(bad) = responses.iter().find(|y| !y.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite response {bad}")));
        }
        let incumbent = argmin(&responses);
        Ok(Self {
            points,
            responses,
            incumbent,
        })
    }

    pub fn push(&mut self, x: Point, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite response {y}")));
        }
        if y < self.responses[self.incumbent] {
            self.incumbent = self.responses.len();
        }
        self.points.push(x);
        self.responses.push(y);
        Ok(())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn incumbent_value(&self) -> f64 {
        self.responses[self.incumbent]
    }

    pub fn incumbent_point(&self) -> &[f64] {
        &self.points[self.incumbent]
    }

    pub fn max_response(&self) -> f64 {
        self.responses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}
