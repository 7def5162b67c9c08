//! Ordinary kriging with an anisotropic Matérn-5/2 kernel.
//!
//! Inputs are mapped to the unit cube and responses standardized before
//! fitting. Lengthscales maximize the profile likelihood (trend and process
//! variance concentrated out); the search runs in log-lengthscale space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::domain::{BoxDomain, EvaluatedDesign, Point};
use crate::error::{Error, Result};
use crate::lhs::lhs_unit;
use crate::optim::{minimize, MinimizeOptions};
use crate::random::RandomStream;

const SQRT5: f64 = 2.236_067_977_499_79;
/// Returned by the likelihood objective where the correlation matrix cannot be factored.
const PENALTY: f64 = 1e30;

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingConfig {
    /// Added to the correlation diagonal, relative to the process variance.
    pub nugget: f64,
    /// The nugget is raised tenfold on factorization failure up to this value.
    pub max_nugget: f64,
    /// Lengthscale range in unit-cube coordinates.
    pub lengthscale_bounds: (f64, f64),
    pub restarts: usize,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        Self {
            nugget: 1e-8,
            max_nugget: 1e-4,
            lengthscale_bounds: (1e-3, 10.0),
            restarts: 5,
        }
    }
}

impl KrigingConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lengthscale_bounds;
        if !(self.nugget > 0.0 && self.max_nugget >= self.nugget) {
            return Err(Error::InvalidArgument(
                "nugget must be positive and below max_nugget".into(),
            ));
        }
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidArgument(
                "lengthscale bounds must satisfy 0 < lo < hi".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument(
                "at least one likelihood restart is required".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Never negative.
    pub sd: f64,
}

/// Matérn-5/2 correlation and the shared derivative factor
/// `(5/3) (1 + sqrt5 r) exp(-sqrt5 r)` at scaled distance `r`.
fn matern52(r: f64) -> (f64, f64) {
    let e = (-SQRT5 * r).exp();
    let k = (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e;
    let c = 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
    (k, c)
}

/// Pairwise squared coordinate differences, laid out `[pair][dim]` for the
/// upper triangle.
struct PairDiffs {
    n: usize,
    dim: usize,
    sq: Vec<f64>,
}

impl PairDiffs {
    fn new(z: &[Point]) -> Self {
        let n = z.len();
        let dim = z[0].len();
        let mut sq = Vec::with_capacity(n * (n - 1) / 2 * dim);
        for i in 0..n {
            for k in i + 1..n {
                sq.extend(z[i].iter().zip(&z[k]).map(|(a, b)| (a - b) * (a - b)));
            }
        }
        Self { n, dim, sq }
    }
}

struct Factored {
    chol: Cholesky<f64, Dyn>,
    beta: f64,
    sigma2: f64,
    alpha: DVector<f64>,
    rinv_one: DVector<f64>,
    one_rinv_one: f64,
    nll: f64,
}

fn correlation(diffs: &PairDiffs, inv_theta2: &[f64], nugget: f64) -> (DMatrix<f64>, Vec<f64>) {
    let n = diffs.n;
    let mut r = DMatrix::<f64>::identity(n, n) * (1.0 + nugget);
    let mut factors = Vec::with_capacity(n * (n - 1) / 2);
    let mut pair = 0;
    for i in 0..n {
        for k in i + 1..n {
            let d = &diffs.sq[pair * diffs.dim..(pair + 1) * diffs.dim];
            let dist = d.iter().zip(inv_theta2).map(|(a, b)| a * b).sum::<f64>().sqrt();
            let (kv, c) = matern52(dist);
            r[(i, k)] = kv;
            r[(k, i)] = kv;
            factors.push(c);
            pair += 1;
        }
    }
    (r, factors)
}

fn factor(r: DMatrix<f64>, y: &DVector<f64>) -> Option<Factored> {
    let n = y.len();
    let chol = r.cholesky()?;
    let one = DVector::<f64>::from_element(n, 1.0);
    let rinv_one = chol.solve(&one);
    let one_rinv_one = one.dot(&rinv_one);
    let beta = rinv_one.dot(y) / one_rinv_one;
    let resid = y - DVector::from_element(n, beta);
    let alpha = chol.solve(&resid);
    let sigma2 = resid.dot(&alpha) / n as f64;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let nll = 0.5 * n as f64 * sigma2.ln() + 0.5 * log_det;
    (sigma2 > 0.0 && nll.is_finite() && one_rinv_one > 0.0).then_some(Factored {
        chol,
        beta,
        sigma2,
        alpha,
        rinv_one,
        one_rinv_one,
        nll,
    })
}

/// Negative profile log-likelihood (up to a constant) at `phi = ln(theta)`,
/// with its gradient.
fn profile_nll(diffs: &PairDiffs, y: &DVector<f64>, nugget: f64, phi: &[f64], grad: &mut [f64]) -> f64 {
    let inv_theta2: Vec<f64> = phi.iter().map(|p| (-2.0 * p).exp()).collect();
    let (r, factors) = correlation(diffs, &inv_theta2, nugget);
    let Some(f) = factor(r, y) else {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return PENALTY;
    };
    // d nll / d phi_j = 1/2 tr(R^-1 dR_j) - 1/2 alpha' dR_j alpha / sigma2,
    // with dR_j[i,k] = c_ik * d_ikj^2 / theta_j^2 (zero on the diagonal).
    let rinv = f.chol.inverse();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = y.len();
    let mut pair = 0;
    for i in 0..n {
        for k in i + 1..n {
            let w = 2.0 * (rinv[(i, k)] - f.alpha[i] * f.alpha[k] / f.sigma2) * factors[pair];
            let d = &diffs.sq[pair * diffs.dim..(pair + 1) * diffs.dim];
            for j in 0..diffs.dim {
                grad[j] += 0.5 * w * d[j] * inv_theta2[j];
            }
            pair += 1;
        }
    }
    f.nll
}

#[derive(Debug, Clone)]
pub struct KrigingModel {
    domain: BoxDomain,
    /// Training inputs in unit-cube coordinates.
    z: Vec<Point>,
    y_shift: f64,
    y_scale: f64,
    theta: Vec<f64>,
    nugget: f64,
    beta: f64,
    sigma2: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    rinv_one: DVector<f64>,
    one_rinv_one: f64,
    log_likelihood: f64,
    start_log_likelihoods: Vec<f64>,
}

impl KrigingModel {
    /// Fit to an evaluated design. Restart points for the likelihood search
    /// are drawn from `stream`.
    pub fn fit(
        data: &EvaluatedDesign,
        domain: &BoxDomain,
        config: &KrigingConfig,
        stream: &mut RandomStream,
    ) -> Result<Self> {
        config.validate()?;
        let n = data.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "kriging needs at least 2 points, got {n}"
            )));
        }
        if data.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                actual: data.dim(),
            });
        }
        let z: Vec<Point> = data
            .points()
            .iter()
            .map(|x| domain.normalize(x))
            .collect::<Result<_>>()?;
        let y = data.responses();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Ok(Self::constant(domain, z, mean, config));
        }
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - mean) / sd));
        let diffs = PairDiffs::new(&z);

        let p = domain.dim();
        let (lo, hi) = config.lengthscale_bounds;
        let phi_box = BoxDomain::cube(lo.ln(), hi.ln(), p)?;
        let mut starts = vec![phi_box.center()];
        for u in lhs_unit(p, config.restarts - 1, stream) {
            starts.push(phi_box.denormalize(&u)?);
        }

        let mut nugget = config.nugget;
        loop {
            let objective = |phi: &[f64], g: &mut [f64]| profile_nll(&diffs, &ys, nugget, phi, g);
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut start_values = Vec::with_capacity(starts.len());
            for s in &starts {
                let mut g = vec![0.0; p];
                start_values.push(objective(s, &mut g));
                let r = match minimize(objective, s, &phi_box, &MinimizeOptions::default()) {
                    Ok(r) => r,
                    Err(Error::NumericFailure { last }) => *last,
                    Err(e) => return Err(e),
                };
                if r.f < PENALTY && best.as_ref().is_none_or(|(f, _)| r.f < *f) {
                    best = Some((r.f, r.x));
                }
            }
            if let Some((_, phi)) = best {
                let theta: Vec<f64> = phi.iter().map(|v| v.exp().clamp(lo, hi)).collect();
                let inv_theta2: Vec<f64> = theta.iter().map(|t| 1.0 / (t * t)).collect();
                let (r, _) = correlation(&diffs, &inv_theta2, nugget);
                if let Some(f) = factor(r, &ys) {
                    return Ok(Self {
                        domain: domain.clone(),
                        z,
                        y_shift: mean,
                        y_scale: sd,
                        theta,
                        nugget,
                        beta: f.beta,
                        sigma2: f.sigma2,
                        chol: Some(f.chol),
                        alpha: f.alpha,
                        rinv_one: f.rinv_one,
                        one_rinv_one: f.one_rinv_one,
                        log_likelihood: -f.nll,
                        start_log_likelihoods: start_values.iter().map(|v| -v).collect(),
                    });
                }
            }
            if nugget * 10.0 > config.max_nugget * (1.0 + 1e-9) {
                return Err(Error::FitFailure(format!(
                    "correlation matrix singular with nugget up to {:e}",
                    config.max_nugget
                )));
            }
            nugget *= 10.0;
        }
    }

    /// Pure-nugget model for responses without spread.
    fn constant(domain: &BoxDomain, z: Vec<Point>, value: f64, config: &KrigingConfig) -> Self {
        let n = z.len();
        let p = domain.dim();
        Self {
            domain: domain.clone(),
            z,
            y_shift: value,
            y_scale: 1.0,
            theta: vec![config.lengthscale_bounds.0; p],
            nugget: config.nugget,
            beta: 0.0,
            sigma2: config.nugget,
            chol: None,
            alpha: DVector::zeros(n),
            rinv_one: DVector::zeros(n),
            one_rinv_one: 1.0,
            log_likelihood: 0.0,
            start_log_likelihoods: Vec::new(),
        }
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Lengthscales in unit-cube coordinates.
    pub fn lengthscales(&self) -> &[f64] {
        &self.theta
    }

    /// Nugget in effect after any escalation.
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Trend coefficient in response units.
    pub fn trend(&self) -> f64 {
        self.y_shift + self.y_scale * self.beta
    }

    /// Process variance in squared response units.
    pub fn process_variance(&self) -> f64 {
        self.sigma2 * self.y_scale * self.y_scale
    }

    /// Maximized profile log-likelihood of the standardized responses, up to a constant.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Profile log-likelihood at each restart's initial point.
    pub fn start_log_likelihoods(&self) -> &[f64] {
        &self.start_log_likelihoods
    }

    /// True when the responses had no spread and a pure-nugget model was used.
    pub fn is_constant(&self) -> bool {
        self.chol.is_none()
    }

    /// Correlations with the training points; the nugget is added only on an
    /// exact match so training responses are reproduced.
    fn cross(&self, z: &[f64]) -> (DVector<f64>, Vec<f64>) {
        let n = self.z.len();
        let mut r = DVector::zeros(n);
        let mut c = vec![0.0; n];
        for (i, zi) in self.z.iter().enumerate() {
            let mut s = 0.0;
            let mut exact = true;
            for j in 0..z.len() {
                let d = z[j] - zi[j];
                exact &= d == 0.0;
                s += d * d / (self.theta[j] * self.theta[j]);
            }
            let (k, ci) = matern52(s.sqrt());
            r[i] = if exact { k + self.nugget } else { k };
            c[i] = ci;
        }
        (r, c)
    }

    fn checked_unit(&self, x: &[f64]) -> Result<Point> {
        if x.len() != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                actual: x.len(),
            });
        }
        self.domain.normalize(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let z = self.checked_unit(x)?;
        Ok(self.predict_unit(&z))
    }

    pub(crate) fn predict_unit(&self, z: &[f64]) -> Prediction {
        let Some(chol) = &self.chol else {
            return Prediction {
                mean: self.y_shift,
                sd: self.sigma2.sqrt(),
            };
        };
        let (r, _) = self.cross(z);
        let mean = self.beta + r.dot(&self.alpha);
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&r)
            .unwrap_or_else(|| DVector::zeros(r.len()));
        let u = 1.0 - self.rinv_one.dot(&r);
        let var = self.sigma2 * (1.0 + self.nugget - v.norm_squared() + u * u / self.one_rinv_one);
        Prediction {
            mean: self.y_shift + self.y_scale * mean,
            sd: self.y_scale * var.max(0.0).sqrt(),
        }
    }

    /// Gradient of the predictive mean in original coordinates.
    pub fn mean_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.checked_unit(x)?;
        let mut g = vec![0.0; z.len()];
        self.mean_and_gradient_unit(&z, &mut g);
        Ok(g)
    }

    /// Predictive mean with its gradient, both in original units. `x` must lie
    /// in the domain; it is clamped otherwise.
    pub fn mean_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut z = self.domain.normalize_unchecked(x);
        z.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self.mean_and_gradient_unit(&z, grad)
    }

    fn mean_and_gradient_unit(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if self.chol.is_none() {
            return self.y_shift;
        }
        let (r, c) = self.cross(z);
        // dk/dz_j = -c (z_j - z_ij) / theta_j^2
        for (i, zi) in self.z.iter().enumerate() {
            let w = -self.alpha[i] * c[i];
            for j in 0..z.len() {
                grad[j] += w * (z[j] - zi[j]) / (self.theta[j] * self.theta[j]);
            }
        }
        for (j, g) in grad.iter_mut().enumerate() {
            *g *= self.y_scale / self.domain.width(j);
        }
        self.y_shift + self.y_scale * (self.beta + r.dot(&self.alpha))
    }
}
