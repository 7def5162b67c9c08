//! Bounded limited-memory quasi-Newton minimization (L-BFGS-B).
//!
//! Each iteration finds the generalized Cauchy point along the projected
//! steepest-descent path of the quadratic model, minimizes the model over the
//! variables left free at that point, and runs a strong-Wolfe line search along
//! the resulting direction. The limited-memory Hessian approximation is kept as
//! a small dense matrix, which is cheap for the dimensions used here.
//!
//! All work happens in unit-cube coordinates; tolerances refer to those.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::domain::{BoxDomain, Point};
use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH_EVALS: usize = 30;
const BOUND_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the projected gradient's max-norm falls to this.
    pub gradient_tolerance: f64,
    /// Stop when `(f_k - f_{k+1}) <= tol * max(|f_k|, |f_{k+1}|)`.
    pub relative_tolerance: f64,
    /// Upper bound on the max-norm of a single step. `None` leaves steps unrestricted.
    pub max_step: Option<f64>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            memory: 5,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            relative_tolerance: 1e-10,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    RelativeReduction,
    MaxIterations,
    /// No step along the search direction reduced the objective.
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    /// Final iterate, inside the bounds.
    pub x: Point,
    pub f: f64,
    /// Max-norm of the projected gradient in unit-cube coordinates.
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Some coordinate sits on a bound.
    pub hit_bound: bool,
    pub termination: Termination,
}

struct Scaled<'a, F> {
    field: F,
    bounds: &'a BoxDomain,
    widths: Vec<f64>,
    x: Vec<f64>,
    gx: Vec<f64>,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Scaled<'_, F> {
    /// Value and unit-cube gradient at `z`; `None` if anything is non-finite.
    fn eval(&mut self, z: &[f64], g: &mut [f64]) -> Option<f64> {
        for (j, zj) in z.iter().enumerate() {
            let lo = self.bounds.lower()[j];
            let hi = self.bounds.upper()[j];
            self.x[j] = (lo + zj * self.widths[j]).clamp(lo, hi);
        }
        self.evaluations += 1;
        let f = (self.field)(&self.x, &mut self.gx);
        for j in 0..z.len() {
            g[j] = self.gx[j] * self.widths[j];
        }
        (f.is_finite() && g.iter().all(|v| v.is_finite())).then_some(f)
    }
}

struct Iterate {
    z: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn projected_gradient_norm(z: &[f64], g: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .map(|(z, g)| ((z - g).clamp(0.0, 1.0) - z).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense limited-memory BFGS approximation built from `theta * I`.
fn hessian_approx(n: usize, memory: &VecDeque<(Vec<f64>, Vec<f64>)>) -> DMatrix<f64> {
    let theta = memory.back().map(|(s, y)| dot(y, y) / dot(s, y)).unwrap_or(1.0);
    let mut b = DMatrix::<f64>::identity(n, n) * theta;
    for (s, y) in memory {
        let s = DVector::from_column_slice(s);
        let y = DVector::from_column_slice(y);
        let bs = &b * &s;
        let sbs = s.dot(&bs);
        let ys = y.dot(&s);
        b += &y * y.transpose() / ys - &bs * bs.transpose() / sbs;
    }
    b
}

/// Generalized Cauchy point: first local minimizer of the quadratic model
/// along the projected path `P(z - t g)`.
fn cauchy_point(z: &[f64], g: &[f64], b: &DMatrix<f64>) -> Vec<f64> {
    let n = z.len();
    let mut breaks: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut d = DVector::<f64>::zeros(n);
    for j in 0..n {
        let t = if g[j] < 0.0 {
            (z[j] - 1.0) / g[j]
        } else if g[j] > 0.0 {
            z[j] / g[j]
        } else {
            f64::INFINITY
        };
        if t > 0.0 {
            d[j] = -g[j];
            if t.is_finite() {
                breaks.push((t, j));
            }
        }
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let gv = DVector::from_column_slice(g);
    let mut c = DVector::<f64>::zeros(n);
    let mut xc = z.to_vec();
    let mut t_old = 0.0;
    let mut breaks = breaks.into_iter().peekable();
    loop {
        let bd = b * &d;
        let f1 = gv.dot(&d) + (b * &c).dot(&d);
        let f2 = d.dot(&bd);
        if f1 >= 0.0 {
            break;
        }
        let dt_min = if f2 > 0.0 { -f1 / f2 } else { f64::INFINITY };
        let next = breaks.peek().copied();
        match next {
            Some((t_b, _)) if dt_min >= t_b - t_old => {
                let dt = t_b - t_old;
                c += &d * dt;
                for j in 0..n {
                    xc[j] = (z[j] + c[j]).clamp(0.0, 1.0);
                }
                // Fix every variable whose breakpoint is reached.
                while let Some(&(t, j)) = breaks.peek() {
                    if t > t_b {
                        break;
                    }
                    xc[j] = if g[j] < 0.0 { 1.0 } else { 0.0 };
                    c[j] = xc[j] - z[j];
                    d[j] = 0.0;
                    breaks.next();
                }
                t_old = t_b;
            }
            _ => {
                if dt_min.is_finite() {
                    c += &d * dt_min;
                    for j in 0..n {
                        if d[j] != 0.0 {
                            xc[j] = (z[j] + c[j]).clamp(0.0, 1.0);
                        }
                    }
                }
                break;
            }
        }
    }
    xc
}

/// Minimize the model over the variables free at the Cauchy point.
fn subspace_step(z: &[f64], g: &[f64], b: &DMatrix<f64>, xc: &[f64]) -> Vec<f64> {
    let n = z.len();
    let free: Vec<usize> = (0..n).filter(|&j| xc[j] > 0.0 && xc[j] < 1.0).collect();
    if free.is_empty() {
        return xc.to_vec();
    }
    let c = DVector::from_iterator(n, (0..n).map(|j| xc[j] - z[j]));
    let r = DVector::from_column_slice(g) + b * &c;
    let k = free.len();
    let bff = DMatrix::from_fn(k, k, |i, j| b[(free[i], free[j])]);
    let rf = DVector::from_iterator(k, free.iter().map(|&j| -r[j]));
    let Some(chol) = bff.cholesky() else {
        return xc.to_vec();
    };
    let du = chol.solve(&rf);

    // Projected step first; fall back to the truncated step unless projecting
    // still improves on the model value at the Cauchy point.
    let mut projected = xc.to_vec();
    for (i, &j) in free.iter().enumerate() {
        projected[j] = (xc[j] + du[i]).clamp(0.0, 1.0);
    }
    if model_value(z, g, b, &projected) < model_value(z, g, b, xc) {
        return projected;
    }
    let mut alpha: f64 = 1.0;
    for (i, &j) in free.iter().enumerate() {
        if du[i] > 0.0 {
            alpha = alpha.min((1.0 - xc[j]) / du[i]);
        } else if du[i] < 0.0 {
            alpha = alpha.min(-xc[j] / du[i]);
        }
    }
    let mut truncated = xc.to_vec();
    for (i, &j) in free.iter().enumerate() {
        truncated[j] = (xc[j] + alpha * du[i]).clamp(0.0, 1.0);
    }
    truncated
}

/// Quadratic model `g'd + d'Bd/2` at `target`, with `d = target - z`.
fn model_value(z: &[f64], g: &[f64], b: &DMatrix<f64>, target: &[f64]) -> f64 {
    let d = DVector::from_iterator(z.len(), target.iter().zip(z).map(|(t, z)| t - z));
    DVector::from_column_slice(g).dot(&d) + 0.5 * d.dot(&(b * &d))
}

struct LineSearchOutcome {
    next: Iterate,
}

enum LineSearchError {
    NonFinite,
    Stalled,
}

fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

struct Trial {
    alpha: f64,
    f: f64,
    dphi: f64,
    z: Vec<f64>,
    g: Vec<f64>,
}

fn line_search<F: FnMut(&[f64], &mut [f64]) -> f64>(
    problem: &mut Scaled<'_, F>,
    cur: &Iterate,
    dir: &[f64],
    alpha_init: f64,
    alpha_max: f64,
) -> std::result::Result<LineSearchOutcome, LineSearchError> {
    let n = cur.z.len();
    let phi0 = cur.f;
    let dphi0 = dot(&cur.g, dir);
    let mut evals = 0;

    let mut trial = |alpha: f64, evals: &mut usize| -> std::result::Result<Trial, LineSearchError> {
        *evals += 1;
        let z: Vec<f64> = (0..n).map(|j| (cur.z[j] + alpha * dir[j]).clamp(0.0, 1.0)).collect();
        let mut g = vec![0.0; n];
        let f = problem.eval(&z, &mut g).ok_or(LineSearchError::NonFinite)?;
        let dphi = dot(&g, dir);
        Ok(Trial { alpha, f, dphi, z, g })
    };
    let armijo = |t: &Trial| t.f <= phi0 + C1 * t.alpha * dphi0;
    let curvature = |t: &Trial| t.dphi.abs() <= -C2 * dphi0;
    let done = |t: Trial| LineSearchOutcome {
        next: Iterate { z: t.z, f: t.f, g: t.g },
    };

    let mut prev = Trial {
        alpha: 0.0,
        f: phi0,
        dphi: dphi0,
        z: cur.z.clone(),
        g: cur.g.clone(),
    };
    let mut alpha = alpha_init.min(alpha_max);
    let (mut lo, mut hi);
    loop {
        let t = trial(alpha, &mut evals)?;
        if !armijo(&t) || (prev.alpha > 0.0 && t.f >= prev.f) {
            lo = prev;
            hi = t;
            break;
        }
        if curvature(&t) {
            return Ok(done(t));
        }
        if t.dphi >= 0.0 {
            hi = prev;
            lo = t;
            break;
        }
        if alpha >= alpha_max || evals >= MAX_LINE_SEARCH_EVALS {
            // Sufficient decrease holds and the bound blocks further progress.
            return Ok(done(t));
        }
        prev = t;
        alpha = (4.0 * alpha).min(alpha_max);
    }

    // Zoom: `lo` satisfies sufficient decrease and has the lowest value seen.
    while evals < MAX_LINE_SEARCH_EVALS {
        let (a, b) = (lo.alpha, hi.alpha);
        let width = (b - a).abs();
        if width <= 1e-16 * b.abs().max(1.0) {
            break;
        }
        let (left, right) = (a.min(b), a.max(b));
        let guess = cubic_min(a, lo.f, lo.dphi, b, hi.f, hi.dphi).unwrap_or(0.5 * (a + b));
        let alpha = guess.clamp(left + 0.1 * width, right - 0.1 * width);
        let t = trial(alpha, &mut evals)?;
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(&t) {
                return Ok(done(t));
            }
            if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = std::mem::replace(&mut lo, t);
            } else {
                lo = t;
            }
        }
    }
    if lo.alpha > 0.0 && lo.f < phi0 {
        Ok(done(lo))
    } else {
        Err(LineSearchError::Stalled)
    }
}

/// Minimize `field` over `bounds` starting from `x0`.
///
/// `field(x, grad)` returns the value at `x` and writes the gradient (in the
/// original coordinates) into `grad`. It is only called at points inside the
/// bounds.
pub fn minimize<F>(field: F, x0: &[f64], bounds: &BoxDomain, opts: &MinimizeOptions) -> Result<DescentResult>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    bounds.check(x0)?;
    let n = bounds.dim();
    let mut problem = Scaled {
        field,
        bounds,
        widths: bounds.widths(),
        x: vec![0.0; n],
        gx: vec![0.0; n],
        evaluations: 0,
    };

    let z0 = bounds.normalize_unchecked(x0);
    let z0: Vec<f64> = z0.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut g0 = vec![0.0; n];
    let f0 = problem.eval(&z0, &mut g0);

    let finish = |it: &Iterate, iterations, evaluations, termination, converged| DescentResult {
        x: bounds.denormalize_unchecked(&it.z),
        f: it.f,
        projected_gradient_norm: projected_gradient_norm(&it.z, &it.g),
        iterations,
        evaluations,
        converged,
        hit_bound: it.z.iter().any(|&v| v <= BOUND_EPS || v >= 1.0 - BOUND_EPS),
        termination,
    };

    let Some(f0) = f0 else {
        let it = Iterate {
            z: z0,
            f: f64::NAN,
            g: vec![f64::NAN; n],
        };
        let last = finish(&it, 0, problem.evaluations, Termination::LineSearchStalled, false);
        return Err(Error::NumericFailure { last: Box::new(last) });
    };
    let mut cur = Iterate { z: z0, f: f0, g: g0 };
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);
    let mut fresh_start = true;

    let mut iterations = 0;
    loop {
        let pg = projected_gradient_norm(&cur.z, &cur.g);
        if pg <= opts.gradient_tolerance {
            return Ok(finish(
                &cur,
                iterations,
                problem.evaluations,
                Termination::GradientTolerance,
                true,
            ));
        }
        if iterations >= opts.max_iterations {
            return Ok(finish(
                &cur,
                iterations,
                problem.evaluations,
                Termination::MaxIterations,
                false,
            ));
        }

        let b = hessian_approx(n, &memory);
        let xc = cauchy_point(&cur.z, &cur.g, &b);
        let target = subspace_step(&cur.z, &cur.g, &b, &xc);
        let dir: Vec<f64> = target.iter().zip(&cur.z).map(|(t, z)| t - z).collect();
        let slope = dot(&dir, &cur.g);

        let outcome = if slope < 0.0 {
            let mut alpha_max = f64::INFINITY;
            for j in 0..n {
                if dir[j] > 0.0 {
                    alpha_max = alpha_max.min((1.0 - cur.z[j]) / dir[j]);
                } else if dir[j] < 0.0 {
                    alpha_max = alpha_max.min(-cur.z[j] / dir[j]);
                }
            }
            let dir_inf = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if let Some(cap) = opts.max_step {
                alpha_max = alpha_max.min(cap / dir_inf);
            }
            let alpha_init = if fresh_start {
                (1.0 / dot(&dir, &dir).sqrt()).min(alpha_max)
            } else {
                1.0f64.min(alpha_max)
            };
            line_search(&mut problem, &cur, &dir, alpha_init, alpha_max)
        } else {
            Err(LineSearchError::Stalled)
        };

        let next = match outcome {
            Ok(o) => o.next,
            Err(LineSearchError::NonFinite) => {
                let last = finish(
                    &cur,
                    iterations,
                    problem.evaluations,
                    Termination::LineSearchStalled,
                    false,
                );
                return Err(Error::NumericFailure { last: Box::new(last) });
            }
            Err(LineSearchError::Stalled) => {
                if !memory.is_empty() {
                    memory.clear();
                    fresh_start = true;
                    continue;
                }
                let converged = pg <= opts.gradient_tolerance.sqrt() * cur.f.abs().max(1.0);
                return Ok(finish(
                    &cur,
                    iterations,
                    problem.evaluations,
                    Termination::LineSearchStalled,
                    converged,
                ));
            }
        };
        iterations += 1;
        fresh_start = false;

        let s: Vec<f64> = next.z.iter().zip(&cur.z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            if opts.memory > 0 {
                memory.push_back((s, y));
            }
        }

        let reduction = cur.f - next.f;
        let scale = cur.f.abs().max(next.f.abs());
        cur = next;
        if reduction <= opts.relative_tolerance * scale {
            return Ok(finish(
                &cur,
                iterations,
                problem.evaluations,
                Termination::RelativeReduction,
                true,
            ));
        }
    }
}
