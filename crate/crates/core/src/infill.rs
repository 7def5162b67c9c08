//! Infill criteria and the proposal search that optimizes them.

use crate::domain::{EvaluatedDesign, Point};
use crate::error::{Error, Result};
use crate::lhs::lhs_unit;
use crate::objectives::fd_gradient;
use crate::optim::{minimize, MinimizeOptions};
use crate::random::RandomStream;
use crate::stats::{norm_cdf, norm_pdf, norm_quantile};
use crate::surrogate::KrigingModel;

/// Candidates screened per input dimension.
const CANDIDATES_PER_DIM: usize = 1000;
/// Candidates refined by local descent.
const REFINED: usize = 10;
/// Finite-difference step for the criterion gradient, in unit-cube coordinates.
const FD_STEP: f64 = 1e-6;
/// Proposals closer than this (unit-cube max-norm) to a design point are replaced.
const DUPLICATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriterionKind {
    Ei,
    /// Lower confidence bound, minimized.
    Lcb {
        lambda: f64,
    },
    /// Predictive standard error.
    Se,
    /// Gradient-enhanced inspection of local minima.
    Geilm {
        lambda: f64,
        p: f64,
    },
}

impl CriterionKind {
    pub const DEFAULT_GEILM: CriterionKind = CriterionKind::Geilm { lambda: 2.0, p: 0.001 };
    pub const DEFAULT_LCB: CriterionKind = CriterionKind::Lcb { lambda: 1.0 };

    pub fn name(&self) -> &'static str {
        match self {
            CriterionKind::Ei => "ei",
            CriterionKind::Lcb { .. } => "lcb",
            CriterionKind::Se => "se",
            CriterionKind::Geilm { .. } => "geilm",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CriterionKind::Lcb { lambda } if !(lambda > 0.0) => Err(Error::InvalidArgument(format!(
                "LCB lambda must be positive, got {lambda}"
            ))),
            CriterionKind::Geilm { lambda, p } if !(lambda > 0.0) || !(p > 0.0 && p < 0.5) => Err(
                Error::InvalidArgument(format!("GEILM needs lambda > 0 and p in (0, 0.5), got {lambda}, {p}")),
            ),
            _ => Ok(()),
        }
    }
}

/// `E[max(best - Y, 0)]` for `Y ~ N(mu, s^2)`.
pub fn expected_improvement(mu: f64, s: f64, best: f64) -> f64 {
    let diff = best - mu;
    if s <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / s;
    (diff * norm_cdf(z) + s * norm_pdf(z)).max(0.0)
}

pub fn lcb(mu: f64, s: f64, lambda: f64) -> f64 {
    mu - lambda * s
}

pub fn se(s: f64) -> f64 {
    s
}

/// Standard deviation that puts `y_max` at the `p`-quantile of a normal
/// centred on `best`, floored at `1e-8 * max(1, |best|)`.
pub fn quantile_sd(best: f64, y_max: f64, p: f64) -> f64 {
    let floor = 1e-8 * best.abs().max(1.0);
    ((best - y_max) / norm_quantile(p)).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionContext {
    /// Best observed response.
    pub incumbent: f64,
    pub y_max: f64,
    /// Scale of the probability factor in GEILM.
    pub s_p: f64,
}

impl CriterionContext {
    pub fn new(evaluated: &EvaluatedDesign, p: f64) -> Self {
        let incumbent = evaluated.incumbent_value();
        let y_max = evaluated.max_response();
        Self {
            incumbent,
            y_max,
            s_p: quantile_sd(incumbent, y_max, p),
        }
    }

    /// `Phi((best - mu) / s_p)`; unchanged when responses are rescaled by `a > 0`.
    pub fn probability_factor(&self, mu: f64) -> f64 {
        norm_cdf((self.incumbent - mu) / self.s_p)
    }
}

/// `s * Phi((best - mu) / s_p) * lambda * exp(-lambda * |grad|_inf)`.
pub fn geilm(mu: f64, s: f64, grad: &[f64], ctx: &CriterionContext, lambda: f64) -> f64 {
    let sup = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    s * ctx.probability_factor(mu) * lambda * (-lambda * sup).exp()
}

/// A criterion bound to a fitted model.
pub struct Criterion<'a> {
    model: &'a KrigingModel,
    kind: CriterionKind,
    ctx: CriterionContext,
}

impl<'a> Criterion<'a> {
    pub fn new(model: &'a KrigingModel, evaluated: &EvaluatedDesign, kind: CriterionKind) -> Result<Self> {
        kind.validate()?;
        let p = match kind {
            CriterionKind::Geilm { p, .. } => p,
            _ => 0.001,
        };
        Ok(Self {
            model,
            kind,
            ctx: CriterionContext::new(evaluated, p),
        })
    }

    pub fn context(&self) -> &CriterionContext {
        &self.ctx
    }

    /// Criterion value in its natural orientation.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let z = self.model.domain().normalize(x)?;
        Ok(self.value_unit(&z))
    }

    fn value_unit(&self, z: &[f64]) -> f64 {
        let pred = self.model.predict_unit(z);
        match self.kind {
            CriterionKind::Ei => expected_improvement(pred.mean, pred.sd, self.ctx.incumbent),
            CriterionKind::Lcb { lambda } => lcb(pred.mean, pred.sd, lambda),
            CriterionKind::Se => se(pred.sd),
            CriterionKind::Geilm { lambda, .. } => {
                let x = self.model.domain().denormalize_unchecked(z);
                let mut g = vec![0.0; z.len()];
                self.model.mean_and_gradient(&x, &mut g);
                geilm(pred.mean, pred.sd, &g, &self.ctx, lambda)
            }
        }
    }

    /// Larger is better for every criterion.
    fn score_unit(&self, z: &[f64]) -> f64 {
        let v = self.value_unit(z);
        match self.kind {
            CriterionKind::Lcb { .. } => -v,
            _ => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Point,
    /// Criterion value at `point`.
    pub value: f64,
    /// The optimizer landed on an existing design point and a random point was drawn instead.
    pub replaced_duplicate: bool,
}

/// Maximize the criterion (minimize for LCB) over the model's domain.
///
/// Screens `1000 * p` LHS candidates, refines the best ten with bounded
/// descent on finite-difference gradients, and returns the best refined point.
pub fn propose(
    model: &KrigingModel,
    evaluated: &EvaluatedDesign,
    kind: CriterionKind,
    stream: &mut RandomStream,
) -> Result<Proposal> {
    let criterion = Criterion::new(model, evaluated, kind)?;
    let domain = model.domain();
    let p = domain.dim();
    let candidates = lhs_unit(p, CANDIDATES_PER_DIM * p, stream);
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, z)| (criterion.score_unit(z), i))
        .filter(|(s, _)| s.is_finite())
        .collect();
    if scored.is_empty() {
        return Err(Error::ProposalFailure);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let unit = crate::domain::BoxDomain::unit(p);
    let opts = MinimizeOptions::default();
    let field = |z: &[f64], g: &mut [f64]| {
        fd_gradient(|w| -criterion.score_unit(w), &unit, z, FD_STEP, g);
        -criterion.score_unit(z)
    };
    let mut best = (scored[0].0, candidates[scored[0].1].clone());
    for &(score, i) in scored.iter().take(REFINED) {
        let start = &candidates[i];
        let (s, z) = match minimize(field, start, &unit, &opts) {
            Ok(r) if -r.f >= score => (-r.f, r.x),
            _ => (score, start.clone()),
        };
        if s > best.0 {
            best = (s, z);
        }
    }

    let z = best.1;
    let duplicate = evaluated.points().iter().any(|x| {
        domain
            .normalize_unchecked(x)
            .iter()
            .zip(&z)
            .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL)
    });
    let z = if duplicate { lhs_unit(p, 1, stream).remove(0) } else { z };
    let point = domain.denormalize_unchecked(&z);
    let value = criterion.value_unit(&z);
    Ok(Proposal {
        point,
        value,
        replaced_duplicate: duplicate,
    })
}
