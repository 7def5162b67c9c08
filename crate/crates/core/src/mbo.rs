//! Sequential model-based optimization: initial LHS design, then one
//! fit/propose/evaluate round per budgeted evaluation, then a final refit.

use std::time::Instant;

use crate::domain::{Design, EvaluatedDesign, Point};
use crate::error::{Error, Result};
use crate::infill::{propose, CriterionKind};
use crate::lhs::lhs_sample;
use crate::objectives::BlackBox;
use crate::random::RandomStream;
use crate::surrogate::{KrigingConfig, KrigingModel};

#[derive(Debug, Clone, PartialEq)]
pub struct MboConfig {
    pub n_init: usize,
    pub n_seq: usize,
    pub criterion: CriterionKind,
    pub surrogate: KrigingConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub point: Point,
    pub response: f64,
    /// Best response after adding `point`.
    pub incumbent: f64,
    /// Criterion value at `point` under the model that proposed it.
    pub criterion_value: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MboTrace {
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct MboOutcome {
    pub design: EvaluatedDesign,
    /// Surrogate fitted to the full design.
    pub model: KrigingModel,
    pub trace: MboTrace,
}

fn evaluate<B: BlackBox + ?Sized>(objective: &B, x: &[f64]) -> Result<f64> {
    objective.domain().check(x)?;
    let y = objective.value(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::InvalidArgument(format!("objective returned {y} at {x:?}")))
    }
}

/// Run the loop. The objective is evaluated exactly `n_init + n_seq` times.
///
/// Random draws come from sub-streams of `config.seed`: one for the initial
/// design and one per fit and per proposal, so each step is reproducible on
/// its own.
pub fn run<B: BlackBox + ?Sized>(objective: &B, config: &MboConfig) -> Result<MboOutcome> {
    if config.n_init < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_init must be at least 2, got {}",
            config.n_init
        )));
    }
    let domain = objective.domain();
    let root = RandomStream::new(config.seed);

    let initial = lhs_sample(domain, config.n_init, &mut root.substream_named("initial", 0))?;
    let responses = initial
        .points()
        .iter()
        .map(|x| evaluate(objective, x))
        .collect::<Result<Vec<_>>>()?;
    let mut design = EvaluatedDesign::new(Design::new(domain, initial.into_points())?, responses)?;
    let mut trace = MboTrace::default();

    let abort = |source: Error, trace: MboTrace| Error::MboAborted {
        trace: Box::new(trace),
        source: Box::new(source),
    };

    for t in 0..config.n_seq {
        let started = Instant::now();
        let model = match KrigingModel::fit(
            &design,
            domain,
            &config.surrogate,
            &mut root.substream_named("fit", t as u64),
        ) {
            Ok(m) => m,
            Err(e) => return Err(abort(e, trace)),
        };
        let fit_seconds = started.elapsed().as_secs_f64();
        let proposal = match propose(
            &model,
            &design,
            config.criterion,
            &mut root.substream_named("propose", t as u64),
        ) {
            Ok(p) => p,
            Err(e) => return Err(abort(e, trace)),
        };
        let y = evaluate(objective, &proposal.point)?;
        design.push(proposal.point.clone(), y)?;
        trace.records.push(IterationRecord {
            iteration: t,
            point: proposal.point,
            response: y,
            incumbent: design.incumbent_value(),
            criterion_value: proposal.value,
            fit_seconds,
        });
    }

    let fit_stream = &mut root.substream_named("fit", config.n_seq as u64);
    let model = match KrigingModel::fit(&design, domain, &config.surrogate, fit_stream) {
        Ok(m) => m,
        Err(e) => return Err(abort(e, trace)),
    };
    Ok(MboOutcome { design, model, trace })
}
