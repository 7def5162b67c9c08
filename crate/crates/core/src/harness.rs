//! Experiment grid: configuration, per-cell runs, and CSV output.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Design, EvaluatedDesign, Point};
use crate::error::{Error, Result};
use crate::infill::CriterionKind;
use crate::lhs::lhs_sample;
use crate::mbo::{self, MboConfig};
use crate::metrics::{ahd, chebyshev, peak_ratio};
use crate::minima::{agglomerate, extract, sample_size, ExtractOptions, MinimaSet};
use crate::objectives::{lookup, registry, BlackBox, RegistryEntry};
use crate::random::{fnv1a, mix_seed, RandomStream};
use crate::surrogate::{KrigingConfig, KrigingModel};

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "MULTIMIN_WORKERS";

pub const CSV_HEADER: [&str; 16] = [
    "function",
    "dim",
    "algorithm",
    "n_init",
    "n_seq",
    "n_total",
    "replication",
    "seed",
    "pr",
    "ahd",
    "l",
    "h",
    "interval",
    "skipped_boundary",
    "fit_failures",
    "wall_seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ei,
    Geilm,
    Lcb,
    Se,
    Lhs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ei => "ei",
            Algorithm::Geilm => "geilm",
            Algorithm::Lcb => "lcb",
            Algorithm::Se => "se",
            Algorithm::Lhs => "lhs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ei" => Ok(Algorithm::Ei),
            "geilm" => Ok(Algorithm::Geilm),
            "lcb" => Ok(Algorithm::Lcb),
            "se" => Ok(Algorithm::Se),
            "lhs" => Ok(Algorithm::Lhs),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub name: String,
    pub dim: usize,
}

/// Grid definition. Missing keys take the defaults of the published
/// experiment; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub functions: Vec<FunctionSpec>,
    pub algorithms: Vec<Algorithm>,
    pub n_init: Vec<usize>,
    pub n_seq: Vec<usize>,
    pub n_lhs: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    pub delta: f64,
    pub r: f64,
    pub lambda_g: f64,
    pub p_q: f64,
    /// Zero means one worker per available core.
    pub workers: usize,
}

fn squares(from: usize, to: usize) -> Vec<usize> {
    (from..=to).map(|k| k * k).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            functions: registry()
                .iter()
                .map(|e| FunctionSpec {
                    name: e.function.name().to_string(),
                    dim: e.function.dim(),
                })
                .collect(),
            algorithms: vec![Algorithm::Ei, Algorithm::Geilm, Algorithm::Lhs],
            n_init: squares(3, 8),
            n_seq: squares(3, 12),
            n_lhs: squares(4, 15),
            replications: 30,
            base_seed: 1,
            delta: 1e-3,
            r: 1.0,
            lambda_g: 2.0,
            p_q: 0.001,
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.functions {
            lookup(&f.name, f.dim)?;
        }
        if self.n_init.iter().any(|&n| n < 2) || self.n_lhs.iter().any(|&n| n < 2) {
            return Err(Error::Config("design sizes must be at least 2".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.r >= 1.0) {
            return Err(Error::Config(format!("r must be at least 1, got {}", self.r)));
        }
        if !(self.lambda_g > 0.0) || !(self.p_q > 0.0 && self.p_q < 0.5) {
            return Err(Error::Config("need lambda_g > 0 and 0 < p_q < 0.5".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> RunParams {
        RunParams {
            delta: self.delta,
            r: self.r,
            lambda_g: self.lambda_g,
            p_q: self.p_q,
            ..RunParams::default()
        }
    }

    /// Cells in output order: functions, then algorithms, then design sizes.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for f in &self.functions {
            for &algorithm in &self.algorithms {
                if algorithm == Algorithm::Lhs {
                    for &n in &self.n_lhs {
                        cells.push(Cell::new(f, algorithm, n, 0));
                    }
                } else {
                    for &n_init in &self.n_init {
                        for &n_seq in &self.n_seq {
                            cells.push(Cell::new(f, algorithm, n_init, n_seq));
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn plan(&self) -> GridPlan {
        let cells = self.cells();
        let mut per_algorithm = BTreeMap::new();
        for c in &cells {
            *per_algorithm.entry(c.algorithm).or_insert(0) += 1;
        }
        GridPlan {
            cells: cells.len(),
            per_algorithm,
            rows: cells.len() * self.replications,
        }
    }

    /// Worker count after applying the environment override.
    pub fn effective_workers(&self) -> Result<usize> {
        let n = match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a worker count")))?,
            Err(_) => self.workers,
        };
        Ok(if n == 0 { rayon::current_num_threads() } else { n })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPlan {
    pub cells: usize,
    pub per_algorithm: BTreeMap<Algorithm, usize>,
    pub rows: usize,
}

/// One design-size combination for one function and algorithm. For the LHS
/// baseline `n_init` is the sample size and `n_seq` is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub function: String,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub n_init: usize,
    pub n_seq: usize,
}

impl Cell {
    fn new(f: &FunctionSpec, algorithm: Algorithm, n_init: usize, n_seq: usize) -> Self {
        let entry = lookup(&f.name, f.dim).expect("validated");
        Self {
            function: entry.function.name().to_string(),
            dim: f.dim,
            algorithm,
            n_init,
            n_seq,
        }
    }

    /// Stable hash of the cell's identity.
    pub fn hash(&self) -> u64 {
        let key = format!(
            "function={};dim={};algorithm={};n_init={};n_seq={}",
            self.function,
            self.dim,
            self.algorithm.name(),
            self.n_init,
            self.n_seq
        );
        fnv1a(key.as_bytes())
    }

    /// Seed of one replication, a function of the base seed, the cell and the replication only.
    pub fn seed(&self, base_seed: u64, replication: usize) -> u64 {
        mix_seed(mix_seed(base_seed, self.hash()), replication as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub delta: f64,
    pub r: f64,
    pub lambda_g: f64,
    pub p_q: f64,
    pub surrogate: KrigingConfig,
    pub extraction: ExtractOptions,
    /// Record wall time; off by default so output is byte-reproducible.
    pub timing: bool,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            r: 1.0,
            lambda_g: 2.0,
            p_q: 0.001,
            surrogate: KrigingConfig::default(),
            extraction: ExtractOptions::default(),
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub function: String,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub n_init: usize,
    pub n_seq: usize,
    pub n_total: usize,
    pub replication: usize,
    pub seed: u64,
    pub pr: Option<f64>,
    /// Undefined when the run failed or found no minima.
    pub ahd: Option<f64>,
    pub l: usize,
    pub h: usize,
    pub skipped_boundary: usize,
    pub fit_failures: usize,
    pub wall_seconds: Option<f64>,
    /// Reason the run failed, if it did. Not written to the CSV.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// Peak-ratio band: A [0,5], B (5,50], C (50,500], D (500,1500], E above.
    pub fn interval(&self) -> Option<char> {
        self.pr.map(pr_interval)
    }

    fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.function.clone(),
            self.dim.to_string(),
            self.algorithm.name().to_string(),
            self.n_init.to_string(),
            self.n_seq.to_string(),
            self.n_total.to_string(),
            self.replication.to_string(),
            self.seed.to_string(),
            opt(self.pr),
            opt(self.ahd),
            self.l.to_string(),
            self.h.to_string(),
            self.interval().map(String::from).unwrap_or_default(),
            self.skipped_boundary.to_string(),
            self.fit_failures.to_string(),
            opt(self.wall_seconds),
        ]
    }
}

pub fn pr_interval(pr: f64) -> char {
    if pr <= 5.0 {
        'A'
    } else if pr <= 50.0 {
        'B'
    } else if pr <= 500.0 {
        'C'
    } else if pr <= 1500.0 {
        'D'
    } else {
        'E'
    }
}

/// Extract the minima of a fitted surrogate's mean.
pub fn surrogate_minima(model: &KrigingModel, params: &RunParams, stream: &mut RandomStream) -> Result<MinimaSet> {
    let field = |x: &[f64], g: &mut [f64]| model.mean_and_gradient(x, g);
    let domain = model.domain();
    let ex = extract(&field, domain, sample_size(domain.dim()), stream, &params.extraction)?;
    agglomerate(&ex, params.delta)
}

fn fit_lhs_baseline(entry: &RegistryEntry, n: usize, params: &RunParams, root: &RandomStream) -> Result<KrigingModel> {
    let f = &entry.function;
    let design = lhs_sample(f.domain(), n, &mut root.substream_named("initial", 0))?;
    let ys = design.points().iter().map(|x| f.value(x)).collect();
    let data = EvaluatedDesign::new(Design::new(f.domain(), design.into_points())?, ys)?;
    KrigingModel::fit(
        &data,
        f.domain(),
        &params.surrogate,
        &mut root.substream_named("fit", 0),
    )
}

fn is_fit_failure(e: &Error) -> bool {
    match e {
        Error::FitFailure(_) => true,
        Error::MboAborted { source, .. } => is_fit_failure(source),
        _ => false,
    }
}

/// Run one replication of one cell.
///
/// Failures are reported in the record rather than returned, so one bad
/// cell does not stop a grid.
pub fn run_cell(cell: &Cell, replication: usize, seed: u64, params: &RunParams) -> RunRecord {
    let started = Instant::now();
    let entry = lookup(&cell.function, cell.dim).expect("cells come from validated configs");
    let mut record = RunRecord {
        function: cell.function.clone(),
        dim: cell.dim,
        algorithm: cell.algorithm,
        n_init: cell.n_init,
        n_seq: cell.n_seq,
        n_total: cell.n_init + cell.n_seq,
        replication,
        seed,
        pr: None,
        ahd: None,
        l: 0,
        h: entry.known.count(),
        skipped_boundary: 0,
        fit_failures: 0,
        wall_seconds: None,
        error: None,
    };
    let root = RandomStream::new(seed);
    let model = match cell.algorithm {
        Algorithm::Lhs => fit_lhs_baseline(entry, cell.n_init, params, &root),
        algorithm => {
            let criterion = match algorithm {
                Algorithm::Ei => CriterionKind::Ei,
                Algorithm::Geilm => CriterionKind::Geilm {
                    lambda: params.lambda_g,
                    p: params.p_q,
                },
                Algorithm::Lcb => CriterionKind::DEFAULT_LCB,
                _ => CriterionKind::Se,
            };
            let cfg = MboConfig {
                n_init: cell.n_init,
                n_seq: cell.n_seq,
                criterion,
                surrogate: params.surrogate.clone(),
                seed: root.substream_named("mbo", 0).seed(),
            };
            mbo::run(&entry.function, &cfg).map(|out| out.model)
        }
    };
    let outcome = model.and_then(|m| surrogate_minima(&m, params, &mut root.substream_named("extract", 0)));
    match outcome {
        Ok(set) => {
            let found = set.representatives();
            record.l = found.len();
            record.skipped_boundary = set.skipped_boundary;
            record.pr = peak_ratio(found.len(), record.h).ok();
            record.ahd = ahd(&found, &entry.known.points(), params.r).ok();
        }
        Err(e) => {
            if is_fit_failure(&e) {
                record.fit_failures = 1;
            }
            record.error = Some(e.to_string());
        }
    }
    if params.timing {
        record.wall_seconds = Some(started.elapsed().as_secs_f64());
    }
    record
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSummary {
    pub rows: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GridOptions {
    pub workers: usize,
    pub force: bool,
    pub timing: bool,
}

fn temp_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, record: &RunRecord) -> Result<()> {
    w.write_record(record.csv_fields())?;
    Ok(())
}

/// Write records as CSV (header included) to `out`.
pub fn write_records<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        write_row(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

/// Run every (cell, replication) pair on `workers` threads and write the
/// rows to `out` in cell-then-replication order.
///
/// Rows go to a sibling `.partial` file that is renamed over `out` once
/// complete. Existing output is refused unless `force` is set.
pub fn run_grid(config: &ExperimentConfig, out: &Path, opts: &GridOptions) -> Result<GridSummary> {
    config.validate()?;
    if out.exists() && !opts.force {
        return Err(Error::OutputExists(out.to_path_buf()));
    }
    let params = RunParams {
        timing: opts.timing,
        ..config.params()
    };
    let tasks: Vec<(Cell, usize)> = config
        .cells()
        .into_iter()
        .flat_map(|c| (0..config.replications).map(move |r| (c.clone(), r)))
        .collect();

    let tmp = temp_path(out);
    let file = BufWriter::new(File::create(&tmp)?);
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    writer.write_record(CSV_HEADER)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();

    let written = std::thread::scope(|scope| -> Result<GridSummary> {
        let params = &params;
        let tasks = &tasks;
        let base_seed = config.base_seed;
        scope.spawn(move || {
            pool.install(|| {
                tasks.par_iter().enumerate().for_each_with(tx, |tx, (i, (cell, rep))| {
                    let record = run_cell(cell, *rep, cell.seed(base_seed, *rep), params);
                    // The receiver only disappears after a write error.
                    let _ = tx.send((i, record));
                });
            });
        });

        // Single writer: buffer out-of-order results and emit in task order.
        let mut pending = BTreeMap::new();
        let mut next = 0;
        let mut failed = 0;
        for (i, record) in rx {
            pending.insert(i, record);
            while let Some(record) = pending.remove(&next) {
                if let Some(reason) = &record.error {
                    eprintln!(
                        "row {next}: {} p={} {} n_init={} n_seq={} rep={} failed: {reason}",
                        record.function,
                        record.dim,
                        record.algorithm.name(),
                        record.n_init,
                        record.n_seq,
                        record.replication
                    );
                    failed += 1;
                }
                write_row(&mut writer, &record)?;
                next += 1;
            }
        }
        Ok(GridSummary { rows: next, failed })
    });
    let summary = match written {
        Ok(s) => s,
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
    };
    writer.flush()?;
    drop(writer);
    fs::rename(&tmp, out)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimumMatch {
    /// 1-based row of the tabulated minimum.
    pub index: usize,
    pub point: Point,
    /// Chebyshev distance to the nearest found minimum.
    pub distance: f64,
    /// Value at that found minimum minus the tabulated value.
    pub value_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub function: String,
    pub dim: usize,
    pub h: usize,
    pub l: usize,
    pub starts: usize,
    pub tolerance: f64,
    pub matches: Vec<MinimumMatch>,
    pub passed: bool,
}

/// Seed of the oracle extraction.
const ORACLE_SEED: u64 = 0x0_5EED;

/// Extract the minima of the true function (finite-difference gradients)
/// and compare them with the tabulated minima.
pub fn verify_oracle(name: &str, dim: usize, tolerance: f64, delta: f64) -> Result<OracleReport> {
    let entry = lookup(name, dim)?;
    let f = &entry.function;
    let starts = sample_size(dim);
    let field = |x: &[f64], g: &mut [f64]| f.value_and_gradient(x, g);
    let ex = extract(
        &field,
        f.domain(),
        starts,
        &mut RandomStream::new(ORACLE_SEED),
        &ExtractOptions::default(),
    )?;
    let set = agglomerate(&ex, delta)?;
    let mut matches = Vec::with_capacity(entry.known.count());
    for (i, (x, y)) in entry.known.entries().iter().enumerate() {
        let mut best = (f64::INFINITY, f64::NAN);
        for c in &set.clusters {
            let d = chebyshev(&c.representative, x)?;
            if d < best.0 {
                best = (d, c.value - y);
            }
        }
        matches.push(MinimumMatch {
            index: i + 1,
            point: x.clone(),
            distance: best.0,
            value_error: best.1,
        });
    }
    let passed = set.len() == entry.known.count() && matches.iter().all(|m| m.distance <= tolerance);
    Ok(OracleReport {
        function: f.name().to_string(),
        dim,
        h: entry.known.count(),
        l: set.len(),
        starts,
        tolerance,
        matches,
        passed,
    })
}
