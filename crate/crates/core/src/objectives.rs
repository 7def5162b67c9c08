//! Benchmark objective functions and the table of their known local minima.
//!
//! The minima table ships as `data/minima.csv` (values to three decimals) and
//! is parsed once into the registry on first use.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::domain::{BoxDomain, Point};
use crate::error::{Error, Result};

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

const MINIMA_CSV: &str = include_str!("../data/minima.csv");

/// Anything the optimizer can evaluate: a deterministic map from a box domain to the reals.
pub trait BlackBox: Sync {
    fn domain(&self) -> &BoxDomain;

    /// Value at `x`; callers guarantee `x` lies in the domain.
    fn value(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    Alpine02,
    Branin,
    CosineMix,
    Hartmann3,
    Hartmann6,
    Himmelblau,
    ModRastrigin4,
    ModRastrigin8,
    /// Shekel with the given number of terms (5, 7 or 10).
    Shekel(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveFunction {
    name: &'static str,
    kind: FunctionKind,
    domain: BoxDomain,
}

impl ObjectiveFunction {
    pub fn new(kind: FunctionKind, dim: usize) -> Result<Self> {
        let (name, lower, upper) = match (kind, dim) {
            (FunctionKind::Alpine02, 1..=3) => ("Alpine02", vec![0.0; dim], vec![10.0; dim]),
            (FunctionKind::Branin, 2) => ("Branin", vec![-5.0, 0.0], vec![10.0, 15.0]),
            (FunctionKind::CosineMix, 1..=3) => ("CosineMix", vec![-1.0; dim], vec![1.0; dim]),
            (FunctionKind::Hartmann3, 3) => ("Hartmann", vec![0.0; 3], vec![1.0; 3]),
            (FunctionKind::Hartmann6, 6) => ("Hartmann", vec![0.0; 6], vec![1.0; 6]),
            (FunctionKind::Himmelblau, 2) => ("Himmelblau", vec![-5.0; 2], vec![5.0; 2]),
            (FunctionKind::ModRastrigin4, 4) => ("modRastrigin", vec![0.0; 4], vec![1.0; 4]),
            (FunctionKind::ModRastrigin8, 8) => ("modRastrigin", vec![0.0; 8], vec![1.0; 8]),
            (FunctionKind::Shekel(5), 4) => ("Shekel5", vec![0.0; 4], vec![10.0; 4]),
            (FunctionKind::Shekel(7), 4) => ("Shekel7", vec![0.0; 4], vec![10.0; 4]),
            (FunctionKind::Shekel(10), 4) => ("Shekel10", vec![0.0; 4], vec![10.0; 4]),
            _ => {
                return Err(Error::UnknownFunction {
                    name: format!("{kind:?}"),
                    dim,
                })
            }
        };
        Ok(Self {
            name,
            kind,
            domain: BoxDomain::new(lower, upper)?,
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            FunctionKind::Alpine02 => alpine02(x),
            FunctionKind::Branin => branin(x),
            FunctionKind::CosineMix => cosine_mixture(x),
            FunctionKind::Hartmann3 => hartmann(x, &HARTMANN3_A, &HARTMANN3_P),
            FunctionKind::Hartmann6 => hartmann(x, &HARTMANN6_A, &HARTMANN6_P),
            FunctionKind::Himmelblau => himmelblau(x),
            FunctionKind::ModRastrigin4 => mod_rastrigin(x, &[2, 2, 3, 4]),
            FunctionKind::ModRastrigin8 => mod_rastrigin(x, &[1, 2, 1, 2, 1, 3, 1, 4]),
            FunctionKind::Shekel(m) => shekel(x, m),
        }
    }

    /// Central differences with step `h * (upper[j] - lower[j])` per coordinate.
    ///
    /// Errors if a step would leave the domain.
    pub fn numerical_gradient(&self, x: &[f64], h: f64) -> Result<Vec<f64>> {
        self.domain.check(x)?;
        for j in 0..x.len() {
            let step = h * self.domain.width(j);
            if x[j] - step < self.domain.lower()[j] || x[j] + step > self.domain.upper()[j] {
                return Err(Error::BoundaryStep { index: j });
            }
        }
        let mut grad = vec![0.0; x.len()];
        fd_gradient(|z| self.value_unchecked(z), &self.domain, x, h, &mut grad);
        Ok(grad)
    }

    /// Value and finite-difference gradient, switching to one-sided
    /// differences within one step of a bound.
    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        fd_gradient(|z| self.value_unchecked(z), &self.domain, x, DEFAULT_FD_STEP, grad);
        self.value_unchecked(x)
    }
}

impl BlackBox for ObjectiveFunction {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_unchecked(x)
    }
}

/// Finite-difference gradient of `f` at `x`, step `h` relative to the domain width.
pub(crate) fn fd_gradient<F>(f: F, domain: &BoxDomain, x: &[f64], h: f64, grad: &mut [f64])
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let step = h * domain.width(j);
        let lo = (x[j] - step).max(domain.lower()[j]);
        let hi = (x[j] + step).min(domain.upper()[j]);
        probe[j] = hi;
        let f_hi = f(&probe);
        probe[j] = lo;
        let f_lo = f(&probe);
        probe[j] = x[j];
        grad[j] = (f_hi - f_lo) / (hi - lo);
    }
}

fn alpine02(x: &[f64]) -> f64 {
    -x.iter().map(|v| v.sqrt() * v.sin()).product::<f64>()
}

fn branin(x: &[f64]) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    let inner = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
    inner * inner + 10.0 * (1.0 - t) * x[0].cos() + 10.0
}

fn cosine_mixture(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v - 0.1 * (5.0 * PI * v).cos()).sum()
}

fn himmelblau(x: &[f64]) -> f64 {
    let a = x[0] * x[0] + x[1] - 11.0;
    let b = x[0] + x[1] * x[1] - 7.0;
    a * a + b * b
}

/// Each axis contributes `10 (1 + cos(2π k x)) + 2 k x²`, giving `k` minima per axis.
fn mod_rastrigin(x: &[f64], k: &[u32]) -> f64 {
    x.iter()
        .zip(k)
        .map(|(v, &k)| {
            let k = f64::from(k);
            10.0 * (1.0 + (2.0 * PI * k * v).cos()) + 2.0 * k * v * v
        })
        .sum()
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const HARTMANN3_A: [[f64; 3]; 4] = [
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
];

const HARTMANN3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

const HARTMANN6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

const HARTMANN6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

fn hartmann<const D: usize>(x: &[f64], a: &[[f64; D]; 4], p: &[[f64; D]; 4]) -> f64 {
    -(0..4)
        .map(|i| {
            let e: f64 = (0..D).map(|j| a[i][j] * (x[j] - p[i][j]).powi(2)).sum();
            HARTMANN_ALPHA[i] * (-e).exp()
        })
        .sum::<f64>()
}

const SHEKEL_A: [[f64; 4]; 10] = [
    [4.0, 4.0, 4.0, 4.0],
    [1.0, 1.0, 1.0, 1.0],
    [8.0, 8.0, 8.0, 8.0],
    [6.0, 6.0, 6.0, 6.0],
    [3.0, 7.0, 3.0, 7.0],
    [2.0, 9.0, 2.0, 9.0],
    [5.0, 3.0, 5.0, 3.0],
    [8.0, 1.0, 8.0, 1.0],
    [6.0, 2.0, 6.0, 2.0],
    [7.0, 3.6, 7.0, 3.6],
];

const SHEKEL_C: [f64; 10] = [0.1, 0.2, 0.2, 0.4, 0.4, 0.6, 0.3, 0.7, 0.5, 0.5];

fn shekel(x: &[f64], m: usize) -> f64 {
    -SHEKEL_A[..m]
        .iter()
        .zip(&SHEKEL_C)
        .map(|(a, c)| {
            let d: f64 = a.iter().zip(x).map(|(a, v)| (v - a).powi(2)).sum();
            1.0 / (d + c)
        })
        .sum::<f64>()
}

/// Tabulated local minima of one function, global minimum first.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMinima {
    entries: Vec<(Point, f64)>,
}

impl KnownMinima {
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(Point, f64)] {
        &self.entries
    }

    pub fn points(&self) -> Vec<Point> {
        self.entries.iter().map(|(x, _)| x.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub function: ObjectiveFunction,
    pub known: KnownMinima,
}

/// One row of the minima table.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaRow {
    pub function: String,
    pub dim: usize,
    pub index: usize,
    pub x: Point,
    pub y: f64,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    function: String,
    dim: usize,
    index: usize,
    x1: Option<f64>,
    x2: Option<f64>,
    x3: Option<f64>,
    x4: Option<f64>,
    x5: Option<f64>,
    x6: Option<f64>,
    x7: Option<f64>,
    x8: Option<f64>,
    y: f64,
}

pub const MINIMA_HEADER: [&str; 12] = [
    "function", "dim", "index", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "y",
];

/// Parse a minima table. Coordinates beyond `dim` must be empty.
pub fn parse_minima_csv(text: &str) -> Result<Vec<MinimaRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(MINIMA_HEADER.iter().copied()) {
        return Err(Error::MinimaTable {
            line: 1,
            reason: format!("expected header {}", MINIMA_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<RawRow>().enumerate() {
        let line = i + 2;
        let raw = record?;
        let bad = |reason: String| Error::MinimaTable { line, reason };
        if raw.dim == 0 || raw.dim > 8 {
            return Err(bad(format!("dimension {} outside 1..=8", raw.dim)));
        }
        if raw.index == 0 {
            return Err(bad("index must start at 1".into()));
        }
        let coords = [raw.x1, raw.x2, raw.x3, raw.x4, raw.x5, raw.x6, raw.x7, raw.x8];
        let mut x = Vec::with_capacity(raw.dim);
        for (j, c) in coords.iter().enumerate() {
            match (j < raw.dim, c) {
                (true, Some(v)) if v.is_finite() => x.push(*v),
                (true, _) => return Err(bad(format!("missing or non-finite x{}", j + 1))),
                (false, Some(_)) => return Err(bad(format!("unexpected x{}", j + 1))),
                (false, None) => {}
            }
        }
        if !raw.y.is_finite() {
            return Err(bad("non-finite y".into()));
        }
        rows.push(MinimaRow {
            function: raw.function,
            dim: raw.dim,
            index: raw.index,
            x,
            y: raw.y,
        });
    }
    Ok(rows)
}

/// Write rows in the table format (three decimals, unused coordinates empty).
pub fn write_minima_csv<W: Write>(rows: &[MinimaRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MINIMA_HEADER)?;
    for row in rows {
        let mut rec = vec![row.function.clone(), row.dim.to_string(), row.index.to_string()];
        for j in 0..8 {
            rec.push(row.x.get(j).map(|v| format!("{v:.3}")).unwrap_or_default());
        }
        rec.push(format!("{:.3}", row.y));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const CATALOGUE: [(FunctionKind, usize); 15] = [
    (FunctionKind::Alpine02, 1),
    (FunctionKind::Alpine02, 2),
    (FunctionKind::Alpine02, 3),
    (FunctionKind::Branin, 2),
    (FunctionKind::CosineMix, 1),
    (FunctionKind::CosineMix, 2),
    (FunctionKind::CosineMix, 3),
    (FunctionKind::Hartmann3, 3),
    (FunctionKind::Hartmann6, 6),
    (FunctionKind::Himmelblau, 2),
    (FunctionKind::ModRastrigin4, 4),
    (FunctionKind::ModRastrigin8, 8),
    (FunctionKind::Shekel(5), 4),
    (FunctionKind::Shekel(7), 4),
    (FunctionKind::Shekel(10), 4),
];

fn build_registry() -> Result<Vec<RegistryEntry>> {
    let rows = parse_minima_csv(MINIMA_CSV)?;
    CATALOGUE
        .iter()
        .map(|&(kind, dim)| {
            let function = ObjectiveFunction::new(kind, dim)?;
            let mine: Vec<&MinimaRow> = rows
                .iter()
                .filter(|r| r.function == function.name() && r.dim == dim)
                .collect();
            for (i, r) in mine.iter().enumerate() {
                if r.index != i + 1 {
                    return Err(Error::MinimaTable {
                        line: 0,
                        reason: format!("{} p={dim}: row {} out of order", r.function, r.index),
                    });
                }
            }
            let known = KnownMinima {
                entries: mine.iter().map(|r| (r.x.clone(), r.y)).collect(),
            };
            Ok(RegistryEntry { function, known })
        })
        .collect()
}

/// All fifteen benchmark functions with their tabulated minima.
pub fn registry() -> &'static [RegistryEntry] {
    static REGISTRY: OnceLock<Vec<RegistryEntry>> = OnceLock::new();
    REGISTRY.get_or_init(|| build_registry().expect("bundled minima table is well-formed"))
}

fn canonical(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Find a registry entry by name (case and punctuation insensitive, so
/// `Shekel.10` finds `Shekel10`) and dimension.
pub fn lookup(name: &str, dim: usize) -> Result<&'static RegistryEntry> {
    let key = canonical(name);
    registry()
        .iter()
        .find(|e| canonical(e.function.name()) == key && e.function.dim() == dim)
        .ok_or_else(|| Error::UnknownFunction {
            name: name.to_string(),
            dim,
        })
}

/// Rows of the bundled table for one function.
pub fn minima_rows(name: &str, dim: usize) -> Result<Vec<MinimaRow>> {
    let entry = lookup(name, dim)?;
    Ok(entry
        .known
        .entries()
        .iter()
        .enumerate()
        .map(|(i, (x, y))| MinimaRow {
            function: entry.function.name().to_string(),
            dim,
            index: i + 1,
            x: x.clone(),
            y: *y,
        })
        .collect())
}
