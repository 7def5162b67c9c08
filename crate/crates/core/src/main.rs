use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use multimin::error::{Error, Result};
use multimin::harness::{self, Algorithm, Cell, ExperimentConfig, GridOptions, RunParams};
use multimin::minima::DEFAULT_DELTA;
use multimin::objectives::{lookup, minima_rows, registry, write_minima_csv};

#[derive(Parser)]
#[command(name = "multimin", version, about = "Multimodal model-based optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the benchmark functions with their domains and minima counts.
    ListFunctions,
    /// Print the tabulated local minima of one function as CSV.
    DumpMinima {
        #[arg(long)]
        function: String,
        #[arg(long)]
        dim: usize,
    },
    /// Recover the tabulated minima from the true function by multistart descent.
    VerifyOracle {
        /// Omit to check every registered function.
        #[arg(long, requires = "dim")]
        function: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
    },
    /// Run a single experiment and write one CSV row.
    Run {
        #[arg(long)]
        function: String,
        #[arg(long)]
        dim: usize,
        /// One of ei, geilm, lcb, se, lhs.
        #[arg(long)]
        algo: String,
        /// Initial design size (sample size for lhs).
        #[arg(long)]
        n_init: usize,
        #[arg(long, default_value_t = 0)]
        n_seq: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Fill the wall_seconds column.
        #[arg(long)]
        timing: bool,
    },
    /// Run an experiment grid from a JSON config.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config and the environment.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        force: bool,
        /// Print cell and row counts without running anything.
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        timing: bool,
    },
}

fn list_functions() -> Result<bool> {
    let mut out = io::stdout().lock();
    writeln!(out, "function\tdim\tminima\tlower\tupper")?;
    for e in registry() {
        let d = e.function.domain();
        writeln!(
            out,
            "{}\t{}\t{}\t{:?}\t{:?}",
            e.function.name(),
            e.function.dim(),
            e.known.count(),
            d.lower(),
            d.upper()
        )?;
    }
    Ok(true)
}

fn verify(function: Option<String>, dim: Option<usize>, tol: f64, delta: f64) -> Result<bool> {
    let targets: Vec<(String, usize)> = match (function, dim) {
        (Some(f), Some(d)) => vec![(f, d)],
        _ => registry()
            .iter()
            .map(|e| (e.function.name().to_string(), e.function.dim()))
            .collect(),
    };
    let mut all = true;
    for (name, dim) in targets {
        let started = std::time::Instant::now();
        let report = harness::verify_oracle(&name, dim, tol, delta)?;
        let worst = report.matches.iter().map(|m| m.distance).fold(0.0, f64::max);
        println!(
            "{} {}-{}: found {} of {} minima, worst match {:.2e} (tol {:e}), {} starts, {:.1}s",
            if report.passed { "PASS" } else { "FAIL" },
            report.function,
            report.dim,
            report.l,
            report.h,
            worst,
            tol,
            report.starts,
            started.elapsed().as_secs_f64()
        );
        for m in report.matches.iter().filter(|m| m.distance > tol) {
            println!(
                "  minimum {} at {:?}: nearest found {:.3e} away",
                m.index, m.point, m.distance
            );
        }
        all &= report.passed;
    }
    Ok(all)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    function: String,
    dim: usize,
    algo: String,
    n_init: usize,
    n_seq: usize,
    seed: u64,
    out: PathBuf,
    force: bool,
    timing: bool,
) -> Result<bool> {
    let algorithm = Algorithm::parse(&algo)?;
    if algorithm == Algorithm::Lhs && n_seq != 0 {
        return Err(Error::InvalidArgument(
            "lhs runs take no sequential budget (--n-seq 0)".into(),
        ));
    }
    if out.exists() && !force {
        return Err(Error::OutputExists(out));
    }
    let entry = lookup(&function, dim)?;
    let cell = Cell {
        function: entry.function.name().to_string(),
        dim,
        algorithm,
        n_init,
        n_seq,
    };
    let params = RunParams {
        timing,
        ..RunParams::default()
    };
    let record = harness::run_cell(&cell, 0, seed, &params);
    if let Some(reason) = &record.error {
        eprintln!("run failed: {reason}");
    }
    harness::write_records(std::slice::from_ref(&record), BufWriter::new(File::create(&out)?))?;
    Ok(!record.failed())
}

fn grid(
    config: PathBuf,
    out: Option<PathBuf>,
    workers: Option<usize>,
    force: bool,
    dry_run: bool,
    timing: bool,
) -> Result<bool> {
    let cfg = ExperimentConfig::load(&config)?;
    if dry_run {
        let plan = cfg.plan();
        for (algorithm, cells) in &plan.per_algorithm {
            println!("{}: {} cells", algorithm.name(), cells);
        }
        println!("cells: {}", plan.cells);
        println!("replications: {}", cfg.replications);
        println!("rows: {}", plan.rows);
        return Ok(true);
    }
    let out = out.ok_or_else(|| Error::InvalidArgument("--out is required unless --dry-run is given".into()))?;
    let workers = match workers {
        Some(n) => n,
        None => cfg.effective_workers()?,
    };
    let summary = harness::run_grid(&cfg, &out, &GridOptions { workers, force, timing })?;
    eprintln!(
        "wrote {} rows to {} ({} failed)",
        summary.rows,
        out.display(),
        summary.failed
    );
    Ok(summary.failed == 0)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::ListFunctions => list_functions(),
        Command::DumpMinima { function, dim } => {
            write_minima_csv(&minima_rows(&function, dim)?, io::stdout().lock())?;
            Ok(true)
        }
        Command::VerifyOracle {
            function,
            dim,
            tol,
            delta,
        } => verify(function, dim, tol, delta),
        Command::Run {
            function,
            dim,
            algo,
            n_init,
            n_seq,
            seed,
            out,
            force,
            timing,
        } => run_one(function, dim, algo, n_init, n_seq, seed, out, force, timing),
        Command::Grid {
            config,
            out,
            workers,
            force,
            dry_run,
            timing,
        } => grid(config, out, workers, force, dry_run, timing),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
