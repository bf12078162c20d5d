//! Command-line front end for the aoi toolkit.
//!
//! Subcommands: `age` (closed form), `solve` (finite-buffer blocking
//! system), `sim` (discrete-event simulation), `fig4` and `contour`
//! (CSV sweeps). Exit codes: 0 success, 1 domain or solver failure,
//! 2 usage error.

use clap::{Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use aoi::mm1::{self, Mm1Error};
use aoi::sim::{simulate, Buffer, SimConfig};
use aoi::{closed_form, sweep};

/// Largest buffer the dense generic engine accepts; use the recursive
/// engine beyond it.
const GENERIC_ENGINE_CAP: usize = 50;

#[derive(Parser)]
#[command(
    name = "aoi",
    version,
    about = "Average age of information for Poisson sources sharing an FCFS M/M/1 queue"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form average age of one source among N sharing the queue
    Age {
        /// Service rate
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Comma-separated offered loads, one per source
        #[arg(long, value_delimiter = ',', required = true)]
        loads: Vec<f64>,
        /// 1-based index of the source of interest
        #[arg(long, default_value_t = 1)]
        source: usize,
        /// Print every source's age instead
        #[arg(long)]
        all: bool,
    },
    /// Average age in the size-m blocking system
    Solve {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Offered load of the source of interest
        #[arg(long = "rho-i")]
        rho_i: f64,
        /// Aggregate competing offered load
        #[arg(long = "rho-other", default_value_t = 0.0)]
        rho_other: f64,
        /// Buffer size
        #[arg(long, short)]
        m: usize,
        #[arg(long, value_enum, default_value_t = Engine::Recursive)]
        engine: Engine,
    },
    /// Discrete-event simulation estimate of per-source average age
    Sim {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Comma-separated per-source arrival rates
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        /// Departures to simulate (scientific notation accepted)
        #[arg(long, default_value = "1e6")]
        events: String,
        /// Buffer size, or "inf" for an unbounded queue
        #[arg(long, default_value = "inf")]
        buffer: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of departures discarded before measurement
        #[arg(long, default_value_t = 0.1)]
        warmup: f64,
        /// Batch count for batch-means standard errors
        #[arg(long, default_value_t = 30)]
        batches: usize,
        /// Also write one CSV row per source to this path
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// CSV sweep of source-1 age over its load: closed form next to simulation
    Fig4 {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Competing loads, one sweep per value
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.3, 0.5])]
        rho2: Vec<f64>,
        #[arg(long = "rho1-start", default_value_t = 0.02)]
        rho1_start: f64,
        #[arg(long = "rho1-stop", default_value_t = 0.98)]
        rho1_stop: f64,
        #[arg(long = "rho1-step", default_value_t = 0.02)]
        rho1_step: f64,
        /// Departures per simulated point (scientific notation accepted)
        #[arg(long, default_value = "1e6")]
        events: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path (defaults to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV sweep of both sources' closed-form ages over load splits
    Contour {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long = "rho-start", default_value_t = 0.02)]
        rho_start: f64,
        #[arg(long = "rho-stop", default_value_t = 0.98)]
        rho_stop: f64,
        #[arg(long = "rho-step", default_value_t = 0.02)]
        rho_step: f64,
        #[arg(long = "split-start", default_value_t = 0.05)]
        split_start: f64,
        #[arg(long = "split-stop", default_value_t = 0.95)]
        split_stop: f64,
        #[arg(long = "split-step", default_value_t = 0.05)]
        split_step: f64,
        /// Output path (defaults to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    /// Dense hybrid-system solve; capped at m = 50
    Generic,
    /// O(m) telescoped recursion
    Recursive,
}

#[derive(Debug)]
enum CliError {
    /// Malformed invocation: exit 2.
    Usage(String),
    /// Well-formed request outside the model domain or a solver failure:
    /// exit 1.
    Domain(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Domain(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Age {
            mu,
            loads,
            source,
            all,
        } => cmd_age(mu, &loads, source, all),
        Command::Solve {
            mu,
            rho_i,
            rho_other,
            m,
            engine,
        } => cmd_solve(mu, rho_i, rho_other, m, engine),
        Command::Sim {
            mu,
            lambdas,
            events,
            buffer,
            seed,
            warmup,
            batches,
            csv,
        } => cmd_sim(mu, lambdas, &events, &buffer, seed, warmup, batches, csv),
        Command::Fig4 {
            mu,
            rho2,
            rho1_start,
            rho1_stop,
            rho1_step,
            events,
            seed,
            out,
        } => cmd_fig4(mu, &rho2, rho1_start, rho1_stop, rho1_step, &events, seed, out),
        Command::Contour {
            mu,
            rho_start,
            rho_stop,
            rho_step,
            split_start,
            split_stop,
            split_step,
            out,
        } => cmd_contour(
            mu,
            (rho_start, rho_stop, rho_step),
            (split_start, split_stop, split_step),
            out,
        ),
    }
}

/// Formats a value with 10 significant digits for table output.
fn fmt10(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..=12).contains(&exp) {
        format!("{v:.9e}")
    } else {
        let decimals = (9 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    }
}

/// `AOI_SEED`, when set, overrides any `--seed` flag.
fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("AOI_SEED") {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::usage(format!("AOI_SEED is not a decimal u64: {s:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(CliError::usage(format!("AOI_SEED unreadable: {e}"))),
    }
}

fn parse_events(s: &str) -> Result<u64, CliError> {
    let n: f64 = s
        .parse()
        .map_err(|_| CliError::usage(format!("events count {s:?} is not a number")))?;
    if !n.is_finite() || n < 1.0 || n > 1e15 {
        return Err(CliError::usage(format!("events count {s} out of range")));
    }
    Ok(n.round() as u64)
}

fn parse_buffer(s: &str) -> Result<Buffer, CliError> {
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
        return Ok(Buffer::Infinite);
    }
    s.parse::<usize>()
        .map(Buffer::Finite)
        .map_err(|_| CliError::usage(format!("buffer {s:?} is neither \"inf\" nor an integer")))
}

fn csv_writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn cmd_age(mu: f64, loads: &[f64], source: usize, all: bool) -> Result<(), CliError> {
    if loads.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(CliError::usage(
            "every load must be a strictly positive number",
        ));
    }
    if !(1..=loads.len()).contains(&source) {
        return Err(CliError::usage(format!(
            "source {source} out of range 1..={}",
            loads.len()
        )));
    }
    let total: f64 = loads.iter().sum();
    let age_of = |i: usize| closed_form::average_age_source(mu, loads[i], total - loads[i]);

    if all {
        for i in 0..loads.len() {
            let age = age_of(i).map_err(|e| CliError::domain(e.to_string()))?;
            println!("source {}: {}", i + 1, fmt10(age));
        }
    } else {
        let age = age_of(source - 1).map_err(|e| CliError::domain(e.to_string()))?;
        println!("{}", fmt10(age));
    }
    Ok(())
}

fn cmd_solve(mu: f64, rho_i: f64, rho_other: f64, m: usize, engine: Engine) -> Result<(), CliError> {
    if engine == Engine::Generic && m > GENERIC_ENGINE_CAP {
        return Err(CliError::usage(format!(
            "generic engine is capped at m = {GENERIC_ENGINE_CAP}; use --engine recursive"
        )));
    }
    let params = mm1::Mm1Params::new(mu, rho_i, rho_other, m).map_err(|e| match e {
        Mm1Error::InvalidParams(msg) => CliError::usage(msg),
        other => CliError::domain(other.to_string()),
    })?;
    let age = match engine {
        Engine::Generic => mm1::age_blocking(&params),
        Engine::Recursive => mm1::age_blocking_recursive(&params),
    }
    .map_err(|e| CliError::domain(e.to_string()))?;
    println!("{}", fmt10(age));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sim(
    mu: f64,
    lambdas: Vec<f64>,
    events: &str,
    buffer: &str,
    seed: u64,
    warmup: f64,
    batches: usize,
    csv: Option<PathBuf>,
) -> Result<(), CliError> {
    let config = SimConfig {
        mu,
        lambdas,
        buffer: parse_buffer(buffer)?,
        num_events: parse_events(events)?,
        warmup_fraction: warmup,
        seed: effective_seed(seed)?,
        batches,
    };
    config.validate().map_err(|e| match e {
        aoi::sim::SimError::UnstableLoad(rho) => {
            CliError::domain(format!("unstable load: total rho {rho} >= 1"))
        }
        other => CliError::usage(other.to_string()),
    })?;

    let est = simulate(&config).map_err(|e| CliError::domain(e.to_string()))?;
    for (i, (mean, se)) in est.mean_age.iter().zip(&est.age_se).enumerate() {
        println!("source {}: {} \u{b1} {}", i + 1, fmt10(*mean), fmt10(*se));
    }
    println!(
        "events {} horizon {} blocked {}",
        est.events,
        fmt10(est.horizon),
        est.blocked
    );

    if let Some(path) = csv {
        let mut w = csv_writer(Some(&path))?;
        w.write_all(b"source,lambda,mean_age,se\n")?;
        for (i, (mean, se)) in est.mean_age.iter().zip(&est.age_se).enumerate() {
            writeln!(w, "{},{},{},{}", i + 1, config.lambdas[i], mean, se)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fig4(
    mu: f64,
    rho2: &[f64],
    rho1_start: f64,
    rho1_stop: f64,
    rho1_step: f64,
    events: &str,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if !(rho1_step > 0.0 && rho1_stop >= rho1_start && rho1_start > 0.0) {
        return Err(CliError::usage("need 0 < rho1-start <= rho1-stop and rho1-step > 0"));
    }
    let events = parse_events(events)?;
    let seed = effective_seed(seed)?;
    let rho1_values = sweep::grid(rho1_start, rho1_stop, rho1_step);

    let (rows, skipped) = sweep::fig4_rows(mu, rho2, &rho1_values, events, seed)
        .map_err(|e| CliError::domain(e.to_string()))?;

    let mut w = csv_writer(out.as_ref())?;
    w.write_all(b"rho1,rho2,delta1_closed,delta1_sim,delta1_sim_se\n")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.rho1, r.rho2, r.delta1_closed, r.delta1_sim, r.delta1_sim_se
        )?;
    }
    w.flush()?;
    if skipped > 0 {
        eprintln!("skipped {skipped} infeasible grid points (total load >= 1)");
    }
    Ok(())
}

fn cmd_contour(
    mu: f64,
    (rho_start, rho_stop, rho_step): (f64, f64, f64),
    (split_start, split_stop, split_step): (f64, f64, f64),
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if !(rho_step > 0.0 && rho_stop >= rho_start && split_step > 0.0 && split_stop >= split_start) {
        return Err(CliError::usage("grid bounds must be increasing with positive steps"));
    }
    if !(rho_start > 0.0 && rho_stop < 1.0 && split_start > 0.0 && split_stop < 1.0) {
        return Err(CliError::usage("grids must lie inside (0, 1)"));
    }
    let rho_values = sweep::grid(rho_start, rho_stop, rho_step);
    let split_values = sweep::grid(split_start, split_stop, split_step);
    let (rows, skipped) = sweep::contour_rows(mu, &rho_values, &split_values);

    let mut w = csv_writer(out.as_ref())?;
    w.write_all(b"rho1,rho2,delta1,delta2,sum\n")?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{}", r.rho1, r.rho2, r.delta1, r.delta2, r.sum)?;
    }
    w.flush()?;
    if skipped > 0 {
        eprintln!("skipped {skipped} infeasible grid points");
    }
    Ok(())
}
