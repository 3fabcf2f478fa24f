//! Command-line front end for the voxfp solvers.
//!
//! Every run writes its outputs and a `manifest.json` into the output
//! directory. Exit codes: 0 on success, 1 on I/O failure, 2 on configuration
//! or usage errors, 3 on numerical failure.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

mod commands;
mod figures;
mod manifest;
mod output;

pub use manifest::Manifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable bounding the worker pool.
pub const THREADS_VAR: &str = "VOXFP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "voxfp", version, about = "Diffusion with volume exclusion: particles, PDE and minimizing movements")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Excluded-volume coefficient of a pair potential.
    Alpha(AlphaArgs),
    /// Finite-volume solution of the macroscopic equation.
    SolvePde(RunArgs),
    /// Brownian-dynamics ensemble.
    Simulate(RunArgs),
    /// One-dimensional minimizing movements.
    Jko(RunArgs),
    /// Compares PDE snapshots with particle histograms and fits decay rates.
    Compare(CompareArgs),
    /// Regenerates the data set of one reference figure.
    ReproduceFigure(FigureArgs),
}

#[derive(Debug, Args)]
struct AlphaArgs {
    /// hard_sphere, yukawa, power_law or table.
    #[arg(long)]
    potential: String,
    #[arg(long)]
    exponent: Option<f64>,
    /// Two-column `r,u` table for `table`.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Decay exponent of the tail beyond the last table entry.
    #[arg(long)]
    far_exponent: Option<f64>,
    #[arg(long)]
    dim: usize,
    /// Also write a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    pde: PathBuf,
    #[arg(long)]
    sde: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FigureArgs {
    /// fig1, fig2, fig3 or fig4.
    id: String,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of the full realization count for particle legs.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

/// Failure caused by the user's input rather than by the numerics.
#[derive(Debug)]
pub struct ConfigIssue(pub String);

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigIssue {}

pub(crate) fn config_issue(msg: impl Into<String>) -> anyhow::Error {
    ConfigIssue(msg.into()).into()
}

/// Maps an error chain to an exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigIssue>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<voxfp::Error>() {
            return match e {
                voxfp::Error::Io(_) => EXIT_IO,
                e if e.is_config_error() => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_NUMERICAL
}

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

/// Forwards to the terminal logger and keeps warnings for the manifest.
struct CapturingLogger {
    inner: env_logger::Logger,
}

impl log::Log for CapturingLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Warn || self.inner.enabled(metadata)
    }

    fn log(&self, record: &log::Record) {
        if record.level() <= log::Level::Warn {
            if let Ok(mut w) = WARNINGS.lock() {
                w.push(record.args().to_string());
            }
        }
        if self.inner.enabled(record.metadata()) {
            self.inner.log(record);
        }
    }

    fn flush(&self) {
        self.inner.flush();
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let inner = env_logger::Builder::new().filter_level(level).build();
    if log::set_boxed_logger(Box::new(CapturingLogger { inner })).is_ok() {
        log::set_max_level(level.max(log::LevelFilter::Warn));
    }
}

/// Warnings logged since the last call.
pub(crate) fn take_warnings() -> Vec<String> {
    WARNINGS.lock().map(|mut w| std::mem::take(&mut *w)).unwrap_or_default()
}

fn init_threads() -> anyhow::Result<()> {
    let Some(raw) = std::env::var_os(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|n| *n > 0)
        .ok_or_else(|| config_issue(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    // A pool may already exist when running in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    take_warnings();
    let result = init_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Alpha(a) => commands::alpha(&a),
        Command::SolvePde(a) => commands::solve_pde(&a.config, &a.out),
        Command::Simulate(a) => commands::simulate(&a.config, &a.out),
        Command::Jko(a) => commands::jko(&a.config, &a.out),
        Command::Compare(a) => commands::compare(&a.pde, &a.sde, &a.out),
        Command::ReproduceFigure(a) => figures::reproduce(&a.id, &a.out, a.scale),
    }
}
