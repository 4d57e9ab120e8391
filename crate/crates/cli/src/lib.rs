//! The `wbary` command line: reads JSON inputs, runs one check or
//! computation, and writes a report whose exit status reflects its records.

// `!(x <= bound)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod report;
pub mod schema;

use commands::{Ctx, Outcome};
use report::ReportFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Numeric(#[from] wbary_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Io(_) => EXIT_SCHEMA,
            CliError::Numeric(_) => EXIT_CHECK_FAILED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "wbary", version, about = "Wasserstein barycenters on model manifolds and their regularity checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Args)]
pub struct Flags {
    /// Override the main tolerance of the command's checks.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Sample sizes for `lln`, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Resolution per axis for grid densities (cells per axis for `density-bound`).
    #[arg(long, global = true)]
    pub grid_res: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub out: OutFormat,
    /// Largest admissible product support of a multi-marginal problem.
    #[arg(long, global = true, default_value_t = wbary_core::mmot::DEFAULT_CAP)]
    pub cap: usize,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Include wall-clock runtime in the report.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact squared W₂ between two measure files.
    W2 { mu: PathBuf, nu: PathBuf },
    /// Multi-marginal plan for an ensemble file.
    Mmot { ensemble: PathBuf },
    /// Barycenter of an ensemble with its construction identities.
    Barycenter { ensemble: PathBuf },
    /// Empirical-ensemble convergence table.
    Lln {
        ensemble: PathBuf,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 3)]
        runs: u64,
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
    },
    /// Weighted Hessians of the potentials sum to zero.
    HessianCheck { config: PathBuf },
    /// Jacobi, Riccati and Laplacian comparison inequalities.
    JacobiCheck { config: PathBuf },
    /// Histogram density of the barycenter against C^m times that of μ₁.
    DensityBound { config: PathBuf },
    /// Build and verify an integrability gauge for a family of densities.
    GaugeBuild { family: PathBuf },
    /// Entropy-type inequality on Gaussian marginals.
    EntropyCheck { config: PathBuf },
    /// Gauge, discretization, barycenter and density bound end to end.
    PipelineDemo { config: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::W2 { .. } => "w2",
            Command::Mmot { .. } => "mmot",
            Command::Barycenter { .. } => "barycenter",
            Command::Lln { .. } => "lln",
            Command::HessianCheck { .. } => "hessian-check",
            Command::JacobiCheck { .. } => "jacobi-check",
            Command::DensityBound { .. } => "density-bound",
            Command::GaugeBuild { .. } => "gauge-build",
            Command::EntropyCheck { .. } => "entropy-check",
            Command::PipelineDemo { .. } => "pipeline-demo",
        }
    }

    fn inputs(&self) -> Vec<&PathBuf> {
        match self {
            Command::W2 { mu, nu } => vec![mu, nu],
            Command::Mmot { ensemble } | Command::Barycenter { ensemble } | Command::Lln { ensemble, .. } => vec![ensemble],
            Command::HessianCheck { config }
            | Command::JacobiCheck { config }
            | Command::DensityBound { config }
            | Command::EntropyCheck { config }
            | Command::PipelineDemo { config } => vec![config],
            Command::GaugeBuild { family } => vec![family],
        }
    }
}

fn read(path: &PathBuf) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn dispatch(cmd: &Command, inputs: &[Vec<u8>], ctx: &Ctx) -> Result<Outcome, CliError> {
    match cmd {
        Command::W2 { .. } => commands::w2(&inputs[0], &inputs[1], ctx),
        Command::Mmot { .. } => commands::mmot(&inputs[0], ctx),
        Command::Barycenter { .. } => commands::barycenter(&inputs[0], ctx),
        Command::Lln { runs, threshold, .. } => commands::lln(&inputs[0], *runs, *threshold, ctx),
        Command::HessianCheck { .. } => commands::hessian_check(&inputs[0], ctx),
        Command::JacobiCheck { .. } => commands::jacobi_check(&inputs[0], ctx),
        Command::DensityBound { .. } => commands::density_bound(&inputs[0], ctx),
        Command::GaugeBuild { .. } => commands::gauge_build(&inputs[0], ctx),
        Command::EntropyCheck { .. } => commands::entropy_check(&inputs[0], ctx),
        Command::PipelineDemo { .. } => commands::pipeline_demo(&inputs[0], ctx),
    }
}

/// Runs a parsed command and renders its report.
pub fn execute(cli: &Cli) -> Result<(ReportFile, String), CliError> {
    let start = Instant::now();
    let inputs = cli.command.inputs().into_iter().map(read).collect::<Result<Vec<_>, _>>()?;
    let ctx = Ctx {
        tol: cli.flags.tol,
        seed: cli.flags.seed,
        sizes: cli.flags.sizes.clone(),
        grid_res: cli.flags.grid_res,
        cap: cli.flags.cap,
    };
    if matches!(ctx.tol, Some(t) if !(t >= 0.0)) || ctx.grid_res == Some(0) {
        return Err(CliError::Schema("--tol must be nonnegative and --grid-res positive".into()));
    }
    let outcome = dispatch(&cli.command, &inputs, &ctx)?;
    let report = ReportFile {
        command: cli.command.name().to_string(),
        inputs_digest: report::digest(&inputs),
        seed: cli.flags.seed,
        records: outcome.records,
        output: outcome.output,
        runtime_seconds: cli.flags.timing.then(|| start.elapsed().as_secs_f64()),
    };
    let text = match (cli.flags.out, outcome.table) {
        (OutFormat::Json, _) => report.to_json(),
        (OutFormat::Csv, Some(table)) => table,
        (OutFormat::Csv, None) => report.to_csv(),
    };
    Ok((report, text))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("WBARY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Schema(format!("WBARY_THREADS must be a positive integer, got {v:?}")))?;
    // A pool may already exist when called twice in one process; keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(stdout, "{}", e.render())
            } else {
                write!(stderr, "{}", e.render())
            };
            return code;
        }
    };
    let result = configure_threads().and_then(|_| execute(&cli));
    let (report, text) = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.flags.report {
        Some(path) => std::fs::write(path, &text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_SCHEMA;
    }
    for r in report.records.iter().filter(|r| !r.pass) {
        let _ = writeln!(stderr, "check failed: {} = {:e} (bound {:?})", r.name, r.value, r.bound);
    }
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
