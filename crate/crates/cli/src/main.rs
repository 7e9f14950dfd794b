//! `omega`: agreement coefficients from the command line.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use omega_core::OmegaError;

#[derive(Debug, Parser)]
#[command(name = "omega", version, about = "Sklar's omega agreement coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Score CSV with column labels in the header row.
    #[arg(long, short, global = true)]
    input: Option<PathBuf>,
    /// nominal, ordinal, interval or ratio.
    #[arg(long, global = true, default_value = "nominal")]
    level: String,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for replicate loops (default: all logical cores).
    #[arg(long, global = true, env = "OMEGA_THREADS")]
    threads: Option<usize>,
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Args, Clone)]
struct FitArgs {
    /// ml, dt, cml or smp (default: chosen from the level).
    #[arg(long)]
    method: Option<String>,
    /// Marginal family.
    #[arg(long)]
    dist: Option<String>,
    /// none, asymptotic or bootstrap.
    #[arg(long, default_value = "none")]
    confint: String,
    /// Replicates for the sandwich or the bootstrap.
    #[arg(long, default_value_t = 1000)]
    bootit: usize,
    /// gaussian or quantile bootstrap intervals.
    #[arg(long, default_value = "gaussian")]
    interval: String,
    /// plain or winsorized empirical cdf for smp.
    #[arg(long, default_value = "plain")]
    ecdf: String,
}

#[derive(Debug, Args)]
struct BayesArgs {
    #[arg(long, default_value = "gaussian")]
    dist: String,
    #[arg(long, default_value_t = 1000)]
    minit: usize,
    #[arg(long, default_value_t = 10_000)]
    maxit: usize,
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long = "sigma-1", alias = "sigma.1", default_value_t = 0.1)]
    sigma1: f64,
    #[arg(long = "sigma-2", alias = "sigma.2", default_value_t = 0.1)]
    sigma2: f64,
    /// One value, or one per agreement parameter, comma separated.
    #[arg(long = "sigma-omega", alias = "sigma.omega", value_delimiter = ',')]
    sigma_omega: Vec<f64>,
    /// Also write every draw to this CSV.
    #[arg(long)]
    draws: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InfluenceArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Units (1-based rows of the input), comma separated.
    #[arg(long, value_delimiter = ',')]
    units: Vec<usize>,
    /// Coders, comma separated; `m2.3` names coder 3 of method 2.
    #[arg(long, value_delimiter = ',')]
    coders: Vec<String>,
}

#[derive(Debug, Args)]
struct AlphaArgs {
    #[arg(long, default_value_t = 1000)]
    bootit: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the copula model.
    Fit(FitArgs),
    /// Sample the posterior (interval and ratio scores).
    Bayes(BayesArgs),
    /// Fit, then draw one dataset from the fitted model.
    Simulate(FitArgs),
    /// DFBETA for units and coders.
    Influence(InfluenceArgs),
    /// Krippendorff's alpha with the discrete metric.
    Alpha(AlphaArgs),
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            Failure::Config(m) => ("config", m),
            Failure::Data(m) => ("data", m),
            Failure::Numerical(m) => ("numerical", m),
        };
        format!("error[{kind}]: {}", msg.replace('\n', " "))
    }
}

impl From<OmegaError> for Failure {
    fn from(e: OmegaError) -> Self {
        let msg = e.to_string();
        match e {
            OmegaError::UnknownName { .. }
            | OmegaError::Control(_)
            | OmegaError::Incompatible { .. }
            | OmegaError::NotDiscrete(_) => Failure::Config(msg),
            OmegaError::InvalidLabels(_)
            | OmegaError::RaggedRow { .. }
            | OmegaError::BadValue { .. }
            | OmegaError::EmptyData
            | OmegaError::Level { .. }
            | OmegaError::Structure(_)
            | OmegaError::Degenerate(_)
            | OmegaError::Undefined(_)
            | OmegaError::Csv(_) => Failure::Data(msg),
            OmegaError::Gradient(_) | OmegaError::SingularHessian(_) | OmegaError::Numerical(_) => {
                Failure::Numerical(msg)
            }
        }
    }
}

fn call_echo() -> String {
    let args: Vec<String> = std::env::args().skip(1).collect();
    format!("omega {}", args.join(" "))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", Failure::Config(first.to_string()).line());
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.common.threads {
        if n == 0 {
            eprintln!("{}", Failure::Config("--threads must be at least 1".into()).line());
            return ExitCode::from(1);
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (report, failure) = match commands::run(&cli.command, &cli.common, call_echo()) {
        Ok(r) => r,
        Err(f) => {
            eprintln!("{}", f.line());
            return ExitCode::from(f.code());
        }
    };
    let body = match cli.common.format {
        Format::Text => report.text(),
        Format::Json => report.json(),
    };
    let written = match &cli.common.output {
        Some(path) => std::fs::write(path, body).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => std::io::stdout().write_all(body.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("{}", Failure::Config(e).line());
        return ExitCode::from(1);
    }
    match failure {
        Some(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
        None => ExitCode::SUCCESS,
    }
}
