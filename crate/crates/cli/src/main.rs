//! `sfs`: radial spectra, annulus spectra, the comparison with the
//! volume-matched annulus, and the test-function integrals behind it.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 a check failed.

mod commands;
mod config;
mod fmt;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use sfs_core::{BoundaryCondition, Error, SpaceForm};

use crate::config::{FileConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "sfs",
    version,
    about = "Laplacian spectra of annular domains in space forms"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SFS_THREADS")]
    threads: Option<usize>,
    /// Output directory for reports and data files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON parameter file; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized domain families.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More output; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only errors and the final verdict.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Radial eigenvalues of one mode.
    Sl(SlArgs),
    /// Merged Neumann spectrum of a geodesic annulus.
    Spectrum(SpectrumArgs),
    /// Compare mu_2 (and mu_3) of domains with the volume-matched annulus.
    Verify(VerifyArgs),
    /// Symmetry integrals, Rayleigh bounds and gradient identities.
    Moments(MomentsArgs),
}

#[derive(Debug, Args)]
struct AnnulusArgs {
    /// Space form: spherical, euclidean or hyperbolic.
    #[arg(long, value_parser = clap::value_parser!(SpaceForm))]
    form: Option<SpaceForm>,
    /// Dimension (default 2).
    #[arg(long)]
    n: Option<usize>,
    /// Inner radius; 0 for a ball (default 0).
    #[arg(long, allow_negative_numbers = true)]
    r1: Option<f64>,
    /// Outer radius.
    #[arg(long, allow_negative_numbers = true)]
    r2: Option<f64>,
    /// Grid intervals of the radial solver.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug, Args)]
struct SlArgs {
    #[command(flatten)]
    annulus: AnnulusArgs,
    /// Angular mode index.
    #[arg(long)]
    k: Option<usize>,
    /// Boundary condition: neumann or dirichlet (default neumann).
    #[arg(long, value_parser = clap::value_parser!(BoundaryCondition))]
    bc: Option<BoundaryCondition>,
    /// Number of eigenvalues (default 5).
    #[arg(long)]
    max_j: Option<usize>,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[command(flatten)]
    annulus: AnnulusArgs,
    /// Highest angular mode (default 4).
    #[arg(long)]
    kmax: Option<usize>,
    /// Eigenvalues per mode (default 4).
    #[arg(long)]
    jmax: Option<usize>,
    /// Number of eigenvalues to list; all certified ones by default.
    #[arg(long)]
    count: Option<usize>,
    /// Append the structural checks of the radial spectra.
    #[arg(long)]
    certify: bool,
}

#[derive(Debug, Args)]
struct DomainArgs {
    /// DomainSpec JSON files.
    specs: Vec<PathBuf>,
    /// Random family, e.g. "s=4 count=5 amplitude=0.1".
    #[arg(long)]
    random_family: Option<String>,
    /// Space form of the random family.
    #[arg(long, value_parser = clap::value_parser!(SpaceForm))]
    form: Option<SpaceForm>,
    /// Base radius of the hole of the random family.
    #[arg(long, conflicts_with = "no_hole")]
    hole: Option<f64>,
    /// Random family without a hole.
    #[arg(long)]
    no_hole: bool,
    /// Base outer radius of the random family.
    #[arg(long)]
    base_out: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    domains: DomainArgs,
    /// Number of mesh levels.
    #[arg(long)]
    levels: Option<u32>,
    /// Write the finest mesh of every domain.
    #[arg(long)]
    dump_mesh: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MomentCheck {
    All,
    Orthogonality,
    Rayleigh,
    Identity,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[command(flatten)]
    domains: DomainArgs,
    /// Dimension of the random family.
    #[arg(long)]
    n: Option<usize>,
    /// Which checks to run (default all).
    #[arg(long, value_enum)]
    check: Option<MomentCheck>,
    /// Highest power in the symmetry integrals.
    #[arg(long)]
    max_m: Option<u32>,
    /// Highest mode of the Rayleigh bounds.
    #[arg(long)]
    kmax: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Input(String),
    Missing {
        command: &'static str,
        message: String,
    },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Whether every check of a command held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

fn core_exit_code(e: &Error) -> u8 {
    match e {
        Error::Convergence { .. }
        | Error::NoRoot(_)
        | Error::SingularMass(_)
        | Error::SingularWeight { .. }
        | Error::CutoffTooLow { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(threads) = cli.threads.or(file.threads) {
        if threads == 0 {
            return Err(CliError::Input("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot configure threads: {e}")))?;
    }
    let rc = RunConfig {
        out: cli
            .out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from("sfs-out")),
        seed: cli.seed.or(file.seed).unwrap_or(1),
        verbosity: cli.verbose.max(file.verbose.unwrap_or(0)),
        quiet: cli.quiet,
        file,
    };
    match cli.command {
        Command::Sl(args) => commands::sl(&rc, args),
        Command::Spectrum(args) => commands::spectrum(&rc, args),
        Command::Verify(args) => commands::verify(&rc, args),
        Command::Moments(args) => commands::moments(&rc, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(4),
        Err(CliError::Core(e)) => {
            let code = core_exit_code(&e);
            let label = if code == 3 { "solver failure" } else { "error" };
            eprintln!("{label}: {e}");
            ExitCode::from(code)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Missing { command, message }) => {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = cmd.find_subcommand_mut(command).expect("known subcommand");
            sub.error(ErrorKind::MissingRequiredArgument, message)
                .exit()
        }
    }
}
