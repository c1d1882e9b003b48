mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Spin-orbit resonance workflows: periodic census, quasi-periodic attractor,
/// bifurcation scan, pre-capture decay and basin survey.
#[derive(Debug, Parser)]
#[command(name = "spinorbit", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Parameter file of `key = value` lines, applied over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single parameter override `key=value`; repeatable, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and export it as CSV.
    Simulate(commands::SimulateArgs),
    /// Refine and classify the periodic solutions of every tabulated resonance.
    PeriodicCensus(commands::CensusArgs),
    /// Solve the quasi-periodic 3:2 construction.
    QpConstruct,
    /// Spectrum of a long run on the 3:2 attractor.
    Spectrum(commands::SpectrumArgs),
    /// Scan a parameter and record the 3:2 stroboscopic section.
    Bifurcate(commands::BifurcateArgs),
    /// Linear-decay estimates before capture.
    Precapture(commands::PrecaptureArgs),
    /// Monte-Carlo capture statistics per velocity strip.
    Basins(commands::BasinsArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flag, value or parameter file.
    Usage(String),
    /// Infeasible request or non-converging computation.
    Domain(String),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Domain(_) => 2,
            Self::Usage(_) | Self::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Domain(m) => write!(f, "error: {m}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match commands::dispatch(cli, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
