//! qbarrier: transmission sweeps and optimal barrier design from a TOML
//! run configuration.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config error, 3 numeric failure,
//! 4 non-convergence (optimizer iteration cap or adaptive quadrature).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qbarrier_cli::commands::{self, DesignMode};
use qbarrier_cli::output::Emitter;
use qbarrier_cli::{config, CliError};

#[derive(Parser)]
#[command(name = "qbarrier", version, about = "Quantum barrier transmission and design")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides [output].directory (default "out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the timestamp header line for byte-identical reruns.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Worker threads for quadrature streaming (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// T(V_bias) sweep with the configured solver.
    Transmission,
    /// WKB validity margin F(V_bias) for each configured potential.
    ValidateWkb,
    /// Optimize the layer potentials against the target response.
    Design {
        #[arg(long, value_enum, default_value_t = Mode::Deterministic)]
        mode: Mode,
    },
    /// T(V_bias) from the hybrid WKB, piecewise-constant and
    /// finite-difference solvers with pairwise deviations.
    OracleCompare,
    /// Sparse-grid nodes and weights as a table.
    QuadratureExport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Deterministic,
    Robust,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let config = config::load(config_path)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| config.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let emitter = Emitter::new(&dir, !cli.no_timestamp, config.output.delimiter()?)?;
    match cli.command {
        Command::Transmission => commands::transmission(&config, &emitter),
        Command::ValidateWkb => commands::validate_wkb(&config, &emitter),
        Command::Design { mode } => {
            let mode = match mode {
                Mode::Deterministic => DesignMode::Deterministic,
                Mode::Robust => DesignMode::Robust,
            };
            commands::design(&config, mode, &emitter)
        }
        Command::OracleCompare => commands::oracle_compare(&config, &emitter),
        Command::QuadratureExport => commands::quadrature_export(&config, &emitter),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qbarrier: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
