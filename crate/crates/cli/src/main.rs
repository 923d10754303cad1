use std::path::PathBuf;
use std::process::ExitCode;

use biphoton::figures::FigureId;
use biphoton_cli::{run, CliError, Overrides};
use clap::{Parser, Subcommand};

/// Biphoton imaging simulations: scenario runs and resolution studies.
#[derive(Parser)]
#[command(name = "biphoton", version, about)]
struct Cli {
    /// Directory for data files and manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Samples per transverse grid (windows are kept).
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Signal-frequency samples across the band.
    #[arg(long, global = true)]
    omega_samples: Option<usize>,
    /// Multiplier on the default transverse-frequency cutoff.
    #[arg(long, global = true)]
    qmax_scale: Option<f64>,
    /// Recorded in the manifest; runs are deterministic without it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario file.
    Run { scenario: PathBuf },
    /// Reproduce a resolution study: 9 (crystal length), 10 (bandwidth) or 11 (pump width).
    Figure { id: FigureId },
    /// Cut angle for collinear degenerate matching.
    SolveAngle {
        /// Pump wavelength in metres.
        #[arg(long, default_value_t = 325e-9)]
        lambda_p: f64,
        /// Built-in dataset name or dataset file.
        #[arg(long, default_value = "bbo-kato1986")]
        model: String,
    },
    /// Parse and check a scenario without running it.
    Validate { scenario: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        grid_n: cli.grid_n,
        omega_samples: cli.omega_samples,
        qmax_scale: cli.qmax_scale,
        seed: cli.seed,
    };
    match execute(&cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli, overrides: &Overrides) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { scenario } => {
            let report = run::run_scenario(scenario, &cli.out, overrides)?;
            println!("{}", report.data.display());
            println!("{}", report.manifest.display());
        }
        Command::Figure { id } => {
            let report = run::reproduce_figure(*id, &cli.out, overrides)?;
            for ((label, fwhm), path) in report.fwhm.iter().zip(&report.curves) {
                println!("{label:>10}  FWHM = {fwhm:.4} x_c  {}", path.display());
            }
            println!("{}", report.manifest.display());
        }
        Command::SolveAngle { lambda_p, model } => {
            println!("{:.6}", run::solve_angle(model, *lambda_p)?);
        }
        Command::Validate { scenario } => {
            let s = run::validate_scenario(scenario)?;
            println!("{}: ok", s.name);
        }
    }
    Ok(())
}
