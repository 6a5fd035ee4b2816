use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mgt_cli::{check, run, spectrum_only, sweep, write_sweep_csv, ExperimentConfig, RunError, SweepAxis};

#[derive(Parser)]
#[command(name = "mgt", version, about = "MGT boundary-feedback experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate, analyse and write CSV files plus report.txt.
    Run { config: PathBuf },
    /// One row per value of a parameter axis, written to sweep.csv.
    Sweep {
        config: PathBuf,
        /// eta, gamma-scale, dt or resolution
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Generator eigenvalues only.
    Spectrum { config: PathBuf },
    /// Standing assumptions only; exit status 2 when one fails.
    Check { config: PathBuf },
}

fn execute(cli: Cli) -> Result<ExitCode, RunError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run(&cfg)?;
            print!("{}", report.to_key_value());
        }
        Command::Sweep { config, axis, values } => {
            let cfg = ExperimentConfig::load(&config)?;
            let axis: SweepAxis = axis.parse()?;
            let rows = sweep(&cfg, axis, &values)?;
            std::fs::create_dir_all(&cfg.output.directory)?;
            let path = cfg.output.directory.join("sweep.csv");
            write_sweep_csv(&path, &cfg, axis, &rows)?;
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("{} = {}: {}", axis.name(), r.value, r.error.as_deref().unwrap_or_default());
            }
            println!("{}", path.display());
        }
        Command::Spectrum { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (sp, path) = spectrum_only(&cfg)?;
            println!("abscissa = {:.16e}", sp.abscissa);
            println!("eigenvalues = {}", path.display());
        }
        Command::Check { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let diag = check(&cfg)?;
            for (name, c) in diag.checks() {
                println!("{name} = {} ({})", if c.passed { "pass" } else { "fail" }, c.detail);
            }
            if !diag.all_pass() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
