use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homopinn_cli::config::{ExperimentConfig, PRESETS};
use homopinn_cli::{experiment, sweep, Axis, CliError};

#[derive(Parser)]
#[command(name = "homopinn", version, about = "Homotopy-dynamics PINN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one config and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory; the config's `out_dir` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config once per value of one axis and aggregate the results.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the JSON config of a named preset.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = experiment::run(&cfg, out.as_deref())?;
            let l2re = s.final_l2re.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "n/a".into());
            println!(
                "{} {:?} seed {}: eps {} loss {:.4e} l2re {} ({} steps, {} epochs)",
                s.problem, s.strategy, s.seed, s.final_eps, s.final_loss, l2re, s.steps, s.total_epochs
            );
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Sweep { config, axis, values, jobs, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cells = sweep::sweep(&cfg, axis, &values, jobs, &out)?;
            for c in &cells {
                let s = &c.summary;
                println!("{}={} {} loss {:.4e}", axis.name(), c.value, s.status, s.final_loss);
            }
            println!("{}", out.join("aggregate.csv").display());
        }
        Command::Preset { name } => {
            println!("{}", serde_json::to_string_pretty(&ExperimentConfig::preset(&name)?)?);
        }
    }
    Ok(())
}
