use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rare_cli::output::write_rows;
use rare_cli::{emit_results, run_sweep, selftest, trajectory_table, validate_config, ExperimentConfig, Format, HarnessError};

#[derive(Parser)]
#[command(name = "rare", version, about = "Self-heterodyne Rydberg receiver range-sensing experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the configured Monte Carlo sweep and write one row per sweep value.
    Run {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short, long, default_value = "csv")]
        format: Format,
        /// Worker threads; 0 uses every core.
        #[arg(short = 'j', long, default_value_t = 0)]
        threads: usize,
    },
    /// Write the designed power trajectory and its SNR decomposition as CSV.
    Trajectory {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Parse and check a config without running anything.
    Validate { config: PathBuf },
    /// Run the built-in invariant checks.
    Selftest,
}

fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    validate_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// A reader that hung up early (`rare trajectory cfg | head`) is not an error.
fn closed_pipe(e: &HarnessError) -> bool {
    let io = match e {
        HarnessError::Io(io) => Some(io),
        HarnessError::Csv(c) => match c.kind() {
            csv::ErrorKind::Io(io) => Some(io),
            _ => None,
        },
        _ => None,
    };
    io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn execute(verb: Verb) -> Result<(), String> {
    match verb {
        Verb::Run { config, output, format, threads } => {
            let cfg = load(&config)?;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
            let rows = pool.install(|| run_sweep(&cfg)).map_err(|e| e.to_string())?;
            emit_results(&rows, format, &output).map_err(|e| format!("{}: {e}", output.display()))
        }
        Verb::Trajectory { config, output } => {
            let cfg = load(&config)?;
            let rows = trajectory_table(&cfg).map_err(|e| e.to_string())?;
            let written = match output {
                Some(path) => std::fs::File::create(&path)
                    .map_err(|e| format!("{}: {e}", path.display()))
                    .and_then(|f| write_rows(&rows, Format::Csv, f).map_err(|e| e.to_string())),
                None => match write_rows(&rows, Format::Csv, std::io::stdout().lock()) {
                    Err(e) if !closed_pipe(&e) => Err(e.to_string()),
                    _ => Ok(()),
                },
            };
            written
        }
        Verb::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "ok: {} sweep over {} values, {} trials, mode {}",
                match cfg.sweep.variable {
                    rare_cli::SweepVariable::Snr => "snr",
                    rare_cli::SweepVariable::PAvg => "p_avg",
                    rare_cli::SweepVariable::Bandwidth => "bandwidth",
                    rare_cli::SweepVariable::Range => "range",
                },
                cfg.sweep.values.len(),
                cfg.trials,
                cfg.trajectory_mode
            );
            Ok(())
        }
        Verb::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            match checks.iter().filter(|c| !c.passed).count() {
                0 => Ok(()),
                n => Err(format!("{n} self-test check(s) failed")),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
