//! Command-line front end. Exit codes: 0 success, 1 usage or config error,
//! 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Result;
use crate::filters::{complexity_rows, op_counts, ComplexityAlgorithm};
use crate::harness::{bound_report, emit_csv, run_loaded, LoadedConfig, Scenario, PILOT_ITERATIONS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dplms", version, about = "Diffusion probabilistic LMS experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write MSD curves as CSV.
    Run {
        config: PathBuf,
        /// Override the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (output does not depend on this).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; defaults to the config's `output_dir`, then `out`.
        #[arg(long, short = 'o')]
        output_dir: Option<PathBuf>,
    },
    /// Print the experiment's topology as JSON.
    Topology {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print per-iteration arithmetic cost of a diffusion algorithm.
    Complexity {
        #[arg(long = "alg")]
        algorithm: String,
        #[arg(short = 'M')]
        filter_length: u64,
        #[arg(short = 'N')]
        nodes: u64,
    },
    /// Print the mean-stability step-size bound from a pilot run.
    Bound {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = PILOT_ITERATIONS)]
        pilot_iterations: usize,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<LoadedConfig> {
    let mut loaded = LoadedConfig::from_path(path)?;
    if let Some(seed) = seed {
        loaded.config.seed = seed;
    }
    Ok(loaded)
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            workers,
            output_dir,
        } => {
            let mut loaded = load(&config, seed)?;
            if workers.is_some() {
                loaded.config.workers = workers;
            }
            loaded.config.validate()?;
            let result = run_loaded(&loaded)?;
            let dir = output_dir
                .or_else(|| loaded.config.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let files = emit_csv(&result, &dir)?;
            let window = (result.config.iterations / 10).max(1);
            for alg in &result.algorithms {
                writeln!(
                    out,
                    "{:<8} mu={:<6} steady-state MSD {:>8.2} dB (last {window} iterations), diverged runs {}",
                    alg.spec.name.name(),
                    alg.spec.step_size,
                    alg.curve.steady_state_db(window),
                    alg.diverged_runs
                )?;
            }
            for f in files {
                writeln!(out, "wrote {}", f.display())?;
            }
            writeln!(err, "finished in {:.2?}", result.wall_clock)?;
        }
        Command::Topology { config, seed } => {
            let loaded = load(&config, seed)?;
            let scenario = Scenario::build(&loaded.config)?;
            writeln!(out, "{}", scenario.topology.to_json()?)?;
        }
        Command::Complexity {
            algorithm,
            filter_length,
            nodes,
        } => {
            let alg: ComplexityAlgorithm = algorithm.parse()?;
            writeln!(out, "{} (M={filter_length}, N={nodes})", alg.name())?;
            for (label, count) in complexity_rows(alg, filter_length, nodes)? {
                writeln!(out, "  {label:<26} {count}")?;
            }
            let total = op_counts(alg, filter_length, nodes)?;
            let bound = if total.lower_bound { "> " } else { "" };
            writeln!(out, "multiplications {bound}{}", total.multiplications)?;
            writeln!(out, "additions {}", total.additions)?;
            writeln!(out, "absolutes {}", total.absolutes)?;
            writeln!(out, "signs {}", total.signs)?;
        }
        Command::Bound {
            config,
            seed,
            pilot_iterations,
        } => {
            let loaded = load(&config, seed)?;
            let report = bound_report(&loaded.config, pilot_iterations)?;
            writeln!(out, "pilot iterations {}", report.pilot_iterations)?;
            let alphas: Vec<String> = report.alphas.iter().map(|a| format!("{a:.6e}")).collect();
            writeln!(out, "alpha snapshot [{}]", alphas.join(", "))?;
            writeln!(out, "mu_max {}", report.mu_max)?;
            writeln!(out, "mu_max (self weights) {}", report.mu_max_self_weights)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = if code == EXIT_OK {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
