//! Command-line front end: load a scenario config, dispatch to the solvers,
//! write CSV snapshots and the run manifest.
//!
//! Exit codes: 0 success, 2 configuration problem, 3 numeric or I/O failure
//! during the run.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphene_mep::scenario::{parse_config, run_scenario, ScenarioConfig, SolverKind};
use graphene_mep::RunError;

#[derive(Parser)]
#[command(name = "gmep", version, about = "Moment-closure transport scenarios on a Dirac cone")]
struct Cli {
    /// Only warnings and errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the scenario described by the config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for snapshots and the manifest.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parse and validate a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tabulate the closure tensors over a multiplier grid
    /// (requires solver = closure_table).
    ClosureTable {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the relaxed hyperbolic system against its diffusion limit
    /// (requires solver = relaxation_study).
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .init();

    if let Ok(threads) = std::env::var("THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not apply THREADS={n}: {e}");
                }
            }
            _ => log::warn!("ignoring THREADS={threads}: expected a positive integer"),
        }
    }

    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("configuration valid: solver = {}", cfg.solver.name());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, out } => execute(&config, &out, None),
        Command::ClosureTable { config, out } => {
            execute(&config, &out, Some(SolverKind::ClosureTable))
        }
        Command::Study { config, out } => execute(&config, &out, Some(SolverKind::RelaxationStudy)),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read config {}: {e}", path.display());
            return Err(ExitCode::from(EXIT_CONFIG));
        }
    };
    match parse_config(&text) {
        Ok(cfg) => Ok(cfg),
        Err(e) => {
            eprintln!("{e}");
            Err(ExitCode::from(EXIT_CONFIG))
        }
    }
}

fn execute(config: &Path, out: &Path, expect: Option<SolverKind>) -> ExitCode {
    let cfg = match load(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(kind) = expect {
        if cfg.solver != kind {
            eprintln!(
                "this subcommand needs solver = {}, the config selects {}",
                kind.name(),
                cfg.solver.name()
            );
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run_scenario(&cfg, out) {
        Ok(report) => {
            log::info!(
                "wrote {} files to {} in {:.3}s ({} steps, {} snapshots)",
                report.files.len(),
                out.display(),
                report.wall_seconds,
                report.steps,
                report.snapshots
            );
            if let Some(drift) = report.mass_drift {
                log::info!("relative mass drift {drift:.3e}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let kind = match &err {
                RunError::Config(_) => "config",
                RunError::Solver(_) => "solver",
                RunError::Closure(_) => "closure",
                RunError::Oracle(_) => "oracle",
                RunError::Special(_) => "special",
                RunError::Io(_) => "io",
            };
            eprintln!("run failed ({kind}): {err}");
            let record = format!("kind = {kind}\nmessage = {err}\n");
            let _ = std::fs::create_dir_all(out);
            if let Err(e) = std::fs::write(out.join("error.txt"), record) {
                eprintln!("could not write error record: {e}");
            }
            match err {
                RunError::Config(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::from(EXIT_NUMERIC),
            }
        }
    }
}
