use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use specel_cli::run::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "specel", version, about = "Spectral element scenarios: validation, Poisson, DDFT and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Output directory (overrides outputs.directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Reserved; every algorithm is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Operator error tables over the built-in discretizations.
    Validate { config: PathBuf },
    /// Poisson convergence study, or one solve on a configured geometry.
    Poisson { config: PathBuf },
    /// Damped Picard iteration for the DDFT equilibrium.
    Equilibrium { config: PathBuf },
    /// Time-dependent DDFT.
    Dynamics { config: PathBuf },
    /// Optimal control by forward-backward sweeps.
    Ocp { config: PathBuf },
    /// Resample a fields CSV onto a uniform grid.
    Export {
        config: PathBuf,
        /// Grid points per direction.
        #[arg(long)]
        resolution: Option<usize>,
        /// Fields CSV to read (default: fields.csv in the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.seed.is_some() {
        log::debug!("--seed has no effect");
    }
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not configure thread pool: {e}");
        }
    }
    let (cmd, config, resolution, input) = match cli.command {
        Cmd::Validate { config } => (Command::Validate, config, None, None),
        Cmd::Poisson { config } => (Command::Poisson, config, None, None),
        Cmd::Equilibrium { config } => (Command::Equilibrium, config, None, None),
        Cmd::Dynamics { config } => (Command::Dynamics, config, None, None),
        Cmd::Ocp { config } => (Command::Ocp, config, None, None),
        Cmd::Export { config, resolution, input } => (Command::Export, config, resolution, input),
    };
    let opts = RunOptions {
        config,
        out: cli.out,
        threads: rayon::current_num_threads(),
        resolution,
        input,
    };
    match run(cmd, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
