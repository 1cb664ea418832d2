use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfhmm_cli::config::{Config, Mode};
use rfhmm_cli::{CliError, Overrides};

#[derive(Parser)]
#[command(name = "rfhmm", version, about = "Learning curves of random-features and hidden-manifold GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Asymptotic theory along the swept axis.
    Theory(RunArgs),
    /// Monte-Carlo simulation along the swept axis.
    Simulate(RunArgs),
    /// Theory and simulation side by side.
    Compare(RunArgs),
    /// Theory at the λ minimising the generalisation error.
    LambdaOpt(RunArgs),
    /// Interpolation threshold α★ against n/d.
    Separability(RunArgs),
    /// Check a configuration and print it with every default filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV (default: the file's `output`, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed of the simulations.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Fixed Gauss–Hermite rule with this many nodes instead of adaptive integration.
    #[arg(long)]
    quad_nodes: Option<usize>,
}

fn set_threads(threads: Option<usize>) {
    let Some(n) = threads else { return };
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::warn!("could not size the thread pool: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    log::warn!("--threads {n} ignored: built without the parallel feature");
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (mode, args) = match cli.command {
        Command::Validate { config } => {
            let plan = Config::from_path(&config)?.plan(None)?;
            print!("{}", Config::normalised_toml(&plan));
            return Ok(());
        }
        Command::Theory(a) => (Mode::Theory, a),
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Compare(a) => (Mode::Compare, a),
        Command::LambdaOpt(a) => (Mode::LambdaOpt, a),
        Command::Separability(a) => (Mode::Separability, a),
    };
    set_threads(args.threads);
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        quad_nodes: args.quad_nodes,
    };
    let plan = rfhmm_cli::load(&args.config, Some(mode), &overrides)?;
    rfhmm_cli::execute(&plan)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rfhmm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
