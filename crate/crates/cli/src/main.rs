use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dpbarrier_cli::{
    cmd_account, cmd_calibrate, cmd_mask_demo, cmd_seq_eps, cmd_train, emit, load_session_config,
    render, CliError,
};
use dpbarrier_core::protocol::Scheduler;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchedulerArg {
    Sequential,
    Concurrent,
}

#[derive(Debug, Parser)]
#[command(
    name = "dpbarrier",
    version,
    about = "Differentially private collaborative training at desk scale"
)]
struct Cli {
    /// Session config (train, mask-demo) or ledger file (account).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or output directory for `train`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the session seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "sequential")]
    scheduler: SchedulerArg,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smallest per-step noise that spends the budget over the planned iterations.
    Calibrate {
        #[arg(long)]
        iterations: u64,
        /// Number of histogram rounds (n_g).
        #[arg(long, default_value_t = 0)]
        histogram_rounds: u64,
        #[arg(long, default_value_t = 0.0)]
        sigma_g: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
    /// Query a ledger file for epsilon at delta and delta at epsilon.
    Account,
    /// Run a training session.
    Train,
    /// Epsilon of n consecutive updates for several correction strengths.
    SeqEps {
        #[arg(long, default_value_t = 100)]
        n_max: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.3, 0.7, 0.9])]
        lambdas: Vec<f64>,
        /// Effective noise multiplier shared by every column.
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
    },
    /// Show one iteration's masks, their sum and the realized noise.
    MaskDemo,
}

fn need_config(cli: &Cli) -> Result<&PathBuf, CliError> {
    cli.config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.as_ref();
    match &cli.command {
        Command::Calibrate {
            iterations,
            histogram_rounds,
            sigma_g,
            epsilon,
            delta,
            lambda,
        } => {
            let c = cmd_calibrate(
                *iterations,
                *histogram_rounds,
                *sigma_g,
                *epsilon,
                *delta,
                *lambda,
            )?;
            emit(out, &render(&c))
        }
        Command::Account => {
            let path = need_config(cli)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            emit(out, &render(&cmd_account(&text)?))
        }
        Command::Train => {
            let config = load_session_config(need_config(cli)?, cli.seed)?;
            let dir = out.cloned().unwrap_or_else(|| PathBuf::from("run"));
            let scheduler = match cli.scheduler {
                SchedulerArg::Sequential => Scheduler::Sequential,
                SchedulerArg::Concurrent => Scheduler::Concurrent,
            };
            if cli.verbose > 0 {
                eprintln!(
                    "training session {} into {}",
                    config.session_id,
                    dir.display()
                );
            }
            let manifest = cmd_train(&config, &dir, scheduler)?;
            print!("{}", render(&manifest));
            Ok(())
        }
        Command::SeqEps {
            n_max,
            lambdas,
            sigma,
            delta,
        } => emit(out, &cmd_seq_eps(*n_max, lambdas, *sigma, *delta)?),
        Command::MaskDemo => {
            let config = load_session_config(need_config(cli)?, cli.seed)?;
            emit(out, &render(&cmd_mask_demo(&config)?))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpbarrier: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
