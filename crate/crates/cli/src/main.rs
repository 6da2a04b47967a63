//! Operator surface: `train`, `eval`, `dominance`, `sweep`, and
//! `prefix-build` subcommands over a shared config file.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags or config),
//! 2 on runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use laconic_core::config::parse_config_file;
use laconic_core::{runner, Error, ExperimentConfigF64};

#[derive(Parser)]
#[command(
    name = "laconic",
    version,
    about = "Desk-scale trainer for length-compressed sequence policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (flat key=value lines).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Experiment seed.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to the config's out.dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write logs, checkpoints, and the prefix bank.
    Train(CommonArgs),
    /// Evaluate a checkpoint over its training pool.
    Eval {
        /// Checkpoint file to evaluate.
        checkpoint: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// Baseline checkpoint for the token reduction rate.
        #[arg(long, value_name = "PATH")]
        baseline: Option<PathBuf>,
    },
    /// Exact anchored-vs-plain objective gaps on enumerable instances.
    Dominance(CommonArgs),
    /// Uniform linear-penalty survival sweep over (alpha, L*) cells.
    Sweep(CommonArgs),
    /// Build the anchor bank without training.
    PrefixBuild(CommonArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are validation errors per the exit-code contract.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(common) => {
            let (cfg, seed, out) = load(&common)?;
            let artifacts = runner::run_train(&cfg, seed, &out)?;
            println!(
                "trained {} steps: final acc {:.4}, mean length {:.2} -> {}",
                artifacts.rows.len(),
                artifacts.final_acc,
                artifacts.final_len,
                artifacts.dir.display()
            );
            Ok(())
        }
        Command::Eval { checkpoint, common, baseline } => {
            let (cfg, seed, out) = load(&common)?;
            let artifacts =
                runner::run_eval(&cfg, &checkpoint, baseline.as_deref(), seed, &out)?;
            match artifacts.token_reduction {
                Some(tr) => println!(
                    "acc {:.4}, mean length {:.2}, token reduction {:.1}%",
                    artifacts.acc,
                    artifacts.mean_len,
                    tr * 100.0
                ),
                None => println!(
                    "acc {:.4}, mean length {:.2}",
                    artifacts.acc, artifacts.mean_len
                ),
            }
            Ok(())
        }
        Command::Dominance(common) => {
            let (cfg, seed, out) = load(&common)?;
            let rows = runner::run_dominance(&cfg, seed, &out)?;
            let errors = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} dominance rows ({errors} budget failures)", rows.len());
            Ok(())
        }
        Command::Sweep(common) => {
            let (cfg, seed, out) = load(&common)?;
            let cells = runner::run_sweep(&cfg, seed, &out)?;
            println!("{} sweep cells", cells.len());
            Ok(())
        }
        Command::PrefixBuild(common) => {
            let (cfg, seed, out) = load(&common)?;
            let path = runner::run_prefix_build(&cfg, seed, &out)?;
            println!("anchor bank -> {}", path.display());
            Ok(())
        }
    }
}

fn load(common: &CommonArgs) -> Result<(ExperimentConfigF64, u64, PathBuf), Error> {
    let cfg: ExperimentConfigF64 = parse_config_file(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    Ok((cfg, common.seed, out))
}
