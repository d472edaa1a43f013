//! Command-line entry point: train, evaluate, replay, and print-config
//! over the pushing stack, with strict TOML configuration and
//! deterministic seeding.

use clap::{Args, Parser, Subcommand};
use locopush_cli::commands::{
    cmd_eval, cmd_print_config, cmd_replay, cmd_train, CliError,
};
use locopush_cli::config::{load_config, ConfigError, ExperimentConfig};
use locopush_core::env::CURRICULUM_LEVELS;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "locopush",
    about = "Deterministic quadruped pushing: training, evaluation, and replay"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand that builds a configuration.
#[derive(Args)]
struct ConfigArgs {
    /// Path to a TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train at the hardest difficulty from the first iteration.
    #[arg(long)]
    no_curriculum: bool,
    /// Zero the bi-contact bonus and the orientation penalty weight.
    #[arg(long)]
    no_key_rewards: bool,
    /// Drop the smoothness regularizer from the update.
    #[arg(long)]
    no_smoothness: bool,
    /// Force single-threaded execution. Execution is single-threaded
    /// regardless; the flag is kept for interface stability.
    #[arg(long)]
    deterministic: bool,
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.ppo.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.ablation.disable_curriculum |= self.no_curriculum;
        cfg.ablation.disable_key_rewards |= self.no_key_rewards;
        cfg.ablation.disable_smoothness |= self.no_smoothness;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy, writing metrics and checkpoints to the out dir.
    Train {
        #[command(flatten)]
        common: ConfigArgs,
        /// Continue from the checkpoint in the out dir.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint over freshly randomized episodes.
    Eval {
        #[command(flatten)]
        common: ConfigArgs,
        /// Checkpoint to load the policy from.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Difficulty level of the sampled episodes.
        #[arg(long, default_value_t = CURRICULUM_LEVELS - 1)]
        level: usize,
    },
    /// Record one deterministic episode as a tick-level replay log.
    Replay {
        #[command(flatten)]
        common: ConfigArgs,
        /// Checkpoint to load the policy from.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Difficulty level of the sampled episode.
        #[arg(long, default_value_t = CURRICULUM_LEVELS - 1)]
        level: usize,
    },
    /// Print the effective configuration as canonical TOML.
    PrintConfig {
        #[command(flatten)]
        common: ConfigArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Train { common, resume } => {
            let cfg = common.build()?;
            let outcome = cmd_train(&cfg, resume)?;
            println!(
                "trained {} iterations (now at {}), checkpoint {}, metrics {}",
                outcome.iterations_run,
                outcome.final_iteration,
                outcome.checkpoint_path.display(),
                outcome.metrics_path.display()
            );
        }
        Cmd::Eval { common, checkpoint, episodes, level } => {
            let cfg = common.build()?;
            let seed = cfg.seed;
            let report_path = cfg.out_dir.join("eval_report.json");
            let report = cmd_eval(&checkpoint, episodes, seed, level, &report_path)?;
            println!(
                "evaluated {} episodes at level {level}: success rate {:.3}, \
                 avg completion {:.2} s, report {}",
                report.n_episodes,
                report.success_rate,
                report.avg_completion_time,
                report_path.display()
            );
        }
        Cmd::Replay { common, checkpoint, level } => {
            let cfg = common.build()?;
            let log_path = cfg.out_dir.join("replay.ndjson");
            let record = cmd_replay(&checkpoint, cfg.seed, level, &log_path)?;
            println!(
                "episode outcome {:?} after {:.2} s, final position error {:.3} m, log {}",
                record.outcome,
                record.time,
                record.final_pos_error,
                log_path.display()
            );
        }
        Cmd::PrintConfig { common } => {
            let cfg = common.build()?;
            print!("{}", cmd_print_config(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
