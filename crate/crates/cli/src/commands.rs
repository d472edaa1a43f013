//! Experiment orchestration behind the subcommands: the training loop
//! with metrics export and checkpoint cadence, checkpoint-driven
//! evaluation, and single-episode replay capture.

use crate::checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError,
};
use crate::config::{ConfigError, ExperimentConfig};
use locopush_core::env::{CurriculumState, CURRICULUM_LEVELS};
use locopush_core::eval::{
    replay_episode, run_eval, write_replay, EvalError, EvalReport,
};
use locopush_core::ppo::{PpoError, TrainStats, Trainer};
use locopush_core::env::PlannerEnv;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Top-level command failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training failed: {0}")]
    Train(#[from] PpoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("metrics export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("resume requested but no checkpoint exists at {0}")]
    MissingCheckpoint(PathBuf),
    #[error("level {got} out of range, valid levels are 0..={max}")]
    Level { got: usize, max: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Fixed column order of the metrics file.
pub const METRICS_HEADER: [&str; 12] = [
    "iteration",
    "mean_return",
    "mean_episode_length",
    "success_rate",
    "curriculum_level",
    "surrogate_loss",
    "value_loss",
    "entropy",
    "smoothness_loss",
    "clip_fraction",
    "diverged_incidents",
    "update_aborted",
];

fn metrics_row(s: &TrainStats) -> [String; 12] {
    [
        s.iteration.to_string(),
        s.mean_return.to_string(),
        s.mean_episode_length.to_string(),
        s.success_rate.to_string(),
        s.curriculum_level.to_string(),
        s.surrogate_loss.to_string(),
        s.value_loss.to_string(),
        s.entropy.to_string(),
        s.smoothness_loss.to_string(),
        s.clip_fraction.to_string(),
        s.diverged_incidents.to_string(),
        s.update_aborted.to_string(),
    ]
}

/// What a training run produced, for callers and tests.
#[derive(Debug)]
pub struct TrainOutcome {
    pub iterations_run: usize,
    pub final_iteration: usize,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    /// Set when a resumed checkpoint was written under a different config.
    pub config_hash_mismatch: bool,
}

/// Run (or resume) training: one metrics row per iteration, a checkpoint
/// every `checkpoint_every` iterations and at exit, and the effective
/// config alongside for provenance.
pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let out_dir = &cfg.out_dir;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let config_path = out_dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(io_err(&config_path))?;

    let hash = cfg.hash();
    let checkpoint_path = out_dir.join("checkpoint.bin");
    let metrics_path = out_dir.join("metrics.csv");

    let mut config_hash_mismatch = false;
    let mut trainer = if resume {
        if !checkpoint_path.exists() {
            return Err(CliError::MissingCheckpoint(checkpoint_path));
        }
        let ck = load_checkpoint(&checkpoint_path)?;
        if ck.config_hash != hash {
            config_hash_mismatch = true;
            eprintln!(
                "warning: checkpoint {} was written under a different config; \
                 resuming with its saved state anyway",
                checkpoint_path.display()
            );
        }
        ck.trainer
    } else {
        Trainer::new(cfg.train_setup())?
    };

    // A resumed run appends to its existing metrics file so the combined
    // rows read as one uninterrupted history.
    let fresh_metrics = !(resume && metrics_path.exists());
    let file = if fresh_metrics {
        std::fs::File::create(&metrics_path)
    } else {
        std::fs::OpenOptions::new().append(true).open(&metrics_path)
    }
    .map_err(io_err(&metrics_path))?;
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh_metrics {
        csv.write_record(METRICS_HEADER)?;
    }

    let start = trainer.iteration;
    let total = cfg.ppo.total_iterations;
    let mut last_iteration = start;
    while trainer.iteration < total {
        let stats = trainer.iterate()?;
        last_iteration = stats.iteration;
        csv.write_record(metrics_row(&stats))?;
        csv.flush().map_err(io_err(&metrics_path))?;
        if stats.iteration % cfg.checkpoint_every == 0 {
            save_trainer(&trainer, hash, &checkpoint_path)?;
        }
    }
    save_trainer(&trainer, hash, &checkpoint_path)?;

    Ok(TrainOutcome {
        iterations_run: last_iteration - start,
        final_iteration: last_iteration,
        checkpoint_path,
        metrics_path,
        config_hash_mismatch,
    })
}

fn save_trainer(trainer: &Trainer, hash: [u8; 32], path: &Path) -> Result<(), CheckpointError> {
    let ck = Checkpoint {
        config_hash: hash,
        iteration: trainer.iteration as u64,
        trainer: trainer.clone(),
    };
    save_checkpoint(&ck, path)
}

fn check_level(level: usize) -> Result<(), CliError> {
    if level >= CURRICULUM_LEVELS {
        return Err(CliError::Level { got: level, max: CURRICULUM_LEVELS - 1 });
    }
    Ok(())
}

/// Evaluate a checkpoint's policy over fresh episodes and write the
/// report as JSON.
pub fn cmd_eval(
    checkpoint: &Path,
    episodes: usize,
    seed: u64,
    level: usize,
    report_path: &Path,
) -> Result<EvalReport, CliError> {
    check_level(level)?;
    let ck = load_checkpoint(checkpoint)?;
    let setup = &ck.trainer.setup;
    let report = run_eval(
        &ck.trainer.pi,
        episodes,
        seed,
        &setup.world,
        &setup.ranges,
        setup.weights,
        level,
    )?;
    if let Some(dir) = report_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    let file = std::fs::File::create(report_path).map_err(io_err(report_path))?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n").map_err(io_err(report_path))?;
    out.flush().map_err(io_err(report_path))?;
    Ok(report)
}

/// Run one deterministic episode under a checkpoint's policy mean and
/// write the tick-level replay log.
pub fn cmd_replay(
    checkpoint: &Path,
    seed: u64,
    level: usize,
    log_path: &Path,
) -> Result<locopush_core::eval::EpisodeRecord, CliError> {
    check_level(level)?;
    let ck = load_checkpoint(checkpoint)?;
    let setup = &ck.trainer.setup;
    let mut env = PlannerEnv::new(
        seed,
        setup.world.clone(),
        setup.ranges.clone(),
        setup.weights,
        &CurriculumState::at_level(level),
    );
    env.terminate_on_success = true;
    let (record, log) = replay_episode(&mut env, seed, &ck.trainer.pi)?;
    if let Some(dir) = log_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    write_replay(&log, log_path)?;
    Ok(record)
}

/// Render the effective configuration as canonical TOML.
pub fn cmd_print_config(cfg: &ExperimentConfig) -> Result<String, CliError> {
    cfg.validate()?;
    Ok(cfg.to_toml())
}
