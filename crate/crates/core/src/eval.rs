//! Evaluation and ablation harness: deterministic batched policy rollouts
//! over freshly randomized episodes, success-rate and completion-time
//! metrics, ablation switches folded into training setups, and structured
//! per-tick replay logs for offline inspection.

use crate::env::{
    CurriculumState, EpisodeStatus, PlannerEnv, RandomizationRanges, RewardBreakdown,
    RewardWeights, TaskGoal, CURRICULUM_LEVELS, PLANNER_OBS_DIM,
};
use crate::geom::{Pose, Twist, Vec3};
use crate::nn::{GaussianPolicy, NnError};
use crate::ppo::TrainSetup;
use crate::world::{Command, PlanarPose, SurfaceId, WorldParams, ACTION_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Version tag written into every replay file header.
pub const REPLAY_SCHEMA_VERSION: u32 = 1;

/// Failures of the evaluation harness.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error(
        "policy shape mismatch: evaluation needs {expected_obs} observations -> \
         {expected_act} actions, the policy maps {got_obs} -> {got_act}"
    )]
    PolicyShape { expected_obs: usize, expected_act: usize, got_obs: usize, got_act: usize },
    #[error("network evaluation failed: {0}")]
    Nn(#[from] NnError),
    #[error("replay file io: {0}")]
    Io(#[from] std::io::Error),
    #[error("replay record malformed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("replay file has no header line")]
    EmptyReplay,
    #[error("replay schema version {got} unsupported (this build reads {supported})")]
    SchemaVersion { got: u32, supported: u32 },
}

/// Outcome record of a single evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// RNG seed the episode's environment was built from.
    pub seed: u64,
    pub outcome: EpisodeStatus,
    /// Episode duration (s); for successes, time of the first success tick.
    pub time: f64,
    /// Planar object-to-goal distance at the final tick (m).
    pub final_pos_error: f64,
    /// Wrapped object yaw error at the final tick (rad).
    pub final_yaw_error: f64,
    pub object_mass: f64,
    pub object_dims: Vec3,
    pub object_friction: f64,
    pub object_com_offset: Vec3,
}

/// Aggregate results over a batch of evaluation episodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_episodes: usize,
    /// Fraction of episodes that reached the goal; 0 for an empty batch.
    pub success_rate: f64,
    /// Mean time of successful episodes (s); 0 when none succeeded.
    pub avg_completion_time: f64,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalReport {
    /// Aggregate per-episode records into a report.
    pub fn from_records(episodes: Vec<EpisodeRecord>) -> Self {
        let n = episodes.len();
        let successes: Vec<&EpisodeRecord> =
            episodes.iter().filter(|e| e.outcome == EpisodeStatus::Success).collect();
        let success_rate =
            if n == 0 { 0.0 } else { successes.len() as f64 / n as f64 };
        let avg_completion_time = if successes.is_empty() {
            0.0
        } else {
            successes.iter().map(|e| e.time).sum::<f64>() / successes.len() as f64
        };
        EvalReport { n_episodes: n, success_rate, avg_completion_time, episodes }
    }
}

/// Experiment switches that remove one ingredient of the full pipeline
/// each. The flags are independent and may be combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Train at the maximum difficulty level from the first iteration.
    pub disable_curriculum: bool,
    /// Zero the bi-contact bonus and the orientation penalty weight.
    pub disable_key_rewards: bool,
    /// Drop the smoothness regularizer from the update.
    pub disable_smoothness: bool,
}

impl AblationConfig {
    /// Fold the switches into a training setup.
    pub fn apply(&self, setup: &mut TrainSetup) {
        if self.disable_curriculum {
            setup.start_level = CURRICULUM_LEVELS - 1;
            setup.freeze_curriculum = true;
        }
        if self.disable_key_rewards {
            setup.weights.bicontact_bonus = 0.0;
            setup.weights.orientation = 0.0;
        }
        if self.disable_smoothness {
            setup.ppo.lambda_pi = 0.0;
            setup.ppo.lambda_v = 0.0;
        }
    }
}

/// Evaluate a policy over `n` independent episodes at the given difficulty
/// level. Episode seeds derive deterministically from `seed`; the policy
/// acts by its mean and episodes end at the first success tick. The policy
/// is never mutated.
pub fn run_eval(
    policy: &GaussianPolicy,
    n: usize,
    seed: u64,
    params: &WorldParams,
    ranges: &RandomizationRanges,
    weights: RewardWeights,
    level: usize,
) -> Result<EvalReport, EvalError> {
    check_policy_shape(policy)?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let curriculum = CurriculumState::at_level(level);
    let mut episodes = Vec::with_capacity(n);
    for _ in 0..n {
        let ep_seed: u64 = master.gen();
        let mut env =
            PlannerEnv::new(ep_seed, params.clone(), ranges.clone(), weights, &curriculum);
        env.terminate_on_success = true;
        let (record, _) = run_episode(&mut env, ep_seed, policy, None)?;
        episodes.push(record);
    }
    Ok(EvalReport::from_records(episodes))
}

/// One tick of a replay trace. Contacts are the foot-object contacts of
/// the tick (ground support is implicit); the command is the clamped one
/// the plant executed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayTick {
    pub time: f64,
    pub box_pose: Pose,
    pub box_twist: Twist,
    pub robot_pose: PlanarPose,
    /// World-frame foot positions, left then right.
    pub foot_world: [Vec3; 2],
    pub contacts: Vec<crate::world::Contact>,
    pub reward: RewardBreakdown,
    pub command: Command,
}

/// First line of a replay file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub schema_version: u32,
    pub control_dt: f64,
    pub object_dims: Vec3,
    pub goal: TaskGoal,
    pub outcome: EpisodeStatus,
    /// Sum of per-tick reward totals over the episode.
    pub episode_return: f64,
    pub n_ticks: usize,
}

/// A full episode trace: header plus one record per control tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayLog {
    pub header: ReplayHeader,
    pub ticks: Vec<ReplayTick>,
}

/// Run one episode under the policy mean and capture a replay trace
/// alongside the outcome record.
pub fn replay_episode(
    env: &mut PlannerEnv,
    seed: u64,
    policy: &GaussianPolicy,
) -> Result<(EpisodeRecord, ReplayLog), EvalError> {
    check_policy_shape(policy)?;
    let mut ticks = Vec::new();
    let (record, episode_return) = run_episode(env, seed, policy, Some(&mut ticks))?;
    let header = ReplayHeader {
        schema_version: REPLAY_SCHEMA_VERSION,
        control_dt: env.params.control_dt,
        object_dims: env.state.object.dimensions,
        goal: env.goal,
        outcome: record.outcome,
        episode_return,
        n_ticks: ticks.len(),
    };
    Ok((record, ReplayLog { header, ticks }))
}

/// Write a replay log: one JSON object per line, header first, UTF-8.
pub fn write_replay(log: &ReplayLog, path: &Path) -> Result<(), EvalError> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer(&mut out, &log.header)?;
    out.write_all(b"\n")?;
    for tick in &log.ticks {
        serde_json::to_writer(&mut out, tick)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a replay log written by [`write_replay`].
pub fn read_replay(path: &Path) -> Result<ReplayLog, EvalError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines.next().ok_or(EvalError::EmptyReplay)??;
    let header: ReplayHeader = serde_json::from_str(&header_line)?;
    if header.schema_version != REPLAY_SCHEMA_VERSION {
        return Err(EvalError::SchemaVersion {
            got: header.schema_version,
            supported: REPLAY_SCHEMA_VERSION,
        });
    }
    let mut ticks = Vec::with_capacity(header.n_ticks);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        ticks.push(serde_json::from_str(&line)?);
    }
    Ok(ReplayLog { header, ticks })
}

/// Render labeled evaluation reports as a comparison table. The first
/// entry is the baseline the delta columns refer to; published
/// hardware-scale reference numbers are appended for context and are not
/// claims about this implementation.
pub fn compare_ablations(reports: &[(String, EvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>10} {:>12} {:>12} {:>12}\n",
        "configuration", "success", "avg time (s)", "d success", "d time (s)"
    ));
    let base = reports.first();
    for (i, (label, report)) in reports.iter().enumerate() {
        let (d_succ, d_time) = match (i, base) {
            (0, _) | (_, None) => (String::from("--"), String::from("--")),
            (_, Some((_, b))) => (
                format!("{:+.1}pp", (report.success_rate - b.success_rate) * 100.0),
                format!("{:+.2}", report.avg_completion_time - b.avg_completion_time),
            ),
        };
        out.push_str(&format!(
            "{:<24} {:>9.1}% {:>12.2} {:>12} {:>12}\n",
            label,
            report.success_rate * 100.0,
            report.avg_completion_time,
            d_succ,
            d_time
        ));
    }
    out.push_str(
        "\npublished hardware-scale reference (context only, not reproduced \
         by this desk-scale build):\n",
    );
    out.push_str(&format!("{:<24} {:>9.1}% {:>12.1}\n", "full pipeline", 95.6, 12.1));
    out.push_str(&format!("{:<24} {:>9.1}% {:>12.1}\n", "without curriculum", 78.7, 18.9));
    out.push_str(&format!("{:<24} {:>9.1}% {:>12.1}\n", "without key rewards", 67.9, 21.3));
    out
}

fn check_policy_shape(policy: &GaussianPolicy) -> Result<(), EvalError> {
    let got_obs = policy.mean_net.input_dim();
    let got_act = policy.action_dim();
    if got_obs != PLANNER_OBS_DIM || got_act != ACTION_DIM {
        return Err(EvalError::PolicyShape {
            expected_obs: PLANNER_OBS_DIM,
            expected_act: ACTION_DIM,
            got_obs,
            got_act,
        });
    }
    Ok(())
}

/// Step one episode to completion under the policy mean, optionally
/// capturing per-tick replay records. Returns the outcome record and the
/// episode return.
fn run_episode(
    env: &mut PlannerEnv,
    seed: u64,
    policy: &GaussianPolicy,
    mut replay: Option<&mut Vec<ReplayTick>>,
) -> Result<(EpisodeRecord, f64), EvalError> {
    let object_mass = env.state.object.mass;
    let object_dims = env.state.object.dimensions;
    let object_friction = env.state.object.friction;
    let object_com_offset = env.state.object.com_offset;
    // Hard cap against a stepping bug that never reports done.
    let tick_cap = 2 * (crate::env::EPISODE_TIME_LIMIT / env.params.control_dt) as u64 + 4;
    let mut diverged = false;
    loop {
        let obs = env.observe();
        if !obs.is_finite() {
            diverged = true;
            break;
        }
        let mean = policy.mean(obs.as_slice())?;
        let mut action = [0.0; ACTION_DIM];
        action.copy_from_slice(&mean);
        match env.step(&action) {
            Ok(out) => {
                if let Some(sink) = replay.as_deref_mut() {
                    sink.push(capture_tick(env, &out.breakdown));
                }
                if out.done {
                    break;
                }
            }
            Err(_) => {
                diverged = true;
                break;
            }
        }
        if env.episode_ticks >= tick_cap {
            break;
        }
    }
    let outcome =
        if diverged { EpisodeStatus::Diverged } else { env.episode_outcome() };
    let record = EpisodeRecord {
        seed,
        outcome,
        time: env.state.time,
        final_pos_error: env.goal.position_error(&env.state.object),
        final_yaw_error: env.goal.yaw_error(&env.state.object),
        object_mass,
        object_dims,
        object_friction,
        object_com_offset,
    };
    Ok((record, env.episode_return))
}

fn capture_tick(env: &PlannerEnv, reward: &RewardBreakdown) -> ReplayTick {
    ReplayTick {
        time: env.state.time,
        box_pose: env.state.object.pose,
        box_twist: env.state.object.twist,
        robot_pose: env.state.robot.base_pose,
        foot_world: [env.state.robot.foot_world(0), env.state.robot.foot_world(1)],
        contacts: env
            .state
            .contacts
            .iter()
            .filter(|c| c.surface != SurfaceId::Ground)
            .copied()
            .collect(),
        reward: *reward,
        command: env.prev_clamped_cmd,
    }
}
