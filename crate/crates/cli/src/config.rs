//! Experiment configuration: a strict TOML schema over the core parameter
//! types, defaults mirroring the published training setup, and the
//! conversions that turn a parsed file into a runnable training setup.

use locopush_core::env::{RandomizationRanges, RewardWeights, CURRICULUM_LEVELS};
use locopush_core::eval::AblationConfig;
use locopush_core::ppo::{PpoConfig, TrainSetup};
use locopush_core::world::WorldParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Configuration loading and validation failures.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Parse errors carry the offending key path and span from the
    /// deserializer.
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value at {path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

/// Per-term overrides of the reward weights. Unset keys keep the value
/// derived from the control period; set keys are final multipliers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardOverrides {
    pub dis_foot_obj: Option<f64>,
    pub dir_tar_obj: Option<f64>,
    pub dis_obj_tar: Option<f64>,
    pub dir_tar: Option<f64>,
    pub orientation: Option<f64>,
    pub foot_velocity: Option<f64>,
    pub foot_acceleration: Option<f64>,
    pub action_rate: Option<f64>,
    pub action_limits: Option<f64>,
    pub termination: Option<f64>,
    pub bicontact_bonus: Option<f64>,
    pub bonus_every_tick: Option<bool>,
}

impl RewardOverrides {
    /// Overwrite the set fields on a weight table.
    pub fn apply(&self, w: &mut RewardWeights) {
        let scalar = [
            (self.dis_foot_obj, &mut w.dis_foot_obj),
            (self.dir_tar_obj, &mut w.dir_tar_obj),
            (self.dis_obj_tar, &mut w.dis_obj_tar),
            (self.dir_tar, &mut w.dir_tar),
            (self.orientation, &mut w.orientation),
            (self.foot_velocity, &mut w.foot_velocity),
            (self.foot_acceleration, &mut w.foot_acceleration),
            (self.action_rate, &mut w.action_rate),
            (self.action_limits, &mut w.action_limits),
            (self.termination, &mut w.termination),
            (self.bicontact_bonus, &mut w.bicontact_bonus),
        ];
        for (src, dst) in scalar {
            if let Some(v) = src {
                *dst = v;
            }
        }
        if let Some(b) = self.bonus_every_tick {
            w.bonus_every_tick = b;
        }
    }
}

/// Hidden layer widths of the two networks; input and output dims are
/// fixed by the observation and action layouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { actor_hidden: vec![256, 128], critic_hidden: vec![256, 128] }
    }
}

/// Difficulty schedule entry point; promotion rules are fixed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub start_level: usize,
}

/// Root configuration for one experiment. The top-level `seed` is
/// authoritative and overrides `ppo.seed` when the setup is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Save a checkpoint every this many iterations (and at exit).
    pub checkpoint_every: usize,
    pub world: WorldParams,
    pub ranges: RandomizationRanges,
    pub rewards: RewardOverrides,
    pub curriculum: CurriculumConfig,
    pub network: NetworkConfig,
    pub ppo: PpoConfig,
    pub ablation: AblationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            checkpoint_every: 50,
            world: WorldParams::default(),
            ranges: RandomizationRanges::default(),
            rewards: RewardOverrides::default(),
            curriculum: CurriculumConfig::default(),
            network: NetworkConfig::default(),
            ppo: PpoConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Check every value; errors name the offending key path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.checkpoint_every == 0 {
            return Err(invalid("checkpoint_every", "must be at least 1"));
        }
        let w = &self.world;
        for (path, v) in [
            ("world.gravity", w.gravity),
            ("world.contact_stiffness", w.contact_stiffness),
            ("world.foot_radius", w.foot_radius),
            ("world.foot_pen_cap", w.foot_pen_cap),
            ("world.control_dt", w.control_dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(path, format!("must be positive and finite, got {v}")));
            }
        }
        if !(w.contact_damping >= 0.0 && w.contact_damping.is_finite()) {
            return Err(invalid(
                "world.contact_damping",
                format!("must be nonnegative and finite, got {}", w.contact_damping),
            ));
        }
        if !(w.ground_friction >= 0.0 && w.ground_friction.is_finite()) {
            return Err(invalid(
                "world.ground_friction",
                format!("must be nonnegative and finite, got {}", w.ground_friction),
            ));
        }
        if w.substeps_per_tick == 0 {
            return Err(invalid("world.substeps_per_tick", "must be at least 1"));
        }
        for (name, [lo, hi]) in self.ranges.fields() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(invalid(
                    &format!("ranges.{name}"),
                    format!("bounds must be finite, got [{lo}, {hi}]"),
                ));
            }
            if lo > hi {
                return Err(invalid(
                    &format!("ranges.{name}"),
                    format!("range is empty: [{lo}, {hi}]"),
                ));
            }
        }
        let weights = self.effective_weights();
        if !weights.is_finite() {
            return Err(invalid("rewards", "effective weights must all be finite"));
        }
        if self.curriculum.start_level >= CURRICULUM_LEVELS {
            return Err(invalid(
                "curriculum.start_level",
                format!(
                    "{} out of range, valid levels are 0..={}",
                    self.curriculum.start_level,
                    CURRICULUM_LEVELS - 1
                ),
            ));
        }
        for (path, dims) in [
            ("network.actor_hidden", &self.network.actor_hidden),
            ("network.critic_hidden", &self.network.critic_hidden),
        ] {
            if dims.iter().any(|&d| d == 0) {
                return Err(invalid(path, "layer widths must be at least 1"));
            }
        }
        self.ppo
            .validate()
            .map_err(|message| ConfigError::Invalid { path: String::from("ppo"), message })?;
        Ok(())
    }

    /// Reward weights after applying the overrides to the dt-derived
    /// table.
    pub fn effective_weights(&self) -> RewardWeights {
        let mut w = RewardWeights::from_dt(self.world.control_dt);
        self.rewards.apply(&mut w);
        w
    }

    /// Build the training setup, folding in the ablation switches.
    pub fn train_setup(&self) -> TrainSetup {
        let mut ppo = self.ppo.clone();
        ppo.seed = self.seed;
        let mut setup = TrainSetup {
            ppo,
            world: self.world.clone(),
            ranges: self.ranges.clone(),
            weights: self.effective_weights(),
            actor_hidden: self.network.actor_hidden.clone(),
            critic_hidden: self.network.critic_hidden.clone(),
            start_level: self.curriculum.start_level,
            freeze_curriculum: false,
        };
        self.ablation.apply(&mut setup);
        setup
    }

    /// Canonical TOML rendering; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        let mut canon = self.clone();
        canon.ppo.seed = canon.seed;
        toml::to_string_pretty(&canon).expect("config serializes")
    }

    /// Digest of the canonical rendering, stored in checkpoints.
    pub fn hash(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.into()
    }
}

/// Parse and validate a config file. The top-level seed is copied over
/// `ppo.seed` so one knob controls all RNG streams.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Parse and validate config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.ppo.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}
