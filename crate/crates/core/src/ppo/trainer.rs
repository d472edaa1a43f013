//! Training driver: owns the policy, critic, optimizer, environments,
//! curriculum, and RNG streams, and advances them one iteration at a
//! time. The whole trainer serializes, so a run can be checkpointed and
//! resumed on the exact trajectory it would have taken uninterrupted.

use super::{
    agent_n_params, collect_rollout, ppo_update, AdamOpt, PpoConfig, PpoError, TrainStats,
};
use crate::env::{
    CurriculumState, PlannerEnv, RandomizationRanges, RewardWeights, CRITIC_OBS_DIM,
    CURRICULUM_LEVELS, PLANNER_OBS_DIM,
};
use crate::nn::{Activation, GaussianPolicy, MlpParams, ValueNet};
use crate::world::{WorldParams, ACTION_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Everything a training run needs beyond the PPO hyperparameters:
/// world physics, randomization ranges, reward weights, network widths,
/// and curriculum policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub ppo: PpoConfig,
    pub world: WorldParams,
    pub ranges: RandomizationRanges,
    pub weights: RewardWeights,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Curriculum level episodes start at.
    pub start_level: usize,
    /// When set, the curriculum never advances past `start_level`.
    pub freeze_curriculum: bool,
}

impl Default for TrainSetup {
    fn default() -> Self {
        TrainSetup {
            ppo: PpoConfig::default(),
            world: WorldParams::default(),
            ranges: RandomizationRanges::default(),
            weights: RewardWeights::default(),
            actor_hidden: vec![256, 128],
            critic_hidden: vec![256, 128],
            start_level: 0,
            freeze_curriculum: false,
        }
    }
}

/// A resumable training run. All fields participate in serialization;
/// restoring a serialized trainer continues the exact run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    pub setup: TrainSetup,
    pub pi: GaussianPolicy,
    pub vf: ValueNet,
    pub opt: AdamOpt,
    pub envs: Vec<PlannerEnv>,
    pub curriculum: CurriculumState,
    pub iteration: usize,
    pub total_incidents: u64,
    last_mean_return: f64,
    last_mean_length: f64,
    last_success_rate: f64,
    sample_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
}

impl Trainer {
    /// Build networks, environments, and RNG streams from the setup
    /// seed.
    pub fn new(setup: TrainSetup) -> Result<Self, PpoError> {
        setup.ppo.validate().map_err(PpoError::Config)?;
        let mut master = ChaCha8Rng::seed_from_u64(setup.ppo.seed);
        let mut init_rng = ChaCha8Rng::seed_from_u64(master.gen());

        let mut actor_dims = vec![PLANNER_OBS_DIM];
        actor_dims.extend(&setup.actor_hidden);
        actor_dims.push(ACTION_DIM);
        let pi = GaussianPolicy::new(MlpParams::init(
            &actor_dims,
            Activation::Tanh,
            0.01,
            &mut init_rng,
        )?);

        let mut critic_dims = vec![CRITIC_OBS_DIM];
        critic_dims.extend(&setup.critic_hidden);
        critic_dims.push(1);
        let vf = ValueNet::new(MlpParams::init(
            &critic_dims,
            Activation::Tanh,
            1.0,
            &mut init_rng,
        )?)?;

        let opt = AdamOpt::new(agent_n_params(&pi, &vf), setup.ppo.learning_rate);
        let level = setup.start_level.min(CURRICULUM_LEVELS - 1);
        let curriculum = CurriculumState::at_level(level);
        let envs: Vec<PlannerEnv> = (0..setup.ppo.n_envs)
            .map(|_| {
                PlannerEnv::new(
                    master.gen(),
                    setup.world.clone(),
                    setup.ranges.clone(),
                    setup.weights,
                    &curriculum,
                )
            })
            .collect();
        let sample_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let update_rng = ChaCha8Rng::seed_from_u64(master.gen());
        Ok(Trainer {
            setup,
            pi,
            vf,
            opt,
            envs,
            curriculum,
            iteration: 0,
            total_incidents: 0,
            last_mean_return: 0.0,
            last_mean_length: 0.0,
            last_success_rate: 0.0,
            sample_rng,
            update_rng,
        })
    }

    /// Collect one rollout, update the parameters, and report the
    /// iteration's statistics. Episode aggregates carry the previous
    /// value forward when no episode finished this iteration.
    pub fn iterate(&mut self) -> Result<TrainStats, PpoError> {
        let advance = !self.setup.freeze_curriculum;
        let (mut buf, roll) = collect_rollout(
            &mut self.envs,
            &mut self.curriculum,
            advance,
            &self.pi,
            &self.vf,
            self.setup.ppo.rollout_len,
            self.setup.ppo.gamma,
            &mut self.sample_rng,
        )?;
        buf.compute_advantages(self.setup.ppo.gamma, self.setup.ppo.lambda_gae)?;
        buf.normalize_advantages();
        let update = ppo_update(
            &mut self.pi,
            &mut self.vf,
            &mut self.opt,
            &buf,
            &self.setup.ppo,
            &mut self.update_rng,
        )?;

        if let Some(m) = roll.mean_return() {
            self.last_mean_return = m;
        }
        if let Some(m) = roll.mean_length() {
            self.last_mean_length = m;
        }
        if let Some(r) = roll.success_rate() {
            self.last_success_rate = r;
        }
        self.total_incidents += roll.diverged_incidents;
        self.iteration += 1;

        Ok(TrainStats {
            iteration: self.iteration,
            mean_return: self.last_mean_return,
            mean_episode_length: self.last_mean_length,
            success_rate: self.last_success_rate,
            surrogate_loss: update.surrogate_loss,
            value_loss: update.value_loss,
            entropy: update.entropy,
            smoothness_loss: update.smoothness_loss,
            clip_fraction: update.clip_fraction,
            curriculum_level: self.curriculum.level,
            diverged_incidents: roll.diverged_incidents,
            update_aborted: update.aborted,
        })
    }

    /// Run `iterations` more iterations, handing each record to the
    /// sink.
    pub fn run(
        &mut self,
        iterations: usize,
        mut sink: impl FnMut(&TrainStats),
    ) -> Result<Vec<TrainStats>, PpoError> {
        let mut out = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let stats = self.iterate()?;
            sink(&stats);
            out.push(stats);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_setup() -> TrainSetup {
        TrainSetup {
            ppo: PpoConfig {
                n_envs: 4,
                rollout_len: 8,
                epochs: 2,
                minibatches: 2,
                seed: 7,
                ..PpoConfig::default()
            },
            actor_hidden: vec![16],
            critic_hidden: vec![16],
            ..TrainSetup::default()
        }
    }

    #[test]
    fn equal_seeds_give_identical_stat_streams() {
        let mut a = Trainer::new(tiny_setup()).unwrap();
        let mut b = Trainer::new(tiny_setup()).unwrap();
        for _ in 0..3 {
            let sa = a.iterate().unwrap();
            let sb = b.iterate().unwrap();
            assert_eq!(sa, sb);
            assert!(sa.is_finite());
        }
    }

    #[test]
    fn serialized_trainer_resumes_the_exact_run() {
        let mut t = Trainer::new(tiny_setup()).unwrap();
        t.iterate().unwrap();
        t.iterate().unwrap();
        let blob = serde_json::to_string(&t).unwrap();

        let s_live = t.iterate().unwrap();
        let mut restored: Trainer = serde_json::from_str(&blob).unwrap();
        let s_resumed = restored.iterate().unwrap();
        assert_eq!(s_live, s_resumed);

        let live_flat = super::super::agent_to_flat(&t.pi, &t.vf);
        let res_flat = super::super::agent_to_flat(&restored.pi, &restored.vf);
        assert!(live_flat
            .iter()
            .zip(&res_flat)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn disabled_smoothness_reports_exactly_zero() {
        let mut setup = tiny_setup();
        setup.ppo.lambda_pi = 0.0;
        setup.ppo.lambda_v = 0.0;
        let mut t = Trainer::new(setup).unwrap();
        for _ in 0..2 {
            let s = t.iterate().unwrap();
            assert_eq!(s.smoothness_loss, 0.0);
        }
    }

    #[test]
    fn invalid_config_is_rejected_up_front() {
        let mut setup = tiny_setup();
        setup.ppo.gamma = 0.0;
        let err = Trainer::new(setup).unwrap_err();
        assert!(matches!(err, PpoError::Config(msg) if msg.contains("gamma")));
    }

    #[test]
    fn frozen_curriculum_stays_at_start_level() {
        let mut setup = tiny_setup();
        setup.start_level = 3;
        setup.freeze_curriculum = true;
        let mut t = Trainer::new(setup).unwrap();
        let s = t.iterate().unwrap();
        assert_eq!(s.curriculum_level, 3);
        assert_eq!(t.curriculum.level, 3);
    }
}
