//! PPO training loop: vectorized rollout storage, generalized advantage
//! estimation, a clipped-surrogate update with entropy bonus and value
//! regression, and a consecutive-state smoothness regularizer that
//! penalizes policy and value drift between a state and a random
//! interpolation toward its successor.
//!
//! This file holds the configuration, the rollout buffer, advantage
//! computation, and the scalar smoothness loss; the update and rollout
//! machinery live in the submodules.

mod rollout;
mod trainer;
mod update;

pub use rollout::{collect_rollout, RolloutStats};
pub use trainer::{Trainer, TrainSetup};
pub use update::{
    agent_n_params, agent_set_flat, agent_to_flat, clipped_surrogate, ppo_update, AdamOpt,
    UpdateStats,
};

use crate::env::RewardBreakdown;
use crate::nn::{GaussianPolicy, NnError, ValueNet};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// All PPO hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda_gae: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Smoothness weight on the policy mean.
    pub lambda_pi: f64,
    /// Smoothness weight on the value estimate.
    pub lambda_v: f64,
    pub max_grad_norm: f64,
    pub n_envs: usize,
    pub rollout_len: usize,
    pub total_iterations: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda_gae: 0.95,
            clip_eps: 0.2,
            epochs: 5,
            minibatches: 4,
            learning_rate: 3e-4,
            entropy_coef: 0.005,
            value_coef: 0.5,
            lambda_pi: 1.0,
            lambda_v: 1.0,
            max_grad_norm: 1.0,
            n_envs: 64,
            rollout_len: 100,
            total_iterations: 500,
            seed: 0,
        }
    }
}

impl PpoConfig {
    /// Check the numeric ranges; the error names the offending field.
    pub fn validate(&self) -> Result<(), String> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.gamma) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !in_unit(self.lambda_gae) {
            return Err(format!("lambda_gae must be in (0, 1], got {}", self.lambda_gae));
        }
        if !(self.clip_eps > 0.0) {
            return Err(format!("clip_eps must be positive, got {}", self.clip_eps));
        }
        if self.lambda_pi < 0.0 {
            return Err(format!("lambda_pi must be nonnegative, got {}", self.lambda_pi));
        }
        if self.lambda_v < 0.0 {
            return Err(format!("lambda_v must be nonnegative, got {}", self.lambda_v));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(format!("learning_rate must be finite, got {}", self.learning_rate));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(format!("max_grad_norm must be positive, got {}", self.max_grad_norm));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("minibatches", self.minibatches),
            ("n_envs", self.n_envs),
            ("rollout_len", self.rollout_len),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Per-iteration training record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub iteration: usize,
    /// Mean return over episodes finished this iteration (carried
    /// forward when none finished).
    pub mean_return: f64,
    pub mean_episode_length: f64,
    pub success_rate: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub smoothness_loss: f64,
    pub clip_fraction: f64,
    pub curriculum_level: usize,
    /// Environment divergences handled during collection.
    pub diverged_incidents: u64,
    /// True when a non-finite loss forced a parameter rollback.
    pub update_aborted: bool,
}

impl TrainStats {
    pub fn is_finite(&self) -> bool {
        [
            self.mean_return,
            self.mean_episode_length,
            self.success_rate,
            self.surrogate_loss,
            self.value_loss,
            self.entropy,
            self.smoothness_loss,
            self.clip_fraction,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PpoError {
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Rectangular rollout storage: one row per (environment, step) at row
/// index `env * horizon + step`. Next-observation rows support the
/// smoothness pairing; `pair_valid` is false wherever the transition
/// ended an episode, so no pair ever straddles a reset.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub actor_obs: Array2<f64>,
    pub critic_obs: Array2<f64>,
    /// Same-episode successor of `critic_obs`; the leading actor slice
    /// is the successor of `actor_obs`.
    pub next_critic_obs: Array2<f64>,
    pub raw_actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    pub rewards: Array1<f64>,
    pub dones: Vec<bool>,
    pub values: Array1<f64>,
    /// Critic value of each environment's observation after the last
    /// step, for bootstrapping truncated episodes.
    pub bootstrap_values: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
    pub pair_valid: Vec<bool>,
    /// Reward term breakdown of every stored transition.
    pub breakdowns: Vec<RewardBreakdown>,
}

impl RolloutBuffer {
    pub fn new(
        n_envs: usize,
        horizon: usize,
        actor_dim: usize,
        critic_dim: usize,
        action_dim: usize,
    ) -> Self {
        let n = n_envs * horizon;
        RolloutBuffer {
            n_envs,
            horizon,
            actor_obs: Array2::zeros((n, actor_dim)),
            critic_obs: Array2::zeros((n, critic_dim)),
            next_critic_obs: Array2::zeros((n, critic_dim)),
            raw_actions: Array2::zeros((n, action_dim)),
            log_probs: Array1::zeros(n),
            rewards: Array1::zeros(n),
            dones: vec![false; n],
            values: Array1::zeros(n),
            bootstrap_values: Array1::zeros(n_envs),
            advantages: Array1::zeros(n),
            returns: Array1::zeros(n),
            pair_valid: vec![false; n],
            breakdowns: vec![RewardBreakdown::default(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, env: usize, t: usize) -> usize {
        env * self.horizon + t
    }

    /// No smoothness pair may cross an episode boundary.
    pub fn pairs_respect_dones(&self) -> bool {
        self.pair_valid.iter().zip(&self.dones).all(|(v, d)| !(*v && *d))
    }

    /// Fill `advantages` and `returns` env by env with masked GAE.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<(), PpoError> {
        for e in 0..self.n_envs {
            let lo = self.idx(e, 0);
            let hi = lo + self.horizon;
            let rewards = self.rewards.as_slice().unwrap()[lo..hi].to_vec();
            let values = self.values.as_slice().unwrap()[lo..hi].to_vec();
            let dones = self.dones[lo..hi].to_vec();
            let (adv, ret) =
                compute_gae(&rewards, &values, &dones, self.bootstrap_values[e], gamma, lambda)?;
            for (k, i) in (lo..hi).enumerate() {
                self.advantages[i] = adv[k];
                self.returns[i] = ret[k];
            }
        }
        Ok(())
    }

    /// Shift and scale `advantages` to zero mean and unit variance over
    /// the whole buffer. A near-constant batch is left centered only.
    pub fn normalize_advantages(&mut self) {
        let n = self.len() as f64;
        let mean = self.advantages.sum() / n;
        self.advantages.mapv_inplace(|a| a - mean);
        let var = self.advantages.iter().map(|a| a * a).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-12 {
            self.advantages.mapv_inplace(|a| a / std);
        }
    }
}

/// Generalized advantage estimation over one environment's step sequence
/// with episode-boundary masking. Returns (advantages, returns) where
/// returns_t = advantages_t + values_t.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    if values.len() != rewards.len() {
        return Err(PpoError::LengthMismatch {
            what: "values",
            expected: rewards.len(),
            got: values.len(),
        });
    }
    if dones.len() != rewards.len() {
        return Err(PpoError::LengthMismatch {
            what: "dones",
            expected: rewards.len(),
            got: dones.len(),
        });
    }
    let t_max = rewards.len();
    let mut advantages = vec![0.0; t_max];
    let mut gae = 0.0;
    for t in (0..t_max).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let v_next = if t + 1 < t_max { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * mask * v_next - values[t];
        gae = delta + gamma * lambda * mask * gae;
        advantages[t] = gae;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Smoothness loss for one observation pair from the same episode.
///
/// Interpolates `obs_bar = obs_t + u (obs_t1 - obs_t)`, then returns
/// `lambda_pi * |pi_mean(obs_bar) - pi_mean(obs_t)|^2 + lambda_v *
/// (V(obs_bar) - V(obs_t))^2`. Observations are full critic inputs; the
/// policy reads their leading slice. In the training update the
/// `obs_t` branch is a constant target and gradients flow only through
/// `obs_bar`.
pub fn l2c2_loss(
    pi: &GaussianPolicy,
    vf: &ValueNet,
    obs_t: &[f64],
    obs_t1: &[f64],
    u: f64,
    lambda_pi: f64,
    lambda_v: f64,
) -> Result<f64, PpoError> {
    let critic_dim = vf.net.input_dim();
    let actor_dim = pi.mean_net.input_dim();
    if obs_t.len() != critic_dim {
        return Err(PpoError::LengthMismatch {
            what: "obs_t",
            expected: critic_dim,
            got: obs_t.len(),
        });
    }
    if obs_t1.len() != critic_dim {
        return Err(PpoError::LengthMismatch {
            what: "obs_t1",
            expected: critic_dim,
            got: obs_t1.len(),
        });
    }
    if actor_dim > critic_dim {
        return Err(PpoError::Config(format!(
            "policy input {actor_dim} exceeds critic input {critic_dim}"
        )));
    }
    let obs_bar: Vec<f64> =
        obs_t.iter().zip(obs_t1).map(|(a, b)| a + u * (b - a)).collect();
    let mean_t = pi.mean(&obs_t[..actor_dim])?;
    let mean_bar = pi.mean(&obs_bar[..actor_dim])?;
    let v_t = vf.value(obs_t)?;
    let v_bar = vf.value(&obs_bar)?;
    let pi_term: f64 =
        mean_t.iter().zip(&mean_bar).map(|(a, b)| (a - b) * (a - b)).sum();
    let v_term = (v_t - v_bar) * (v_t - v_bar);
    Ok(lambda_pi * pi_term + lambda_v * v_term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gamma_zero_reduces_to_one_step_error() {
        let rewards = [1.0, -0.5, 2.0, 0.25];
        let values = [0.3, 0.1, -0.2, 0.9];
        let dones = [false, true, false, false];
        let (adv, ret) =
            compute_gae(&rewards, &values, &dones, 5.0, 0.0, 0.95).unwrap();
        for t in 0..4 {
            assert!((adv[t] - (rewards[t] - values[t])).abs() < 1e-15);
            assert!((ret[t] - (adv[t] + values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_one_without_dones_is_monte_carlo() {
        let gamma = 0.9;
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.5, -0.5, 0.25];
        let boot = 4.0;
        let (adv, _) =
            compute_gae(&rewards, &values, &[false; 3], boot, gamma, 1.0).unwrap();
        for t in 0..3 {
            let mut expect = -values[t];
            for k in t..3 {
                expect += gamma.powi((k - t) as i32) * rewards[k];
            }
            expect += gamma.powi((3 - t) as i32) * boot;
            assert!((adv[t] - expect).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn gae_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t_max = 100;
            let rewards: Vec<f64> = (0..t_max).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..t_max).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dones: Vec<bool> = (0..t_max).map(|_| rng.gen_bool(0.1)).collect();
            let boot = rng.gen_range(-1.0..1.0);
            let gamma = rng.gen_range(0.8..1.0);
            let lambda = rng.gen_range(0.8..1.0);

            let (adv, ret) =
                compute_gae(&rewards, &values, &dones, boot, gamma, lambda).unwrap();

            // Direct sum over future one-step errors with explicit masks.
            for t in 0..t_max {
                let mut expect = 0.0;
                let mut factor = 1.0;
                for l in t..t_max {
                    let mask = if dones[l] { 0.0 } else { 1.0 };
                    let v_next = if l + 1 < t_max { values[l + 1] } else { boot };
                    let delta = rewards[l] + gamma * mask * v_next - values[l];
                    expect += factor * delta;
                    if dones[l] {
                        break;
                    }
                    factor *= gamma * lambda;
                }
                assert!((adv[t] - expect).abs() < 1e-10, "t={t}");
                assert!((ret[t] - (adv[t] + values[t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let err = compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.9, 0.9)
            .unwrap_err();
        assert_eq!(
            err,
            PpoError::LengthMismatch { what: "values", expected: 2, got: 1 }
        );
        let err = compute_gae(&[1.0], &[0.0], &[], 0.0, 0.9, 0.9).unwrap_err();
        assert_eq!(err, PpoError::LengthMismatch { what: "dones", expected: 1, got: 0 });
    }

    #[test]
    fn advantage_normalization_hits_zero_mean_unit_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut buf = RolloutBuffer::new(4, 25, 3, 5, 2);
        for a in buf.advantages.iter_mut() {
            *a = rng.gen_range(-3.0..5.0);
        }
        buf.normalize_advantages();
        let n = buf.len() as f64;
        let mean = buf.advantages.sum() / n;
        let std = (buf.advantages.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-10);
        assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn buffer_is_rectangular_and_indexed_by_env_then_step() {
        let buf = RolloutBuffer::new(3, 7, 81, 101, 9);
        assert_eq!(buf.len(), 21);
        assert_eq!(buf.actor_obs.dim(), (21, 81));
        assert_eq!(buf.critic_obs.dim(), (21, 101));
        assert_eq!(buf.raw_actions.dim(), (21, 9));
        assert_eq!(buf.idx(2, 6), 20);
        assert_eq!(buf.idx(1, 0), 7);
        assert!(buf.pairs_respect_dones());
    }

    #[test]
    fn pair_validity_excludes_done_rows() {
        let mut buf = RolloutBuffer::new(1, 4, 2, 3, 1);
        buf.dones = vec![false, true, false, false];
        buf.pair_valid = vec![true, false, true, true];
        assert!(buf.pairs_respect_dones());
        buf.pair_valid[1] = true;
        assert!(!buf.pairs_respect_dones());
    }

    fn tiny_nets(rng: &mut ChaCha8Rng) -> (GaussianPolicy, ValueNet) {
        let actor = MlpParams::init(&[4, 6, 3], Activation::Tanh, 0.5, rng).unwrap();
        let critic = MlpParams::init(&[6, 5, 1], Activation::Tanh, 1.0, rng).unwrap();
        (GaussianPolicy::new(actor), ValueNet::new(critic).unwrap())
    }

    #[test]
    fn zero_interpolation_gives_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (pi, vf) = tiny_nets(&mut rng);
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = l2c2_loss(&pi, &vf, &a, &b, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn zero_weights_give_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (pi, vf) = tiny_nets(&mut rng);
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = l2c2_loss(&pi, &vf, &a, &b, 0.7, 0.0, 0.0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn linear_networks_match_the_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut actor = MlpParams::zeros(&[4, 3], Activation::Tanh).unwrap();
        for v in actor.weights[0].iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut critic = MlpParams::zeros(&[6, 1], Activation::Tanh).unwrap();
        for v in critic.weights[0].iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let pi = GaussianPolicy::new(actor.clone());
        let vf = ValueNet::new(critic.clone()).unwrap();

        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = 0.37;
        let lambda_pi = 0.8;
        let lambda_v = 0.4;

        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
        let mut wd = vec![0.0; 3];
        for i in 0..3 {
            for j in 0..4 {
                wd[i] += actor.weights[0][[i, j]] * d[j];
            }
        }
        let mut vd = 0.0;
        for j in 0..6 {
            vd += critic.weights[0][[0, j]] * d[j];
        }
        let expect = lambda_pi * u * u * wd.iter().map(|x| x * x).sum::<f64>()
            + lambda_v * u * u * vd * vd;

        let loss = l2c2_loss(&pi, &vf, &a, &b, u, lambda_pi, lambda_v).unwrap();
        assert!((loss - expect).abs() < 1e-9, "{loss} vs {expect}");

        let pi_only = l2c2_loss(&pi, &vf, &a, &b, u, lambda_pi, 0.0).unwrap();
        let expect_pi = lambda_pi * u * u * wd.iter().map(|x| x * x).sum::<f64>();
        assert!((pi_only - expect_pi).abs() < 1e-9);
    }

    #[test]
    fn smoothness_loss_rejects_wrong_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (pi, vf) = tiny_nets(&mut rng);
        let err = l2c2_loss(&pi, &vf, &[0.0; 5], &[0.0; 6], 0.5, 1.0, 1.0).unwrap_err();
        assert_eq!(err, PpoError::LengthMismatch { what: "obs_t", expected: 6, got: 5 });
        let err = l2c2_loss(&pi, &vf, &[0.0; 6], &[0.0; 7], 0.5, 1.0, 1.0).unwrap_err();
        assert_eq!(err, PpoError::LengthMismatch { what: "obs_t1", expected: 6, got: 7 });
    }

    #[test]
    fn config_validation_names_the_offending_field() {
        assert!(PpoConfig::default().validate().is_ok());
        let mut c = PpoConfig::default();
        c.gamma = 1.5;
        assert!(c.validate().unwrap_err().contains("gamma"));
        let mut c = PpoConfig::default();
        c.lambda_gae = 0.0;
        assert!(c.validate().unwrap_err().contains("lambda_gae"));
        let mut c = PpoConfig::default();
        c.clip_eps = -0.1;
        assert!(c.validate().unwrap_err().contains("clip_eps"));
        let mut c = PpoConfig::default();
        c.lambda_pi = -1.0;
        assert!(c.validate().unwrap_err().contains("lambda_pi"));
        let mut c = PpoConfig::default();
        c.minibatches = 0;
        assert!(c.validate().unwrap_err().contains("minibatches"));
    }
}
