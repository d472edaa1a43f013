//! Vectorized rollout collection: one batched policy and critic query
//! per control tick across all environments, per-environment Gaussian
//! action sampling, automatic episode resets, and curriculum
//! bookkeeping.

use super::{PpoError, RolloutBuffer};
use crate::env::{
    curriculum_update, CurriculumState, EpisodeStatus, PlannerEnv, CRITIC_OBS_DIM,
    PLANNER_OBS_DIM,
};
use crate::nn::{gaussian_log_prob, GaussianPolicy, ValueNet};
use crate::world::ACTION_DIM;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Episode-level outcomes observed while collecting one rollout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<u64>,
    pub successes: usize,
    pub episodes: usize,
    /// Episodes that ended because the simulation state blew up.
    pub diverged_incidents: u64,
}

impl RolloutStats {
    fn record(&mut self, ep_return: f64, ep_len: u64, outcome: EpisodeStatus) {
        self.episodes += 1;
        self.episode_returns.push(if ep_return.is_finite() { ep_return } else { 0.0 });
        self.episode_lengths.push(ep_len);
        if outcome == EpisodeStatus::Success {
            self.successes += 1;
        }
    }

    pub fn mean_return(&self) -> Option<f64> {
        if self.episodes == 0 {
            return None;
        }
        Some(self.episode_returns.iter().sum::<f64>() / self.episodes as f64)
    }

    pub fn mean_length(&self) -> Option<f64> {
        if self.episodes == 0 {
            return None;
        }
        Some(self.episode_lengths.iter().sum::<u64>() as f64 / self.episodes as f64)
    }

    pub fn success_rate(&self) -> Option<f64> {
        if self.episodes == 0 {
            return None;
        }
        Some(self.successes as f64 / self.episodes as f64)
    }
}

/// Force a fresh episode after a blow-up and account for it.
fn divergence_reset(
    env: &mut PlannerEnv,
    curriculum: &mut CurriculumState,
    advance_curriculum: bool,
    stats: &mut RolloutStats,
) {
    stats.record(env.episode_return, env.episode_ticks, EpisodeStatus::Diverged);
    stats.diverged_incidents += 1;
    if advance_curriculum {
        *curriculum = curriculum_update(curriculum, EpisodeStatus::Diverged);
    }
    env.reset(curriculum);
}

/// Step every environment `horizon` ticks under the stochastic policy.
///
/// Stores raw actions with their log-densities (the world applies its
/// own command clamp), critic values, rewards, done flags, and
/// same-episode successor observations for the smoothness pairing.
/// Episodes ending inside the horizon reset automatically and report
/// their outcome to the curriculum when `advance_curriculum` is set; a
/// diverged environment resets with the transition marked done and the
/// incident counted.
///
/// A timeout is a time-limit truncation, not a task outcome, so its last
/// transition keeps the value stream alive: the discounted critic value
/// of the successor state is folded into that reward while the done flag
/// still separates the episodes. Failure terminations stay at zero
/// continuation value.
pub fn collect_rollout(
    envs: &mut [PlannerEnv],
    curriculum: &mut CurriculumState,
    advance_curriculum: bool,
    pi: &GaussianPolicy,
    vf: &ValueNet,
    horizon: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(RolloutBuffer, RolloutStats), PpoError> {
    let n = envs.len();
    let act_dim = pi.action_dim();
    let mut buf = RolloutBuffer::new(n, horizon, PLANNER_OBS_DIM, CRITIC_OBS_DIM, act_dim);
    let mut stats = RolloutStats::default();
    let mut actor = Array2::zeros((n, PLANNER_OBS_DIM));
    let mut critic = Array2::zeros((n, CRITIC_OBS_DIM));

    let fill_rows = |envs: &mut [PlannerEnv],
                     curriculum: &mut CurriculumState,
                     stats: &mut RolloutStats,
                     actor: &mut Array2<f64>,
                     critic: &mut Array2<f64>| {
        for (e, env) in envs.iter_mut().enumerate() {
            let (obs, priv_obs) = loop {
                let obs = env.observe();
                let priv_obs = env.privileged();
                if obs.is_finite() && priv_obs.is_finite() {
                    break (obs, priv_obs);
                }
                divergence_reset(env, curriculum, advance_curriculum, stats);
            };
            for (j, v) in obs.as_slice().iter().enumerate() {
                actor[[e, j]] = *v;
                critic[[e, j]] = *v;
            }
            for (j, v) in priv_obs.as_slice().iter().enumerate() {
                critic[[e, PLANNER_OBS_DIM + j]] = *v;
            }
        }
    };

    for t in 0..horizon {
        fill_rows(envs, curriculum, &mut stats, &mut actor, &mut critic);
        let (means, _) = pi.mean_batch(&actor)?;
        let (values, _) = vf.value_batch(&critic)?;

        for e in 0..n {
            let i = buf.idx(e, t);
            buf.actor_obs.row_mut(i).assign(&actor.row(e));
            buf.critic_obs.row_mut(i).assign(&critic.row(e));
            buf.values[i] = values[e];

            let mut action = [0.0; ACTION_DIM];
            for j in 0..act_dim {
                let sigma = pi.log_std[j].exp();
                action[j] =
                    means[[e, j]] + sigma * rng.sample::<f64, _>(StandardNormal);
            }
            let mean_row = means.row(e);
            let logp = gaussian_log_prob(
                mean_row.as_slice().unwrap(),
                pi.log_std.as_slice().unwrap(),
                &action,
            );
            for j in 0..act_dim {
                buf.raw_actions[[i, j]] = action[j];
            }
            buf.log_probs[i] = logp;

            match envs[e].step(&action) {
                Ok(out) => {
                    buf.rewards[i] =
                        if out.breakdown.total.is_finite() { out.breakdown.total } else { 0.0 };
                    buf.dones[i] = out.done;
                    buf.breakdowns[i] = out.breakdown;

                    let next_obs = envs[e].observe();
                    let next_priv = envs[e].privileged();
                    let finite = next_obs.is_finite() && next_priv.is_finite();
                    if finite {
                        for (j, v) in next_obs.as_slice().iter().enumerate() {
                            buf.next_critic_obs[[i, j]] = *v;
                        }
                        for (j, v) in next_priv.as_slice().iter().enumerate() {
                            buf.next_critic_obs[[i, PLANNER_OBS_DIM + j]] = *v;
                        }
                    }
                    buf.pair_valid[i] = !out.done && finite;

                    if out.done && out.status == EpisodeStatus::Timeout && finite {
                        let row = buf.next_critic_obs.row(i);
                        let v_next = vf.value(row.as_slice().unwrap())?;
                        buf.rewards[i] += gamma * v_next;
                    }

                    if out.done {
                        if out.status == EpisodeStatus::Diverged {
                            stats.record(
                                envs[e].episode_return,
                                envs[e].episode_ticks,
                                EpisodeStatus::Diverged,
                            );
                            stats.diverged_incidents += 1;
                            if advance_curriculum {
                                *curriculum =
                                    curriculum_update(curriculum, EpisodeStatus::Diverged);
                            }
                        } else {
                            let outcome = envs[e].episode_outcome();
                            stats.record(
                                envs[e].episode_return,
                                envs[e].episode_ticks,
                                outcome,
                            );
                            if advance_curriculum {
                                *curriculum = curriculum_update(curriculum, outcome);
                            }
                        }
                        envs[e].reset(curriculum);
                    }
                }
                Err(_) => {
                    buf.rewards[i] = 0.0;
                    buf.dones[i] = true;
                    buf.pair_valid[i] = false;
                    divergence_reset(
                        &mut envs[e],
                        curriculum,
                        advance_curriculum,
                        &mut stats,
                    );
                }
            }
        }
    }

    // Bootstrap values from each environment's current observation.
    fill_rows(envs, curriculum, &mut stats, &mut actor, &mut critic);
    let (boot, _) = vf.value_batch(&critic)?;
    buf.bootstrap_values.assign(&boot);

    debug_assert!(buf.pairs_respect_dones());
    Ok((buf, stats))
}
