//! The PPO parameter update: clipped surrogate with entropy bonus, value
//! regression, the smoothness regularizer, global gradient clipping, and
//! an adaptive-moment step over one flat parameter vector covering the
//! policy network, its log standard deviations, and the critic.

use super::{PpoConfig, PpoError, RolloutBuffer};
use crate::nn::{
    gaussian_entropy, mlp_backward_batch, GaussianPolicy, Gradients, ValueNet,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Adaptive first/second-moment optimizer over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamOpt {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamOpt {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamOpt {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One descent step in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer sized for different parameters");
        assert_eq!(grad.len(), self.m.len(), "gradient length mismatch");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Total number of scalar parameters across policy, log-std, and critic.
pub fn agent_n_params(pi: &GaussianPolicy, vf: &ValueNet) -> usize {
    pi.mean_net.n_params() + pi.log_std.len() + vf.net.n_params()
}

/// Concatenate all agent parameters: policy layers, log-std, critic
/// layers.
pub fn agent_to_flat(pi: &GaussianPolicy, vf: &ValueNet) -> Vec<f64> {
    let mut out = pi.mean_net.to_flat();
    out.extend(pi.log_std.iter());
    out.extend(vf.net.to_flat());
    out
}

/// Overwrite all agent parameters from a flat vector laid out as
/// [`agent_to_flat`] produces.
pub fn agent_set_flat(
    pi: &mut GaussianPolicy,
    vf: &mut ValueNet,
    flat: &[f64],
) -> Result<(), PpoError> {
    let n_pi = pi.mean_net.n_params();
    let n_ls = pi.log_std.len();
    let expected = n_pi + n_ls + vf.net.n_params();
    if flat.len() != expected {
        return Err(PpoError::LengthMismatch {
            what: "flat parameters",
            expected,
            got: flat.len(),
        });
    }
    pi.mean_net.set_flat(&flat[..n_pi])?;
    for (dst, src) in pi.log_std.iter_mut().zip(&flat[n_pi..n_pi + n_ls]) {
        *dst = *src;
    }
    vf.net.set_flat(&flat[n_pi + n_ls..])?;
    Ok(())
}

fn grads_to_flat(g_pi: &Gradients, g_ls: &[f64], g_vf: &Gradients) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in g_pi.weights.iter().zip(&g_pi.biases) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out.extend(g_ls.iter());
    for (w, b) in g_vf.weights.iter().zip(&g_vf.biases) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

/// Per-sample clipped surrogate: returns the loss contribution and its
/// derivative with respect to the probability ratio. A positive
/// advantage with the ratio beyond 1 + eps (or negative beyond 1 - eps)
/// contributes zero gradient.
pub fn clipped_surrogate(rho: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = rho * adv;
    let clipped = rho.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (-unclipped, -adv)
    } else {
        (-clipped, 0.0)
    }
}

/// One minibatch gathered out of the rollout buffer.
pub(crate) struct MinibatchData {
    pub obs_pi: Array2<f64>,
    pub obs_vf: Array2<f64>,
    pub next_vf: Array2<f64>,
    pub actions: Array2<f64>,
    pub logp_old: Vec<f64>,
    pub adv: Vec<f64>,
    pub ret: Vec<f64>,
    pub valid: Vec<bool>,
}

impl MinibatchData {
    pub fn len(&self) -> usize {
        self.logp_old.len()
    }

    pub fn gather(buf: &RolloutBuffer, idx: &[usize]) -> Self {
        let b = idx.len();
        let a_dim = buf.actor_obs.ncols();
        let c_dim = buf.critic_obs.ncols();
        let act_dim = buf.raw_actions.ncols();
        let mut obs_pi = Array2::zeros((b, a_dim));
        let mut obs_vf = Array2::zeros((b, c_dim));
        let mut next_vf = Array2::zeros((b, c_dim));
        let mut actions = Array2::zeros((b, act_dim));
        let mut logp_old = Vec::with_capacity(b);
        let mut adv = Vec::with_capacity(b);
        let mut ret = Vec::with_capacity(b);
        let mut valid = Vec::with_capacity(b);
        for (k, &i) in idx.iter().enumerate() {
            obs_pi.row_mut(k).assign(&buf.actor_obs.row(i));
            obs_vf.row_mut(k).assign(&buf.critic_obs.row(i));
            next_vf.row_mut(k).assign(&buf.next_critic_obs.row(i));
            actions.row_mut(k).assign(&buf.raw_actions.row(i));
            logp_old.push(buf.log_probs[i]);
            adv.push(buf.advantages[i]);
            ret.push(buf.returns[i]);
            valid.push(buf.pair_valid[i]);
        }
        MinibatchData { obs_pi, obs_vf, next_vf, actions, logp_old, adv, ret, valid }
    }
}

/// Losses and the flat (unclipped) gradient of one minibatch.
pub(crate) struct MinibatchEval {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub smooth: f64,
    pub total: f64,
    pub clip_hits: usize,
    pub grad: Vec<f64>,
}

/// Evaluate the full PPO loss on one minibatch and differentiate it
/// analytically. `u` supplies one interpolation factor per sample for
/// the smoothness term; only rows with a valid same-episode successor
/// contribute, and the current-state branch is a constant target.
pub(crate) fn eval_minibatch(
    pi: &GaussianPolicy,
    vf: &ValueNet,
    mb: &MinibatchData,
    cfg: &PpoConfig,
    u: &[f64],
) -> Result<MinibatchEval, PpoError> {
    let b = mb.len();
    let act_dim = pi.action_dim();
    let bf = b as f64;

    // Policy branch: ratios, clipped surrogate, gradients to the mean
    // rows and the log standard deviations.
    let (mean_t, cache_pi) = pi.mean_batch(&mb.obs_pi)?;
    let log_std = pi.log_std.as_slice().unwrap();
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut d_mean = Array2::zeros((b, act_dim));
    let mut g_ls = vec![0.0; act_dim];
    let mut surrogate = 0.0;
    let mut clip_hits = 0;
    for i in 0..b {
        let mut logp = 0.0;
        for j in 0..act_dim {
            let sigma = log_std[j].exp();
            let z = (mb.actions[[i, j]] - mean_t[[i, j]]) / sigma;
            logp += -log_std[j] - half_ln_2pi - 0.5 * z * z;
        }
        let rho = (logp - mb.logp_old[i]).exp();
        if (rho - 1.0).abs() > cfg.clip_eps {
            clip_hits += 1;
        }
        let (loss_i, dloss_drho) = clipped_surrogate(rho, mb.adv[i], cfg.clip_eps);
        surrogate += loss_i / bf;
        let d_logp = dloss_drho * rho / bf;
        for j in 0..act_dim {
            let sigma = log_std[j].exp();
            let z = (mb.actions[[i, j]] - mean_t[[i, j]]) / sigma;
            d_mean[[i, j]] = d_logp * z / sigma;
            g_ls[j] += d_logp * (z * z - 1.0);
        }
    }

    // Entropy bonus; state-independent, so it touches only log-std.
    let entropy = gaussian_entropy(log_std);
    for g in g_ls.iter_mut() {
        *g -= cfg.entropy_coef;
    }

    // Value regression on the critic observations.
    let (values, cache_vf) = vf.value_batch(&mb.obs_vf)?;
    let mut d_v = Array2::zeros((b, 1));
    let mut value_loss = 0.0;
    for i in 0..b {
        let err = values[i] - mb.ret[i];
        value_loss += err * err / bf;
        d_v[[i, 0]] = cfg.value_coef * 2.0 * err / bf;
    }

    // Smoothness term over valid same-episode pairs.
    let pair_rows: Vec<usize> = (0..b).filter(|i| mb.valid[*i]).collect();
    let m = pair_rows.len();
    let mut smooth = 0.0;
    let mut g_pi_smooth: Option<Gradients> = None;
    let mut g_vf_smooth: Option<Gradients> = None;
    if m > 0 && (cfg.lambda_pi > 0.0 || cfg.lambda_v > 0.0) {
        let c_dim = mb.obs_vf.ncols();
        let a_dim = mb.obs_pi.ncols();
        let mf = m as f64;
        let mut obs_bar = Array2::zeros((m, c_dim));
        for (k, &i) in pair_rows.iter().enumerate() {
            for c in 0..c_dim {
                let o = mb.obs_vf[[i, c]];
                obs_bar[[k, c]] = o + u[i] * (mb.next_vf[[i, c]] - o);
            }
        }
        let obs_bar_pi = obs_bar.slice(ndarray::s![.., ..a_dim]).to_owned();
        let (mean_bar, cache_pi_bar) = pi.mean_batch(&obs_bar_pi)?;
        let (v_bar, cache_vf_bar) = vf.value_batch(&obs_bar)?;
        let mut d_mean_bar = Array2::zeros((m, act_dim));
        let mut d_v_bar = Array2::zeros((m, 1));
        for (k, &i) in pair_rows.iter().enumerate() {
            let dv = v_bar[k] - values[i];
            smooth += cfg.lambda_v * dv * dv / mf;
            d_v_bar[[k, 0]] = cfg.lambda_v * 2.0 * dv / mf;
            for j in 0..act_dim {
                let dm = mean_bar[[k, j]] - mean_t[[i, j]];
                smooth += cfg.lambda_pi * dm * dm / mf;
                d_mean_bar[[k, j]] = cfg.lambda_pi * 2.0 * dm / mf;
            }
        }
        let (gp, _) = mlp_backward_batch(&pi.mean_net, &cache_pi_bar, &d_mean_bar)?;
        let (gv, _) = mlp_backward_batch(&vf.net, &cache_vf_bar, &d_v_bar)?;
        g_pi_smooth = Some(gp);
        g_vf_smooth = Some(gv);
    }

    let (mut g_pi, _) = mlp_backward_batch(&pi.mean_net, &cache_pi, &d_mean)?;
    let (mut g_vf, _) = mlp_backward_batch(&vf.net, &cache_vf, &d_v)?;
    if let Some(g) = g_pi_smooth {
        g_pi.add_assign(&g);
    }
    if let Some(g) = g_vf_smooth {
        g_vf.add_assign(&g);
    }

    let total =
        surrogate + cfg.value_coef * value_loss - cfg.entropy_coef * entropy + smooth;
    Ok(MinibatchEval {
        surrogate,
        value_loss,
        entropy,
        smooth,
        total,
        clip_hits,
        grad: grads_to_flat(&g_pi, &g_ls, &g_vf),
    })
}

/// Loss statistics of one [`ppo_update`] call, averaged over minibatch
/// steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub smoothness_loss: f64,
    /// Fraction of processed samples whose ratio left the clip band.
    pub clip_fraction: f64,
    pub aborted: bool,
}

/// Run `epochs` passes of shuffled-minibatch updates over the buffer.
/// Advantages must already be computed and normalized. A non-finite
/// loss or gradient aborts the update and restores the parameters and
/// optimizer to their pre-update snapshot.
pub fn ppo_update(
    pi: &mut GaussianPolicy,
    vf: &mut ValueNet,
    opt: &mut AdamOpt,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, PpoError> {
    let snapshot = (pi.clone(), vf.clone(), opt.clone());
    let n = buffer.len();
    let chunk = n.div_ceil(cfg.minibatches.max(1));
    let mut idx: Vec<usize> = (0..n).collect();

    let mut sums = UpdateStats::default();
    let mut steps = 0usize;
    let mut hits = 0usize;
    let mut samples = 0usize;

    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for part in idx.chunks(chunk) {
            let mb = MinibatchData::gather(buffer, part);
            let u: Vec<f64> = (0..mb.len()).map(|_| rng.gen::<f64>()).collect();
            let eval = eval_minibatch(pi, vf, &mb, cfg, &u)?;
            if !eval.total.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
                let (p0, v0, o0) = snapshot;
                *pi = p0;
                *vf = v0;
                *opt = o0;
                let div = steps.max(1) as f64;
                return Ok(UpdateStats {
                    surrogate_loss: sums.surrogate_loss / div,
                    value_loss: sums.value_loss / div,
                    entropy: sums.entropy / div,
                    smoothness_loss: sums.smoothness_loss / div,
                    clip_fraction: hits as f64 / samples.max(1) as f64,
                    aborted: true,
                });
            }
            let mut grad = eval.grad;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.max_grad_norm {
                let scale = cfg.max_grad_norm / norm;
                for g in grad.iter_mut() {
                    *g *= scale;
                }
            }
            let mut params = agent_to_flat(pi, vf);
            opt.step(&mut params, &grad);
            agent_set_flat(pi, vf, &params)?;
            pi.clamp_log_std();

            sums.surrogate_loss += eval.surrogate;
            sums.value_loss += eval.value_loss;
            sums.entropy += eval.entropy;
            sums.smoothness_loss += eval.smooth;
            hits += eval.clip_hits;
            samples += mb.len();
            steps += 1;
        }
    }
    let div = steps.max(1) as f64;
    Ok(UpdateStats {
        surrogate_loss: sums.surrogate_loss / div,
        value_loss: sums.value_loss / div,
        entropy: sums.entropy / div,
        smoothness_loss: sums.smoothness_loss / div,
        clip_fraction: hits as f64 / samples.max(1) as f64,
        aborted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpParams};
    use rand::SeedableRng;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut opt = AdamOpt::new(1, 0.1);
        let mut x = vec![10.0];
        for _ in 0..300 {
            let grad = vec![2.0 * (x[0] - 3.0)];
            opt.step(&mut x, &grad);
        }
        assert!((x[0] - 3.0).abs() < 1e-2, "{}", x[0]);
    }

    #[test]
    fn flat_agent_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pi = GaussianPolicy::new(
            MlpParams::init(&[4, 6, 3], Activation::Tanh, 0.5, &mut rng).unwrap(),
        );
        pi.log_std[1] = -0.7;
        let vf = ValueNet::new(
            MlpParams::init(&[6, 5, 1], Activation::Tanh, 1.0, &mut rng).unwrap(),
        )
        .unwrap();
        let flat = agent_to_flat(&pi, &vf);
        assert_eq!(flat.len(), agent_n_params(&pi, &vf));

        let mut pi2 = GaussianPolicy::new(
            MlpParams::zeros(&[4, 6, 3], Activation::Tanh).unwrap(),
        );
        let mut vf2 =
            ValueNet::new(MlpParams::zeros(&[6, 5, 1], Activation::Tanh).unwrap()).unwrap();
        agent_set_flat(&mut pi2, &mut vf2, &flat).unwrap();
        assert_eq!(pi.mean_net, pi2.mean_net);
        assert_eq!(pi.log_std, pi2.log_std);
        assert_eq!(vf.net, vf2.net);
        assert!(agent_set_flat(&mut pi2, &mut vf2, &flat[1..]).is_err());
    }

    #[test]
    fn clip_semantics_zero_gradient_outside_the_band() {
        // Positive advantage, ratio above the band: clipped, no gradient.
        let (_, d) = clipped_surrogate(1.5, 1.0, 0.2);
        assert_eq!(d, 0.0);
        // Negative advantage, ratio below the band: clipped, no gradient.
        let (_, d) = clipped_surrogate(0.5, -1.0, 0.2);
        assert_eq!(d, 0.0);
        // Inside the band the gradient is the negated advantage.
        let (l, d) = clipped_surrogate(1.05, 0.8, 0.2);
        assert!((l + 1.05 * 0.8).abs() < 1e-15);
        assert_eq!(d, -0.8);
        // Pessimistic branch: negative advantage with a large ratio
        // keeps its gradient.
        let (_, d) = clipped_surrogate(1.5, -1.0, 0.2);
        assert_eq!(d, 1.0);
    }

    fn tiny_agent(rng: &mut ChaCha8Rng) -> (GaussianPolicy, ValueNet) {
        let actor = MlpParams::init(&[4, 5, 3], Activation::Tanh, 0.5, rng).unwrap();
        let critic = MlpParams::init(&[6, 4, 1], Activation::Elu, 1.0, rng).unwrap();
        (GaussianPolicy::new(actor), ValueNet::new(critic).unwrap())
    }

    /// A buffer whose rows were genuinely sampled from `pi`, so stored
    /// log-probs are exact under the current parameters.
    fn sampled_buffer(
        pi: &GaussianPolicy,
        vf: &ValueNet,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> RolloutBuffer {
        let mut buf = RolloutBuffer::new(1, n, 4, 6, 3);
        for t in 0..n {
            let obs_c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let next_c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, lp) = pi.sample(&obs_c[..4], rng).unwrap();
            for j in 0..4 {
                buf.actor_obs[[t, j]] = obs_c[j];
            }
            for j in 0..6 {
                buf.critic_obs[[t, j]] = obs_c[j];
                buf.next_critic_obs[[t, j]] = next_c[j];
            }
            for j in 0..3 {
                buf.raw_actions[[t, j]] = a[j];
            }
            buf.log_probs[t] = lp;
            buf.values[t] = vf.value(&obs_c).unwrap();
            buf.rewards[t] = rng.gen_range(-1.0..1.0);
            buf.advantages[t] = rng.gen_range(-2.0..2.0);
            buf.returns[t] = rng.gen_range(-1.0..1.0);
            buf.pair_valid[t] = t % 2 == 0;
        }
        buf
    }

    #[test]
    fn unit_ratio_surrogate_is_negated_mean_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut pi, mut vf) = tiny_agent(&mut rng);
        let buf = sampled_buffer(&pi, &vf, 32, &mut rng);
        let mean_adv = buf.advantages.sum() / buf.len() as f64;

        let cfg = PpoConfig {
            epochs: 1,
            minibatches: 1,
            learning_rate: 0.0,
            ..PpoConfig::default()
        };
        let mut opt = AdamOpt::new(agent_n_params(&pi, &vf), cfg.learning_rate);
        let before = agent_to_flat(&pi, &vf);
        let stats =
            ppo_update(&mut pi, &mut vf, &mut opt, &buf, &cfg, &mut rng).unwrap();
        assert!((stats.surrogate_loss + mean_adv).abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 0.0);
        assert!(!stats.aborted);
        // Zero learning rate leaves every parameter untouched.
        let after = agent_to_flat(&pi, &vf);
        assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn clip_fraction_counts_out_of_band_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut pi, mut vf) = tiny_agent(&mut rng);
        let mut buf = sampled_buffer(&pi, &vf, 32, &mut rng);
        // Shift half the stored log-probs; those ratios become
        // exp(-0.5), outside the 0.2 band.
        for t in 0..32 {
            if t % 2 == 0 {
                buf.log_probs[t] += 0.5;
            }
        }
        let cfg = PpoConfig {
            epochs: 1,
            minibatches: 1,
            learning_rate: 0.0,
            ..PpoConfig::default()
        };
        let mut opt = AdamOpt::new(agent_n_params(&pi, &vf), 0.0);
        let stats =
            ppo_update(&mut pi, &mut vf, &mut opt, &buf, &cfg, &mut rng).unwrap();
        assert_eq!(stats.clip_fraction, 0.5);
    }

    #[test]
    fn nonfinite_loss_rolls_parameters_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (mut pi, mut vf) = tiny_agent(&mut rng);
        let mut buf = sampled_buffer(&pi, &vf, 16, &mut rng);
        buf.log_probs[3] = f64::NAN;
        let cfg = PpoConfig { minibatches: 1, ..PpoConfig::default() };
        let mut opt = AdamOpt::new(agent_n_params(&pi, &vf), cfg.learning_rate);
        let before = agent_to_flat(&pi, &vf);
        let opt_before = opt.clone();
        let stats =
            ppo_update(&mut pi, &mut vf, &mut opt, &buf, &cfg, &mut rng).unwrap();
        assert!(stats.aborted);
        let after = agent_to_flat(&pi, &vf);
        assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(opt, opt_before);
    }

    #[test]
    fn update_is_deterministic_for_equal_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (pi0, vf0) = tiny_agent(&mut rng);
        let buf = sampled_buffer(&pi0, &vf0, 24, &mut rng);
        let cfg = PpoConfig { epochs: 2, minibatches: 3, ..PpoConfig::default() };

        let run = |seed: u64| {
            let mut pi = pi0.clone();
            let mut vf = vf0.clone();
            let mut opt = AdamOpt::new(agent_n_params(&pi, &vf), cfg.learning_rate);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let stats = ppo_update(&mut pi, &mut vf, &mut opt, &buf, &cfg, &mut r).unwrap();
            (stats, agent_to_flat(&pi, &vf))
        };
        let (s1, p1) = run(99);
        let (s2, p2) = run(99);
        assert_eq!(s1, s2);
        assert!(p1.iter().zip(&p2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn minibatch_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let cfg = PpoConfig {
            clip_eps: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lambda_pi: 0.7,
            lambda_v: 0.3,
            ..PpoConfig::default()
        };
        for draw in 0..10 {
            let (pi, vf) = tiny_agent(&mut rng);
            let buf = loop {
                let candidate = sampled_buffer(&pi, &vf, 6, &mut rng);
                // Keep ratios away from the clip kinks so the central
                // difference stays on one branch.
                let mut jittered = candidate;
                let mut ok = true;
                for t in 0..6 {
                    jittered.log_probs[t] += rng.gen_range(-0.3..0.3);
                    let mean = pi
                        .mean(jittered.actor_obs.row(t).as_slice().unwrap())
                        .unwrap();
                    let logp_new = crate::nn::gaussian_log_prob(
                        &mean,
                        pi.log_std.as_slice().unwrap(),
                        jittered.raw_actions.row(t).as_slice().unwrap(),
                    );
                    let rho = (logp_new - jittered.log_probs[t]).exp();
                    if ((rho - 1.0).abs() - cfg.clip_eps).abs() < 5e-4 {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    break jittered;
                }
            };
            let idx: Vec<usize> = (0..6).collect();
            let mb = MinibatchData::gather(&buf, &idx);
            let u: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();

            let eval = eval_minibatch(&pi, &vf, &mb, &cfg, &u).unwrap();
            let base_flat = agent_to_flat(&pi, &vf);

            // The smoothness term treats the current-state branch as a
            // constant target, so the comparable scalar function must
            // hold those targets at their base-parameter values while
            // everything else varies.
            let (mean_t0, _) = pi.mean_batch(&mb.obs_pi).unwrap();
            let (values0, _) = vf.value_batch(&mb.obs_vf).unwrap();
            let cfg_nosmooth = PpoConfig { lambda_pi: 0.0, lambda_v: 0.0, ..cfg.clone() };
            let loss_at = |flat: &[f64]| -> f64 {
                let mut p = pi.clone();
                let mut v = vf.clone();
                agent_set_flat(&mut p, &mut v, flat).unwrap();
                let core = eval_minibatch(&p, &v, &mb, &cfg_nosmooth, &u).unwrap().total;
                let pairs: Vec<usize> = (0..6).filter(|i| mb.valid[*i]).collect();
                let mut smooth = 0.0;
                for &i in &pairs {
                    let obs: Vec<f64> = (0..6)
                        .map(|c| {
                            let o = mb.obs_vf[[i, c]];
                            o + u[i] * (mb.next_vf[[i, c]] - o)
                        })
                        .collect();
                    let mean_bar = p.mean(&obs[..4]).unwrap();
                    let v_bar = v.value(&obs).unwrap();
                    for j in 0..3 {
                        let d = mean_bar[j] - mean_t0[[i, j]];
                        smooth += cfg.lambda_pi * d * d;
                    }
                    let dv = v_bar - values0[i];
                    smooth += cfg.lambda_v * dv * dv;
                }
                core + smooth / pairs.len() as f64
            };
            // Both formulations agree at the base point.
            assert!((loss_at(&base_flat) - eval.total).abs() < 1e-12);
            let h = 1e-5;
            for k in 0..base_flat.len() {
                let mut f = base_flat.clone();
                f[k] += h;
                let lp = loss_at(&f);
                f[k] -= 2.0 * h;
                let lm = loss_at(&f);
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = eval.grad[k];
                if analytic.abs() > 1e-8 {
                    let rel = (numeric - analytic).abs() / analytic.abs().max(1e-8);
                    assert!(rel < 1e-4, "draw {draw} param {k}: {analytic} vs {numeric}");
                } else {
                    assert!(numeric.abs() < 1e-6, "draw {draw} param {k}");
                }
            }
        }
    }

    #[test]
    fn one_dimensional_bandit_converges_to_zero_mean()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut actor = MlpParams::zeros(&[1, 1], Activation::Tanh).unwrap();
        actor.biases[0][0] = 1.0;
        let mut pi = GaussianPolicy::new(actor);
        let mut vf = ValueNet::new(
            MlpParams::init(&[1, 4, 1], Activation::Tanh, 1.0, &mut rng).unwrap(),
        )
        .unwrap();
        let cfg = PpoConfig {
            epochs: 4,
            minibatches: 4,
            learning_rate: 0.01,
            lambda_pi: 0.0,
            lambda_v: 0.0,
            n_envs: 8,
            rollout_len: 16,
            ..PpoConfig::default()
        };
        let mut opt = AdamOpt::new(agent_n_params(&pi, &vf), cfg.learning_rate);

        let mut converged_at = None;
        for iter in 0..500 {
            let mut buf = RolloutBuffer::new(8, 16, 1, 1, 1);
            for e in 0..8 {
                for t in 0..16 {
                    let i = buf.idx(e, t);
                    let (a, lp) = pi.sample(&[0.0], &mut rng).unwrap();
                    buf.raw_actions[[i, 0]] = a[0];
                    buf.log_probs[i] = lp;
                    buf.rewards[i] = -a[0] * a[0];
                    buf.dones[i] = true;
                    buf.values[i] = vf.value(&[0.0]).unwrap();
                }
            }
            buf.compute_advantages(cfg.gamma, cfg.lambda_gae).unwrap();
            buf.normalize_advantages();
            let stats =
                ppo_update(&mut pi, &mut vf, &mut opt, &buf, &cfg, &mut rng).unwrap();
            assert!(!stats.aborted);
            if pi.mean(&[0.0]).unwrap()[0].abs() < 0.05 {
                converged_at = Some(iter);
                break;
            }
        }
        assert!(converged_at.is_some(), "bandit mean did not reach zero in 500 iterations");
    }
}
