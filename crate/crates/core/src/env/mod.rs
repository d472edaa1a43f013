//! The planner's decision process: episode lifecycle and randomization,
//! observation assembly, the shaped pushing reward with contact gating, and
//! a stepping driver that ties them to the simulated world.

pub mod obs;
pub mod reward;
pub mod task;

pub use obs::{
    build_planner_obs, build_planner_obs_with_joints, build_privileged_obs, contact_flags,
    PlannerObs, PrivilegedObs, CRITIC_OBS_DIM, CTRL_ACTION_DIM, CTRL_OBS_DIM, JOINT_DIM,
    PLANNER_OBS_DIM, PRIVILEGED_OBS_DIM,
};
pub use reward::{
    foot_push_targets, planner_reward, push_direction, RewardBreakdown, RewardGate, RewardTerm,
    RewardWeights,
};
pub use task::{
    check_termination, curriculum_update, level_dx_range, level_dy_bound, level_dyaw_bound,
    reset_episode, CurriculumState, EpisodeStatus, RandomizationRanges, TaskGoal,
    CURRICULUM_LEVELS, CURRICULUM_PROMOTE_THRESHOLD, CURRICULUM_WINDOW, EPISODE_TIME_LIMIT,
    SUCCESS_POS_TOL, SUCCESS_YAW_TOL, TILT_LIMIT,
};

use crate::world::{clamp_command, step_world, Command, WorldError, WorldParams, WorldState, ACTION_DIM};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Result of advancing the environment one control tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub breakdown: RewardBreakdown,
    pub status: EpisodeStatus,
    /// True when the episode is over for training purposes. Success ends
    /// an episode only when `terminate_on_success` is set; training
    /// episodes keep running with frozen approach terms.
    pub done: bool,
}

/// One pushing environment: owned world state, goal, reward memory, and a
/// private RNG stream for resets. Stepping is deterministic given the seed
/// and the action sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlannerEnv {
    pub params: WorldParams,
    pub ranges: RandomizationRanges,
    pub weights: RewardWeights,
    /// End episodes at the first success tick (evaluation behavior).
    pub terminate_on_success: bool,
    pub state: WorldState,
    pub goal: TaskGoal,
    pub gate: RewardGate,
    /// Previous raw planner command, for the action-rate penalty.
    pub prev_raw_cmd: Command,
    /// Previous executed (clamped) command, fed back into observations.
    pub prev_clamped_cmd: Command,
    pub prev_ctrl_action: [f64; CTRL_ACTION_DIM],
    pub status: EpisodeStatus,
    pub episode_return: f64,
    pub episode_ticks: u64,
    rng: ChaCha8Rng,
}

impl PlannerEnv {
    /// Build an environment and sample its first episode at the given
    /// curriculum state.
    pub fn new(
        seed: u64,
        params: WorldParams,
        ranges: RandomizationRanges,
        weights: RewardWeights,
        curriculum: &CurriculumState,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = params;
        let (state, goal) = reset_episode(&mut rng, curriculum, &ranges, &mut params);
        let hold = Command::hold(&state.robot.foot_default);
        PlannerEnv {
            params,
            ranges,
            weights,
            terminate_on_success: false,
            state,
            goal,
            gate: RewardGate::new(),
            prev_raw_cmd: hold,
            prev_clamped_cmd: hold,
            prev_ctrl_action: [0.0; CTRL_ACTION_DIM],
            status: EpisodeStatus::Running,
            episode_return: 0.0,
            episode_ticks: 0,
            rng,
        }
    }

    /// Start a fresh episode at the given curriculum state and return its
    /// first observation.
    pub fn reset(&mut self, curriculum: &CurriculumState) -> PlannerObs {
        let (state, goal) =
            reset_episode(&mut self.rng, curriculum, &self.ranges, &mut self.params);
        let hold = Command::hold(&state.robot.foot_default);
        self.state = state;
        self.goal = goal;
        self.gate = RewardGate::new();
        self.prev_raw_cmd = hold;
        self.prev_clamped_cmd = hold;
        self.prev_ctrl_action = [0.0; CTRL_ACTION_DIM];
        self.status = EpisodeStatus::Running;
        self.episode_return = 0.0;
        self.episode_ticks = 0;
        self.observe()
    }

    /// Current planner observation.
    pub fn observe(&self) -> PlannerObs {
        build_planner_obs(&self.state, &self.goal, &self.prev_clamped_cmd, &self.prev_ctrl_action)
    }

    /// Current privileged observation for the critic.
    pub fn privileged(&self) -> PrivilegedObs {
        build_privileged_obs(&self.state.object, &self.state.contacts)
    }

    /// Apply one raw policy action: clamp, advance the world one tick,
    /// score the transition, and classify the episode.
    pub fn step(&mut self, raw_action: &[f64; ACTION_DIM]) -> Result<StepOutcome, WorldError> {
        let raw_cmd = Command::from_action(raw_action, &self.state.robot.foot_default);
        let clamped = clamp_command(&raw_cmd, &self.state.robot.foot_default)?;
        let (next, _) = step_world(&self.state, &raw_cmd, &self.params)?;
        let breakdown = planner_reward(
            &self.state,
            &next,
            &self.goal,
            &self.prev_raw_cmd,
            &raw_cmd,
            &mut self.gate,
            &self.weights,
        );
        self.state = next;
        self.prev_raw_cmd = raw_cmd;
        self.prev_clamped_cmd = clamped;
        self.status = check_termination(&self.state, &self.goal);
        self.episode_return += breakdown.total;
        self.episode_ticks += 1;
        let done = match self.status {
            EpisodeStatus::Timeout | EpisodeStatus::TiltReset | EpisodeStatus::Diverged => true,
            EpisodeStatus::Success => self.terminate_on_success,
            EpisodeStatus::Running => false,
        };
        Ok(StepOutcome { breakdown, status: self.status, done })
    }

    /// Episode outcome for curriculum statistics: success counts if it was
    /// ever reached, even when the episode kept running afterwards.
    pub fn episode_outcome(&self) -> EpisodeStatus {
        if self.gate.success_seen {
            EpisodeStatus::Success
        } else {
            self.status
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn env_with_seed(seed: u64) -> PlannerEnv {
        PlannerEnv::new(
            seed,
            WorldParams::default(),
            RandomizationRanges::default(),
            RewardWeights::default(),
            &CurriculumState::new(),
        )
    }

    fn random_action(rng: &mut impl Rng) -> [f64; ACTION_DIM] {
        let mut a = [0.0; ACTION_DIM];
        for v in a.iter_mut() {
            *v = rng.gen_range(-0.6..0.6);
        }
        a
    }

    #[test]
    fn same_seed_and_actions_replay_identically() {
        let run = || {
            let mut env = env_with_seed(23);
            let mut action_rng = ChaCha8Rng::seed_from_u64(99);
            let mut total = 0.0;
            for _ in 0..60 {
                let out = env.step(&random_action(&mut action_rng)).unwrap();
                total += out.breakdown.total;
                if out.done {
                    env.reset(&CurriculumState::new());
                }
            }
            (serde_json::to_string(&env.state).unwrap(), total)
        };
        let (s1, t1) = run();
        let (s2, t2) = run();
        assert_eq!(s1, s2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn observations_stay_finite_and_shaped_every_tick() {
        let mut env = env_with_seed(7);
        let mut action_rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..150 {
            let obs = env.observe();
            let priv_obs = env.privileged();
            assert_eq!(obs.as_slice().len(), PLANNER_OBS_DIM);
            assert_eq!(priv_obs.as_slice().len(), PRIVILEGED_OBS_DIM);
            assert!(obs.is_finite());
            assert!(priv_obs.is_finite());
            // The proprioceptive block keeps its fixed length and the
            // joint slots stay at the synthesizer default.
            assert_eq!(obs.as_slice()[12..81].len(), CTRL_OBS_DIM);
            assert!(obs.as_slice()[18..54].iter().all(|v| *v == 0.0));
            let out = env.step(&random_action(&mut action_rng)).unwrap();
            assert!(out.breakdown.is_finite());
            if out.done {
                env.reset(&CurriculumState::new());
            }
        }
    }

    #[test]
    fn reset_clears_reward_memory_and_counters() {
        let mut env = env_with_seed(3);
        env.gate.bi_contact_seen = true;
        env.gate.success_seen = true;
        env.episode_return = 5.0;
        env.episode_ticks = 40;
        env.reset(&CurriculumState::new());
        assert!(!env.gate.is_open());
        assert!(!env.gate.success_seen);
        assert_eq!(env.episode_return, 0.0);
        assert_eq!(env.episode_ticks, 0);
        assert_eq!(env.status, EpisodeStatus::Running);
        let out = env.step(&[0.0; ACTION_DIM]).unwrap();
        assert_eq!(out.breakdown.dis_obj_tar.weighted, 0.0);
    }

    #[test]
    fn training_continues_through_success_but_eval_stops() {
        let mut train_env = env_with_seed(14);
        train_env.goal = TaskGoal {
            p_cmd: train_env.state.object.pose.position,
            yaw_cmd: train_env.state.object.pose.orientation.yaw(),
        };
        let mut eval_env = train_env.clone();
        eval_env.terminate_on_success = true;

        let out = train_env.step(&[0.0; ACTION_DIM]).unwrap();
        assert_eq!(out.status, EpisodeStatus::Success);
        assert!(!out.done);
        assert!(out.breakdown.success_frozen);

        let out = eval_env.step(&[0.0; ACTION_DIM]).unwrap();
        assert_eq!(out.status, EpisodeStatus::Success);
        assert!(out.done);

        // Continuing after success keeps the outcome classified a success.
        for _ in 0..5 {
            train_env.step(&[0.0; ACTION_DIM]).unwrap();
        }
        assert_eq!(train_env.episode_outcome(), EpisodeStatus::Success);
    }

    #[test]
    fn idle_episode_times_out_at_the_limit() {
        let mut env = env_with_seed(5);
        let mut done = false;
        for _ in 0..1300 {
            let out = env.step(&[0.0; ACTION_DIM]).unwrap();
            if out.done {
                assert_eq!(out.status, EpisodeStatus::Timeout);
                done = true;
                break;
            }
        }
        assert!(done);
        assert!(env.state.time >= EPISODE_TIME_LIMIT);
        assert!(env.episode_ticks >= 1250);
        assert_eq!(env.episode_outcome(), EpisodeStatus::Timeout);
    }

    #[test]
    fn non_finite_action_is_rejected() {
        let mut env = env_with_seed(6);
        let mut a = [0.0; ACTION_DIM];
        a[4] = f64::NAN;
        assert!(env.step(&a).is_err());
    }

    #[test]
    fn gating_and_bonus_hold_across_random_episodes() {
        let mut env = env_with_seed(19);
        let mut action_rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..3 {
            env.reset(&CurriculumState::new());
            for _ in 0..200 {
                let out = env.step(&random_action(&mut action_rng)).unwrap();
                let flags = env.privileged().contact_flags();
                if !out.breakdown.gate_open {
                    assert_eq!(out.breakdown.dir_tar_obj.weighted, 0.0);
                    assert_eq!(out.breakdown.dis_obj_tar.weighted, 0.0);
                    assert_eq!(out.breakdown.dir_tar.weighted, 0.0);
                }
                assert_eq!(out.breakdown.bicontact_bonus > 0.0, flags == (true, true));
                if out.done {
                    break;
                }
            }
        }
    }
}
