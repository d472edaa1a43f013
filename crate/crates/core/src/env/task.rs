//! Episode lifecycle: task goals, termination classification, the
//! goal-difficulty curriculum, and domain randomization of object, ground,
//! and plant parameters.

use crate::geom::{wrap_angle, Orientation, Pose, Vec3};
use crate::world::{BoxObject, RobotPlant, WorldParams, WorldState};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Success requires planar position error below this (m).
pub const SUCCESS_POS_TOL: f64 = 0.05;
/// Success requires absolute yaw error below this (rad).
pub const SUCCESS_YAW_TOL: f64 = 5.0 * std::f64::consts::PI / 180.0;
/// Episodes reset when object roll or pitch exceeds this (rad).
pub const TILT_LIMIT: f64 = 40.0 * std::f64::consts::PI / 180.0;
/// Upper bound on episode duration (s).
pub const EPISODE_TIME_LIMIT: f64 = 25.0;

/// Number of curriculum levels.
pub const CURRICULUM_LEVELS: usize = 5;
/// Episodes in the success window used for promotion decisions.
pub const CURRICULUM_WINDOW: usize = 100;
/// Window success rate required to promote.
pub const CURRICULUM_PROMOTE_THRESHOLD: f64 = 0.8;

/// Commanded object pose: target position (world, m) and target yaw (rad).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskGoal {
    pub p_cmd: Vec3,
    pub yaw_cmd: f64,
}

impl TaskGoal {
    /// Planar distance from the object center to the target (m).
    pub fn position_error(&self, object: &BoxObject) -> f64 {
        (object.pose.position - self.p_cmd).norm_xy()
    }

    /// Wrapped yaw error of the object against the target (rad).
    pub fn yaw_error(&self, object: &BoxObject) -> f64 {
        wrap_angle(object.pose.orientation.yaw() - self.yaw_cmd)
    }
}

/// Terminal classification of an episode tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeStatus {
    Running,
    Success,
    TiltReset,
    Timeout,
    Diverged,
}

/// Classify the current tick. Success takes precedence over Timeout when
/// both hold at the same tick; a non-finite state always reads as Diverged.
pub fn check_termination(w: &WorldState, goal: &TaskGoal) -> EpisodeStatus {
    if !w.is_finite() {
        return EpisodeStatus::Diverged;
    }
    if goal.position_error(&w.object) < SUCCESS_POS_TOL
        && goal.yaw_error(&w.object).abs() < SUCCESS_YAW_TOL
    {
        return EpisodeStatus::Success;
    }
    let (roll, pitch, _) = w.object.pose.orientation.rpy();
    if roll.abs() > TILT_LIMIT || pitch.abs() > TILT_LIMIT {
        return EpisodeStatus::TiltReset;
    }
    if w.time >= EPISODE_TIME_LIMIT {
        return EpisodeStatus::Timeout;
    }
    EpisodeStatus::Running
}

/// Goal-difficulty schedule state: current level plus the rolling success
/// window that drives promotion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    /// Current level in `[0, CURRICULUM_LEVELS - 1]`.
    pub level: usize,
    /// Outcomes of the most recent episodes, oldest first.
    pub window: VecDeque<bool>,
    pub promote_threshold: f64,
    pub window_size: usize,
}

impl CurriculumState {
    /// Fresh state at level 0 with the default promotion rule.
    pub fn new() -> Self {
        Self::at_level(0)
    }

    /// Fresh state pinned to the given level (clamped to the top level).
    pub fn at_level(level: usize) -> Self {
        CurriculumState {
            level: level.min(CURRICULUM_LEVELS - 1),
            window: VecDeque::new(),
            promote_threshold: CURRICULUM_PROMOTE_THRESHOLD,
            window_size: CURRICULUM_WINDOW,
        }
    }

    /// Success rate over the current window, 0 when empty.
    pub fn window_rate(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().filter(|s| **s).count() as f64 / self.window.len() as f64
    }
}

impl Default for CurriculumState {
    fn default() -> Self {
        Self::new()
    }
}

/// Record one episode outcome and promote when the full window's success
/// rate reaches the threshold. Promotion clears the window, so each level
/// must earn a fresh window of episodes.
pub fn curriculum_update(c: &CurriculumState, outcome: EpisodeStatus) -> CurriculumState {
    let mut next = c.clone();
    next.window.push_back(outcome == EpisodeStatus::Success);
    while next.window.len() > next.window_size {
        next.window.pop_front();
    }
    if next.window.len() == next.window_size
        && next.window_rate() >= next.promote_threshold
        && next.level + 1 < CURRICULUM_LEVELS
    {
        next.level += 1;
        next.window.clear();
    }
    next
}

/// Allowed lateral goal displacement at a level (m).
pub fn level_dy_bound(level: usize) -> f64 {
    0.1 + 0.15 * level as f64
}

/// Allowed goal yaw change magnitude at a level (rad).
pub fn level_dyaw_bound(level: usize) -> f64 {
    (10.0 + 12.5 * level as f64).to_radians()
}

/// Forward goal displacement range at a level (m).
pub fn level_dx_range(level: usize) -> [f64; 2] {
    [0.5, 0.8 + 0.3 * level as f64]
}

/// Uniform sampling ranges for per-episode randomization. Object rows cover
/// geometry and surface parameters; `com_*` shift the center of mass from
/// the geometric center; `plant_tau_scale` multiplies both plant tracking
/// time constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationRanges {
    pub length: [f64; 2],
    pub height: [f64; 2],
    pub width: [f64; 2],
    pub mass: [f64; 2],
    pub friction: [f64; 2],
    pub restitution: [f64; 2],
    pub ground_friction: [f64; 2],
    pub com_x: [f64; 2],
    pub com_y: [f64; 2],
    pub com_z: [f64; 2],
    pub plant_tau_scale: [f64; 2],
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        RandomizationRanges {
            length: [0.3, 0.5],
            height: [0.25, 0.5],
            width: [0.45, 0.60],
            mass: [5.0, 15.0],
            friction: [0.3, 0.8],
            restitution: [0.0, 0.3],
            ground_friction: [0.3, 1.0],
            com_x: [-0.2, 0.1],
            com_y: [-0.1, 0.1],
            com_z: [-0.1, 0.1],
            plant_tau_scale: [0.9, 1.1],
        }
    }
}

impl RandomizationRanges {
    /// Named (range name, bounds) rows, for validation and sweep tests.
    pub fn fields(&self) -> [(&'static str, [f64; 2]); 11] {
        [
            ("length", self.length),
            ("height", self.height),
            ("width", self.width),
            ("mass", self.mass),
            ("friction", self.friction),
            ("restitution", self.restitution),
            ("ground_friction", self.ground_friction),
            ("com_x", self.com_x),
            ("com_y", self.com_y),
            ("com_z", self.com_z),
            ("plant_tau_scale", self.plant_tau_scale),
        ]
    }

    /// Name of the first malformed (unordered or non-finite) range, if any.
    pub fn first_invalid(&self) -> Option<&'static str> {
        self.fields()
            .into_iter()
            .find(|(_, r)| !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]))
            .map(|(name, _)| name)
    }
}

/// Object spawn distance ahead of the robot grows slightly with level (m).
pub fn spawn_x_range(level: usize) -> [f64; 2] {
    [0.7, 0.9 + 0.05 * level as f64]
}

/// Object spawn lateral offset range (m).
pub const SPAWN_Y_RANGE: [f64; 2] = [-0.1, 0.1];
/// Object spawn yaw range (rad).
pub const SPAWN_YAW_BOUND: f64 = 10.0 * std::f64::consts::PI / 180.0;

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

/// Sample a fresh episode: a randomized box resting ahead of the robot, the
/// robot at the origin in its default stance, and a goal whose displacement
/// from the spawn pose (world axes) is bounded by the curriculum level.
/// The sampled ground friction is written into `params`; the plant time
/// constants carry the sampled multiplier.
pub fn reset_episode(
    rng: &mut impl Rng,
    curriculum: &CurriculumState,
    ranges: &RandomizationRanges,
    params: &mut WorldParams,
) -> (WorldState, TaskGoal) {
    let level = curriculum.level.min(CURRICULUM_LEVELS - 1);

    let length = uniform(rng, ranges.length);
    let width = uniform(rng, ranges.width);
    let height = uniform(rng, ranges.height);
    let mass = uniform(rng, ranges.mass);
    let friction = uniform(rng, ranges.friction);
    let restitution = uniform(rng, ranges.restitution);
    let com = Vec3::new(
        uniform(rng, ranges.com_x),
        uniform(rng, ranges.com_y),
        uniform(rng, ranges.com_z),
    );
    params.ground_friction = uniform(rng, ranges.ground_friction);
    let tau_scale = uniform(rng, ranges.plant_tau_scale);

    let spawn = Vec3::new(
        uniform(rng, spawn_x_range(level)),
        uniform(rng, SPAWN_Y_RANGE),
        0.5 * height,
    );
    let spawn_yaw = uniform(rng, [-SPAWN_YAW_BOUND, SPAWN_YAW_BOUND]);

    let mut object =
        BoxObject::uniform(Vec3::new(length, width, height), mass, friction, restitution)
            .with_com_offset(com);
    object.pose = Pose::new(spawn, Orientation::from_yaw(spawn_yaw));

    let mut robot = RobotPlant::at_rest();
    robot.tau_base *= tau_scale;
    robot.tau_foot *= tau_scale;

    let dx = uniform(rng, level_dx_range(level));
    let dy_bound = level_dy_bound(level);
    let dy = uniform(rng, [-dy_bound, dy_bound]);
    let dyaw_bound = level_dyaw_bound(level);
    let dyaw = uniform(rng, [-dyaw_bound, dyaw_bound]);
    let goal = TaskGoal {
        p_cmd: spawn + Vec3::new(dx, dy, 0.0),
        yaw_cmd: wrap_angle(spawn_yaw + dyaw),
    };

    (WorldState::new(object, robot), goal)
}
