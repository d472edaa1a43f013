//! Shaped pushing reward: foot-approach and goal-progress terms with
//! contact gating, per-tick bi-contact bonus, post-success freezing, and
//! smoothness penalties on feet and actions.

use crate::env::obs::contact_flags;
use crate::env::task::{check_termination, EpisodeStatus, TaskGoal};
use crate::geom::{frame_to_world, projected_gravity, Pose, Vec3};
use crate::world::{
    action_limit_excess, BoxObject, Command, WorldState, ACTION_DIM, LEFT, RIGHT,
};
use serde::{Deserialize, Serialize};

/// Length scale of the foot-to-target distance shaping (m).
pub const FOOT_DIST_SCALE: f64 = 0.2;
/// Length scale of the object-to-goal distance shaping (m).
pub const OBJ_DIST_SCALE: f64 = 0.4;
/// Sharpness of the direction-alignment shaping.
pub const DIR_SCALE: f64 = 0.25;
/// Foot targets sit this fraction of the object width to either side of
/// the center of mass on the pushing face.
pub const FOOT_TARGET_LATERAL_FRAC: f64 = 0.1;

/// Final per-term multipliers (base weight times the control period) plus
/// the bi-contact bonus configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Control period the multipliers were scaled by (s).
    pub dt: f64,
    pub dis_foot_obj: f64,
    pub dir_tar_obj: f64,
    pub dis_obj_tar: f64,
    pub dir_tar: f64,
    pub orientation: f64,
    pub foot_velocity: f64,
    pub foot_acceleration: f64,
    pub action_rate: f64,
    pub action_limits: f64,
    pub termination: f64,
    /// Added on a tick where both feet touch the object.
    pub bicontact_bonus: f64,
    /// Pay the bonus on every bi-contact tick, or only the first.
    pub bonus_every_tick: bool,
}

impl RewardWeights {
    /// Default weights for the given control period.
    pub fn from_dt(dt: f64) -> Self {
        RewardWeights {
            dt,
            dis_foot_obj: 1.0 * dt,
            dir_tar_obj: 0.05 * dt,
            dis_obj_tar: 3.0 * dt,
            dir_tar: 0.075 * dt,
            orientation: -10.0 * dt,
            foot_velocity: -0.5 * dt,
            foot_acceleration: -0.0002 * dt,
            action_rate: -0.5 * dt,
            action_limits: -1.0 * dt,
            termination: 10.0 * dt,
            bicontact_bonus: 0.3,
            bonus_every_tick: true,
        }
    }

    /// True when every multiplier is finite.
    pub fn is_finite(&self) -> bool {
        [
            self.dt,
            self.dis_foot_obj,
            self.dir_tar_obj,
            self.dis_obj_tar,
            self.dir_tar,
            self.orientation,
            self.foot_velocity,
            self.foot_acceleration,
            self.action_rate,
            self.action_limits,
            self.termination,
            self.bicontact_bonus,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::from_dt(0.02)
    }
}

/// One reward term as its raw value and its weighted contribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerm {
    pub raw: f64,
    pub weighted: f64,
}

/// All reward terms of one tick. `total` is the sum of the weighted terms
/// plus the bi-contact bonus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub dis_foot_obj: RewardTerm,
    pub dir_tar_obj: RewardTerm,
    pub dis_obj_tar: RewardTerm,
    pub dir_tar: RewardTerm,
    pub orientation: RewardTerm,
    pub foot_velocity: RewardTerm,
    pub foot_acceleration: RewardTerm,
    pub action_rate: RewardTerm,
    pub action_limits: RewardTerm,
    pub termination: RewardTerm,
    pub bicontact_bonus: f64,
    pub gate_open: bool,
    pub success_frozen: bool,
    pub total: f64,
}

impl RewardBreakdown {
    /// The ten named terms in a fixed order.
    pub fn terms(&self) -> [(&'static str, RewardTerm); 10] {
        [
            ("dis_foot_obj", self.dis_foot_obj),
            ("dir_tar_obj", self.dir_tar_obj),
            ("dis_obj_tar", self.dis_obj_tar),
            ("dir_tar", self.dir_tar),
            ("orientation", self.orientation),
            ("foot_velocity", self.foot_velocity),
            ("foot_acceleration", self.foot_acceleration),
            ("action_rate", self.action_rate),
            ("action_limits", self.action_limits),
            ("termination", self.termination),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.terms().iter().all(|(_, t)| t.raw.is_finite() && t.weighted.is_finite())
            && self.bicontact_bonus.is_finite()
            && self.total.is_finite()
    }
}

/// Per-episode reward memory: whether both feet have ever touched the
/// object, whether success has fired, and the values the approach terms
/// freeze to afterwards. Reset together with the episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardGate {
    /// True once both feet have touched the object on the same tick.
    pub bi_contact_seen: bool,
    /// True once the success condition has been met.
    pub success_seen: bool,
    /// True once the one-shot bonus has been paid.
    pub bonus_paid: bool,
    /// Most recent pre-success raw foot-distance term.
    pub last_dis_foot_obj: Option<f64>,
    /// Most recent pre-success raw object-direction term.
    pub last_dir_tar_obj: Option<f64>,
}

impl RewardGate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_open(&self) -> bool {
        self.bi_contact_seen
    }
}

/// Planar direction the foot targets should oppose: toward the goal once
/// both feet have touched the object, and from the robot toward the object
/// before that, so the pre-contact shaping carries no goal information.
pub fn push_direction(object: &BoxObject, goal: &TaskGoal, base: &Pose, gate_open: bool) -> Vec3 {
    let planar = |v: Vec3| Vec3::new(v.x, v.y, 0.0);
    if gate_open {
        if let Some(d) = planar(goal.p_cmd - object.pose.position).normalized(1e-9) {
            return d;
        }
    }
    if let Some(d) = planar(object.pose.position - base.position).normalized(1e-9) {
        return d;
    }
    // Both directions degenerate: fall back to the object's forward axis.
    planar(object.pose.orientation.rotate(&Vec3::new(1.0, 0.0, 0.0)))
        .normalized(1e-9)
        .unwrap_or(Vec3::new(1.0, 0.0, 0.0))
}

/// Foot placement targets on the object, world frame, left then right.
/// The targets sit on the lateral face whose outward normal most opposes
/// `push_dir`, at the height of the center of mass projected onto that
/// face, offset to either side; the left foot takes the candidate with the
/// larger base-frame y.
pub fn foot_push_targets(object: &BoxObject, push_dir: &Vec3, base: &Pose) -> [Vec3; 2] {
    let h = object.half_extents();
    let com = object.com_offset;
    let faces = [
        (Vec3::new(1.0, 0.0, 0.0), h.x, Vec3::new(0.0, 1.0, 0.0), h.y),
        (Vec3::new(-1.0, 0.0, 0.0), h.x, Vec3::new(0.0, 1.0, 0.0), h.y),
        (Vec3::new(0.0, 1.0, 0.0), h.y, Vec3::new(1.0, 0.0, 0.0), h.x),
        (Vec3::new(0.0, -1.0, 0.0), h.y, Vec3::new(1.0, 0.0, 0.0), h.x),
    ];

    let rot = &object.pose.orientation;
    let mut best = faces[0];
    let mut best_score = f64::NEG_INFINITY;
    for face in faces {
        let score = rot.rotate(&face.0).dot(&(-*push_dir));
        if score > best_score {
            best_score = score;
            best = face;
        }
    }
    let (normal, depth, lat, lat_half) = best;

    // Left foot takes the offset whose world direction has positive
    // base-frame y (ties broken by base-frame x).
    let lat_base = base.orientation.rotate_inverse(&rot.rotate(&lat));
    let left_sign = if lat_base.y.abs() > 1e-9 {
        lat_base.y.signum()
    } else {
        lat_base.x.signum()
    };

    let offset = FOOT_TARGET_LATERAL_FRAC * object.dimensions.y;
    let lat_com = com.dot(&lat);
    let z = com.z.clamp(-h.z, h.z);
    let target = |sign: f64| {
        let lat_coord = (lat_com + sign * offset).clamp(-lat_half, lat_half);
        frame_to_world(
            &object.pose,
            &(normal * depth + lat * lat_coord + Vec3::new(0.0, 0.0, z)),
        )
    };
    [target(left_sign), target(-left_sign)]
}

fn offset_action(cmd: &Command, defaults: &[Vec3; 2]) -> [f64; ACTION_DIM] {
    let f = cmd.flatten();
    [
        f[0],
        f[1],
        f[2],
        f[3] - defaults[LEFT].x,
        f[4] - defaults[LEFT].y,
        f[5] - defaults[LEFT].z,
        f[6] - defaults[RIGHT].x,
        f[7] - defaults[RIGHT].y,
        f[8] - defaults[RIGHT].z,
    ]
}

/// Compute every reward term for the transition from `w_prev` to `w` under
/// the raw (pre-clamp) planner commands `a_prev` and `a`, updating the
/// gating state. Goal-progress terms are zero until both feet have touched
/// the object; after the first success tick the two approach terms hold
/// their most recent pre-success values and the one-time termination bonus
/// fires.
pub fn planner_reward(
    w_prev: &WorldState,
    w: &WorldState,
    goal: &TaskGoal,
    a_prev: &Command,
    a: &Command,
    gate: &mut RewardGate,
    weights: &RewardWeights,
) -> RewardBreakdown {
    let dt = weights.dt;
    let base = w.robot.base_pose.to_pose();

    let (left, right) = contact_flags(&w.contacts);
    let bi_now = left && right;
    let gate_open = gate.bi_contact_seen || bi_now;

    let status = check_termination(w, goal);
    let success_now = status == EpisodeStatus::Success;
    let first_success = success_now && !gate.success_seen;

    // Foot approach: distance of each foot to its target on the object.
    let targets = foot_push_targets(
        &w.object,
        &push_direction(&w.object, goal, &base, gate_open),
        &base,
    );
    let mut raw_dis_foot = 0.0;
    for leg in [LEFT, RIGHT] {
        let d = (w.robot.foot_world(leg) - targets[leg]).norm();
        raw_dis_foot += (-d / FOOT_DIST_SCALE).exp();
    }

    // Object-velocity alignment with the goal direction; a still object or
    // a reached goal reads as neutral.
    let planar = |v: Vec3| Vec3::new(v.x, v.y, 0.0);
    let vel_dir = planar(w.object.twist.linear).normalized(1e-9);
    let goal_dir = planar(goal.p_cmd - w.object.pose.position).normalized(1e-9);
    let cos_theta = match (vel_dir, goal_dir) {
        (Some(v), Some(g)) => v.dot(&g),
        _ => 0.0,
    };
    let raw_dir_tar_obj = (cos_theta / DIR_SCALE - 1.0).exp();

    let raw_dis_obj_tar = (-goal.position_error(&w.object) / OBJ_DIST_SCALE).exp();
    let raw_dir_tar = (goal.yaw_error(&w.object).cos() / DIR_SCALE - 1.0).exp();

    let g_body = projected_gravity(&w.object.pose.orientation);
    let raw_orientation = g_body.x * g_body.x + g_body.y * g_body.y;

    let mut raw_foot_vel = 0.0;
    let mut raw_foot_acc = 0.0;
    for leg in [LEFT, RIGHT] {
        let v = w.robot.foot_world_velocity(leg);
        let acc = (v - w_prev.robot.foot_world_velocity(leg)) * (1.0 / dt);
        raw_foot_vel += v.norm_squared();
        raw_foot_acc += acc.norm_squared();
    }

    let fa = a.flatten();
    let fp = a_prev.flatten();
    let raw_action_rate: f64 = (0..ACTION_DIM).map(|i| (fa[i] - fp[i]) * (fa[i] - fp[i])).sum();
    let raw_action_limits = action_limit_excess(&offset_action(a, &w.robot.foot_default));
    let raw_termination = if first_success { 1.0 } else { 0.0 };

    // Gate the goal-progress terms, then let freezing override the two
    // approach terms with their stored pre-success outputs.
    let gated = |raw: f64| if gate_open { raw } else { 0.0 };
    let mut out_dis_foot = raw_dis_foot;
    let mut out_dir_tar_obj = gated(raw_dir_tar_obj);
    let out_dis_obj_tar = gated(raw_dis_obj_tar);
    let out_dir_tar = gated(raw_dir_tar);

    if gate.success_seen {
        out_dis_foot = gate.last_dis_foot_obj.unwrap_or(out_dis_foot);
        out_dir_tar_obj = gate.last_dir_tar_obj.unwrap_or(out_dir_tar_obj);
    } else if first_success {
        out_dis_foot = gate.last_dis_foot_obj.unwrap_or(out_dis_foot);
        out_dir_tar_obj = gate.last_dir_tar_obj.unwrap_or(out_dir_tar_obj);
        gate.last_dis_foot_obj = Some(out_dis_foot);
        gate.last_dir_tar_obj = Some(out_dir_tar_obj);
        gate.success_seen = true;
    } else {
        gate.last_dis_foot_obj = Some(out_dis_foot);
        gate.last_dir_tar_obj = Some(out_dir_tar_obj);
    }

    let bonus = if bi_now && (weights.bonus_every_tick || !gate.bonus_paid) {
        gate.bonus_paid = true;
        weights.bicontact_bonus
    } else {
        0.0
    };
    gate.bi_contact_seen = gate_open;

    let term = |raw: f64, weight: f64| RewardTerm { raw, weighted: raw * weight };
    let mut b = RewardBreakdown {
        dis_foot_obj: term(out_dis_foot, weights.dis_foot_obj),
        dir_tar_obj: term(out_dir_tar_obj, weights.dir_tar_obj),
        dis_obj_tar: term(out_dis_obj_tar, weights.dis_obj_tar),
        dir_tar: term(out_dir_tar, weights.dir_tar),
        orientation: term(raw_orientation, weights.orientation),
        foot_velocity: term(raw_foot_vel, weights.foot_velocity),
        foot_acceleration: term(raw_foot_acc, weights.foot_acceleration),
        action_rate: term(raw_action_rate, weights.action_rate),
        action_limits: term(raw_action_limits, weights.action_limits),
        termination: term(raw_termination, weights.termination),
        bicontact_bonus: bonus,
        gate_open,
        success_frozen: gate.success_seen,
        total: 0.0,
    };
    b.total = b.terms().iter().map(|(_, t)| t.weighted).sum::<f64>() + b.bicontact_bonus;
    b
}
