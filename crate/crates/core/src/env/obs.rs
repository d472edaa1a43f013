//! Observation assembly: the 81-dim planner vector (object and goal poses
//! in the base frame plus the 69-dim proprioceptive block) and the 20-dim
//! privileged vector of ground-truth object properties for the critic.
//!
//! Planner layout: object position (3), object roll/pitch/yaw (3), goal
//! position (3), goal roll/pitch/yaw (3), then the proprioceptive block:
//! base angular velocity (3), projected gravity (3), joint positions (18),
//! joint velocities (18), previous controller action (18), previous planner
//! command (9). All pose quantities are expressed in the robot base frame.

use crate::env::task::TaskGoal;
use crate::geom::{world_to_frame, Orientation};
use crate::world::{BoxObject, Command, Contact, FootId, SurfaceId, WorldState};

/// Planner observation length.
pub const PLANNER_OBS_DIM: usize = 81;
/// Privileged observation length.
pub const PRIVILEGED_OBS_DIM: usize = 20;
/// Length of the proprioceptive block inside the planner observation.
pub const CTRL_OBS_DIM: usize = 69;
/// Controller action length (18 joint targets).
pub const CTRL_ACTION_DIM: usize = 18;
/// Critic input length: planner observation plus privileged block.
pub const CRITIC_OBS_DIM: usize = PLANNER_OBS_DIM + PRIVILEGED_OBS_DIM;

/// Number of simulated joints behind the proprioception hook.
pub const JOINT_DIM: usize = 18;

/// The planner policy input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerObs(pub [f64; PLANNER_OBS_DIM]);

/// Ground-truth object properties visible only to the critic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivilegedObs(pub [f64; PRIVILEGED_OBS_DIM]);

impl PlannerObs {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl PrivilegedObs {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// (left, right) foot-on-object contact flags.
    pub fn contact_flags(&self) -> (bool, bool) {
        (self.0[5] != 0.0, self.0[6] != 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Per-foot object-contact flags from a contact list; ground contacts do
/// not count.
pub fn contact_flags(contacts: &[Contact]) -> (bool, bool) {
    let touching = |foot: FootId| {
        contacts.iter().any(|c| c.foot == Some(foot) && c.surface != SurfaceId::Ground)
    };
    (touching(FootId::Left), touching(FootId::Right))
}

/// Assemble the planner observation with explicit joint state. Pass the
/// previous command as executed (after clamping). The joint vectors exist
/// for callers with an articulated simulator; [`build_planner_obs`] fills
/// them with zeros.
pub fn build_planner_obs_with_joints(
    w: &WorldState,
    goal: &TaskGoal,
    prev_planner_action: &Command,
    prev_ctrl_action: &[f64; CTRL_ACTION_DIM],
    q: &[f64; JOINT_DIM],
    q_vel: &[f64; JOINT_DIM],
) -> PlannerObs {
    let base = w.robot.base_pose.to_pose();
    let base_inv = base.orientation.conjugate();

    let p_obj = world_to_frame(&base, &w.object.pose.position);
    let (obj_r, obj_p, obj_y) = base_inv.mul(&w.object.pose.orientation).rpy();
    let p_goal = world_to_frame(&base, &goal.p_cmd);
    let (goal_r, goal_p, goal_y) = base_inv.mul(&Orientation::from_yaw(goal.yaw_cmd)).rpy();

    let mut data = [0.0; PLANNER_OBS_DIM];
    data[0..3].copy_from_slice(&p_obj.as_array());
    data[3..6].copy_from_slice(&[obj_r, obj_p, obj_y]);
    data[6..9].copy_from_slice(&p_goal.as_array());
    data[9..12].copy_from_slice(&[goal_r, goal_p, goal_y]);
    // Proprioceptive block: the planar base only yaws, and its projected
    // gravity is the constant -z unit vector.
    data[12..15].copy_from_slice(&[0.0, 0.0, w.robot.base_twist[2]]);
    data[15..18].copy_from_slice(&[0.0, 0.0, -1.0]);
    data[18..36].copy_from_slice(q);
    data[36..54].copy_from_slice(q_vel);
    data[54..72].copy_from_slice(prev_ctrl_action);
    data[72..81].copy_from_slice(&prev_planner_action.flatten());
    PlannerObs(data)
}

/// Assemble the planner observation with the default zero joint state.
pub fn build_planner_obs(
    w: &WorldState,
    goal: &TaskGoal,
    prev_planner_action: &Command,
    prev_ctrl_action: &[f64; CTRL_ACTION_DIM],
) -> PlannerObs {
    build_planner_obs_with_joints(
        w,
        goal,
        prev_planner_action,
        prev_ctrl_action,
        &[0.0; JOINT_DIM],
        &[0.0; JOINT_DIM],
    )
}

/// Assemble the privileged vector: dimensions (3), restitution, mass,
/// per-foot contact flags (2), center-of-mass offset (3), friction, and the
/// row-major body-frame inertia tensor (9).
pub fn build_privileged_obs(object: &BoxObject, contacts: &[Contact]) -> PrivilegedObs {
    let (left, right) = contact_flags(contacts);
    let mut data = [0.0; PRIVILEGED_OBS_DIM];
    data[0..3].copy_from_slice(&object.dimensions.as_array());
    data[3] = object.restitution;
    data[4] = object.mass;
    data[5] = left as u8 as f64;
    data[6] = right as u8 as f64;
    data[7..10].copy_from_slice(&object.com_offset.as_array());
    data[10] = object.friction;
    for r in 0..3 {
        for c in 0..3 {
            data[11 + 3 * r + c] = object.inertia.m[r][c];
        }
    }
    PrivilegedObs(data)
}
