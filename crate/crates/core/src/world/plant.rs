//! Reduced robot model: a kinematic planar base plus two foreleg feet, each
//! tracking its command through a first-order lag.

use crate::geom::{frame_to_world, Orientation, Pose, Vec3};
use serde::{Deserialize, Serialize};

use super::command::{Command, LEFT, RIGHT};
use super::WorldError;

/// Planar base pose: position in the ground plane plus heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl PlanarPose {
    pub const ORIGIN: PlanarPose = PlanarPose { x: 0.0, y: 0.0, yaw: 0.0 };

    /// Lift to a full 3-D pose at ground height.
    pub fn to_pose(&self) -> Pose {
        Pose {
            position: Vec3::new(self.x, self.y, 0.0),
            orientation: Orientation::from_yaw(self.yaw),
        }
    }
}

/// Robot state advanced by [`RobotPlant::step`]. Feet live in the base frame;
/// the base pose lives in the world frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotPlant {
    pub base_pose: PlanarPose,
    /// Realized base twist (vx, vy, yaw rate) in the base frame.
    pub base_twist: [f64; 3],
    /// Foot positions in the base frame, left then right.
    pub foot_pos: [Vec3; 2],
    /// Foot velocities in the base frame.
    pub foot_vel: [Vec3; 2],
    /// Default stance the foot commands are offset from.
    pub foot_default: [Vec3; 2],
    /// Base velocity tracking time constant (s).
    pub tau_base: f64,
    /// Foot position tracking time constant (s).
    pub tau_foot: f64,
}

/// Default stance of the forelegs in the base frame (m).
pub const DEFAULT_STANCE: [Vec3; 2] =
    [Vec3 { x: 0.3, y: 0.2, z: 0.15 }, Vec3 { x: 0.3, y: -0.2, z: 0.15 }];

/// Baseline tracking time constants (s); episode randomization scales them.
pub const TAU_BASE: f64 = 0.15;
pub const TAU_FOOT: f64 = 0.1;

impl RobotPlant {
    /// Robot at the world origin in the default stance, at rest.
    pub fn at_rest() -> Self {
        RobotPlant {
            base_pose: PlanarPose::ORIGIN,
            base_twist: [0.0; 3],
            foot_pos: DEFAULT_STANCE,
            foot_vel: [Vec3::ZERO; 2],
            foot_default: DEFAULT_STANCE,
            tau_base: TAU_BASE,
            tau_foot: TAU_FOOT,
        }
    }

    /// Advance the plant one substep: first-order velocity tracking for the
    /// base, first-order position tracking for the feet, then base pose
    /// integration by the realized twist. The command must already be
    /// clamped; `dt` must be positive and finite.
    pub fn step(&self, cmd: &Command, dt: f64) -> Result<RobotPlant, WorldError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(WorldError::InvalidDt(dt));
        }
        let mut next = self.clone();

        let kb = dt / self.tau_base;
        for i in 0..3 {
            next.base_twist[i] = self.base_twist[i] + kb * (cmd.v_cmd[i] - self.base_twist[i]);
        }

        let (s, c) = self.base_pose.yaw.sin_cos();
        next.base_pose.x += dt * (c * next.base_twist[0] - s * next.base_twist[1]);
        next.base_pose.y += dt * (s * next.base_twist[0] + c * next.base_twist[1]);
        next.base_pose.yaw = crate::geom::wrap_angle(self.base_pose.yaw + dt * next.base_twist[2]);

        let kf = dt / self.tau_foot;
        for leg in [LEFT, RIGHT] {
            let target = cmd.foot_cmd[leg];
            let p = self.foot_pos[leg];
            let p_next = p + (target - p) * kf;
            next.foot_vel[leg] = (p_next - p) * (1.0 / dt);
            next.foot_pos[leg] = p_next;
        }
        Ok(next)
    }

    /// World-frame position of a foot.
    pub fn foot_world(&self, leg: usize) -> Vec3 {
        frame_to_world(&self.base_pose.to_pose(), &self.foot_pos[leg])
    }

    /// World-frame velocity of a foot: base translation, base rotation sweep,
    /// and the foot's own motion in the base frame.
    pub fn foot_world_velocity(&self, leg: usize) -> Vec3 {
        let pose = self.base_pose.to_pose();
        let v_base =
            pose.orientation.rotate(&Vec3::new(self.base_twist[0], self.base_twist[1], 0.0));
        let omega = Vec3::new(0.0, 0.0, self.base_twist[2]);
        let r = pose.orientation.rotate(&self.foot_pos[leg]);
        v_base + omega.cross(&r) + pose.orientation.rotate(&self.foot_vel[leg])
    }

    /// Overwrite a foot position from a world-frame point, keeping the stored
    /// base-frame representation consistent.
    pub fn set_foot_world(&mut self, leg: usize, world: Vec3) {
        self.foot_pos[leg] = crate::geom::world_to_frame(&self.base_pose.to_pose(), &world);
    }

    pub fn is_finite(&self) -> bool {
        let b = &self.base_pose;
        b.x.is_finite()
            && b.y.is_finite()
            && b.yaw.is_finite()
            && self.base_twist.iter().all(|v| v.is_finite())
            && self.foot_pos.iter().all(|p| p.is_finite())
            && self.foot_vel.iter().all(|p| p.is_finite())
    }
}
