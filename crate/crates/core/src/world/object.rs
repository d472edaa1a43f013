//! The manipulated box: rigid cuboid with a possibly offset center of mass.

use crate::geom::{frame_to_world, Mat3, Pose, Twist, Vec3};
use serde::{Deserialize, Serialize};

/// Rigid cuboid state and material parameters. The pose tracks the geometric
/// center; the twist holds the world-frame velocity of the center of mass and
/// the world-frame angular velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxObject {
    /// Full extents (length x, width y, height z), meters.
    pub dimensions: Vec3,
    pub mass: f64,
    /// Center of mass offset from the geometric center, body frame.
    pub com_offset: Vec3,
    /// Inertia tensor about the center of mass, body frame.
    pub inertia: Mat3,
    /// Sliding friction coefficient of the box surface (against feet).
    pub friction: f64,
    /// Contact restitution in [0, 1).
    pub restitution: f64,
    pub pose: Pose,
    pub twist: Twist,
}

impl BoxObject {
    /// Uniform-density cuboid: center of mass at the geometric center,
    /// standard cuboid inertia.
    pub fn uniform(dimensions: Vec3, mass: f64, friction: f64, restitution: f64) -> Self {
        BoxObject {
            dimensions,
            mass,
            com_offset: Vec3::ZERO,
            inertia: cuboid_inertia(dimensions, mass),
            friction,
            restitution,
            pose: Pose::identity(),
            twist: Twist::ZERO,
        }
    }

    /// Move the center of mass to `offset` (body frame). The inertia is the
    /// uniform cuboid tensor transported to the new point by the
    /// parallel-axis theorem.
    pub fn with_com_offset(mut self, offset: Vec3) -> Self {
        self.com_offset = offset;
        self.inertia = cuboid_inertia(self.dimensions, self.mass)
            .add_mat(&parallel_axis(offset, self.mass));
        self
    }

    pub fn half_extents(&self) -> Vec3 {
        self.dimensions * 0.5
    }

    /// World position of the center of mass.
    pub fn com_world(&self) -> Vec3 {
        self.pose.position + self.pose.orientation.rotate(&self.com_offset)
    }

    /// World velocity of an arbitrary world-frame point rigidly attached to
    /// the box.
    pub fn point_velocity(&self, point_world: Vec3) -> Vec3 {
        self.twist.linear + self.twist.angular.cross(&(point_world - self.com_world()))
    }

    /// The eight corners in the world frame, fixed (x, y, z) sign order.
    pub fn corners_world(&self) -> [Vec3; 8] {
        let h = self.half_extents();
        let mut out = [Vec3::ZERO; 8];
        let mut i = 0;
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    out[i] =
                        frame_to_world(&self.pose, &Vec3::new(sx * h.x, sy * h.y, sz * h.z));
                    i += 1;
                }
            }
        }
        out
    }

    /// The four corners of the bottom face (body frame z = -h) in the world
    /// frame; these are the box's ground contact points.
    pub fn bottom_corners_world(&self) -> [Vec3; 4] {
        let h = self.half_extents();
        let mut out = [Vec3::ZERO; 4];
        let mut i = 0;
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                out[i] = frame_to_world(&self.pose, &Vec3::new(sx * h.x, sy * h.y, -h.z));
                i += 1;
            }
        }
        out
    }

    /// Inertia tensor about the center of mass in the world frame.
    pub fn inertia_world(&self) -> Mat3 {
        let r = self.pose.orientation.to_matrix();
        r.mul_mat(&self.inertia.mul_mat(&r.transpose()))
    }

    /// Translational plus rotational kinetic energy.
    pub fn kinetic_energy(&self) -> f64 {
        let w = self.twist.angular;
        0.5 * self.mass * self.twist.linear.norm_squared()
            + 0.5 * w.dot(&self.inertia_world().mul_vec(&w))
    }

    /// Gravitational potential energy of the center of mass.
    pub fn potential_energy(&self, gravity: f64) -> f64 {
        self.mass * gravity * self.com_world().z
    }

    pub fn is_finite(&self) -> bool {
        self.pose.position.is_finite()
            && self.pose.orientation.is_finite()
            && self.twist.linear.is_finite()
            && self.twist.angular.is_finite()
    }
}

/// Uniform cuboid inertia about its center, body frame.
pub fn cuboid_inertia(dimensions: Vec3, mass: f64) -> Mat3 {
    let k = mass / 12.0;
    let (l2, w2, h2) = (
        dimensions.x * dimensions.x,
        dimensions.y * dimensions.y,
        dimensions.z * dimensions.z,
    );
    Mat3::diagonal(Vec3::new(k * (w2 + h2), k * (l2 + h2), k * (l2 + w2)))
}

/// Parallel-axis term `m (|d|^2 E - d d^T)` for transporting an inertia
/// tensor by offset `d`.
fn parallel_axis(d: Vec3, mass: f64) -> Mat3 {
    let d2 = d.norm_squared();
    let mut m = Mat3::diagonal(Vec3::new(d2, d2, d2));
    let outer = [
        [d.x * d.x, d.x * d.y, d.x * d.z],
        [d.y * d.x, d.y * d.y, d.y * d.z],
        [d.z * d.x, d.z * d.y, d.z * d.z],
    ];
    for r in 0..3 {
        for c in 0..3 {
            m.m[r][c] = mass * (m.m[r][c] - outer[r][c]);
        }
    }
    m
}
