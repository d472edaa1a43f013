//! Minimal 3-D geometry kernel: vectors, unit-quaternion orientations,
//! frame transforms, and angle utilities.
//!
//! Everything is f64. Orientations are renormalized after every integration
//! step; yaw is extracted by projecting the body x-axis onto the world
//! xy-plane, which stays well-defined through the tilt range we care about.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// 3-D vector (meters, or per-context units).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(&self, other: &Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    /// Planar (xy) norm.
    #[inline]
    pub fn norm_xy(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    /// Unit vector in the same direction; `None` if shorter than `eps`.
    pub fn normalized(&self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        if n <= eps {
            None
        } else {
            Some(*self * (1.0 / n))
        }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3x3 matrix. Used for rotation matrices and inertia tensors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn zeros() -> Mat3 {
        Mat3 { m: [[0.0; 3]; 3] }
    }

    pub fn diagonal(d: Vec3) -> Mat3 {
        let mut m = Mat3::zeros();
        m.m[0][0] = d.x;
        m.m[1][1] = d.y;
        m.m[2][2] = d.z;
        m
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] =
                    self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        r
    }

    pub fn transpose(&self) -> Mat3 {
        let mut r = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[j][i];
            }
        }
        r
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate. Panics on a singular matrix; inertia tensors
    /// handled here are SPD by construction.
    pub fn inverse(&self) -> Mat3 {
        let m = &self.m;
        let det = self.determinant();
        assert!(det.abs() > 1e-300, "singular 3x3 matrix");
        let inv_det = 1.0 / det;
        let mut r = Mat3::zeros();
        r.m[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
        r.m[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
        r.m[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
        r.m[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
        r.m[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
        r.m[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
        r.m[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
        r.m[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
        r.m[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
        r
    }

    pub fn add_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][j] + o.m[i][j];
            }
        }
        r
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut r = *self;
        for row in r.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        r
    }
}

/// Unit quaternion (w, x, y, z). Norm is kept at 1 within 1e-9 by
/// renormalizing after every integration step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Orientation {
    fn default() -> Self {
        Orientation::IDENTITY
    }
}

impl Orientation {
    pub const IDENTITY: Orientation = Orientation { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Quaternion for a rotation of `angle` radians about `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let axis = axis.normalized(1e-12).expect("degenerate rotation axis");
        let half = 0.5 * angle;
        let s = half.sin();
        Orientation { w: half.cos(), x: axis.x * s, y: axis.y * s, z: axis.z * s }
    }

    /// Pure yaw rotation about world z.
    pub fn from_yaw(yaw: f64) -> Self {
        Orientation::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), yaw)
    }

    /// ZYX (yaw-pitch-roll) Euler construction.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let qz = Orientation::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), yaw);
        let qy = Orientation::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), pitch);
        let qx = Orientation::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), roll);
        qz.mul(&qy).mul(&qx)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Orientation {
        let n = self.norm();
        assert!(n > 1e-12, "degenerate quaternion");
        let inv = 1.0 / n;
        Orientation { w: self.w * inv, x: self.x * inv, y: self.y * inv, z: self.z * inv }
    }

    pub fn conjugate(&self) -> Orientation {
        Orientation { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product self * other.
    pub fn mul(&self, o: &Orientation) -> Orientation {
        Orientation {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Rotate a vector from the body frame into the world frame.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // q * (0, v) * q^-1, expanded.
        let u = Vec3::new(self.x, self.y, self.z);
        let s = self.w;
        u * (2.0 * u.dot(v)) + *v * (s * s - u.dot(&u)) + u.cross(v) * (2.0 * s)
    }

    /// Rotate a vector from the world frame into the body frame.
    pub fn rotate_inverse(&self, v: &Vec3) -> Vec3 {
        self.conjugate().rotate(v)
    }

    /// Rotation matrix with body axes as columns.
    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3 {
            m: [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
            ],
        }
    }

    /// Yaw of the body x-axis projected onto the world xy-plane.
    pub fn yaw(&self) -> f64 {
        let xw = self.rotate(&Vec3::new(1.0, 0.0, 0.0));
        xw.y.atan2(xw.x)
    }

    /// ZYX Euler angles (roll, pitch, yaw).
    pub fn rpy(&self) -> (f64, f64, f64) {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let pitch = (2.0 * (w * y - x * z)).clamp(-1.0, 1.0).asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        (roll, pitch, yaw)
    }

    /// One explicit-Euler quaternion step under world-frame angular velocity,
    /// renormalized.
    pub fn integrate(&self, omega_world: Vec3, dt: f64) -> Orientation {
        let half = Orientation { w: 0.0, x: omega_world.x, y: omega_world.y, z: omega_world.z };
        let dq = half.mul(self);
        let q = Orientation {
            w: self.w + 0.5 * dt * dq.w,
            x: self.x + 0.5 * dt * dq.x,
            y: self.y + 0.5 * dt * dq.y,
            z: self.z + 0.5 * dt * dq.z,
        };
        q.normalized()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Rigid pose: position plus orientation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Orientation,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Orientation) -> Self {
        Pose { position, orientation }
    }

    pub fn identity() -> Self {
        Pose { position: Vec3::ZERO, orientation: Orientation::IDENTITY }
    }
}

/// Linear (m/s) and angular (rad/s) velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub const ZERO: Twist = Twist { linear: Vec3::ZERO, angular: Vec3::ZERO };
}

/// Wrap an angle to (-pi, pi].
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    PI - (PI - a).rem_euclid(2.0 * PI)
}

/// Express a world-frame point in the frame defined by `pose`.
pub fn world_to_frame(pose: &Pose, point_world: &Vec3) -> Vec3 {
    pose.orientation.rotate_inverse(&(*point_world - pose.position))
}

/// Express a `pose`-frame point in the world frame.
pub fn frame_to_world(pose: &Pose, point_frame: &Vec3) -> Vec3 {
    pose.orientation.rotate(point_frame) + pose.position
}

/// Signed yaw difference a - b, wrapped to (-pi, pi].
pub fn yaw_error(a: &Orientation, b: &Orientation) -> f64 {
    wrap_angle(a.yaw() - b.yaw())
}

/// World -z unit vector expressed in the body frame of `o`.
pub fn projected_gravity(o: &Orientation) -> Vec3 {
    o.rotate_inverse(&Vec3::new(0.0, 0.0, -1.0))
}
