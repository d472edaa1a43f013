//! Low-level controller reward terms as pure functions over an 18-joint
//! state record: command tracking, leg lift shaping, and smoothness
//! penalties, plus the command validator shared with the world module.
//!
//! Nothing here steps a simulator; the functions exist so the full reward
//! surface is implemented, testable, and reusable from an articulated
//! simulator. Squared vector expressions mean sums of squared components.

use crate::geom::Vec3;
use crate::world::{clamp_command_report, Command, CommandError, Violation};
use serde::{Deserialize, Serialize};

/// Number of actuated joints in the controller formulation.
pub const JOINT_COUNT: usize = 18;

/// Joint-space state of one control tick, with the previous tick's joint
/// velocities and action for the finite-difference penalties. Vector
/// fields are length-checked against [`JOINT_COUNT`] at evaluation time.
/// `foot_normal_force` holds the normal force of every leg the caller
/// wants counted by the leg-lift term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtrlState {
    /// Base angular velocity (rad/s).
    pub omega: Vec3,
    /// Projected gravity unit vector in the base frame.
    pub g: Vec3,
    pub q: Vec<f64>,
    pub q_vel: Vec<f64>,
    pub q_vel_prev: Vec<f64>,
    pub tau: Vec<f64>,
    pub q_default: Vec<f64>,
    /// Base linear velocity (m/s).
    pub v: Vec3,
    /// Commanded (vx, vy, yaw rate).
    pub v_cmd: [f64; 3],
    /// Foreleg foot positions, base frame.
    pub foot_pos: [Vec3; 2],
    /// Foreleg foot targets, base frame.
    pub foot_cmd: [Vec3; 2],
    /// Normal force per counted leg (N).
    pub foot_normal_force: Vec<f64>,
    /// Controller action (desired joint positions).
    pub a_c: Vec<f64>,
    pub a_c_prev: Vec<f64>,
    /// Control period (s).
    pub dt: f64,
}

impl CtrlState {
    /// A zero-error state tracking the given command: all joints at
    /// default, no torque, feet on their targets, upright base moving
    /// exactly as commanded.
    pub fn nominal(v_cmd: [f64; 3]) -> Self {
        let stance = [Vec3::new(0.3, 0.2, 0.15), Vec3::new(0.3, -0.2, 0.15)];
        CtrlState {
            omega: Vec3::new(0.0, 0.0, v_cmd[2]),
            g: Vec3::new(0.0, 0.0, -1.0),
            q: vec![0.0; JOINT_COUNT],
            q_vel: vec![0.0; JOINT_COUNT],
            q_vel_prev: vec![0.0; JOINT_COUNT],
            tau: vec![0.0; JOINT_COUNT],
            q_default: vec![0.0; JOINT_COUNT],
            v: Vec3::new(v_cmd[0], v_cmd[1], 0.0),
            v_cmd,
            foot_pos: stance,
            foot_cmd: stance,
            foot_normal_force: Vec::new(),
            a_c: vec![0.0; JOINT_COUNT],
            a_c_prev: vec![0.0; JOINT_COUNT],
            dt: 0.02,
        }
    }
}

/// Final per-term multipliers (base weight times the control period) and
/// the leg-lift force thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtrlRewardWeights {
    pub dt: f64,
    pub tracking_xy: f64,
    pub tracking_z: f64,
    pub tracking_p: f64,
    pub leg_lift: f64,
    pub joint_deviation: f64,
    pub joint_acc: f64,
    pub torque: f64,
    pub action_rate: f64,
    pub velocity_penalty: f64,
    pub orientation: f64,
    /// A leg counts as lifted below this normal force (N).
    pub lift_lo: f64,
    /// A leg counts as loaded above this normal force (N).
    pub lift_hi: f64,
}

impl CtrlRewardWeights {
    /// Default weights for the given control period.
    pub fn from_dt(dt: f64) -> Self {
        CtrlRewardWeights {
            dt,
            tracking_xy: 2.0 * dt,
            tracking_z: 1.0 * dt,
            tracking_p: 2.0 * dt,
            leg_lift: 0.5 * dt,
            joint_deviation: -0.3 * dt,
            joint_acc: -2.5e-7 * dt,
            torque: -1e-5 * dt,
            action_rate: -0.03 * dt,
            velocity_penalty: -2.0 * dt,
            orientation: -20.0 * dt,
            lift_lo: 0.1,
            lift_hi: 1.0,
        }
    }
}

impl Default for CtrlRewardWeights {
    fn default() -> Self {
        Self::from_dt(0.02)
    }
}

/// One reward term as its raw value and weighted contribution.
pub type CtrlTerm = crate::env::RewardTerm;

/// All controller reward terms of one tick; `total` sums the weighted
/// values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtrlRewardBreakdown {
    pub tracking_xy: CtrlTerm,
    pub tracking_z: CtrlTerm,
    pub tracking_p: CtrlTerm,
    pub leg_lift: CtrlTerm,
    pub joint_deviation: CtrlTerm,
    pub joint_acc: CtrlTerm,
    pub torque: CtrlTerm,
    pub action_rate: CtrlTerm,
    pub velocity_penalty: CtrlTerm,
    pub orientation: CtrlTerm,
    pub total: f64,
}

impl CtrlRewardBreakdown {
    /// The ten named terms in a fixed order.
    pub fn terms(&self) -> [(&'static str, CtrlTerm); 10] {
        [
            ("tracking_xy", self.tracking_xy),
            ("tracking_z", self.tracking_z),
            ("tracking_p", self.tracking_p),
            ("leg_lift", self.leg_lift),
            ("joint_deviation", self.joint_deviation),
            ("joint_acc", self.joint_acc),
            ("torque", self.torque),
            ("action_rate", self.action_rate),
            ("velocity_penalty", self.velocity_penalty),
            ("orientation", self.orientation),
        ]
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CtrlError {
    #[error("field {field} has length {got}, expected {expected}")]
    DimensionMismatch { field: &'static str, expected: usize, got: usize },
    #[error("dt must be positive and finite, got {0}")]
    InvalidDt(f64),
}

fn check_len(name: &'static str, v: &[f64]) -> Result<(), CtrlError> {
    if v.len() != JOINT_COUNT {
        return Err(CtrlError::DimensionMismatch {
            field: name,
            expected: JOINT_COUNT,
            got: v.len(),
        });
    }
    Ok(())
}

/// Leg-lift contribution of one leg: +1 when unloaded, -1 when firmly
/// loaded, 0 in between.
pub fn leg_lift_term(f_z: f64, lift_lo: f64, lift_hi: f64) -> f64 {
    (f_z < lift_lo) as u8 as f64 - (f_z > lift_hi) as u8 as f64
}

/// Score one controller tick. Tracking terms are exponentials of command
/// errors; the remaining terms penalize deviation, effort, and abrupt
/// changes. Joint-space fields must all have length [`JOINT_COUNT`].
pub fn controller_reward(
    s: &CtrlState,
    w: &CtrlRewardWeights,
) -> Result<CtrlRewardBreakdown, CtrlError> {
    check_len("q", &s.q)?;
    check_len("q_vel", &s.q_vel)?;
    check_len("q_vel_prev", &s.q_vel_prev)?;
    check_len("tau", &s.tau)?;
    check_len("q_default", &s.q_default)?;
    check_len("a_c", &s.a_c)?;
    check_len("a_c_prev", &s.a_c_prev)?;
    if !(s.dt.is_finite() && s.dt > 0.0) {
        return Err(CtrlError::InvalidDt(s.dt));
    }

    let dvx = s.v_cmd[0] - s.v.x;
    let dvy = s.v_cmd[1] - s.v.y;
    let raw_xy = (-(dvx * dvx + dvy * dvy) / 0.25).exp();
    let dwz = s.v_cmd[2] - s.omega.z;
    let raw_z = (-(dwz * dwz) / 0.25).exp();
    let raw_p = 0.5
        * (0..2)
            .map(|leg| (-(s.foot_cmd[leg] - s.foot_pos[leg]).norm() / 0.3).exp())
            .sum::<f64>();

    let raw_lift: f64 =
        s.foot_normal_force.iter().map(|f| leg_lift_term(*f, w.lift_lo, w.lift_hi)).sum();

    let sq_sum = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let raw_deviation = sq_sum(&s.q, &s.q_default);
    let raw_acc: f64 = s
        .q_vel
        .iter()
        .zip(&s.q_vel_prev)
        .map(|(v, p)| {
            let a = (v - p) / s.dt;
            a * a
        })
        .sum();
    let raw_torque: f64 = s.tau.iter().map(|t| t * t).sum();
    let raw_action_rate = sq_sum(&s.a_c, &s.a_c_prev);
    let raw_vel_penalty = s.v.z * s.v.z;
    let raw_orientation = s.g.x * s.g.x + s.g.y * s.g.y;

    let term = |raw: f64, weight: f64| CtrlTerm { raw, weighted: raw * weight };
    let mut b = CtrlRewardBreakdown {
        tracking_xy: term(raw_xy, w.tracking_xy),
        tracking_z: term(raw_z, w.tracking_z),
        tracking_p: term(raw_p, w.tracking_p),
        leg_lift: term(raw_lift, w.leg_lift),
        joint_deviation: term(raw_deviation, w.joint_deviation),
        joint_acc: term(raw_acc, w.joint_acc),
        torque: term(raw_torque, w.torque),
        action_rate: term(raw_action_rate, w.action_rate),
        velocity_penalty: term(raw_vel_penalty, w.velocity_penalty),
        orientation: term(raw_orientation, w.orientation),
        total: 0.0,
    };
    b.total = b.terms().iter().map(|(_, t)| t.weighted).sum();
    Ok(b)
}

/// Clamp a command against the shared constraint set and report which
/// constraints fired. Identical semantics to the world-module clamp.
pub fn validate_command(
    c: &Command,
    defaults: &[Vec3; 2],
) -> Result<(Command, Vec<Violation>), CommandError> {
    clamp_command_report(c, defaults)
}
