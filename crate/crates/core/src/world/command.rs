//! Planner command vector and the explicit command constraints: velocity
//! bounds, per-foot workspace boxes around the default stance, and the
//! lateral foot-separation repair.

use crate::geom::Vec3;
use serde::{Deserialize, Serialize};

/// Commanded body velocity bounds: vx (m/s), vy (m/s), yaw rate (rad/s).
pub const VX_BOUNDS: (f64, f64) = (0.0, 0.5);
pub const VY_BOUNDS: (f64, f64) = (-0.3, 0.3);
pub const WYAW_BOUNDS: (f64, f64) = (-1.0, 1.0);

/// Per-axis foot target offsets allowed around the default stance (m).
pub const FOOT_DX_BOUNDS: (f64, f64) = (-0.25, 0.25);
pub const FOOT_DY_BOUNDS: (f64, f64) = (-0.1, 0.2);
pub const FOOT_DZ_BOUNDS: (f64, f64) = (-0.2, 0.2);

/// Required lateral gap: right foot target must satisfy
/// `y_rf <= y_lf - FOOT_MIN_SEPARATION`.
pub const FOOT_MIN_SEPARATION: f64 = 0.15;

/// Planner action dimension: base twist (3) + two foot targets (6).
pub const ACTION_DIM: usize = 9;

/// Lower bounds of the raw planner action; foot entries are offsets from
/// the default stance.
pub const ACTION_LO: [f64; ACTION_DIM] = [
    VX_BOUNDS.0,
    VY_BOUNDS.0,
    WYAW_BOUNDS.0,
    FOOT_DX_BOUNDS.0,
    FOOT_DY_BOUNDS.0,
    FOOT_DZ_BOUNDS.0,
    FOOT_DX_BOUNDS.0,
    FOOT_DY_BOUNDS.0,
    FOOT_DZ_BOUNDS.0,
];

/// Upper bounds of the raw planner action.
pub const ACTION_HI: [f64; ACTION_DIM] = [
    VX_BOUNDS.1,
    VY_BOUNDS.1,
    WYAW_BOUNDS.1,
    FOOT_DX_BOUNDS.1,
    FOOT_DY_BOUNDS.1,
    FOOT_DZ_BOUNDS.1,
    FOOT_DX_BOUNDS.1,
    FOOT_DY_BOUNDS.1,
    FOOT_DZ_BOUNDS.1,
];

/// Index 0 = left foreleg, 1 = right foreleg, throughout the crate.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// The 9-dim planner command: desired base twist plus two foreleg foot
/// targets in the base frame. May hold out-of-range values until passed
/// through [`clamp_command`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Command {
    /// (vx, vy, yaw rate) in the base frame.
    pub v_cmd: [f64; 3],
    /// Foot targets in the base frame, left then right.
    pub foot_cmd: [Vec3; 2],
}

impl Command {
    /// Stationary command holding the given stance.
    pub fn hold(defaults: &[Vec3; 2]) -> Self {
        Command { v_cmd: [0.0; 3], foot_cmd: *defaults }
    }

    /// Build a command from a raw 9-vector action. The foot entries of the
    /// action are offsets from the default stance.
    pub fn from_action(action: &[f64; ACTION_DIM], defaults: &[Vec3; 2]) -> Self {
        Command {
            v_cmd: [action[0], action[1], action[2]],
            foot_cmd: [
                defaults[LEFT] + Vec3::new(action[3], action[4], action[5]),
                defaults[RIGHT] + Vec3::new(action[6], action[7], action[8]),
            ],
        }
    }

    /// Flatten to (vx, vy, wyaw, lf xyz, rf xyz).
    pub fn flatten(&self) -> [f64; ACTION_DIM] {
        [
            self.v_cmd[0],
            self.v_cmd[1],
            self.v_cmd[2],
            self.foot_cmd[LEFT].x,
            self.foot_cmd[LEFT].y,
            self.foot_cmd[LEFT].z,
            self.foot_cmd[RIGHT].x,
            self.foot_cmd[RIGHT].y,
            self.foot_cmd[RIGHT].z,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Hinge penalty of a raw action against the command bounds:
/// `sum_i [lo_i - a_i]_+ + [a_i - hi_i]_+`.
pub fn action_limit_excess(action: &[f64; ACTION_DIM]) -> f64 {
    let mut sum = 0.0;
    for i in 0..ACTION_DIM {
        sum += (ACTION_LO[i] - action[i]).max(0.0) + (action[i] - ACTION_HI[i]).max(0.0);
    }
    sum
}

/// A constraint that fired during clamping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Constraint name, e.g. `"omega_yaw"` or `"right_foot_dz"`.
    pub constraint: String,
    pub raw: f64,
    pub clamped: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CommandError {
    #[error("non-finite command component {component}: {value}")]
    NonFinite { component: &'static str, value: f64 },
}

const COMPONENT_NAMES: [&str; ACTION_DIM] = [
    "v_x",
    "v_y",
    "omega_yaw",
    "left_foot_x",
    "left_foot_y",
    "left_foot_z",
    "right_foot_x",
    "right_foot_y",
    "right_foot_z",
];

fn clamp_axis(
    value: f64,
    lo: f64,
    hi: f64,
    name: &str,
    violations: &mut Vec<Violation>,
) -> f64 {
    let c = value.clamp(lo, hi);
    if c != value {
        violations.push(Violation { constraint: name.to_string(), raw: value, clamped: c });
    }
    c
}

/// Componentwise projection onto the command constraints, followed by the
/// lateral-separation repair: when `y_rf > y_lf - 0.15`, both y-targets are
/// shifted symmetrically apart about their midpoint until the gap is exactly
/// 0.15. Returns the clamped command and the list of constraints that fired.
pub fn clamp_command_report(
    raw: &Command,
    defaults: &[Vec3; 2],
) -> Result<(Command, Vec<Violation>), CommandError> {
    let flat = raw.flatten();
    for (i, v) in flat.iter().enumerate() {
        if !v.is_finite() {
            return Err(CommandError::NonFinite { component: COMPONENT_NAMES[i], value: *v });
        }
    }

    let mut violations = Vec::new();
    let v_cmd = [
        clamp_axis(raw.v_cmd[0], VX_BOUNDS.0, VX_BOUNDS.1, "v_x", &mut violations),
        clamp_axis(raw.v_cmd[1], VY_BOUNDS.0, VY_BOUNDS.1, "v_y", &mut violations),
        clamp_axis(raw.v_cmd[2], WYAW_BOUNDS.0, WYAW_BOUNDS.1, "omega_yaw", &mut violations),
    ];

    let mut foot_cmd = [Vec3::ZERO; 2];
    for (leg, leg_name) in [(LEFT, "left"), (RIGHT, "right")] {
        let d = defaults[leg];
        let f = raw.foot_cmd[leg];
        foot_cmd[leg] = Vec3::new(
            clamp_axis(
                f.x,
                d.x + FOOT_DX_BOUNDS.0,
                d.x + FOOT_DX_BOUNDS.1,
                &format!("{leg_name}_foot_dx"),
                &mut violations,
            ),
            clamp_axis(
                f.y,
                d.y + FOOT_DY_BOUNDS.0,
                d.y + FOOT_DY_BOUNDS.1,
                &format!("{leg_name}_foot_dy"),
                &mut violations,
            ),
            clamp_axis(
                f.z,
                d.z + FOOT_DZ_BOUNDS.0,
                d.z + FOOT_DZ_BOUNDS.1,
                &format!("{leg_name}_foot_dz"),
                &mut violations,
            ),
        );
    }

    // Separation repair runs last and may leave the workspace boxes.
    let gap = foot_cmd[LEFT].y - foot_cmd[RIGHT].y;
    if gap < FOOT_MIN_SEPARATION {
        let mid = 0.5 * (foot_cmd[LEFT].y + foot_cmd[RIGHT].y);
        let lf = mid + 0.5 * FOOT_MIN_SEPARATION;
        // Derive the right target from the left so the repaired gap is
        // exact rather than correct only up to rounding.
        let rf = lf - FOOT_MIN_SEPARATION;
        violations.push(Violation {
            constraint: "lateral_separation".to_string(),
            raw: gap,
            clamped: FOOT_MIN_SEPARATION,
        });
        foot_cmd[LEFT].y = lf;
        foot_cmd[RIGHT].y = rf;
    }

    Ok((Command { v_cmd, foot_cmd }, violations))
}

/// [`clamp_command_report`] without the violation list.
pub fn clamp_command(raw: &Command, defaults: &[Vec3; 2]) -> Result<Command, CommandError> {
    clamp_command_report(raw, defaults).map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> [Vec3; 2] {
        [Vec3::new(0.3, 0.2, 0.15), Vec3::new(0.3, -0.2, 0.15)]
    }

    #[test]
    fn vx_clamped_to_upper_bound() {
        let mut c = Command::hold(&defaults());
        c.v_cmd[0] = 0.8;
        let out = clamp_command(&c, &defaults()).unwrap();
        assert_eq!(out.v_cmd[0], 0.5);
    }

    #[test]
    fn in_range_command_unchanged() {
        let mut c = Command::hold(&defaults());
        c.v_cmd = [0.3, -0.1, 0.5];
        c.foot_cmd[LEFT] += Vec3::new(0.1, 0.05, -0.1);
        c.foot_cmd[RIGHT] += Vec3::new(-0.2, -0.05, 0.1);
        let (out, violations) = clamp_command_report(&c, &defaults()).unwrap();
        assert_eq!(out, c);
        assert!(violations.is_empty());
    }

    #[test]
    fn separation_repair_is_symmetric_about_midpoint() {
        // A narrow stance keeps y_lf = 0.025, y_rf = -0.025 inside both
        // per-foot boxes, so only the separation constraint fires: gap 0.05
        // with midpoint 0 widens to exactly 0.15 about the same midpoint.
        let narrow = [Vec3::new(0.3, 0.05, 0.15), Vec3::new(0.3, -0.05, 0.15)];
        let mut c = Command::hold(&narrow);
        c.foot_cmd[LEFT].y = 0.025;
        c.foot_cmd[RIGHT].y = -0.025;
        let out = clamp_command(&c, &narrow).unwrap();
        assert_eq!(out.foot_cmd[LEFT].y, 0.075);
        assert_eq!(out.foot_cmd[RIGHT].y, -0.075);
        assert_eq!(out.foot_cmd[RIGHT].y, out.foot_cmd[LEFT].y - FOOT_MIN_SEPARATION);
        // Midpoint preserved.
        assert_eq!(0.5 * (out.foot_cmd[LEFT].y + out.foot_cmd[RIGHT].y), 0.0);
    }

    #[test]
    fn separation_repair_after_componentwise_clamp() {
        // With the default stance, driving both y-targets toward each other
        // first hits the per-foot boxes, then the separation repair.
        let mut c = Command::hold(&defaults());
        c.foot_cmd[LEFT].y = 0.05; // below the left box floor of 0.1
        c.foot_cmd[RIGHT].y = 0.05; // above the right box ceiling of 0.0
        let (out, violations) = clamp_command_report(&c, &defaults()).unwrap();
        assert!(violations.iter().any(|v| v.constraint == "left_foot_dy"));
        assert!(violations.iter().any(|v| v.constraint == "right_foot_dy"));
        assert!((out.foot_cmd[LEFT].y - out.foot_cmd[RIGHT].y - FOOT_MIN_SEPARATION).abs()
            < 1e-15);
        assert!((0.5 * (out.foot_cmd[LEFT].y + out.foot_cmd[RIGHT].y) - 0.05).abs() < 1e-15);
        assert!(violations.iter().any(|v| v.constraint == "lateral_separation"));
    }

    #[test]
    fn non_finite_rejected_with_component_name() {
        let mut c = Command::hold(&defaults());
        c.foot_cmd[RIGHT].z = f64::NAN;
        let err = clamp_command(&c, &defaults()).unwrap_err();
        match err {
            CommandError::NonFinite { component, .. } => assert_eq!(component, "right_foot_z"),
        }
    }

    #[test]
    fn yaw_violation_named_in_report() {
        let mut c = Command::hold(&defaults());
        c.v_cmd[2] = 1.5;
        let (out, violations) = clamp_command_report(&c, &defaults()).unwrap();
        assert_eq!(out.v_cmd[2], 1.0);
        assert!(violations.iter().any(|v| v.constraint == "omega_yaw"));
    }

    #[test]
    fn foot_z_clamped_with_report() {
        let mut c = Command::hold(&defaults());
        c.foot_cmd[LEFT].z = defaults()[LEFT].z - 0.3;
        let (out, violations) = clamp_command_report(&c, &defaults()).unwrap();
        assert_eq!(out.foot_cmd[LEFT].z, defaults()[LEFT].z - 0.2);
        assert!(violations.iter().any(|v| v.constraint == "left_foot_dz"));
    }

    #[test]
    fn action_limit_excess_hinge() {
        let mut a = [0.0; ACTION_DIM];
        assert_eq!(action_limit_excess(&a), 0.0);
        a[0] = 0.8; // 0.3 above vx hi
        a[2] = -1.5; // 0.5 below wyaw lo
        assert!((action_limit_excess(&a) - 0.8).abs() < 1e-12);
    }
}
