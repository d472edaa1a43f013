//! Desk-scale pushing world: one rigid box on flat ground, driven by a
//! kinematic two-foot robot through penalty contacts. The world advances in
//! fixed control ticks, each split into equal physics substeps.

pub mod command;
pub mod contact;
pub mod object;
pub mod plant;

pub use command::{
    action_limit_excess, clamp_command, clamp_command_report, Command, CommandError, Violation,
    ACTION_DIM, ACTION_HI, ACTION_LO, LEFT, RIGHT,
};
pub use contact::{foot_box_contact, penalty_force, Contact, FootId, SurfaceId};
pub use object::{cuboid_inertia, BoxObject};
pub use plant::{PlanarPose, RobotPlant, DEFAULT_STANCE, TAU_BASE, TAU_FOOT};

use crate::geom::Vec3;
use serde::{Deserialize, Serialize};

/// Fixed physics constants for one episode. Ground friction is sampled per
/// episode; the rest are simulation-wide defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    /// Gravitational acceleration (m/s^2), positive down.
    pub gravity: f64,
    /// Sliding friction between the box and the ground.
    pub ground_friction: f64,
    /// Contact spring stiffness (N/m of penetration).
    pub contact_stiffness: f64,
    /// Contact damping (N s/m), shared by normal and tangential terms.
    pub contact_damping: f64,
    /// Foot collision sphere radius (m).
    pub foot_radius: f64,
    /// Kinematic feet are projected out of the box beyond this depth (m),
    /// bounding the force a commanded interpenetration can produce.
    pub foot_pen_cap: f64,
    /// Control tick length (s).
    pub control_dt: f64,
    /// Physics substeps per control tick.
    pub substeps_per_tick: u32,
}

impl Default for WorldParams {
    fn default() -> Self {
        // Stiffness keeps the heaviest box above 2 mm of resting
        // penetration; damping is calibrated so a restitution-0.3 drop
        // rebounds to about e^2 h. Both leave the contact modes well inside
        // the stability margin of 5 ms substeps across the 5-15 kg range.
        WorldParams {
            gravity: 9.81,
            ground_friction: 0.5,
            contact_stiffness: 2.0e4,
            contact_damping: 250.0,
            foot_radius: 0.02,
            foot_pen_cap: 0.005,
            control_dt: 0.02,
            substeps_per_tick: 4,
        }
    }
}

impl WorldParams {
    pub fn substep_dt(&self) -> f64 {
        self.control_dt / self.substeps_per_tick as f64
    }
}

/// Complete simulation state at a control tick boundary. `contacts` holds
/// the contacts of the final substep of the last tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub object: BoxObject,
    pub robot: RobotPlant,
    pub contacts: Vec<Contact>,
    pub time: f64,
    pub tick: u64,
}

impl WorldState {
    pub fn new(object: BoxObject, robot: RobotPlant) -> Self {
        WorldState { object, robot, contacts: Vec::new(), time: 0.0, tick: 0 }
    }

    pub fn is_finite(&self) -> bool {
        self.object.is_finite() && self.robot.is_finite() && self.time.is_finite()
    }

    /// True when the given foot currently overlaps the box.
    pub fn foot_in_contact(&self, leg: usize, params: &WorldParams) -> bool {
        foot_box_contact(self.robot.foot_world(leg), params.foot_radius, &self.object).is_some()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("substep dt must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error("state diverged to non-finite values at tick {tick}")]
    Diverged { tick: u64 },
}

/// Advance one control tick. The raw command is clamped once, then held for
/// all substeps. Each substep moves the robot plant, projects feet out of
/// deep interpenetration, accumulates foot and ground contact forces plus
/// gravity on the box, and integrates the box with semi-implicit Euler about
/// its center of mass. Returns the new state and the contacts active at the
/// final substep.
pub fn step_world(
    state: &WorldState,
    raw: &Command,
    params: &WorldParams,
) -> Result<(WorldState, Vec<Contact>), WorldError> {
    let cmd = clamp_command(raw, &state.robot.foot_default)?;
    let dt = params.substep_dt();
    let mut s = state.clone();

    for _ in 0..params.substeps_per_tick {
        s.robot = s.robot.step(&cmd, dt)?;

        // A kinematic foot ignores reaction forces, so a deep commanded
        // overlap would produce unbounded spring force. Project feet back to
        // the cap depth along the contact normal first.
        for leg in [LEFT, RIGHT] {
            if let Some(c) =
                foot_box_contact(s.robot.foot_world(leg), params.foot_radius, &s.object)
            {
                if c.penetration > params.foot_pen_cap {
                    let out = c.normal * (c.penetration - params.foot_pen_cap);
                    let moved = s.robot.foot_world(leg) + out;
                    s.robot.set_foot_world(leg, moved);
                }
            }
        }

        let com = s.object.com_world();
        let mass = s.object.mass;
        let mut f_total = Vec3::new(0.0, 0.0, -params.gravity * mass);
        let mut tau_total = Vec3::ZERO;
        let mut contacts = Vec::new();

        for (leg, foot_id) in [(LEFT, FootId::Left), (RIGHT, FootId::Right)] {
            if let Some(mut c) =
                foot_box_contact(s.robot.foot_world(leg), params.foot_radius, &s.object)
            {
                let rel = s.robot.foot_world_velocity(leg) - s.object.point_velocity(c.point);
                let f_on_foot =
                    penalty_force(&c, rel, params, s.object.friction, s.object.restitution);
                c.force = f_on_foot;
                c.foot = Some(foot_id);
                let f_on_box = -f_on_foot;
                f_total += f_on_box;
                tau_total += (c.point - com).cross(&f_on_box);
                contacts.push(c);
            }
        }

        for corner in s.object.bottom_corners_world() {
            if corner.z < 0.0 {
                let mut c = Contact {
                    point: corner,
                    normal: Vec3::new(0.0, 0.0, 1.0),
                    force: Vec3::ZERO,
                    penetration: -corner.z,
                    surface: SurfaceId::Ground,
                    foot: None,
                };
                let rel = s.object.point_velocity(corner);
                let f =
                    penalty_force(&c, rel, params, params.ground_friction, s.object.restitution);
                c.force = f;
                f_total += f;
                tau_total += (corner - com).cross(&f);
                contacts.push(c);
            }
        }

        let i_w = s.object.inertia_world();
        let omega = s.object.twist.angular;
        let gyro = omega.cross(&i_w.mul_vec(&omega));
        let omega_new = omega + i_w.inverse().mul_vec(&(tau_total - gyro)) * dt;
        let v_new = s.object.twist.linear + f_total * (dt / mass);

        let com_new = com + v_new * dt;
        let q_new = s.object.pose.orientation.integrate(omega_new, dt);
        s.object.pose.position = com_new - q_new.rotate(&s.object.com_offset);
        s.object.pose.orientation = q_new;
        s.object.twist.linear = v_new;
        s.object.twist.angular = omega_new;
        s.contacts = contacts;
    }

    s.time += params.control_dt;
    s.tick += 1;
    if !s.is_finite() {
        return Err(WorldError::Diverged { tick: s.tick });
    }
    let contacts = s.contacts.clone();
    Ok((s, contacts))
}
