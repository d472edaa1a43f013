//! Sphere-box and corner-ground contact geometry plus the spring-damper
//! contact force law with a Coulomb friction cone.

use crate::geom::{frame_to_world, world_to_frame, Vec3};
use serde::{Deserialize, Serialize};

use super::object::BoxObject;
use super::WorldParams;

/// Which surface a contact lives on. Box faces are named by their outward
/// normal in the box body frame; feet never push the bottom face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceId {
    BoxFaceXNeg,
    BoxFaceXPos,
    BoxFaceYNeg,
    BoxFaceYPos,
    BoxFaceZPos,
    Ground,
}

/// Which foot produced a contact, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FootId {
    Left,
    Right,
}

/// One active contact, all quantities in the world frame. The normal points
/// away from the surface toward the penetrating body, and `force` is the
/// force applied to the penetrating body.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub point: Vec3,
    pub normal: Vec3,
    pub force: Vec3,
    pub penetration: f64,
    pub surface: SurfaceId,
    pub foot: Option<FootId>,
}

/// Sphere-box collision query: a foot of the given radius against the box.
/// Returns the closest surface point, outward face normal, penetration depth,
/// and face id, or `None` when separated. Near edges the face with the least
/// slab penetration wins. Contacts whose dominant face would be the bottom
/// of the box are discarded; feet cannot reach under the object.
pub fn foot_box_contact(foot_world: Vec3, radius: f64, object: &BoxObject) -> Option<Contact> {
    let h = object.half_extents();
    let p = world_to_frame(&object.pose, &foot_world);

    let clamped = Vec3::new(p.x.clamp(-h.x, h.x), p.y.clamp(-h.y, h.y), p.z.clamp(-h.z, h.z));
    let delta = p - clamped;
    let dist = delta.norm();

    let (pen, normal_local, surface_point_local, face) = if dist > 0.0 {
        // Center outside the box: closest point is the clamp, normal points
        // from the box toward the center.
        if dist >= radius {
            return None;
        }
        let n = delta * (1.0 / dist);
        let face = dominant_face(n)?;
        (radius - dist, n, clamped, face)
    } else {
        // Center inside (or exactly on) the box: exit through the face with
        // the smallest separation.
        let gaps = [
            (h.x - p.x, SurfaceId::BoxFaceXPos),
            (h.x + p.x, SurfaceId::BoxFaceXNeg),
            (h.y - p.y, SurfaceId::BoxFaceYPos),
            (h.y + p.y, SurfaceId::BoxFaceYNeg),
            (h.z - p.z, SurfaceId::BoxFaceZPos),
        ];
        let (gap, face) = gaps
            .into_iter()
            .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite gaps"))
            .expect("non-empty");
        let n = face_normal_local(face);
        let mut sp = p;
        match face {
            SurfaceId::BoxFaceXPos => sp.x = h.x,
            SurfaceId::BoxFaceXNeg => sp.x = -h.x,
            SurfaceId::BoxFaceYPos => sp.y = h.y,
            SurfaceId::BoxFaceYNeg => sp.y = -h.y,
            SurfaceId::BoxFaceZPos => sp.z = h.z,
            SurfaceId::Ground => unreachable!(),
        }
        (radius + gap, n, sp, face)
    };

    Some(Contact {
        point: frame_to_world(&object.pose, &surface_point_local),
        normal: object.pose.orientation.rotate(&normal_local),
        force: Vec3::ZERO,
        penetration: pen,
        surface: face,
        foot: None,
    })
}

fn face_normal_local(face: SurfaceId) -> Vec3 {
    match face {
        SurfaceId::BoxFaceXPos => Vec3::new(1.0, 0.0, 0.0),
        SurfaceId::BoxFaceXNeg => Vec3::new(-1.0, 0.0, 0.0),
        SurfaceId::BoxFaceYPos => Vec3::new(0.0, 1.0, 0.0),
        SurfaceId::BoxFaceYNeg => Vec3::new(0.0, -1.0, 0.0),
        SurfaceId::BoxFaceZPos => Vec3::new(0.0, 0.0, 1.0),
        SurfaceId::Ground => Vec3::new(0.0, 0.0, 1.0),
    }
}

/// Face whose slab the local normal points out of most strongly. Ties break
/// in x, y, z order for determinism. Returns `None` for the bottom face.
fn dominant_face(n_local: Vec3) -> Option<SurfaceId> {
    let ax = n_local.x.abs();
    let ay = n_local.y.abs();
    let az = n_local.z.abs();
    if ax >= ay && ax >= az {
        Some(if n_local.x >= 0.0 { SurfaceId::BoxFaceXPos } else { SurfaceId::BoxFaceXNeg })
    } else if ay >= az {
        Some(if n_local.y >= 0.0 { SurfaceId::BoxFaceYPos } else { SurfaceId::BoxFaceYNeg })
    } else if n_local.z >= 0.0 {
        Some(SurfaceId::BoxFaceZPos)
    } else {
        None
    }
}

/// Spring-damper contact force on the penetrating body. The normal component
/// is `max(0, k*pen - d*(1-e)*v_n)` with `v_n` the separating speed along the
/// normal; restitution `e` scales damping down so impacts keep part of their
/// energy. The tangential force opposes sliding with viscous demand
/// `d*|v_t|`, saturated by the Coulomb cone `mu*F_n`.
pub fn penalty_force(
    contact: &Contact,
    rel_vel: Vec3,
    params: &WorldParams,
    friction: f64,
    restitution: f64,
) -> Vec3 {
    let v_n = rel_vel.dot(&contact.normal);
    let fn_mag = (params.contact_stiffness * contact.penetration
        - params.contact_damping * (1.0 - restitution) * v_n)
        .max(0.0);

    let v_t = rel_vel - contact.normal * v_n;
    let vt_mag = v_t.norm();
    let ft_mag = (params.contact_damping * vt_mag).min(friction * fn_mag);
    let f_t = match v_t.normalized(1e-12) {
        Some(dir) => dir * (-ft_mag),
        None => Vec3::ZERO,
    };

    contact.normal * fn_mag + f_t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Orientation, Pose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box() -> BoxObject {
        let mut b = BoxObject::uniform(Vec3::new(0.4, 0.5, 0.3), 10.0, 0.5, 0.1);
        b.pose = Pose {
            position: Vec3::new(0.0, 0.0, 0.15),
            orientation: Orientation::IDENTITY,
        };
        b
    }

    #[test]
    fn separated_foot_reports_no_contact() {
        let b = unit_box();
        assert!(foot_box_contact(Vec3::new(-0.5, 0.0, 0.15), 0.02, &b).is_none());
        // Just outside the shell by a hair.
        assert!(foot_box_contact(Vec3::new(-0.2201, 0.0, 0.15), 0.02, &b).is_none());
    }

    #[test]
    fn foot_on_face_penetrates_by_radius() {
        // Foot center exactly on the -x face plane: penetration equals the
        // foot radius and the normal is the box -x axis.
        let b = unit_box();
        let c = foot_box_contact(Vec3::new(-0.2, 0.0, 0.15), 0.02, &b).unwrap();
        assert!((c.penetration - 0.02).abs() < 1e-15);
        assert_eq!(c.surface, SurfaceId::BoxFaceXNeg);
        assert!((c.normal - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((c.point - Vec3::new(-0.2, 0.0, 0.15)).norm() < 1e-15);
    }

    #[test]
    fn shallow_overlap_from_outside() {
        let b = unit_box();
        // Center 0.01 outside the -x face: overlap = radius - gap = 0.01.
        let c = foot_box_contact(Vec3::new(-0.21, 0.05, 0.2), 0.02, &b).unwrap();
        assert!((c.penetration - 0.01).abs() < 1e-15);
        assert_eq!(c.surface, SurfaceId::BoxFaceXNeg);
        assert!((c.point - Vec3::new(-0.2, 0.05, 0.2)).norm() < 1e-15);
    }

    #[test]
    fn rotated_box_contact_normal_follows_pose() {
        let mut b = unit_box();
        b.pose.orientation = Orientation::from_yaw(std::f64::consts::FRAC_PI_2);
        // Box +x face now points along world +y. Approach from world +y.
        // Half extents: x 0.2, y 0.25; after yaw the face at world y = 0.2.
        let c = foot_box_contact(Vec3::new(0.0, 0.21, 0.15), 0.02, &b).unwrap();
        assert_eq!(c.surface, SurfaceId::BoxFaceXPos);
        assert!((c.normal - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!((c.penetration - 0.01).abs() < 1e-12);
    }

    #[test]
    fn bottom_face_contacts_discarded() {
        let b = unit_box();
        // Directly below the box, overlapping the bottom face.
        assert!(foot_box_contact(Vec3::new(0.0, 0.0, -0.01), 0.05, &b).is_none());
    }

    /// Brute-force distance from a local point to the box surface, sampled on
    /// a fine grid over the faces. Independent of the clamp construction.
    /// `include_bottom` selects whether the bottom face counts as surface.
    fn oracle_surface_distance(p: Vec3, h: Vec3, include_bottom: bool) -> f64 {
        let n = 160;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let a = -1.0 + 2.0 * i as f64 / n as f64;
                let b = -1.0 + 2.0 * j as f64 / n as f64;
                let mut pts = vec![
                    Vec3::new(h.x, a * h.y, b * h.z),
                    Vec3::new(-h.x, a * h.y, b * h.z),
                    Vec3::new(a * h.x, h.y, b * h.z),
                    Vec3::new(a * h.x, -h.y, b * h.z),
                    Vec3::new(a * h.x, b * h.y, h.z),
                ];
                if include_bottom {
                    pts.push(Vec3::new(a * h.x, b * h.y, -h.z));
                }
                for q in pts {
                    best = best.min((p - q).norm());
                }
            }
        }
        best
    }

    #[test]
    fn penetration_matches_grid_oracle_near_edges_and_faces() {
        let b = unit_box();
        let h = b.half_extents();
        let radius = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(401);
        let mut checked = 0;
        for _ in 0..200 {
            // Sample local points in a shell around the box, biased near it.
            let p = Vec3::new(
                rng.gen_range(-h.x - radius..h.x + radius),
                rng.gen_range(-h.y - radius..h.y + radius),
                rng.gen_range(-h.z - radius..h.z + radius),
            );
            let world = frame_to_world(&b.pose, &p);
            let inside =
                p.x.abs() <= h.x && p.y.abs() <= h.y && p.z.abs() <= h.z;
            let got = foot_box_contact(world, radius, &b);
            if inside {
                // Inside the box the valid exit faces exclude the bottom, so
                // compare against the five-face distance.
                let exit_dist = oracle_surface_distance(p, h, false);
                let c = got.expect("contained center must contact");
                assert!(
                    (c.penetration - (radius + exit_dist)).abs() < 6e-3,
                    "inside pen {} vs oracle {}",
                    c.penetration,
                    radius + exit_dist
                );
                checked += 1;
            } else {
                // Outside, separation is governed by the true distance to
                // the full surface.
                let oracle_dist = oracle_surface_distance(p, h, true);
                if oracle_dist < radius - 6e-3 {
                    match got {
                        Some(c) => {
                            assert!(
                                (c.penetration - (radius - oracle_dist)).abs() < 6e-3,
                                "outside pen {} vs oracle {}",
                                c.penetration,
                                radius - oracle_dist
                            );
                            checked += 1;
                        }
                        // Only the bottom face may drop a geometric overlap.
                        None => assert!(p.z < -h.z + 1e-9),
                    }
                } else if oracle_dist > radius + 6e-3 {
                    assert!(got.is_none(), "expected separation at distance {oracle_dist}");
                }
            }
        }
        assert!(checked > 40, "oracle exercised only {checked} overlaps");
    }

    /// Stiff reference parameters for the closed-form force examples.
    fn params() -> WorldParams {
        WorldParams { contact_stiffness: 1.0e5, ..WorldParams::default() }
    }

    fn contact_at(pen: f64) -> Contact {
        Contact {
            point: Vec3::ZERO,
            normal: Vec3::new(0.0, 0.0, 1.0),
            force: Vec3::ZERO,
            penetration: pen,
            surface: SurfaceId::Ground,
            foot: None,
        }
    }

    #[test]
    fn static_normal_force_is_stiffness_times_penetration() {
        // pen 0.001 at k = 1e5 with zero approach speed: exactly 100 N.
        let f = penalty_force(&contact_at(0.001), Vec3::ZERO, &params(), 0.5, 0.0);
        assert!((f.z - 100.0).abs() < 1e-12);
        assert_eq!(f.x, 0.0);
        assert_eq!(f.y, 0.0);
    }

    #[test]
    fn normal_force_never_pulls() {
        // Fast separation: damping would make the force negative; clamped to
        // zero instead of becoming adhesive.
        let f = penalty_force(
            &contact_at(0.0005),
            Vec3::new(0.0, 0.0, 5.0),
            &params(),
            0.5,
            0.0,
        );
        assert_eq!(f, Vec3::ZERO);
    }

    #[test]
    fn restitution_scales_normal_damping() {
        let p = params();
        let pen = 0.001;
        let v = Vec3::new(0.0, 0.0, -0.1); // approaching
        let f0 = penalty_force(&contact_at(pen), v, &p, 0.5, 0.0);
        let f3 = penalty_force(&contact_at(pen), v, &p, 0.5, 0.3);
        let base = p.contact_stiffness * pen;
        let d = p.contact_damping;
        assert!((f0.z - (base + d * 0.1)).abs() < 1e-9);
        assert!((f3.z - (base + d * 0.7 * 0.1)).abs() < 1e-9);
    }

    #[test]
    fn tangential_force_saturates_on_friction_cone() {
        // Demand d*|v_t| = 200 N against mu*F_n = 0.5 * 100 = 50 N.
        let mut p = params();
        p.contact_damping = 1000.0;
        let pen = 0.001;
        let v = Vec3::new(0.2, 0.0, 0.0);
        let f = penalty_force(&contact_at(pen), v, &p, 0.5, 0.0);
        assert!((f.z - 100.0).abs() < 1e-12);
        assert!((f.x - (-50.0)).abs() < 1e-12, "got {}", f.x);
        assert_eq!(f.y, 0.0);
    }

    #[test]
    fn slow_sliding_stays_inside_cone() {
        let mut p = params();
        p.contact_damping = 1000.0;
        let pen = 0.001;
        // Demand 1000 * 0.01 = 10 N < 50 N: purely viscous.
        let v = Vec3::new(0.0, 0.01, 0.0);
        let f = penalty_force(&contact_at(pen), v, &p, 0.5, 0.0);
        assert!((f.y - (-10.0)).abs() < 1e-12);
    }

    #[test]
    fn cone_bound_holds_across_random_draws() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10_000 {
            let pen = rng.gen_range(0.0..0.01);
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let mu = rng.gen_range(0.0..1.0);
            let e = rng.gen_range(0.0..0.3);
            let f = penalty_force(&contact_at(pen), v, &p, mu, e);
            let f_n = f.dot(&Vec3::new(0.0, 0.0, 1.0));
            let f_t = (f - Vec3::new(0.0, 0.0, f_n)).norm();
            assert!(f_n >= 0.0);
            assert!(f_t <= mu * f_n + 1e-9);
        }
    }
}
