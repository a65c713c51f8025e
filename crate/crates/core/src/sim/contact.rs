//! Penalty contact forces and scripted pushes.

use nalgebra::{DVector, Vector3};

use super::World;
use crate::model::{self, RobotModel};

/// Contact probe: a sphere of `radius` centred at `point` in link frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub link: usize,
    pub point: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    Table,
    Obstacle(usize),
    Push(usize),
}

/// Force applied to the arm at a world point.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactRecord {
    pub link: usize,
    pub point: Vector3<f64>,
    pub force: Vector3<f64>,
    pub kind: ContactKind,
}

/// Point probes at each link's distal end and midway to it, plus the tool
/// point. Coincident probes are dropped.
pub fn default_probes(model: &RobotModel) -> Vec<Probe> {
    let n = model.dof();
    let ee = model.end_effector();
    let mut probes: Vec<Probe> = Vec::new();
    let mut add = |link: usize, point: Vector3<f64>| {
        if !probes
            .iter()
            .any(|p| p.link == link && (p.point - point).norm() < 1e-9)
        {
            probes.push(Probe {
                link,
                point,
                radius: 0.0,
            });
        }
    };
    for i in 0..n {
        let tip = if i + 1 < n {
            Some(model.joints()[i + 1].origin.translation.vector)
        } else if ee.parent == i {
            Some(ee.offset.translation.vector)
        } else {
            None
        };
        if let Some(tip) = tip {
            add(i, tip * 0.5);
            add(i, tip);
        }
    }
    add(ee.parent, ee.offset.translation.vector);
    probes
}

/// Normal force magnitude of a spring-damper that only pushes.
fn penalty(stiffness: f64, damping: f64, depth: f64, normal_speed: f64) -> f64 {
    (stiffness * depth - damping * normal_speed).max(0.0)
}

/// All contact and push forces acting on the arm in the current state.
pub fn contact_forces(world: &World) -> Vec<ContactRecord> {
    let model = &world.model;
    let q = &world.state.q;
    let qd = &world.state.qd;
    let frames = model.link_frames(q);
    let mut out = Vec::new();

    let needs_geometry = world.table.is_some() || !world.obstacles.is_empty();
    if needs_geometry {
        for probe in &world.probes {
            let center = frames[probe.link] * nalgebra::Point3::from(probe.point);
            let center = center.coords;
            let velocity = linear_velocity(model, &frames, probe.link, &center, qd);

            if let Some(table) = &world.table {
                let n = table.normal;
                let depth = probe.radius - (center - table.point).dot(&n);
                if depth > 0.0 {
                    let vn = velocity.dot(&n);
                    let fn_ = penalty(table.stiffness, table.damping, depth, vn);
                    let vt = velocity - n * vn;
                    let speed = vt.norm();
                    let mut force = n * fn_;
                    if speed > 0.0 && fn_ > 0.0 {
                        let ft = (table.damping * speed).min(table.friction * fn_);
                        force -= vt * (ft / speed);
                    }
                    out.push(ContactRecord {
                        link: probe.link,
                        point: center - n * probe.radius,
                        force,
                        kind: ContactKind::Table,
                    });
                }
            }

            for (k, obs) in world.obstacles.iter().enumerate() {
                let d = center - obs.center;
                let dist = d.norm();
                let depth = obs.radius + probe.radius - dist;
                if depth > 0.0 && dist > 0.0 {
                    let n = d / dist;
                    let fn_ = penalty(obs.stiffness, obs.damping, depth, velocity.dot(&n));
                    out.push(ContactRecord {
                        link: probe.link,
                        point: center - n * probe.radius,
                        force: n * fn_,
                        kind: ContactKind::Obstacle(k),
                    });
                }
            }
        }
    }

    for (k, push) in world.pushes.iter().enumerate() {
        if push.is_active(world.time) && push.link < frames.len() {
            let point = frames[push.link] * nalgebra::Point3::from(push.point);
            out.push(ContactRecord {
                link: push.link,
                point: point.coords,
                force: push.force,
                kind: ContactKind::Push(k),
            });
        }
    }
    out
}

fn linear_velocity(
    model: &RobotModel,
    frames: &[nalgebra::Isometry3<f64>],
    link: usize,
    point: &Vector3<f64>,
    qd: &DVector<f64>,
) -> Vector3<f64> {
    let jac = model::jacobian_from_frames(model, frames, link, point);
    jac.fixed_rows::<3>(0) * qd
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{arm7, planar};
    use crate::model::JointState;
    use crate::sim::{Obstacle, Push, Table};
    use std::sync::Arc;

    fn one_link_world() -> World {
        // Single link along +x, tip at (0.5, 0, 0).
        let model = Arc::new(planar(&[0.5], &[1.0], Vector3::zeros()));
        World::new(model, JointState::at_rest(DVector::zeros(1))).unwrap()
    }

    #[test]
    fn one_millimetre_penetration() {
        let mut world = one_link_world();
        world.table = Some(Table {
            point: Vector3::new(0.0, 0.001, 0.0),
            normal: Vector3::y(),
            stiffness: 1e4,
            damping: 100.0,
            friction: 0.3,
        });
        let contacts = contact_forces(&world);
        // Tip and midpoint both sit 1 mm below the surface.
        assert_eq!(contacts.len(), 2);
        for c in &contacts {
            assert!((c.force - Vector3::new(0.0, 10.0, 0.0)).norm() < 1e-9);
            assert_eq!(c.kind, ContactKind::Table);
        }
    }

    #[test]
    fn separated_bodies_have_no_force() {
        let mut world = one_link_world();
        world.table = Some(Table {
            point: Vector3::new(0.0, -0.01, 0.0),
            normal: Vector3::y(),
            ..Table::horizontal(0.0)
        });
        world.obstacles.push(Obstacle::sphere(Vector3::new(0.5, 0.3, 0.0), 0.2));
        assert!(contact_forces(&world).is_empty());
    }

    #[test]
    fn sphere_pushes_outward() {
        let mut world = one_link_world();
        world.obstacles.push(Obstacle::sphere(Vector3::new(0.5, 0.19, 0.0), 0.2));
        let contacts = contact_forces(&world);
        assert_eq!(contacts.len(), 1);
        let f = contacts[0].force;
        assert!((f - Vector3::new(0.0, -5e3 * 0.01, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn separating_contact_never_pulls() {
        let mut world = one_link_world();
        world.state.qd[0] = 10.0;
        world.table = Some(Table {
            point: Vector3::new(0.0, 0.001, 0.0),
            normal: Vector3::y(),
            ..Table::horizontal(0.0)
        });
        for c in contact_forces(&world) {
            assert!(c.force.y >= 0.0);
        }
    }

    #[test]
    fn friction_is_capped_by_coulomb_limit() {
        let mut world = one_link_world();
        // Tip sliding at 0.5 m/s in -y is tangential
        // for a wall whose normal is -x.
        world.state.qd[0] = -1.0;
        world.table = Some(Table {
            point: Vector3::new(0.499, 0.0, 0.0),
            normal: -Vector3::x(),
            stiffness: 1e4,
            damping: 100.0,
            friction: 0.3,
        });
        let contacts = contact_forces(&world);
        assert_eq!(contacts.len(), 1);
        let f = contacts[0].force;
        assert!((f.x + 10.0).abs() < 1e-9);
        assert!((f.y - 3.0).abs() < 1e-9, "{f}");
    }

    #[test]
    fn push_schedule() {
        let mut world = one_link_world();
        world.pushes.push(Push {
            link: 0,
            point: Vector3::new(0.25, 0.0, 0.0),
            force: Vector3::new(0.0, 2.0, 0.0),
            start: 1.0,
            end: 1.5,
        });
        for (t, active) in [(0.99, false), (1.0, true), (1.2, true), (1.5, false)] {
            world.time = t;
            let contacts = contact_forces(&world);
            assert_eq!(contacts.len(), usize::from(active), "t = {t}");
        }
        world.time = 1.2;
        let c = &contact_forces(&world)[0];
        assert_eq!(c.kind, ContactKind::Push(0));
        assert!((c.point - Vector3::new(0.25, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn default_probes_cover_every_link() {
        let model = arm7();
        let probes = default_probes(&model);
        for link in [2, 3, 4, 6] {
            assert!(probes.iter().any(|p| p.link == link), "link {link}");
        }
        let ee = model.end_effector();
        assert!(probes
            .iter()
            .any(|p| p.link == ee.parent && p.point == ee.offset.translation.vector));
    }
}
