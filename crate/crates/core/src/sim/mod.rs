//! Deterministic fixed-step simulation of a torque-driven arm with penalty
//! contacts against a table plane and sphere obstacles, scripted pushes, a
//! virtual wrist force/torque sensor and a wipeable ink board.

mod board;
mod contact;

use std::sync::Arc;

use nalgebra::{DVector, Vector3, Vector6};

use crate::model::{self, JointState, RobotModel};
use crate::{Error, Result};

pub use board::{InkBoard, PendingCell};
pub use contact::{contact_forces, default_probes, ContactKind, ContactRecord, Probe};

/// Minimum and maximum normal force (N) at which the tool wipes ink.
pub const WIPE_FORCE_MIN: f64 = 0.5;
pub const WIPE_FORCE_MAX: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Any point on the surface.
    pub point: Vector3<f64>,
    /// Outward unit normal.
    pub normal: Vector3<f64>,
    pub stiffness: f64,
    pub damping: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
}

impl Table {
    /// Horizontal table at height `z` with the default contact parameters.
    pub fn horizontal(z: f64) -> Self {
        Self {
            point: Vector3::new(0.0, 0.0, z),
            normal: Vector3::z(),
            stiffness: 2e4,
            damping: 200.0,
            friction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl Obstacle {
    pub fn sphere(center: Vector3<f64>, radius: f64) -> Self {
        Self {
            center,
            radius,
            stiffness: 5e3,
            damping: 50.0,
        }
    }
}

/// Rectangular force pulse on a link, active for `start <= t < end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Push {
    pub link: usize,
    /// Application point in link frame.
    pub point: Vector3<f64>,
    /// Force in world frame (N).
    pub force: Vector3<f64>,
    pub start: f64,
    pub end: f64,
}

impl Push {
    pub fn is_active(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

/// Wrench the environment applies to the end-effector body: force (N) then
/// torque about the tool point (N·m), world frame. Zero when nothing touches it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FtReading {
    pub wrench: Vector6<f64>,
}

impl FtReading {
    pub fn force(&self) -> Vector3<f64> {
        self.wrench.fixed_rows::<3>(0).into_owned()
    }
}

/// Everything produced by one integration step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub ft: FtReading,
    pub contacts: Vec<ContactRecord>,
    /// Torque actually applied after limit clamping.
    pub applied_torque: DVector<f64>,
    pub torque_clamped: bool,
    pub position_limited: bool,
}

#[derive(Debug, Clone)]
pub struct World {
    pub model: Arc<RobotModel>,
    pub state: JointState,
    pub table: Option<Table>,
    pub obstacles: Vec<Obstacle>,
    pub pushes: Vec<Push>,
    pub probes: Vec<Probe>,
    pub board: Option<InkBoard>,
    pub time: f64,
    pub tick: u64,
    pub dt: f64,
}

impl World {
    /// A contact-free world with default probes at 1 kHz.
    pub fn new(model: Arc<RobotModel>, state: JointState) -> Result<Self> {
        model.check_state("q", &state.q)?;
        model.check_state("qd", &state.qd)?;
        if !state.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        let probes = default_probes(&model);
        Ok(Self {
            model,
            state,
            table: None,
            obstacles: Vec::new(),
            pushes: Vec::new(),
            probes,
            board: None,
            time: 0.0,
            tick: 0,
            dt: crate::DT,
        })
    }

    pub fn contacts(&self) -> Vec<ContactRecord> {
        contact_forces(self)
    }

    /// Sensor reading produced by `contacts` on the end-effector body.
    pub fn ft_reading(&self, contacts: &[ContactRecord]) -> FtReading {
        let ee = self.model.end_effector();
        let tool = model::end_effector_pose(&self.model, &self.state.q).position;
        let mut force = Vector3::zeros();
        let mut torque = Vector3::zeros();
        for c in contacts.iter().filter(|c| c.link == ee.parent) {
            force += c.force;
            torque += (c.point - tool).cross(&c.force);
        }
        FtReading {
            wrench: Vector6::new(force.x, force.y, force.z, torque.x, torque.y, torque.z),
        }
    }

    /// Advances one tick with motor torque `tau_m` (clamped to limits) by
    /// semi-implicit Euler.
    pub fn step(&mut self, tau_m: &DVector<f64>) -> Result<StepOutput> {
        let model = Arc::clone(&self.model);
        model.check_state("tau_m", tau_m)?;
        if !tau_m.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite("motor torque"));
        }
        let (applied, torque_clamped) = clamp_torque(&model, tau_m);

        let contacts = contact_forces(self);
        let ft = self.ft_reading(&contacts);

        let q = &self.state.q;
        let qd = &self.state.qd;
        let frames = model.link_frames(q);
        let mut tau = &applied - model::bias_forces(&model, q, qd) - model.joint_friction(qd);
        for c in &contacts {
            let jac = model::jacobian_from_frames(&model, &frames, c.link, &c.point);
            tau += jac.fixed_rows::<3>(0).tr_mul(&c.force);
        }
        let qdd = model::mass_matrix(&model, q)
            .cholesky()
            .ok_or(Error::Diverged { tick: self.tick })?
            .solve(&tau);

        let mut next_qd = qd + qdd * self.dt;
        let mut next_q = q + &next_qd * self.dt;
        let mut position_limited = false;
        for (i, joint) in model.joints().iter().enumerate() {
            let (lo, hi) = joint.limits.position;
            if next_q[i] < lo || next_q[i] > hi {
                next_q[i] = next_q[i].clamp(lo, hi);
                next_qd[i] = 0.0;
                position_limited = true;
            }
        }
        self.state = JointState::new(next_q, next_qd);
        if !self.state.is_finite() {
            return Err(Error::Diverged { tick: self.tick });
        }
        self.tick += 1;
        self.time = self.tick as f64 * self.dt;

        Ok(StepOutput {
            ft,
            contacts,
            applied_torque: applied,
            torque_clamped,
            position_limited,
        })
    }

    /// Marks ink under the tool when it presses with a normal force inside
    /// the wiping window. Returns the wiped fraction.
    pub fn wipe_update(&mut self, tool_position: &Vector3<f64>, normal_force: f64) -> f64 {
        match self.board.as_mut() {
            Some(board) => {
                if normal_force > WIPE_FORCE_MIN && normal_force <= WIPE_FORCE_MAX {
                    board.wipe_at(tool_position);
                }
                board.wiped_fraction()
            }
            None => 0.0,
        }
    }

    pub fn wiped_fraction(&self) -> f64 {
        self.board.as_ref().map_or(0.0, InkBoard::wiped_fraction)
    }

    /// Normal force the tool presses into the table with, from a sensor reading.
    pub fn table_normal_force(&self, ft: &FtReading) -> f64 {
        self.table
            .as_ref()
            .map_or(0.0, |t| ft.force().dot(&t.normal).max(0.0))
    }
}

/// Clamps each entry to `±torque limit`; the flag reports whether any did.
pub fn clamp_torque(model: &RobotModel, tau: &DVector<f64>) -> (DVector<f64>, bool) {
    let mut clamped = false;
    let out = DVector::from_iterator(
        tau.len(),
        tau.iter().zip(model.joints()).map(|(&t, j)| {
            let lim = j.limits.torque;
            if t.abs() > lim {
                clamped = true;
                t.clamp(-lim, lim)
            } else {
                t
            }
        }),
    );
    (out, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{arm7, planar};
    use crate::model::{kinetic_energy, mass_matrix};

    fn free_world(qd: DVector<f64>) -> World {
        let model = Arc::new(arm7().with_gravity(Vector3::zeros()).with_joint_damping(0.0));
        let q = DVector::from_vec(vec![0.2, -0.4, 0.1, -2.0, 0.3, 1.5, 0.4]);
        World::new(model, JointState::new(q, qd)).unwrap()
    }

    #[test]
    fn equilibrium_is_preserved() {
        let mut world = free_world(DVector::zeros(7));
        let start = world.state.clone();
        for _ in 0..100 {
            let out = world.step(&DVector::zeros(7)).unwrap();
            assert!(out.contacts.is_empty());
            assert_eq!(out.ft, FtReading::default());
        }
        assert_eq!(world.state, start);
        assert_eq!(world.tick, 100);
    }

    #[test]
    fn kinetic_energy_drift_is_small() {
        let qd = DVector::from_vec(vec![0.5, -0.3, 0.4, 0.6, -0.5, 0.3, 0.8]);
        let mut world = free_world(qd);
        let e0 = kinetic_energy(&world.model, &world.state.q, &world.state.qd);
        for _ in 0..1000 {
            world.step(&DVector::zeros(7)).unwrap();
        }
        let e1 = kinetic_energy(&world.model, &world.state.q, &world.state.qd);
        assert!(((e1 - e0) / e0).abs() < 0.02, "{e0} -> {e1}");
    }

    #[test]
    fn joint_friction_dissipates() {
        let qd = DVector::from_vec(vec![0.5, -0.3, 0.4, 0.6, -0.5, 0.3, 0.8]);
        let mut world = free_world(qd);
        world.model = Arc::new(world.model.with_joint_damping(0.5));
        let mut e = kinetic_energy(&world.model, &world.state.q, &world.state.qd);
        for _ in 0..10 {
            for _ in 0..50 {
                world.step(&DVector::zeros(7)).unwrap();
            }
            let next = kinetic_energy(&world.model, &world.state.q, &world.state.qd);
            assert!(next < e, "{e} -> {next}");
            e = next;
        }
    }

    #[test]
    fn constant_torque_single_joint_matches_analytic() {
        let model = Arc::new(planar(&[0.5], &[2.0], Vector3::zeros()));
        let inertia = mass_matrix(&model, &DVector::zeros(1))[(0, 0)];
        let mut world = World::new(model, JointState::at_rest(DVector::zeros(1))).unwrap();
        let tau = DVector::from_element(1, 0.3);
        for _ in 0..100 {
            world.step(&tau).unwrap();
        }
        let expected = 0.3 / inertia * 0.1;
        assert!((world.state.qd[0] - expected).abs() < 0.01 * expected);
    }

    #[test]
    fn momentum_changes_by_applied_impulse() {
        let model = Arc::new(arm7());
        let q = DVector::from_vec(vec![0.0, -0.3, 0.0, -2.2, 0.0, 1.9, 0.78]);
        let qd = DVector::from_vec(vec![0.1, 0.2, -0.1, 0.3, 0.0, -0.2, 0.1]);
        let mut world = World::new(model.clone(), JointState::new(q, qd)).unwrap();
        world.pushes.push(Push {
            link: 3,
            point: Vector3::zeros(),
            force: Vector3::new(0.0, -5.0, 0.0),
            start: 0.0,
            end: 1.0,
        });
        let tau = DVector::from_vec(vec![1.0, 20.0, 0.5, -5.0, 0.2, 0.1, 0.0]);
        for _ in 0..20 {
            let before = world.state.clone();
            let m = mass_matrix(&model, &before.q);
            let out = world.step(&tau).unwrap();
            let frames = model.link_frames(&before.q);
            let mut expected = &out.applied_torque
                - model::bias_forces(&model, &before.q, &before.qd)
                - model.joint_friction(&before.qd);
            for c in &out.contacts {
                let jac = model::jacobian_from_frames(&model, &frames, c.link, &c.point);
                expected += jac.fixed_rows::<3>(0).tr_mul(&c.force);
            }
            let dp = &m * (&world.state.qd - &before.qd);
            assert!((dp - expected * world.dt).amax() < 1e-6);
        }
    }

    #[test]
    fn torque_is_clamped_and_reported() {
        let mut world = free_world(DVector::zeros(7));
        let mut tau = DVector::zeros(7);
        tau[5] = 100.0;
        let out = world.step(&tau).unwrap();
        assert!(out.torque_clamped);
        assert_eq!(out.applied_torque[5], 12.0);
    }

    #[test]
    fn divergence_reports_tick() {
        let mut world = free_world(DVector::zeros(7));
        world.step(&DVector::zeros(7)).unwrap();
        world.state.qd[0] = f64::NAN;
        match world.step(&DVector::zeros(7)) {
            Err(Error::Diverged { tick }) => assert_eq!(tick, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let mut world = free_world(DVector::from_vec(vec![0.3; 7]));
            world.table = Some(Table::horizontal(0.0));
            for k in 0..300 {
                let tau = DVector::from_element(7, (k as f64 * 0.01).sin());
                world.step(&tau).unwrap();
            }
            world.state
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn wipe_window() {
        let mut world = free_world(DVector::zeros(7));
        let mut board = InkBoard::new([0.4, -0.1], [0.2, 0.2], 0.02, 0.015, 0.0).unwrap();
        board.set_ink(&[(2, 3)]).unwrap();
        world.board = Some(board);
        let center = world.board.as_ref().unwrap().cell_center(2, 3);
        assert_eq!(world.wipe_update(&center, 0.0), 0.0);
        assert_eq!(world.wipe_update(&center, 45.0), 0.0);
        assert_eq!(world.wipe_update(&center, 5.0), 1.0);
    }
}
