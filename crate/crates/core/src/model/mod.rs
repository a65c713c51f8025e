//! Serial revolute chains: kinematic/inertial description, forward kinematics
//! and geometric Jacobians. Dynamics live in [`dynamics`].

mod dynamics;
mod file;

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3, Vector6,
};

use crate::{Error, Result};

pub use dynamics::{
    bias_forces, forward_dynamics, gravity_vector, inverse_dynamics, kinetic_energy, mass_matrix,
    mass_matrix_derivative_times,
};
pub use file::{load_model, parse_model};

/// Upper bound on chain length accepted by the model validator.
pub const MAX_JOINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub position: (f64, f64),
    pub velocity: f64,
    pub torque: f64,
}

/// A revolute joint. The joint frame is `parent_link * origin`; the child link
/// frame is the joint frame rotated by `q` about `axis`.
#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub axis: Unit<Vector3<f64>>,
    pub origin: Isometry3<f64>,
    pub limits: JointLimits,
    /// Viscous joint friction (N·m·s/rad), known to the controller's model.
    pub damping: f64,
}

/// Inertial data of the link driven by the joint with the same index.
#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    /// Center of mass in the link frame (m).
    pub com: Vector3<f64>,
    /// Rotational inertia about the COM, link-frame axes (kg·m²).
    pub inertia: Matrix3<f64>,
}

/// Tool frame rigidly attached to one link.
#[derive(Debug, Clone)]
pub struct EndEffector {
    pub parent: usize,
    pub offset: Isometry3<f64>,
}

/// Immutable description of an unbranched revolute chain.
#[derive(Debug, Clone)]
pub struct RobotModel {
    joints: Vec<Joint>,
    links: Vec<Link>,
    gravity: Vector3<f64>,
    end_effector: EndEffector,
}

impl RobotModel {
    /// Builds a model and checks every structural and inertial invariant.
    pub fn new(
        joints: Vec<Joint>,
        links: Vec<Link>,
        gravity: Vector3<f64>,
        end_effector: EndEffector,
    ) -> Result<Self> {
        let n = joints.len();
        if n == 0 || n > MAX_JOINTS {
            return Err(Error::InvalidModel(format!(
                "chain must have between 1 and {MAX_JOINTS} joints, got {n}"
            )));
        }
        if links.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} links given for {n} joints",
                links.len()
            )));
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidModel("gravity must be finite".into()));
        }
        for joint in &joints {
            let norm = joint.axis.as_ref().norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "joint `{}`: axis norm {norm} is not 1",
                    joint.name
                )));
            }
            let (lo, hi) = joint.limits.position;
            if !(lo < hi) || joint.limits.velocity <= 0.0 || joint.limits.torque <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "joint `{}`: limits must satisfy lo < hi, velocity > 0, torque > 0",
                    joint.name
                )));
            }
            if !(joint.damping >= 0.0) || !joint.damping.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "joint `{}`: damping must be finite and non-negative",
                    joint.name
                )));
            }
        }
        for link in &links {
            if !(link.mass > 0.0) || !link.mass.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "link `{}`: mass must be positive, got {}",
                    link.name, link.mass
                )));
            }
            if !link.com.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "link `{}`: non-finite center of mass",
                    link.name
                )));
            }
            let sym = (link.inertia - link.inertia.transpose()).norm();
            if sym > 1e-12 || link.inertia.cholesky().is_none() {
                return Err(Error::InvalidModel(format!(
                    "link `{}`: inertia must be symmetric positive definite",
                    link.name
                )));
            }
        }
        if end_effector.parent >= n {
            return Err(Error::InvalidModel(format!(
                "end effector parent index {} out of range",
                end_effector.parent
            )));
        }
        Ok(Self {
            joints,
            links,
            gravity,
            end_effector,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    pub fn end_effector(&self) -> &EndEffector {
        &self.end_effector
    }

    /// Same chain under a different gravity vector.
    pub fn with_gravity(&self, gravity: Vector3<f64>) -> Self {
        Self {
            gravity,
            ..self.clone()
        }
    }

    /// Same chain with every joint's viscous friction set to `damping`.
    pub fn with_joint_damping(&self, damping: f64) -> Self {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.damping = damping;
        }
        out
    }

    /// Viscous joint friction torque `b ∘ q̇` (opposes motion when subtracted).
    pub fn joint_friction(&self, qd: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            self.joints.iter().zip(qd.iter()).map(|(j, v)| j.damping * v),
        )
    }

    /// Configuration at the middle of every joint's position range.
    pub fn range_midpoint(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            self.joints.iter().map(|j| 0.5 * (j.limits.position.0 + j.limits.position.1)),
        )
    }

    pub fn torque_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.limits.torque))
    }

    /// Clamps `q` into the joint position limits in place.
    pub fn clamp_positions(&self, q: &mut DVector<f64>) {
        for (qi, joint) in q.iter_mut().zip(&self.joints) {
            let (lo, hi) = joint.limits.position;
            *qi = qi.clamp(lo, hi);
        }
    }

    /// World transforms of every link frame at `q`.
    pub fn link_frames(&self, q: &DVector<f64>) -> Vec<Isometry3<f64>> {
        let mut frames = Vec::with_capacity(self.dof());
        let mut parent = Isometry3::identity();
        for (joint, &qi) in self.joints.iter().zip(q.iter()) {
            let rot = UnitQuaternion::from_axis_angle(&joint.axis, qi);
            let frame = parent * joint.origin * rot;
            frames.push(frame);
            parent = frame;
        }
        frames
    }

    pub(crate) fn check_link(&self, link: usize) -> Result<()> {
        if link >= self.dof() {
            return Err(Error::IndexOutOfRange {
                index: link,
                n: self.dof(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, what: &'static str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dof(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Generalized coordinates and velocities of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Self {
        Self { q, qd }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qd: DVector::zeros(n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// World-frame position and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Six-vector error `desired ⊖ self`: position difference, then the
    /// rotation vector of `R_desired · R⁻¹` in world frame.
    pub fn error_to(&self, desired: &Pose) -> Vector6<f64> {
        let dp = desired.position - self.position;
        let dr = orientation_error(&desired.orientation, &self.orientation);
        Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
    }
}

/// Rotation vector (axis·angle, angle in [0, π]) of `desired · current⁻¹`.
pub fn orientation_error(
    desired: &UnitQuaternion<f64>,
    current: &UnitQuaternion<f64>,
) -> Vector3<f64> {
    let mut delta = desired * current.inverse();
    // Take the short way round.
    if delta.w < 0.0 {
        delta = UnitQuaternion::new_unchecked(-delta.into_inner());
    }
    delta.scaled_axis()
}

/// World pose of `point` (link-frame coordinates) on `link`.
pub fn forward_kinematics(
    model: &RobotModel,
    q: &DVector<f64>,
    link: usize,
    point: &Vector3<f64>,
) -> Result<Pose> {
    model.check_link(link)?;
    model.check_state("q", q)?;
    let frames = model.link_frames(q);
    let frame = frames[link];
    Ok(Pose::new(
        frame.transform_point(&(*point).into()).coords,
        frame.rotation,
    ))
}

/// Pose of the tool frame.
pub fn end_effector_pose(model: &RobotModel, q: &DVector<f64>) -> Pose {
    let frames = model.link_frames(q);
    let ee = model.end_effector();
    Pose::from_isometry(&(frames[ee.parent] * ee.offset))
}

/// Geometric Jacobian (linear rows 0..3, angular rows 3..6, world frame) of a
/// point fixed on `link`. Columns of joints distal to `link` are zero.
pub fn jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    link: usize,
    point: &Vector3<f64>,
) -> Result<DMatrix<f64>> {
    model.check_link(link)?;
    model.check_state("q", q)?;
    let frames = model.link_frames(q);
    let p = frames[link].transform_point(&(*point).into()).coords;
    Ok(jacobian_from_frames(model, &frames, link, &p))
}

/// Jacobian of the tool frame origin.
pub fn end_effector_jacobian(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    let frames = model.link_frames(q);
    let ee = model.end_effector();
    let p = (frames[ee.parent] * ee.offset).translation.vector;
    jacobian_from_frames(model, &frames, ee.parent, &p)
}

/// Jacobian of the world point `p` assumed rigidly attached to `link`.
pub(crate) fn jacobian_from_frames(
    model: &RobotModel,
    frames: &[Isometry3<f64>],
    link: usize,
    p: &Vector3<f64>,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(6, model.dof());
    for (j, (joint, frame)) in model.joints.iter().zip(frames).enumerate().take(link + 1) {
        let z = frame.rotation * joint.axis.into_inner();
        let lin = z.cross(&(p - frame.translation.vector));
        jac.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, j).copy_from(&z);
    }
    jac
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    fn limits() -> JointLimits {
        JointLimits {
            position: (-10.0, 10.0),
            velocity: 10.0,
            torque: 1e3,
        }
    }

    /// Tiny inertia so a link behaves like a point mass at its COM.
    pub fn point_inertia() -> Matrix3<f64> {
        Matrix3::identity() * 1e-12
    }

    /// Planar chain along x rotating about z; each link is a point mass at its tip.
    pub fn planar(lengths: &[f64], masses: &[f64], gravity: Vector3<f64>) -> RobotModel {
        let mut joints = Vec::new();
        let mut links = Vec::new();
        for (i, (&l, &m)) in lengths.iter().zip(masses).enumerate() {
            let offset = if i == 0 { 0.0 } else { lengths[i - 1] };
            joints.push(Joint {
                name: format!("j{i}"),
                axis: Vector3::z_axis(),
                origin: Isometry3::translation(offset, 0.0, 0.0),
                limits: limits(),
                damping: 0.0,
            });
            links.push(Link {
                name: format!("l{i}"),
                mass: m,
                com: Vector3::new(l, 0.0, 0.0),
                inertia: point_inertia(),
            });
        }
        let last = lengths.len() - 1;
        RobotModel::new(
            joints,
            links,
            gravity,
            EndEffector {
                parent: last,
                offset: Isometry3::translation(lengths[last], 0.0, 0.0),
            },
        )
        .unwrap()
    }

    /// Two unit links with unit point masses in the vertical x-y plane
    /// (gravity along -y), the classic two-link closed-form arm.
    pub fn two_link(gravity_on: bool) -> RobotModel {
        let g = if gravity_on {
            Vector3::new(0.0, -9.81, 0.0)
        } else {
            Vector3::zeros()
        };
        planar(&[1.0, 1.0], &[1.0, 1.0], g)
    }

    pub fn arm7() -> RobotModel {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/models/arm7.json");
        load_model(path).unwrap()
    }
}
