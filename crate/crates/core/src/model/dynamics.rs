//! Rigid-body dynamics of the chain in world-frame vector form.
//!
//! `mass_matrix` uses the composite-rigid-body algorithm; `inverse_dynamics`
//! uses recursive Newton–Euler. The two are implemented independently so each
//! can serve as an oracle for the other.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Vector3};

use super::RobotModel;

/// Per-link world-frame geometry at one configuration.
struct Geometry {
    /// Joint axis in world frame.
    axis: Vec<Vector3<f64>>,
    /// Joint (link frame) origin in world frame.
    origin: Vec<Vector3<f64>>,
    /// Link COM in world frame.
    com: Vec<Vector3<f64>>,
    /// Rotational inertia about the COM, world axes.
    inertia: Vec<Matrix3<f64>>,
}

impl Geometry {
    fn new(model: &RobotModel, frames: &[Isometry3<f64>]) -> Self {
        let n = model.dof();
        let mut g = Geometry {
            axis: Vec::with_capacity(n),
            origin: Vec::with_capacity(n),
            com: Vec::with_capacity(n),
            inertia: Vec::with_capacity(n),
        };
        for ((joint, link), frame) in model.joints().iter().zip(model.links()).zip(frames) {
            let rot = frame.rotation.to_rotation_matrix();
            g.axis.push(rot * joint.axis.into_inner());
            g.origin.push(frame.translation.vector);
            g.com.push(frame.transform_point(&link.com.into()).coords);
            g.inertia
                .push(rot.matrix() * link.inertia * rot.matrix().transpose());
        }
        g
    }
}

/// Inertia of a point mass at offset `r`, i.e. `m(|r|²I − r rᵀ)`.
fn parallel_axis(mass: f64, r: &Vector3<f64>) -> Matrix3<f64> {
    mass * (Matrix3::identity() * r.norm_squared() - r * r.transpose())
}

/// Joint-space mass matrix `M(q)` by the composite-rigid-body algorithm.
pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    let n = model.dof();
    let geo = Geometry::new(model, &model.link_frames(q));
    let masses: Vec<f64> = model.links().iter().map(|l| l.mass).collect();
    let mut m = DMatrix::zeros(n, n);

    // Composite body j..n-1: total mass, first moment, inertia about world origin.
    let mut c_mass = 0.0;
    let mut c_moment = Vector3::zeros();
    let mut c_inertia_origin = Matrix3::zeros();
    for j in (0..n).rev() {
        c_mass += masses[j];
        c_moment += masses[j] * geo.com[j];
        c_inertia_origin += geo.inertia[j] + parallel_axis(masses[j], &geo.com[j]);

        let c_com = c_moment / c_mass;
        // Shift the composite inertia from the world origin to joint j's origin.
        let i_com = c_inertia_origin - parallel_axis(c_mass, &c_com);
        let i_joint = i_com + parallel_axis(c_mass, &(c_com - geo.origin[j]));

        // Wrench needed to give the (resting) composite a unit rotation rate about axis j.
        let z = geo.axis[j];
        let force = c_mass * z.cross(&(c_com - geo.origin[j]));
        let moment_j = i_joint * z;
        for i in 0..=j {
            let moment_i = moment_j + (geo.origin[j] - geo.origin[i]).cross(&force);
            let v = geo.axis[i].dot(&moment_i);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Recursive Newton–Euler under an explicit gravity vector.
pub(crate) fn rnea(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    let n = model.dof();
    let geo = Geometry::new(model, &model.link_frames(q));

    let mut force = Vec::with_capacity(n);
    let mut moment = Vec::with_capacity(n);

    // Outward pass. Gravity enters as a fictitious base acceleration.
    let mut omega = Vector3::zeros();
    let mut alpha = Vector3::zeros();
    let mut acc_origin = -gravity;
    let mut prev_origin = Vector3::zeros();
    for i in 0..n {
        let r = geo.origin[i] - prev_origin;
        acc_origin += alpha.cross(&r) + omega.cross(&omega.cross(&r));

        let z = geo.axis[i];
        let omega_next = omega + z * qd[i];
        alpha += z * qdd[i] + omega.cross(&(z * qd[i]));
        omega = omega_next;

        let rc = geo.com[i] - geo.origin[i];
        let acc_com = acc_origin + alpha.cross(&rc) + omega.cross(&omega.cross(&rc));
        let mass = model.links()[i].mass;
        let inertia = geo.inertia[i];
        force.push(mass * acc_com);
        moment.push(inertia * alpha + omega.cross(&(inertia * omega)));
        prev_origin = geo.origin[i];
    }

    // Inward pass, moments taken about each joint origin.
    let mut tau = DVector::zeros(n);
    let mut f_child = Vector3::zeros();
    let mut n_child = Vector3::zeros();
    for i in (0..n).rev() {
        let rc = geo.com[i] - geo.origin[i];
        let f = force[i] + f_child;
        let mut m = moment[i] + rc.cross(&force[i]) + n_child;
        if i + 1 < n {
            m += (geo.origin[i + 1] - geo.origin[i]).cross(&f_child);
        }
        tau[i] = geo.axis[i].dot(&m);
        f_child = f;
        n_child = m;
    }
    tau
}

/// `τ = M(q)q̈ + C(q, q̇)q̇ + g(q)`.
pub fn inverse_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
) -> DVector<f64> {
    rnea(model, q, qd, qdd, &model.gravity())
}

/// Coriolis/centrifugal plus gravity torques, `C(q, q̇)q̇ + g(q)`.
pub fn bias_forces(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
    rnea(model, q, qd, &DVector::zeros(model.dof()), &model.gravity())
}

pub fn gravity_vector(model: &RobotModel, q: &DVector<f64>) -> DVector<f64> {
    let zero = DVector::zeros(model.dof());
    rnea(model, q, &zero, &zero, &model.gravity())
}

/// `q̈ = M⁻¹(τ − C q̇ − g)`.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau: &DVector<f64>,
) -> DVector<f64> {
    let m = mass_matrix(model, q);
    let rhs = tau - bias_forces(model, q, qd);
    m.cholesky()
        .expect("mass matrix of a validated model is positive definite")
        .solve(&rhs)
}

pub fn kinetic_energy(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> f64 {
    0.5 * qd.dot(&(mass_matrix(model, q) * qd))
}

/// `Ṁ(q)v` by a forward difference of `M` along `q̇` (step `eps`).
pub fn mass_matrix_derivative_times(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> DVector<f64> {
    if qd.iter().all(|&x| x == 0.0) {
        return DVector::zeros(model.dof());
    }
    let m0 = mass_matrix(model, q);
    let m1 = mass_matrix(model, &(q + qd * eps));
    (m1 - m0) * v / eps
}
