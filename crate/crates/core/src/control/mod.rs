//! Operational-space control: task-space dynamics terms, the Cartesian
//! variable impedance force, the joint posture task and its dynamically
//! consistent null-space projection.

mod ik;

use nalgebra::{DMatrix, DVector, Vector6};

use crate::model::{self, Pose, RobotModel};

pub use ik::{inverse_kinematics, inverse_kinematics_with, IkOptions, IkSolution};

/// Eigenvalue floor used when inverting `J M⁻¹ Jᵀ`.
pub const TASK_INERTIA_FLOOR: f64 = 1e-6;

/// Step used to difference `J` along `q̇` when forming `J̇q̇`.
pub const JDOT_EPS: f64 = 1e-7;

/// Per-tick operational-space quantities for one task.
#[derive(Debug, Clone)]
pub struct TaskSpaceTerms {
    /// Task Jacobian `J_t` (m×n).
    pub jacobian: DMatrix<f64>,
    /// Task mass matrix `Λ_t` (m×m).
    pub lambda: DMatrix<f64>,
    /// Dynamically consistent inverse `J#_t = M⁻¹ J_tᵀ Λ_t` (n×m).
    pub dc_inverse: DMatrix<f64>,
    /// Task Coriolis/centrifugal force `μ_t`.
    pub mu: DVector<f64>,
    /// Task gravity force `p_t`.
    pub p: DVector<f64>,
    /// Null-space projector `N_t = I − J#_t J_t` (n×n).
    pub nullspace: DMatrix<f64>,
    /// Joint-space mass matrix used to build the terms.
    pub mass: DMatrix<f64>,
    pub mass_inv: DMatrix<f64>,
}

impl TaskSpaceTerms {
    /// Builds the terms from an arbitrary task Jacobian and the joint-space
    /// dynamics. `jdot_qd` is `J̇q̇`, `coriolis` is `C(q, q̇)q̇` and `gravity`
    /// is `g(q)`.
    pub fn from_parts(
        jacobian: DMatrix<f64>,
        jdot_qd: &DVector<f64>,
        mass: DMatrix<f64>,
        coriolis: &DVector<f64>,
        gravity: &DVector<f64>,
    ) -> Self {
        let n = mass.nrows();
        let m = jacobian.nrows();
        // Work with the mass-whitened Jacobian Ĵ = J L⁻ᵀ (M = L Lᵀ) and its SVD
        // so the projector stays accurate near kinematic singularities.
        let l = mass
            .clone()
            .cholesky()
            .expect("mass matrix must be positive definite")
            .unpack();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("Cholesky factor is invertible");
        let mass_inv = l_inv.transpose() * &l_inv;
        let svd = (&jacobian * l_inv.transpose()).svd(true, true);
        let u = svd.u.expect("left singular vectors");
        let v = svd.v_t.expect("right singular vectors").transpose();
        let s = &svd.singular_values;
        let floored = s.map(|v| (v * v).max(TASK_INERTIA_FLOOR));
        let mut lambda = &u * DMatrix::from_diagonal(&floored.map(|v| 1.0 / v)) * u.transpose();
        if s.len() < m {
            // Directions the task cannot reach at all get the floored value.
            lambda += (DMatrix::identity(m, m) - &u * u.transpose()) / TASK_INERTIA_FLOOR;
        }
        let lambda = (&lambda + lambda.transpose()) * 0.5;
        let gain = s.zip_map(&floored, |v, f| v / f);
        let dc_inverse = l_inv.transpose() * &v * DMatrix::from_diagonal(&gain) * u.transpose();
        let keep = s.zip_map(&floored, |v, f| v * v / f);
        let nullspace = DMatrix::identity(n, n)
            - l_inv.transpose() * &v * DMatrix::from_diagonal(&keep) * v.transpose() * l.transpose();
        let dct = dc_inverse.transpose();
        let mu = &dct * coriolis - &lambda * jdot_qd;
        let p = &dct * gravity;
        Self {
            jacobian,
            lambda,
            dc_inverse,
            mu,
            p,
            nullspace,
            mass,
            mass_inv,
        }
    }

    pub fn task_dim(&self) -> usize {
        self.jacobian.nrows()
    }
}

/// Terms of the 6-DoF end-effector task at `(q, q̇)`.
pub fn task_space_terms(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> TaskSpaceTerms {
    let jacobian = model::end_effector_jacobian(model, q);
    let jdot_qd = if qd.iter().all(|&v| v == 0.0) {
        DVector::zeros(6)
    } else {
        let shifted = model::end_effector_jacobian(model, &(q + qd * JDOT_EPS));
        (shifted - &jacobian) * qd / JDOT_EPS
    };
    let mass = model::mass_matrix(model, q);
    let gravity = model::gravity_vector(model, q);
    let coriolis = model::bias_forces(model, q, qd) - &gravity;
    TaskSpaceTerms::from_parts(jacobian, &jdot_qd, mass, &coriolis, &gravity)
}

/// Equilibrium pose plus diagonal task stiffness and damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskTarget {
    pub pose: Pose,
    /// Diagonal of `K_1`: N/m on translation, N·m/rad on rotation.
    pub stiffness: Vector6<f64>,
    /// Diagonal of `D_1`.
    pub damping: Vector6<f64>,
}

/// Joint reference configuration with diagonal stiffness and damping.
#[derive(Debug, Clone, PartialEq)]
pub struct PostureTarget {
    pub q_pose: DVector<f64>,
    pub stiffness: DVector<f64>,
    pub damping: DVector<f64>,
}

/// Variable impedance task force
/// `F_t = Λ_t (K_1 e − D_1 ẋ) + μ_t + p_t`, `e = x_d ⊖ x`.
pub fn vic_force(
    terms: &TaskSpaceTerms,
    target: &TaskTarget,
    x: &Pose,
    xdot: &Vector6<f64>,
) -> DVector<f64> {
    assert_eq!(terms.task_dim(), 6, "impedance force needs a 6-DoF pose task");
    let err = x.error_to(&target.pose);
    let accel = target.stiffness.component_mul(&err) - target.damping.component_mul(xdot);
    &terms.lambda * DVector::from_column_slice(accel.as_slice()) + &terms.mu + &terms.p
}

/// `Γ_pose = K_2 (q_pose − q) − D_2 q̇`.
pub fn posture_torque(q: &DVector<f64>, qd: &DVector<f64>, target: &PostureTarget) -> DVector<f64> {
    target.stiffness.component_mul(&(&target.q_pose - q)) - target.damping.component_mul(qd)
}

/// Free-space control law `τ_m = J_tᵀ F_t + N_tᵀ Γ_pose`.
pub fn free_space_torque(
    terms: &TaskSpaceTerms,
    task_force: &DVector<f64>,
    posture: &DVector<f64>,
) -> DVector<f64> {
    terms.jacobian.tr_mul(task_force) + terms.nullspace.tr_mul(posture)
}
