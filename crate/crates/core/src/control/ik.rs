//! Damped least-squares inverse kinematics for the tool frame.

use nalgebra::{DMatrix, DVector};

use crate::model::{end_effector_jacobian, end_effector_pose, Pose, RobotModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    /// Damping factor λ; the normal equations use `JᵀJ + λ²I`.
    pub damping: f64,
    /// Largest joint change per iteration (rad), applied to the max-norm.
    pub max_step: f64,
    pub max_iterations: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            damping: 1e-3,
            max_step: 0.2,
            max_iterations: 200,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    /// Converged joints, or the best iterate when `reachable` is false.
    pub q: DVector<f64>,
    pub reachable: bool,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
}

pub fn inverse_kinematics(
    model: &RobotModel,
    target: &Pose,
    seed: &DVector<f64>,
) -> Result<IkSolution> {
    inverse_kinematics_with(model, target, seed, &IkOptions::default())
}

pub fn inverse_kinematics_with(
    model: &RobotModel,
    target: &Pose,
    seed: &DVector<f64>,
    opts: &IkOptions,
) -> Result<IkSolution> {
    model.check_state("ik seed", seed)?;
    if !seed.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("ik seed"));
    }
    if !target.position.iter().all(|v| v.is_finite()) || !target.orientation.coords.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("ik target"));
    }

    let n = model.dof();
    let damping = DMatrix::identity(n, n) * (opts.damping * opts.damping);
    let mut q = seed.clone();
    let mut best: Option<IkSolution> = None;

    for iteration in 0..=opts.max_iterations {
        let err = end_effector_pose(model, &q).error_to(target);
        let pos_err = err.fixed_rows::<3>(0).norm();
        let rot_err = err.fixed_rows::<3>(3).norm();
        let candidate = IkSolution {
            q: q.clone(),
            reachable: pos_err < opts.position_tolerance && rot_err < opts.orientation_tolerance,
            iterations: iteration,
            position_error: pos_err,
            orientation_error: rot_err,
        };
        if candidate.reachable {
            return Ok(candidate);
        }
        let better = best
            .as_ref()
            .is_none_or(|b| pos_err + rot_err < b.position_error + b.orientation_error);
        if better {
            best = Some(candidate);
        }
        if iteration == opts.max_iterations {
            break;
        }

        let jac = end_effector_jacobian(model, &q);
        let normal = jac.tr_mul(&jac) + &damping;
        let rhs = jac.tr_mul(&DVector::from_column_slice(err.as_slice()));
        let Some(mut step) = normal.cholesky().map(|c| c.solve(&rhs)) else {
            break;
        };
        let largest = step.amax();
        if largest > opts.max_step {
            step *= opts.max_step / largest;
        }
        q += step;
        model.clamp_positions(&mut q);
    }

    let mut best = best.expect("at least one iterate is evaluated");
    best.iterations = opts.max_iterations;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{arm7, two_link};
    use nalgebra::{UnitQuaternion, Vector3};

    #[test]
    fn fixed_point_returns_seed() {
        let model = arm7();
        let seed = DVector::from_vec(vec![0.1, -0.4, 0.2, -2.0, 0.3, 1.6, 0.5]);
        let target = end_effector_pose(&model, &seed);
        let sol = inverse_kinematics(&model, &target, &seed).unwrap();
        assert!(sol.reachable);
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.q, seed);
    }

    #[test]
    fn two_link_full_reach() {
        let model = two_link(false);
        let target = Pose::new(Vector3::new(2.0, 0.0, 0.0), UnitQuaternion::identity());
        let seed = DVector::from_vec(vec![0.3, -0.5]);
        let sol = inverse_kinematics(&model, &target, &seed).unwrap();
        assert!(sol.reachable, "{sol:?}");
        assert!(sol.q.amax() < 1e-4, "{}", sol.q);
    }

    #[test]
    fn unreachable_target_is_flagged() {
        let model = two_link(false);
        let target = Pose::new(Vector3::new(3.5, 0.0, 0.0), UnitQuaternion::identity());
        let seed = DVector::from_vec(vec![0.3, -0.5]);
        let sol = inverse_kinematics(&model, &target, &seed).unwrap();
        assert!(!sol.reachable);
        assert!(sol.q.iter().all(|v| v.is_finite()));
        assert!(sol.position_error > 1.5 - 1e-6 && sol.position_error < 1.6);
    }

    #[test]
    fn non_finite_seed_is_rejected() {
        let model = two_link(false);
        let target = Pose::new(Vector3::new(1.0, 1.0, 0.0), UnitQuaternion::identity());
        let seed = DVector::from_vec(vec![f64::NAN, 0.0]);
        assert!(matches!(
            inverse_kinematics(&model, &target, &seed),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn ik_fk_consistency_near_seed() {
        let model = arm7();
        let q = DVector::from_vec(vec![0.0, -0.3, 0.0, -2.2, 0.0, 1.9, 0.78]);
        let target = end_effector_pose(&model, &q);
        let perturbed = &q + DVector::from_vec(vec![0.05, -0.04, 0.03, 0.05, -0.02, 0.04, 0.03]);
        let sol = inverse_kinematics(&model, &target, &perturbed).unwrap();
        assert!(sol.reachable);
        let reached = end_effector_pose(&model, &sol.q);
        assert!((reached.position - target.position).norm() < 1e-4);
        assert!(reached.orientation.angle_to(&target.orientation) < 1e-3);
    }
}
