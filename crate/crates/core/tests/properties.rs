use std::path::PathBuf;

use nalgebra::{DVector, Vector3, Vector6};
use proptest::prelude::*;

use armsafe::control::{task_space_terms, vic_force, TaskTarget};
use armsafe::model::{
    end_effector_pose, inverse_dynamics, jacobian, load_model, mass_matrix, Pose, RobotModel,
};
use armsafe::observer::ContactInfo;
use armsafe::policy::{apply_action, ActionIncrement, IncrementLimits, TargetBounds};
use armsafe::safety::{contact_aware_projector, switch_mode, ControllerMode, CONTACT_EPS};

fn arm() -> RobotModel {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/models/arm7.json");
    load_model(path).expect("arm model loads")
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..1.0f64
}

/// Joint positions spread over the full limits of the arm.
fn config() -> impl Strategy<Value = DVector<f64>> {
    let model = arm();
    let limits: Vec<(f64, f64)> = model.joints().iter().map(|j| j.limits.position).collect();
    prop::collection::vec(unit(), 7).prop_map(move |u| {
        DVector::from_iterator(7, u.iter().zip(&limits).map(|(s, (lo, hi))| lo + s * (hi - lo)))
    })
}

fn vec_in(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn vec6(scale: f64) -> impl Strategy<Value = Vector6<f64>> {
    prop::array::uniform6(-scale..scale).prop_map(Vector6::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(q in config()) {
        let m = mass_matrix(&arm(), &q);
        prop_assert!((&m - m.transpose()).amax() < 1e-12);
        prop_assert!(m.symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn mass_matrix_matches_inverse_dynamics_columns(q in config()) {
        let model = arm().with_gravity(Vector3::zeros());
        let m = mass_matrix(&model, &q);
        let zero = DVector::zeros(7);
        for i in 0..7 {
            let mut e = DVector::zeros(7);
            e[i] = 1.0;
            let col = inverse_dynamics(&model, &q, &zero, &e);
            prop_assert!((m.column(i) - col).amax() < 1e-10);
        }
    }

    #[test]
    fn jacobian_columns_of_distal_joints_vanish(q in config(), link in 0usize..7) {
        let j = jacobian(&arm(), &q, link, &Vector3::new(0.01, 0.02, 0.03)).unwrap();
        for c in link + 1..7 {
            prop_assert_eq!(j.column(c).amax(), 0.0);
        }
    }

    #[test]
    fn projectors_are_consistent(q in config(), qd in vec_in(7, 1.0), gamma in vec_in(7, 5.0)) {
        let t = task_space_terms(&arm(), &q, &qd);
        let nt = &t.nullspace;
        prop_assert!((nt * nt - nt).amax() < 1e-9);
        prop_assert!((&t.jacobian * &t.mass_inv * nt.transpose()).amax() < 1e-9);
        let nc = contact_aware_projector(nt, &gamma, &t.mass_inv, CONTACT_EPS);
        prop_assert!((&t.jacobian * &t.mass_inv * nc.transpose()).amax() < 1e-9);
        prop_assert!((gamma.transpose() * nt * &t.mass_inv * nc.transpose()).amax() < 1e-9);
    }

    #[test]
    fn impedance_force_is_affine_in_position_error(
        q in config(),
        qd in vec_in(7, 1.0),
        e in prop::array::uniform3(-0.05..0.05f64),
    ) {
        let model = arm();
        let t = task_space_terms(&model, &q, &qd);
        let x = end_effector_pose(&model, &q);
        let xdot = Vector6::from_column_slice((&t.jacobian * &qd).as_slice());
        let force = |k: f64| {
            let target = TaskTarget {
                pose: Pose::new(x.position + Vector3::from(e) * k, x.orientation),
                stiffness: Vector6::repeat(300.0),
                damping: Vector6::repeat(20.0),
            };
            vic_force(&t, &target, &x, &xdot)
        };
        let residual = force(2.0) - force(1.0) * 2.0 + force(0.0);
        prop_assert!(residual.amax() < 1e-10 * force(1.0).amax().max(1.0));
    }

    #[test]
    fn targets_stay_within_bounds(
        steps in prop::collection::vec((vec6(0.1), vec6(500.0), vec6(50.0)), 1..40),
    ) {
        let bounds = TargetBounds::default();
        let limits = IncrementLimits::default();
        let mut target = TaskTarget {
            pose: Pose::new(Vector3::new(0.4, 0.0, 0.5), Default::default()),
            stiffness: Vector6::repeat(500.0),
            damping: Vector6::repeat(40.0),
        };
        for (dx, dk, dd) in steps {
            let inc = ActionIncrement { dx, dk, dd }.clamped(&limits);
            let next = apply_action(&target, &inc, &bounds);
            prop_assert!(bounds.contains(&next));
            let step = next.pose.position - target.pose.position;
            prop_assert!(step.norm() <= limits.position + 1e-12);
            target = next;
        }
    }

    #[test]
    fn mode_switches_respect_hold(runs in prop::collection::vec((any::<bool>(), 1usize..120), 1..40)) {
        let hold = 0.05;
        let mut mode = ControllerMode::new(hold);
        let mut last: Option<f64> = None;
        let mut switches = 0;
        let pattern: Vec<bool> = runs.iter().flat_map(|&(hit, n)| std::iter::repeat_n(hit, n)).collect();
        for (k, &hit) in pattern.iter().enumerate() {
            let time = k as f64 * 1e-3;
            let info = ContactInfo { link: 3, residual: DVector::zeros(7), time };
            let next = switch_mode(mode, hit.then_some(&info), time);
            if next.mode != mode.mode {
                if let Some(prev) = last {
                    prop_assert!(time - prev >= hold - 1e-12);
                }
                last = Some(time);
                switches += 1;
            }
            mode = next;
        }
        prop_assert!(switches <= pattern.len() / 50 + 1);
    }
}

#[test]
fn projector_depends_only_on_gamma_direction() {
    // The projector only sees the direction of γᵀN_t.
    let model = arm();
    let q = model.range_midpoint();
    let t = task_space_terms(&model, &q, &DVector::zeros(7));
    let gamma = DVector::from_fn(7, |i, _| (i as f64 - 3.0) * 0.7);
    let a = contact_aware_projector(&t.nullspace, &gamma, &t.mass_inv, CONTACT_EPS);
    let b = contact_aware_projector(&t.nullspace, &(gamma * 1e-3), &t.mass_inv, CONTACT_EPS);
    assert!((a - b).amax() < 1e-9);
}
