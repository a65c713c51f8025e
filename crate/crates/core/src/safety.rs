//! Contact-aware control: disturbance-compensated task force, the
//! contact-aware null-space projector and the free/contact mode switch.

use nalgebra::{DMatrix, DVector, Vector6};

use crate::control::{vic_force, TaskSpaceTerms, TaskTarget};
use crate::model::Pose;
use crate::observer::ContactInfo;

/// Default norm of `γ_fᵀN_t` below which the contact row is treated as absent.
pub const CONTACT_EPS: f64 = 1e-6;

/// Floor on the scalar `A M⁻¹ Aᵀ` before inversion.
const PROJECTOR_REG: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FreeSpace,
    ContactAware,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::FreeSpace => 0,
            Mode::ContactAware => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerMode {
    pub mode: Mode,
    /// Time the contact-aware mode was last entered.
    pub entered: f64,
    /// Minimum time between switches (s).
    pub hold: f64,
    last_detection: Option<f64>,
    last_switch: Option<f64>,
}

impl ControllerMode {
    pub fn new(hold: f64) -> Self {
        Self {
            mode: Mode::FreeSpace,
            entered: 0.0,
            hold,
            last_detection: None,
            last_switch: None,
        }
    }

    fn held(&self, since: Option<f64>, time: f64) -> bool {
        since.is_none_or(|s| time - s >= self.hold)
    }
}

/// Enters contact-aware mode on detection and leaves it once nothing has
/// been detected for `hold`. Consecutive switches are at least `hold` apart,
/// so an entry right after an exit waits out the remainder of the hold.
pub fn switch_mode(mode: ControllerMode, detected: Option<&ContactInfo>, time: f64) -> ControllerMode {
    let mut next = mode;
    if detected.is_some() {
        next.last_detection = Some(time);
    }
    match (mode.mode, detected) {
        (Mode::FreeSpace, Some(_)) if mode.held(mode.last_switch, time) => {
            next.mode = Mode::ContactAware;
            next.entered = time;
            next.last_switch = Some(time);
        }
        (Mode::ContactAware, None)
            if time - mode.entered >= mode.hold && mode.held(mode.last_detection, time) =>
        {
            next.mode = Mode::FreeSpace;
            next.last_switch = Some(time);
        }
        _ => {}
    }
    next
}

/// `F_{t−c} = F_t − J#_tᵀ γ_f`: the impedance force with the arm-contact
/// torque's task-space image removed.
pub fn compensated_task_force(
    terms: &TaskSpaceTerms,
    target: &TaskTarget,
    x: &Pose,
    xdot: &Vector6<f64>,
    gamma_f: &DVector<f64>,
) -> DVector<f64> {
    vic_force(terms, target, x, xdot) - terms.dc_inverse.tr_mul(gamma_f)
}

/// `N_{c|t} = N_t (I − A# A)` with `A = γ_fᵀ N_t` and the `M⁻¹`-weighted
/// inverse `A# = M⁻¹Aᵀ(A M⁻¹ Aᵀ)⁻¹`. Falls back to `N_t` when `‖A‖ < eps`.
pub fn contact_aware_projector(
    nullspace: &DMatrix<f64>,
    gamma_f: &DVector<f64>,
    mass_inv: &DMatrix<f64>,
    eps: f64,
) -> DMatrix<f64> {
    let a = gamma_f.tr_mul(nullspace);
    if a.norm() < eps {
        return nullspace.clone();
    }
    let mat = mass_inv * a.transpose();
    let denom = (&a * &mat)[(0, 0)].max(PROJECTOR_REG);
    let n = nullspace.nrows();
    // `A N_t = A`, so the trailing `N_t` leaves the result unchanged in exact
    // arithmetic; it keeps roundoff from leaking into the task directions.
    nullspace * (DMatrix::identity(n, n) - mat * a / denom) * nullspace
}

/// `τ_m = J_tᵀ F_{t−c} + N_{c|t}ᵀ Γ_pose`.
pub fn contact_aware_torque(
    terms: &TaskSpaceTerms,
    task_force: &DVector<f64>,
    projector: &DMatrix<f64>,
    posture: &DVector<f64>,
) -> DVector<f64> {
    terms.jacobian.tr_mul(task_force) + projector.tr_mul(posture)
}
