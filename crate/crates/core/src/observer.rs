//! Generalized-momentum disturbance observer.
//!
//! The residual `γ` obeys `γ̇ = K_I(τ_ext − γ)` for an exact model, where
//! `τ_ext` is the joint torque the environment exerts on the arm. Torque
//! produced by a measured end-effector wrench is cancelled so that `γ` only
//! reflects contacts elsewhere on the arm.

use nalgebra::{DVector, Vector6};

use crate::model::{self, RobotModel};
use crate::{Error, Result};

/// Step used to difference `M` along `q̇` when forming `Ṁq̇`.
pub const MDOT_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    /// Diagonal of `K_I` (1/s).
    pub gain: DVector<f64>,
    /// Detection threshold `δ` (N·m).
    pub threshold: f64,
    /// Residual low-pass cutoff (Hz).
    pub cutoff_hz: f64,
    pub dt: f64,
}

impl ObserverConfig {
    /// `K_I = 1.5·I`, `δ = 1.5 N·m`, 20 Hz filter at 1 kHz.
    pub fn defaults(n: usize) -> Self {
        Self {
            gain: DVector::from_element(n, 1.5),
            threshold: 1.5,
            cutoff_hz: 20.0,
            dt: crate::DT,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.gain.len() != n {
            return Err(Error::DimensionMismatch {
                what: "observer gain",
                expected: n,
                got: self.gain.len(),
            });
        }
        if !self.gain.iter().all(|&k| k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidScenario("observer gain must be positive".into()));
        }
        if !(self.threshold > 0.0) || !(self.cutoff_hz > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidScenario(
                "observer threshold, cutoff and dt must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// First-order IIR low-pass, `y += α(u − y)` with `α = 1 − exp(−2π f_c dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass {
    alpha: f64,
    state: DVector<f64>,
}

impl LowPass {
    pub fn new(cutoff_hz: f64, dt: f64, n: usize) -> Self {
        Self {
            alpha: 1.0 - (-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp(),
            state: DVector::zeros(n),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn apply(&mut self, input: &DVector<f64>) -> &DVector<f64> {
        self.state += (input - &self.state) * self.alpha;
        &self.state
    }

    pub fn output(&self) -> &DVector<f64> {
        &self.state
    }
}

/// Observer state: momentum integral, initial momentum and residuals.
#[derive(Debug, Clone)]
pub struct MomentumObserver {
    config: ObserverConfig,
    integral: DVector<f64>,
    initial_momentum: DVector<f64>,
    residual: DVector<f64>,
    filter: LowPass,
}

impl MomentumObserver {
    /// Starts the observer at `(q₀, q̇₀)` with `p₀ = M(q₀)q̇₀`.
    pub fn new(
        config: ObserverConfig,
        model: &RobotModel,
        q0: &DVector<f64>,
        qd0: &DVector<f64>,
    ) -> Result<Self> {
        let n = model.dof();
        config.validate(n)?;
        model.check_state("q", q0)?;
        model.check_state("qd", qd0)?;
        let filter = LowPass::new(config.cutoff_hz, config.dt, n);
        Ok(Self {
            initial_momentum: model::mass_matrix(model, q0) * qd0,
            integral: DVector::zeros(n),
            residual: DVector::zeros(n),
            filter,
            config,
        })
    }

    pub fn config(&self) -> &ObserverConfig {
        &self.config
    }

    /// Raw residual `γ`.
    pub fn residual(&self) -> &DVector<f64> {
        &self.residual
    }

    /// Filtered residual `γ_f`.
    pub fn filtered(&self) -> &DVector<f64> {
        self.filter.output()
    }

    /// `β̂(q, q̇) = C(q, q̇)q̇ + g(q) + B q̇ − Ṁ(q)q̇`, with `B` the modelled joint friction.
    pub fn beta(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        model::bias_forces(model, q, qd) + model.joint_friction(qd)
            - model::mass_matrix_derivative_times(model, q, qd, qd, MDOT_EPS)
    }

    /// One explicit-Euler step of the residual with end-effector wrench
    /// cancellation. `tau_m` is the motor torque applied over the last tick
    /// and `f_eff` the wrench the environment applied to the tool, world frame.
    pub fn update(
        &mut self,
        model: &RobotModel,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        tau_m: &DVector<f64>,
        f_eff: &Vector6<f64>,
    ) -> Result<&DVector<f64>> {
        model.check_state("q", q)?;
        model.check_state("qd", qd)?;
        model.check_state("tau_m", tau_m)?;
        let jac = model::end_effector_jacobian(model, q);
        let tau_eff = jac.tr_mul(&DVector::from_column_slice(f_eff.as_slice()));
        let integrand = tau_m + tau_eff - Self::beta(model, q, qd) + &self.residual;
        self.integral += integrand * self.config.dt;
        let momentum = model::mass_matrix(model, q) * qd;
        self.residual = self
            .config
            .gain
            .component_mul(&(momentum - &self.integral - &self.initial_momentum));
        Ok(&self.residual)
    }

    /// Advances the low-pass filter with the current raw residual.
    pub fn lowpass(&mut self) -> &DVector<f64> {
        self.filter.apply(&self.residual)
    }

    pub fn detect(&self, time: f64) -> Option<ContactInfo> {
        detect_contact(self.filtered(), self.config.threshold, time)
    }
}

/// A detected arm contact.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactInfo {
    /// Index of the link in contact (furthest from the base above threshold).
    pub link: usize,
    pub residual: DVector<f64>,
    pub time: f64,
}

/// Localises a contact: the largest joint index whose filtered residual
/// magnitude exceeds `threshold`, or `None` if all are within it.
pub fn detect_contact(gamma_f: &DVector<f64>, threshold: f64, time: f64) -> Option<ContactInfo> {
    let link = gamma_f.iter().rposition(|g| g.abs() > threshold)?;
    Some(ContactInfo {
        link,
        residual: gamma_f.clone(),
        time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::arm7;
    use approx::assert_relative_eq;

    fn locked_arm_response(gain: f64, tau_ext: &DVector<f64>, ticks: usize) -> Vec<DVector<f64>> {
        let model = arm7();
        let q = DVector::from_vec(vec![0.0, -0.3, 0.0, -2.2, 0.0, 1.9, 0.78]);
        let qd = DVector::zeros(7);
        let mut config = ObserverConfig::defaults(7);
        config.gain = DVector::from_element(7, gain);
        let mut obs = MomentumObserver::new(config, &model, &q, &qd).unwrap();
        // Held static: the motors balance gravity and the external torque.
        let tau_m = model::gravity_vector(&model, &q) - tau_ext;
        (0..ticks)
            .map(|_| {
                obs.update(&model, &q, &qd, &tau_m, &Vector6::zeros())
                    .unwrap()
                    .clone()
            })
            .collect()
    }

    #[test]
    fn at_rest_residual_stays_zero() {
        let history = locked_arm_response(1.5, &DVector::zeros(7), 500);
        assert!(history.iter().all(|g| g.amax() < 1e-9));
    }

    #[test]
    fn step_response_matches_first_order() {
        let mut tau = DVector::zeros(7);
        tau[3] = 1.0;
        let history = locked_arm_response(1.5, &tau, 1000);
        let expected = 1.0 - (-1.5f64).exp();
        assert_relative_eq!(expected, 0.7769, epsilon = 1e-4);
        let got = history[999][3];
        assert!((got - expected).abs() < 0.01 * expected, "{got}");
        for (k, g) in history.iter().enumerate() {
            let t = (k + 1) as f64 * 1e-3;
            assert!((g[3] - (1.0 - (-1.5 * t).exp())).abs() < 0.01 * (1.0 - (-1.5 * t).exp()).max(1e-3));
        }
    }

    #[test]
    fn residual_is_linear_in_external_torque() {
        let a = DVector::from_vec(vec![0.5, 0.0, -1.0, 0.0, 0.2, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 2.0, 0.3, -0.4, 0.0, 0.1, 0.7]);
        let ra = locked_arm_response(1.5, &a, 300);
        let rb = locked_arm_response(1.5, &b, 300);
        let rab = locked_arm_response(1.5, &(&a + &b), 300);
        for k in 0..300 {
            assert!((&rab[k] - &ra[k] - &rb[k]).amax() < 1e-8);
        }
    }

    #[test]
    fn larger_gain_rises_faster() {
        let mut tau = DVector::zeros(7);
        tau[1] = 1.0;
        let rise = |gain: f64| {
            locked_arm_response(gain, &tau, 3000)
                .iter()
                .position(|g| g[1] >= 1.0 - (-1.0f64).exp())
                .unwrap()
        };
        let ticks: Vec<usize> = [1.0, 1.5, 3.0, 10.0].iter().map(|&k| rise(k)).collect();
        assert!(ticks.windows(2).all(|w| w[1] <= w[0]), "{ticks:?}");
    }

    #[test]
    fn lowpass_behaviour() {
        let mut lp = LowPass::new(20.0, 1e-3, 1);
        let zero = DVector::zeros(1);
        assert_eq!(lp.apply(&zero)[0], 0.0);
        let step = DVector::from_element(1, 1.0);
        let k = (1..100)
            .find(|_| lp.apply(&step)[0] >= 1.0 - (-1.0f64).exp())
            .unwrap();
        assert_eq!(k, 8);
        for _ in 0..2000 {
            lp.apply(&DVector::from_element(1, 3.0));
        }
        assert_relative_eq!(lp.output()[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn detection_picks_furthest_link() {
        let g = DVector::from_vec(vec![0.2, 2.0, 0.1, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(detect_contact(&g, 1.5, 0.0).unwrap().link, 1);
        let g = DVector::from_vec(vec![2.0, 0.1, -1.8, 0.0, 0.0, 0.0, 0.0]);
        let info = detect_contact(&g, 1.5, 2.5).unwrap();
        assert_eq!(info.link, 2);
        assert_eq!(info.time, 2.5);
        let g = DVector::from_vec(vec![1.5, -1.4, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(detect_contact(&g, 1.5, 0.0).is_none());
    }

    #[test]
    fn gain_dimension_is_checked() {
        let model = arm7();
        let mut config = ObserverConfig::defaults(7);
        config.gain = DVector::from_element(6, 1.5);
        let q = DVector::zeros(7);
        assert!(matches!(
            MomentumObserver::new(config, &model, &q, &q),
            Err(Error::DimensionMismatch { .. })
        ));
        let obs = MomentumObserver::new(ObserverConfig::defaults(7), &model, &q, &q);
        assert!(obs
            .unwrap()
            .update(&model, &DVector::zeros(6), &q, &q, &Vector6::zeros())
            .is_err());
    }
}
