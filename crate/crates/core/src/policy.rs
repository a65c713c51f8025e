//! Policy interface over increments of the impedance target, with scripted
//! policies: hold, a boustrophedon wiping sweep and a misled lateral drift.

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::control::TaskTarget;
use crate::model::Pose;
use crate::sim::PendingCell;
use crate::{Error, Result};

/// Control ticks between policy steps (62.5 Hz at 1 kHz).
pub const POLICY_PERIOD_TICKS: u64 = 16;

/// Change of the impedance target requested by one policy step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActionIncrement {
    /// Equilibrium shift: translation (m) then world rotation vector (rad).
    pub dx: Vector6<f64>,
    pub dk: Vector6<f64>,
    pub dd: Vector6<f64>,
}

/// Largest increment allowed per policy step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncrementLimits {
    pub position: f64,
    pub rotation: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for IncrementLimits {
    fn default() -> Self {
        Self {
            position: 0.005,
            rotation: 0.02,
            stiffness: 50.0,
            damping: 5.0,
        }
    }
}

/// Admissible ranges of the diagonal stiffness and damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetBounds {
    pub stiffness_position: [f64; 2],
    pub stiffness_rotation: [f64; 2],
    pub damping: [f64; 2],
}

impl Default for TargetBounds {
    fn default() -> Self {
        Self {
            stiffness_position: [10.0, 1500.0],
            stiffness_rotation: [1.0, 100.0],
            damping: [1.0, 100.0],
        }
    }
}

impl TargetBounds {
    pub fn clamp(&self, target: &mut TaskTarget) {
        for i in 0..6 {
            let [lo, hi] = if i < 3 {
                self.stiffness_position
            } else {
                self.stiffness_rotation
            };
            target.stiffness[i] = target.stiffness[i].clamp(lo, hi);
            target.damping[i] = target.damping[i].clamp(self.damping[0], self.damping[1]);
        }
    }

    pub fn contains(&self, target: &TaskTarget) -> bool {
        let mut clamped = *target;
        self.clamp(&mut clamped);
        clamped == *target
    }
}

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

impl ActionIncrement {
    /// Translation and rotation are scaled down by norm; gains per component.
    pub fn clamped(&self, limits: &IncrementLimits) -> Self {
        let dp = clamp_norm(self.dx.fixed_rows::<3>(0).into_owned(), limits.position);
        let dr = clamp_norm(self.dx.fixed_rows::<3>(3).into_owned(), limits.rotation);
        Self {
            dx: Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z),
            dk: self.dk.map(|v| v.clamp(-limits.stiffness, limits.stiffness)),
            dd: self.dd.map(|v| v.clamp(-limits.damping, limits.damping)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dx.iter().chain(self.dk.iter()).chain(self.dd.iter()).all(|v| v.is_finite())
    }
}

/// Moves the equilibrium by `inc` and updates the gains within `bounds`.
pub fn apply_action(target: &TaskTarget, inc: &ActionIncrement, bounds: &TargetBounds) -> TaskTarget {
    let rot = UnitQuaternion::from_scaled_axis(inc.dx.fixed_rows::<3>(3).into_owned());
    let mut next = TaskTarget {
        pose: Pose::new(
            target.pose.position + inc.dx.fixed_rows::<3>(0),
            rot * target.pose.orientation,
        ),
        stiffness: target.stiffness + inc.dk,
        damping: target.damping + inc.dd,
    };
    bounds.clamp(&mut next);
    next
}

/// What a policy sees each step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyObservation {
    pub time: f64,
    pub ee_pose: Pose,
    /// Current impedance equilibrium.
    pub target: Pose,
    pub wiped_fraction: f64,
    /// Inked cells not yet wiped.
    pub pending: Vec<PendingCell>,
}

impl PolicyObservation {
    /// Vector from the tool to the closest pending ink cell.
    pub fn nearest_ink(&self) -> Option<Vector3<f64>> {
        self.pending
            .iter()
            .map(|c| c.center - self.ee_pose.position)
            .min_by(|a, b| a.norm().total_cmp(&b.norm()))
    }
}

pub trait Policy: Send {
    fn step(&mut self, obs: &PolicyObservation) -> ActionIncrement;
}

/// Never changes the target.
#[derive(Debug, Clone, Default)]
pub struct Hold;

impl Policy for Hold {
    fn step(&mut self, _obs: &PolicyObservation) -> ActionIncrement {
        ActionIncrement::default()
    }
}

/// Sweeps the equilibrium over the remaining ink row by row, alternating
/// direction, pressed `press_depth` below the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WipeParams {
    pub press_depth: f64,
    /// Horizontal equilibrium speed (m per policy step).
    pub speed: f64,
    /// Vertical equilibrium speed near the surface (m per policy step).
    pub descent: f64,
    /// Height above the surface below which `descent` applies; higher up the
    /// equilibrium moves at `speed`.
    pub slow_zone: f64,
}

impl Default for WipeParams {
    fn default() -> Self {
        Self {
            press_depth: 0.003,
            speed: 0.002,
            descent: 0.0003,
            slow_zone: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Wipe {
    params: WipeParams,
    surface: f64,
}

impl Wipe {
    pub fn new(params: WipeParams, surface: f64) -> Self {
        Self { params, surface }
    }

    /// The next cell in sweep order: rows by `iy`, even rows left to right.
    pub fn next_cell(pending: &[PendingCell]) -> Option<&PendingCell> {
        pending.iter().min_by_key(|c| {
            let ix = if c.iy % 2 == 0 { c.ix as i64 } else { -(c.ix as i64) };
            (c.iy, ix)
        })
    }
}

impl Policy for Wipe {
    fn step(&mut self, obs: &PolicyObservation) -> ActionIncrement {
        let Some(cell) = Self::next_cell(&obs.pending) else {
            return ActionIncrement::default();
        };
        let x_d = obs.target.position;
        let mut horizontal = cell.center - x_d;
        horizontal.z = 0.0;
        let horizontal = clamp_norm(horizontal, self.params.speed);
        let rate = if x_d.z > self.surface + self.params.slow_zone {
            self.params.speed
        } else {
            self.params.descent
        };
        let dz = (self.surface - self.params.press_depth - x_d.z).clamp(-rate, rate);
        let mut inc = ActionIncrement::default();
        inc.dx[0] = horizontal.x;
        inc.dx[1] = horizontal.y;
        inc.dx[2] = dz;
        inc
    }
}

/// After `trigger` seconds, drifts the equilibrium along `direction` by
/// `step` per policy step for at most `distance` metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisledParams {
    pub trigger: f64,
    pub direction: [f64; 3],
    #[serde(default = "MisledParams::default_step")]
    pub step: f64,
    #[serde(default)]
    pub distance: Option<f64>,
}

impl MisledParams {
    fn default_step() -> f64 {
        0.004
    }
}

#[derive(Debug, Clone)]
pub struct Misled {
    params: MisledParams,
    direction: Vector3<f64>,
    travelled: f64,
}

impl Misled {
    pub fn new(params: MisledParams) -> Result<Self> {
        let direction = Vector3::from(params.direction);
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() || !(params.step > 0.0) {
            return Err(Error::InvalidScenario(
                "misled policy needs a nonzero direction and positive step".into(),
            ));
        }
        Ok(Self {
            direction: direction / norm,
            params,
            travelled: 0.0,
        })
    }
}

impl Policy for Misled {
    fn step(&mut self, obs: &PolicyObservation) -> ActionIncrement {
        let mut inc = ActionIncrement::default();
        if obs.time < self.params.trigger {
            return inc;
        }
        let remaining = self.params.distance.map_or(f64::INFINITY, |d| d - self.travelled);
        let step = self.params.step.min(remaining).max(0.0);
        self.travelled += step;
        inc.dx.fixed_rows_mut::<3>(0).copy_from(&(self.direction * step));
        inc
    }
}

/// Policy selection as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Hold,
    Wipe(WipeParams),
    Misled(MisledParams),
}

impl PolicySpec {
    /// `surface` is the height of the wiping surface, if any.
    pub fn build(&self, surface: Option<f64>) -> Result<Box<dyn Policy>> {
        Ok(match self {
            PolicySpec::Hold => Box::new(Hold),
            PolicySpec::Wipe(params) => {
                let surface = surface.ok_or_else(|| {
                    Error::InvalidScenario("wipe policy needs an ink board".into())
                })?;
                Box::new(Wipe::new(params.clone(), surface))
            }
            PolicySpec::Misled(params) => Box::new(Misled::new(params.clone())?),
        })
    }
}
