//! Scenario files: robot, environment, controller parameters, policy and
//! pass/fail thresholds for one closed-loop run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DVector, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{PostureTarget, TaskTarget};
use crate::model::{self, JointState, Pose, RobotModel};
use crate::observer::ObserverConfig;
use crate::policy::{IncrementLimits, PolicySpec, TargetBounds};
use crate::sim::{default_probes, InkBoard, Obstacle, Probe, Push, Table, World};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Switches to the contact-aware law while an arm contact is detected.
    ContactAware,
    /// Free-space impedance plus posture law, always.
    Baseline,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::ContactAware => "contact_aware",
            ControllerKind::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub height: f64,
    #[serde(default = "TableSpec::default_stiffness")]
    pub stiffness: f64,
    #[serde(default = "TableSpec::default_damping")]
    pub damping: f64,
    #[serde(default = "TableSpec::default_friction")]
    pub friction: f64,
}

impl TableSpec {
    fn default_stiffness() -> f64 {
        2e4
    }
    fn default_damping() -> f64 {
        200.0
    }
    fn default_friction() -> f64 {
        0.3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default = "ObstacleSpec::default_stiffness")]
    pub stiffness: f64,
    #[serde(default = "ObstacleSpec::default_damping")]
    pub damping: f64,
}

impl ObstacleSpec {
    fn default_stiffness() -> f64 {
        5e3
    }
    fn default_damping() -> f64 {
        50.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushSpec {
    pub link: usize,
    #[serde(default)]
    pub point: [f64; 3],
    pub force: [f64; 3],
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub link: usize,
    pub point: [f64; 3],
    #[serde(default)]
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum InkSpec {
    /// Explicit `[ix, iy]` cells.
    Cells(Vec<[usize; 2]>),
    /// Each cell inked with this probability, drawn from the scenario seed.
    RandomDensity(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoardSpec {
    pub origin: [f64; 2],
    pub size: [f64; 2],
    pub cell: f64,
    pub wipe_radius: f64,
    pub ink: InkSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSpec {
    pub table: Option<TableSpec>,
    pub obstacles: Vec<ObstacleSpec>,
    pub pushes: Vec<PushSpec>,
    /// Replaces the default probes when present.
    pub probes: Option<Vec<ProbeSpec>>,
    /// Radius given to the default link probes (the tool point stays a point).
    pub probe_radius: f64,
    /// Lies on the table surface.
    pub board: Option<BoardSpec>,
}

/// A scalar gain applied to every joint, or one per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Uniform(f64),
    PerJoint(Vec<f64>),
}

impl Gain {
    fn to_vector(&self, n: usize, what: &'static str) -> Result<DVector<f64>> {
        match self {
            Gain::Uniform(k) => Ok(DVector::from_element(n, *k)),
            Gain::PerJoint(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            Gain::PerJoint(v) => Err(Error::DimensionMismatch {
                what,
                expected: n,
                got: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub position: [f64; 3],
    pub rpy: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    pub observer_gain: Gain,
    pub threshold: f64,
    pub hold: f64,
    pub cutoff_hz: f64,
    pub contact_eps: f64,
    pub posture_stiffness: Gain,
    pub posture_damping: Gain,
    pub task_stiffness: [f64; 6],
    pub task_damping: [f64; 6],
    /// Initial equilibrium; the initial tool pose when absent.
    pub target: Option<PoseSpec>,
    pub increment_limits: IncrementLimits,
    pub bounds: TargetBounds,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            observer_gain: Gain::Uniform(1.5),
            threshold: 1.5,
            hold: 0.05,
            cutoff_hz: 20.0,
            contact_eps: crate::safety::CONTACT_EPS,
            posture_stiffness: Gain::PerJoint(vec![40.0, 40.0, 40.0, 40.0, 30.0, 20.0, 10.0]),
            posture_damping: Gain::PerJoint(vec![12.0, 12.0, 12.0, 12.0, 10.0, 8.0, 6.0]),
            task_stiffness: [500.0, 500.0, 500.0, 50.0, 50.0, 50.0],
            task_damping: [45.0, 45.0, 45.0, 14.0, 14.0, 14.0],
            target: None,
            increment_limits: IncrementLimits::default(),
            bounds: TargetBounds::default(),
        }
    }
}

/// Limits a run or a paired comparison must satisfy to pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub max_ee_force: Option<f64>,
    pub min_wiped_fraction: Option<f64>,
    pub max_gamma: Option<f64>,
    pub max_ee_error: Option<f64>,
    pub min_switch_interval: Option<f64>,
    /// Ratios of this run to the paired run in `compare_with`.
    pub max_gamma_ratio: Option<f64>,
    pub max_ee_error_ratio: Option<f64>,
    pub max_ee_force_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    /// Model file, relative to the scenario file.
    pub model: PathBuf,
    pub initial_q: Vec<f64>,
    #[serde(default)]
    pub initial_qd: Option<Vec<f64>>,
    pub controller: ControllerKind,
    pub policy: PolicySpec,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub params: ControllerParams,
    /// Trace file stem; defaults to the scenario name.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Scenario to compare against, relative to this file.
    #[serde(default)]
    pub compare_with: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Everything a run needs, resolved from a scenario.
pub struct Setup {
    pub world: World,
    pub observer: ObserverConfig,
    pub task: TaskTarget,
    pub posture: PostureTarget,
}

impl Scenario {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut scenario: Scenario =
            serde_json::from_str(text).map_err(|e| Error::json("scenario", &e))?;
        scenario.base_dir = base_dir.into();
        if !(scenario.duration > 0.0) || !scenario.duration.is_finite() {
            return Err(Error::InvalidScenario("duration must be positive".into()));
        }
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut scenario = Self::parse(&text, base)?;
        if scenario.name.is_none() {
            scenario.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(scenario)
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }

    pub fn output_stem(&self) -> &str {
        self.output.as_deref().unwrap_or_else(|| self.name())
    }

    pub fn model_path(&self) -> PathBuf {
        self.base_dir.join(&self.model)
    }

    pub fn compare_path(&self) -> Option<PathBuf> {
        self.compare_with.as_ref().map(|p| self.base_dir.join(p))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn ticks(&self, dt: f64) -> u64 {
        (self.duration / dt).round() as u64
    }

    pub fn load_model(&self) -> Result<RobotModel> {
        model::load_model(self.model_path())
    }

    pub fn setup(&self) -> Result<Setup> {
        let model = Arc::new(self.load_model()?);
        self.setup_with(model)
    }

    pub fn setup_with(&self, model: Arc<RobotModel>) -> Result<Setup> {
        let n = model.dof();
        let q0 = DVector::from_column_slice(&self.initial_q);
        model.check_state("initial_q", &q0)?;
        let qd0 = match &self.initial_qd {
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(n),
        };
        model.check_state("initial_qd", &qd0)?;
        let mut world = World::new(Arc::clone(&model), JointState::new(q0.clone(), qd0))?;

        let env = &self.environment;
        world.table = env.table.as_ref().map(|t| Table {
            point: Vector3::new(0.0, 0.0, t.height),
            normal: Vector3::z(),
            stiffness: t.stiffness,
            damping: t.damping,
            friction: t.friction,
        });
        world.obstacles = env
            .obstacles
            .iter()
            .map(|o| Obstacle {
                center: Vector3::from(o.center),
                radius: o.radius,
                stiffness: o.stiffness,
                damping: o.damping,
            })
            .collect();
        world.pushes = env
            .pushes
            .iter()
            .map(|p| {
                model.check_link(p.link)?;
                Ok(Push {
                    link: p.link,
                    point: Vector3::from(p.point),
                    force: Vector3::from(p.force),
                    start: p.start,
                    end: p.end,
                })
            })
            .collect::<Result<_>>()?;
        world.probes = match &env.probes {
            Some(list) => list
                .iter()
                .map(|p| {
                    model.check_link(p.link)?;
                    Ok(Probe {
                        link: p.link,
                        point: Vector3::from(p.point),
                        radius: p.radius,
                    })
                })
                .collect::<Result<_>>()?,
            None => {
                let tool = model.end_effector();
                let mut probes = default_probes(&model);
                for p in &mut probes {
                    if !(p.link == tool.parent && p.point == tool.offset.translation.vector) {
                        p.radius = env.probe_radius;
                    }
                }
                probes
            }
        };
        if let Some(b) = &env.board {
            let height = env.table.as_ref().map(|t| t.height).ok_or_else(|| {
                Error::InvalidScenario("an ink board needs a table".into())
            })?;
            let mut board = InkBoard::new(b.origin, b.size, b.cell, b.wipe_radius, height)?;
            match &b.ink {
                InkSpec::Cells(cells) => {
                    let cells: Vec<(usize, usize)> = cells.iter().map(|c| (c[0], c[1])).collect();
                    board.set_ink(&cells)?;
                }
                InkSpec::RandomDensity(d) => board.random_ink(self.seed, *d),
            }
            world.board = Some(board);
        }

        let p = &self.params;
        let observer = ObserverConfig {
            gain: p.observer_gain.to_vector(n, "observer_gain")?,
            threshold: p.threshold,
            cutoff_hz: p.cutoff_hz,
            dt: world.dt,
        };
        if !(p.hold > 0.0) {
            return Err(Error::InvalidScenario("hold must be positive".into()));
        }
        let pose = match &p.target {
            Some(t) => Pose::new(
                Vector3::from(t.position),
                UnitQuaternion::from_euler_angles(t.rpy[0], t.rpy[1], t.rpy[2]),
            ),
            None => model::end_effector_pose(&model, &q0),
        };
        let mut task = TaskTarget {
            pose,
            stiffness: Vector6::from_column_slice(&p.task_stiffness),
            damping: Vector6::from_column_slice(&p.task_damping),
        };
        p.bounds.clamp(&mut task);
        let posture = PostureTarget {
            q_pose: q0,
            stiffness: p.posture_stiffness.to_vector(n, "posture_stiffness")?,
            damping: p.posture_damping.to_vector(n, "posture_damping")?,
        };
        Ok(Setup {
            world,
            observer,
            task,
            posture,
        })
    }
}
