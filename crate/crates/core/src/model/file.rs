//! JSON robot model files.
//!
//! ```json
//! {
//!   "gravity": [0, 0, -9.81],
//!   "joints": [{"name": "j1", "axis": [0, 0, 1],
//!               "origin": {"xyz": [0, 0, 0.3], "rpy": [0, 0, 0]},
//!               "limits": {"position": [-2.9, 2.9], "velocity": 2.0, "torque": 80}}],
//!   "links": [{"name": "l1", "mass": 3.0, "com": [0, 0, 0.1],
//!              "inertia": [0.02, 0, 0, 0.02, 0, 0.01]}],
//!   "end_effector": {"parent": "l1", "xyz": [0, 0, 0.2], "rpy": [0, 0, 0]}
//! }
//! ```
//!
//! Units are SI, angles radians, inertia about the COM in link axes given as
//! `[ixx, ixy, ixz, iyy, iyz, izz]`. Unknown keys are rejected.

use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{EndEffector, Joint, JointLimits, Link, RobotModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ModelFile {
    pub gravity: [f64; 3],
    pub joints: Vec<JointSpec>,
    pub links: Vec<LinkSpec>,
    pub end_effector: EndEffectorSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Origin {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct LimitsSpec {
    pub position: [f64; 2],
    pub velocity: f64,
    pub torque: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct JointSpec {
    pub name: String,
    pub axis: [f64; 3],
    pub origin: Origin,
    pub limits: LimitsSpec,
    #[serde(default)]
    pub damping: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct LinkSpec {
    pub name: String,
    pub mass: f64,
    pub com: [f64; 3],
    pub inertia: [f64; 6],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct EndEffectorSpec {
    pub parent: String,
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

fn isometry(xyz: &[f64; 3], rpy: &[f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

impl ModelFile {
    pub fn into_model(self) -> Result<RobotModel> {
        let joints = self
            .joints
            .into_iter()
            .map(|j| Joint {
                axis: Unit::new_unchecked(Vector3::from(j.axis)),
                origin: isometry(&j.origin.xyz, &j.origin.rpy),
                limits: JointLimits {
                    position: (j.limits.position[0], j.limits.position[1]),
                    velocity: j.limits.velocity,
                    torque: j.limits.torque,
                },
                damping: j.damping,
                name: j.name,
            })
            .collect();
        let parent = self
            .links
            .iter()
            .position(|l| l.name == self.end_effector.parent)
            .ok_or_else(|| {
                Error::InvalidModel(format!(
                    "end effector parent `{}` is not a link",
                    self.end_effector.parent
                ))
            })?;
        let links = self
            .links
            .into_iter()
            .map(|l| {
                let [ixx, ixy, ixz, iyy, iyz, izz] = l.inertia;
                Link {
                    name: l.name,
                    mass: l.mass,
                    com: Vector3::from(l.com),
                    inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
                }
            })
            .collect();
        RobotModel::new(
            joints,
            links,
            Vector3::from(self.gravity),
            EndEffector {
                parent,
                offset: isometry(&self.end_effector.xyz, &self.end_effector.rpy),
            },
        )
    }
}

/// Parses and validates a model from JSON text.
pub fn parse_model(text: &str) -> Result<RobotModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::json("model", &e))?;
    file.into_model()
}

/// Reads, parses and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<RobotModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLANAR: &str = r#"{
      "gravity": [0, -9.81, 0],
      "joints": [
        {"name": "shoulder", "axis": [0, 0, 1], "origin": {"xyz": [0, 0, 0], "rpy": [0, 0, 0]},
         "limits": {"position": [-3, 3], "velocity": 2, "torque": 50}},
        {"name": "elbow", "axis": [0, 0, 1], "origin": {"xyz": [1, 0, 0], "rpy": [0, 0, 0]},
         "limits": {"position": [-3, 3], "velocity": 2, "torque": 50}}
      ],
      "links": [
        {"name": "upper", "mass": 1.0, "com": [1, 0, 0], "inertia": [1e-6, 0, 0, 1e-6, 0, 1e-6]},
        {"name": "fore", "mass": 1.0, "com": [1, 0, 0], "inertia": [1e-6, 0, 0, 1e-6, 0, 1e-6]}
      ],
      "end_effector": {"parent": "fore", "xyz": [1, 0, 0], "rpy": [0, 0, 0]}
    }"#;

    #[test]
    fn planar_file_loads() {
        let model = parse_model(PLANAR).unwrap();
        assert_eq!(model.dof(), 2);
        assert_eq!(model.end_effector().parent, 1);
        assert_eq!(model.joints()[1].limits.torque, 50.0);
    }

    #[test]
    fn zero_mass_names_link() {
        let text = PLANAR.replacen("\"mass\": 1.0", "\"mass\": 0", 1);
        let err = parse_model(&text).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
        assert!(err.to_string().contains("`upper`"), "{err}");
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = PLANAR.replacen("\"gravity\"", "\"colour\": 1, \"gravity\"", 1);
        match parse_model(&text).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let text = PLANAR.replacen("\"velocity\": 2, ", "", 1);
        let err = parse_model(&text).unwrap_err();
        assert!(err.to_string().contains("velocity"), "{err}");
    }

    #[test]
    fn bundled_arm_loads() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/models/arm7.json");
        let model = load_model(path).unwrap();
        assert_eq!(model.dof(), 7);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_model("/nonexistent/model.json"),
            Err(Error::Io { .. })
        ));
    }
}
