//! Torque-level simulation and control of redundant serial manipulators.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: kinematics and rigid-body dynamics of a revolute chain
//!   (forward kinematics, geometric Jacobians, CRBA mass matrix, RNEA).
//! * [`sim`]: a deterministic 1 kHz world with penalty contacts, scripted
//!   pushes, a virtual wrist force/torque sensor and a wipeable ink board.
//! * [`control`]: operational-space terms, variable impedance task force,
//!   posture task with dynamically consistent null-space projection, and a
//!   damped least-squares IK.
//! * [`observer`]: generalized-momentum residual with end-effector wrench
//!   cancellation, low-pass filtering and contact-link localisation.
//! * [`safety`]: disturbance-compensating task force, contact-aware
//!   null-space projector and the hysteretic mode switch.
//! * [`policy`]: the impedance action interface and scripted policies.
//! * [`harness`]: scenario files, the closed loop, CSV traces and paired
//!   comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod harness;
pub mod model;
pub mod observer;
pub mod policy;
pub mod safety;
pub mod sim;

pub use error::{Error, Result};

/// Control and simulation period in seconds (1 kHz).
pub const DT: f64 = 1e-3;
