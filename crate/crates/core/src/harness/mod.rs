//! Scenario runner: the 1 kHz closed loop of policy, observer, controller and
//! simulator, with CSV traces, summary metrics and paired comparison.

mod metrics;
mod scenario;
mod trace;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::control::{
    free_space_torque, inverse_kinematics, posture_torque, task_space_terms, vic_force,
};
use crate::model::{end_effector_pose, RobotModel};
use crate::observer::MomentumObserver;
use crate::policy::{apply_action, PolicyObservation, POLICY_PERIOD_TICKS};
use crate::safety::{
    compensated_task_force, contact_aware_projector, contact_aware_torque, switch_mode,
    ControllerMode, Mode,
};
use crate::sim::ContactKind;
use crate::{Error, Result};

pub use metrics::{check_run, compare, ratio, Check, Comparison, Metrics};
pub use scenario::{
    BoardSpec, ControllerKind, ControllerParams, EnvironmentSpec, Gain, InkSpec, ObstacleSpec,
    PoseSpec, ProbeSpec, PushSpec, Scenario, Setup, TableSpec, Thresholds,
};
pub use trace::{columns, Trace};

/// Quantities logged alongside the metrics that the trace cannot reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extras {
    /// Largest total penalty force between the arm and the obstacles (N).
    pub peak_obstacle_force: f64,
    /// Policy ticks on which the posture IK did not converge.
    pub ik_unreachable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub controller: ControllerKind,
    pub ticks: u64,
    pub dt: f64,
    pub metrics: Metrics,
    pub extras: Extras,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub summary: Summary,
}

impl RunOutput {
    pub fn metrics(&self) -> &Metrics {
        &self.summary.metrics
    }
}

/// Runs a scenario, loading its model file.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput> {
    let model = Arc::new(scenario.load_model()?);
    run_with_model(scenario, model)
}

pub fn run_with_model(scenario: &Scenario, model: Arc<RobotModel>) -> Result<RunOutput> {
    let scenario::Setup {
        mut world,
        observer,
        mut task,
        mut posture,
    } = scenario.setup_with(Arc::clone(&model))?;
    let params = &scenario.params;
    let n = model.dof();
    let dt = world.dt;
    let ticks = scenario.ticks(dt);
    let contact_aware = scenario.controller == ControllerKind::ContactAware;

    let mut obs = MomentumObserver::new(observer, &model, &world.state.q, &world.state.qd)?;
    let mut mode = ControllerMode::new(params.hold);
    let mut policy = scenario
        .policy
        .build(world.board.as_ref().map(|b| b.height()))?;

    let mut trace = Trace::new(n);
    let hash = scenario.hash();
    let limits = model.torque_limits();
    let meta = [
        ("format", "armsafe-trace-1".to_string()),
        ("scenario", scenario.name().to_string()),
        ("scenario_hash", hash.clone()),
        ("seed", scenario.seed.to_string()),
        ("dt", dt.to_string()),
        ("policy_period_ticks", POLICY_PERIOD_TICKS.to_string()),
        ("controller", scenario.controller.as_str().to_string()),
        ("hold", params.hold.to_string()),
        ("threshold", params.threshold.to_string()),
        (
            "torque_limits",
            limits.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        ),
        (
            "thresholds",
            serde_json::to_string(&scenario.thresholds).expect("thresholds serialize"),
        ),
    ];
    for (k, v) in meta {
        trace.meta.insert(k.to_string(), v);
    }

    let mut prev_tau = DVector::zeros(n);
    let mut prev_wrench = Vector6::zeros();
    let mut peak_obstacle_force: f64 = 0.0;
    let mut ik_unreachable = 0;

    for k in 0..ticks {
        let time = world.time;
        let q = world.state.q.clone();
        let qd = world.state.qd.clone();

        if k > 0 {
            obs.update(&model, &q, &qd, &prev_tau, &prev_wrench)?;
        }
        obs.lowpass();
        let detected = obs.detect(time);
        if contact_aware {
            let next = switch_mode(mode, detected.as_ref(), time);
            if next.mode != mode.mode {
                log::debug!("{}: {:?} at t = {time:.3}", scenario.name(), next.mode);
            }
            mode = next;
        }

        let x = end_effector_pose(&model, &q);
        if k % POLICY_PERIOD_TICKS == 0 {
            let observation = PolicyObservation {
                time,
                ee_pose: x,
                target: task.pose,
                wiped_fraction: world.wiped_fraction(),
                pending: world.board.as_ref().map(|b| b.pending()).unwrap_or_default(),
            };
            let inc = policy.step(&observation);
            if !inc.is_finite() {
                return Err(Error::NonFinite("policy increment"));
            }
            task = apply_action(&task, &inc.clamped(&params.increment_limits), &params.bounds);
            let sol = inverse_kinematics(&model, &task.pose, &q)?;
            if !sol.reachable {
                ik_unreachable += 1;
                log::debug!(
                    "{}: posture IK unreachable at t = {time:.3} ({:.2e} m)",
                    scenario.name(),
                    sol.position_error
                );
            }
            posture.q_pose = sol.q;
        }

        let terms = task_space_terms(&model, &q, &qd);
        let xdot_full = &terms.jacobian * &qd;
        let xdot = Vector6::from_column_slice(xdot_full.as_slice());
        let gamma_pose = posture_torque(&q, &qd, &posture);
        let tau = match mode.mode {
            Mode::FreeSpace => {
                free_space_torque(&terms, &vic_force(&terms, &task, &x, &xdot), &gamma_pose)
            }
            Mode::ContactAware => {
                let gamma_f = obs.filtered();
                let force = compensated_task_force(&terms, &task, &x, &xdot, gamma_f);
                let projector = contact_aware_projector(
                    &terms.nullspace,
                    gamma_f,
                    &terms.mass_inv,
                    params.contact_eps,
                );
                contact_aware_torque(&terms, &force, &projector, &gamma_pose)
            }
        };

        let out = world.step(&tau)?;
        if out.torque_clamped {
            log::debug!("{}: torque clamped at tick {k}", scenario.name());
        }
        let obstacle_force: Vector3<f64> = out
            .contacts
            .iter()
            .filter(|c| matches!(c.kind, ContactKind::Obstacle(_)))
            .map(|c| c.force)
            .sum();
        peak_obstacle_force = peak_obstacle_force.max(obstacle_force.norm());
        let normal = world.table_normal_force(&out.ft);
        let wiped = world.wipe_update(&x.position, normal);

        let mut row = Vec::with_capacity(trace.columns.len());
        row.push(time);
        row.extend(q.iter());
        row.extend(qd.iter());
        row.extend(out.applied_torque.iter());
        row.extend(obs.filtered().iter());
        row.extend(out.ft.wrench.iter());
        row.extend(x.position.iter());
        row.extend((task.pose.position - x.position).iter());
        row.push(f64::from(mode.mode.code()));
        row.push(wiped);
        row.push(detected.map_or(-1.0, |c| c.link as f64));
        trace.push_row(row);

        prev_tau = out.applied_torque;
        prev_wrench = out.ft.wrench;
    }

    let metrics = Metrics::from_trace(&trace)?;
    let checks = check_run(&metrics, &scenario.thresholds);
    let pass = checks.iter().all(|c| c.pass);
    let summary = Summary {
        scenario: scenario.name().to_string(),
        scenario_hash: hash,
        seed: scenario.seed,
        controller: scenario.controller,
        ticks,
        dt,
        metrics,
        extras: Extras {
            peak_obstacle_force,
            ik_unreachable,
        },
        checks,
        pass,
    };
    Ok(RunOutput { trace, summary })
}

/// Paths of the files written for one run.
#[derive(Debug, Clone)]
pub struct Written {
    pub trace: PathBuf,
    pub summary: PathBuf,
}

/// Writes `<stem>.csv` and `<stem>.summary.json` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path, stem: &str) -> Result<Written> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trace = dir.join(format!("{stem}.csv"));
    std::fs::write(&trace, out.trace.to_csv()).map_err(|e| Error::io(&trace, e))?;
    let summary = dir.join(format!("{stem}.summary.json"));
    let json = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    std::fs::write(&summary, json + "\n").map_err(|e| Error::io(&summary, e))?;
    Ok(Written { trace, summary })
}

/// Loads, runs and writes a scenario file.
pub fn run_scenario_file(path: &Path, out_dir: &Path) -> Result<(RunOutput, Written)> {
    let scenario = Scenario::load(path)?;
    let out = run_scenario(&scenario)?;
    let written = write_outputs(&out, out_dir, scenario.output_stem())?;
    Ok((out, written))
}
