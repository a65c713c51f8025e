//! Run metrics computed from a trace, threshold checks and paired comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::scenario::Thresholds;
use super::trace::Trace;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Largest tool contact force magnitude (N).
    pub peak_ee_force: f64,
    /// Largest `|γ_f|∞` (N·m).
    pub peak_gamma: f64,
    /// Largest `|x_d − x|` per axis (m).
    pub peak_ee_error: [f64; 3],
    /// Wiped fraction at the end of the run.
    pub wiped_fraction: f64,
    pub mode_switches: u64,
    /// Ticks on which some joint torque hit its limit.
    pub clamp_events: u64,
    /// Shortest time between consecutive mode switches.
    pub min_switch_interval: Option<f64>,
}

impl Metrics {
    pub fn peak_ee_error_max(&self) -> f64 {
        self.peak_ee_error.iter().copied().fold(0.0, f64::max)
    }

    /// Recomputes the metrics from trace rows. Clamp events need the
    /// `torque_limits` metadata entry.
    pub fn from_trace(trace: &Trace) -> Result<Self> {
        let n = trace.dof();
        let col = |name: &str| {
            trace
                .column(name)
                .ok_or_else(|| Error::TraceSchema(format!("missing column {name}")))
        };
        let limits: Vec<f64> = match trace.meta.get("torque_limits") {
            Some(s) => s
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::TraceSchema(format!("torque_limits: {e}")))?,
            None => return Err(Error::TraceSchema("missing torque_limits metadata".into())),
        };
        if limits.len() != n {
            return Err(Error::TraceSchema("torque_limits length mismatch".into()));
        }
        let (t, tau, gamma, force, err, mode, wiped) = (
            col("t")?,
            col("tau_m0")?,
            col("gamma_f0")?,
            col("F_eff0")?,
            col("ee_err0")?,
            col("mode")?,
            col("wiped_fraction")?,
        );

        let mut m = Metrics {
            peak_ee_force: 0.0,
            peak_gamma: 0.0,
            peak_ee_error: [0.0; 3],
            wiped_fraction: 0.0,
            mode_switches: 0,
            clamp_events: 0,
            min_switch_interval: None,
        };
        let mut last_mode: Option<f64> = None;
        let mut last_switch: Option<f64> = None;
        for row in &trace.rows {
            let f = &row[force..force + 3];
            m.peak_ee_force = m.peak_ee_force.max((f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt());
            for g in &row[gamma..gamma + n] {
                m.peak_gamma = m.peak_gamma.max(g.abs());
            }
            for (peak, e) in m.peak_ee_error.iter_mut().zip(&row[err..err + 3]) {
                *peak = peak.max(e.abs());
            }
            if row[tau..tau + n].iter().zip(&limits).any(|(v, l)| v.abs() >= *l) {
                m.clamp_events += 1;
            }
            if let Some(prev) = last_mode {
                if prev != row[mode] {
                    m.mode_switches += 1;
                    if let Some(s) = last_switch {
                        let gap = row[t] - s;
                        m.min_switch_interval = Some(m.min_switch_interval.map_or(gap, |g| g.min(gap)));
                    }
                    last_switch = Some(row[t]);
                }
            }
            last_mode = Some(row[mode]);
            m.wiped_fraction = row[wiped];
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            pass: value >= limit,
        }
    }
}

/// Per-run thresholds. Ratio thresholds are evaluated by [`compare`].
pub fn check_run(metrics: &Metrics, th: &Thresholds) -> Vec<Check> {
    let mut checks = Vec::new();
    if let Some(l) = th.max_ee_force {
        checks.push(Check::at_most("max_ee_force", metrics.peak_ee_force, l));
    }
    if let Some(l) = th.min_wiped_fraction {
        checks.push(Check::at_least("min_wiped_fraction", metrics.wiped_fraction, l));
    }
    if let Some(l) = th.max_gamma {
        checks.push(Check::at_most("max_gamma", metrics.peak_gamma, l));
    }
    if let Some(l) = th.max_ee_error {
        checks.push(Check::at_most("max_ee_error", metrics.peak_ee_error_max(), l));
    }
    if let (Some(l), Some(gap)) = (th.min_switch_interval, metrics.min_switch_interval) {
        checks.push(Check::at_least("min_switch_interval", gap, l));
    }
    checks
}

/// `a / b`, with `0 / 0` taken as 1.
pub fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a / b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: Metrics,
    pub b: Metrics,
    /// Metric ratios `a / b`.
    pub ratios: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, name: &str, a: f64, b: f64| {
            writeln!(out, "{name:<18} {a:>14.6} {b:>14.6} {:>10.4}", ratio(a, b)).unwrap();
        };
        writeln!(out, "{:<18} {:>14} {:>14} {:>10}", "metric", "a", "b", "a/b").unwrap();
        row(&mut out, "peak_ee_force", self.a.peak_ee_force, self.b.peak_ee_force);
        row(&mut out, "peak_gamma", self.a.peak_gamma, self.b.peak_gamma);
        for i in 0..3 {
            row(
                &mut out,
                &format!("peak_ee_error{i}"),
                self.a.peak_ee_error[i],
                self.b.peak_ee_error[i],
            );
        }
        row(&mut out, "wiped_fraction", self.a.wiped_fraction, self.b.wiped_fraction);
        row(&mut out, "mode_switches", self.a.mode_switches as f64, self.b.mode_switches as f64);
        row(&mut out, "clamp_events", self.a.clamp_events as f64, self.b.clamp_events as f64);
        for c in &self.checks {
            let verdict = if c.pass { "pass" } else { "FAIL" };
            writeln!(out, "{verdict}: {} = {:.6} (limit {})", c.name, c.value, c.limit).unwrap();
        }
        out
    }
}

/// Compares two traces of the same scenario geometry. Ratio thresholds come
/// from `thresholds` when given, otherwise from the first trace's metadata.
pub fn compare(a: &Trace, b: &Trace, thresholds: Option<&Thresholds>) -> Result<Comparison> {
    if a.columns != b.columns {
        return Err(Error::TraceSchema(format!(
            "traces have different columns ({} vs {})",
            a.columns.len(),
            b.columns.len()
        )));
    }
    let ma = Metrics::from_trace(a)?;
    let mb = Metrics::from_trace(b)?;
    let mut ratios = BTreeMap::new();
    ratios.insert("peak_ee_force".to_string(), ratio(ma.peak_ee_force, mb.peak_ee_force));
    ratios.insert("peak_gamma".to_string(), ratio(ma.peak_gamma, mb.peak_gamma));
    ratios.insert(
        "peak_ee_error".to_string(),
        ratio(ma.peak_ee_error_max(), mb.peak_ee_error_max()),
    );
    for i in 0..3 {
        ratios.insert(
            format!("peak_ee_error{i}"),
            ratio(ma.peak_ee_error[i], mb.peak_ee_error[i]),
        );
    }
    ratios.insert("wiped_fraction".to_string(), ratio(ma.wiped_fraction, mb.wiped_fraction));
    ratios.insert(
        "mode_switches".to_string(),
        ratio(ma.mode_switches as f64, mb.mode_switches as f64),
    );
    ratios.insert(
        "clamp_events".to_string(),
        ratio(ma.clamp_events as f64, mb.clamp_events as f64),
    );

    let from_meta;
    let th = match thresholds {
        Some(t) => t,
        None => {
            from_meta = match a.meta.get("thresholds") {
                Some(s) => serde_json::from_str(s).map_err(|e| Error::json("thresholds", &e))?,
                None => Thresholds::default(),
            };
            &from_meta
        }
    };
    let mut checks = Vec::new();
    if let Some(l) = th.max_gamma_ratio {
        checks.push(Check::at_most("max_gamma_ratio", ratios["peak_gamma"], l));
    }
    if let Some(l) = th.max_ee_error_ratio {
        checks.push(Check::at_most("max_ee_error_ratio", ratios["peak_ee_error"], l));
    }
    if let Some(l) = th.max_ee_force_ratio {
        checks.push(Check::at_most("max_ee_force_ratio", ratios["peak_ee_force"], l));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(Comparison {
        a: ma,
        b: mb,
        ratios,
        checks,
        pass,
    })
}
