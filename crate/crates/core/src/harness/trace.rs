//! CSV traces: `#`-prefixed `key=value` metadata lines, one header row, then
//! one row per control tick. Values use the shortest round-trip formatting,
//! so parsing a trace recovers the logged numbers exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Column names for an arm with `n` joints.
pub fn columns(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "qd", "tau_m", "gamma_f"] {
        cols.extend((0..n).map(|i| format!("{prefix}{i}")));
    }
    cols.extend((0..6).map(|i| format!("F_eff{i}")));
    cols.extend((0..3).map(|i| format!("ee_pos{i}")));
    cols.extend((0..3).map(|i| format!("ee_err{i}")));
    cols.extend(["mode", "wiped_fraction", "contact_link"].map(String::from));
    cols
}

/// Number of joints implied by a column count.
pub fn dof_for_width(width: usize) -> Option<usize> {
    let fixed = 1 + 6 + 3 + 3 + 3;
    (width >= fixed && (width - fixed).is_multiple_of(4)).then(|| (width - fixed) / 4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(n: usize) -> Self {
        Self {
            meta: BTreeMap::new(),
            columns: columns(n),
            rows: Vec::new(),
        }
    }

    pub fn dof(&self) -> usize {
        dof_for_width(self.columns.len()).expect("trace columns follow the schema")
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * self.columns.len() * 12);
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}").unwrap();
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = BTreeMap::new();
        let mut lines = text.lines().enumerate();
        let header = loop {
            let Some((_, line)) = lines.next() else {
                return Err(Error::TraceSchema("missing header row".into()));
            };
            match line.strip_prefix('#') {
                Some(m) => {
                    if let Some((k, v)) = m.trim().split_once('=') {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
                None => break line,
            }
        };
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let n = dof_for_width(columns.len())
            .ok_or_else(|| Error::TraceSchema(format!("unexpected width {}", columns.len())))?;
        if columns != self::columns(n) {
            return Err(Error::TraceSchema("header does not match the trace schema".into()));
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::TraceSchema(format!("line {}: {e}", idx + 1)))?;
            if row.len() != columns.len() {
                return Err(Error::TraceSchema(format!(
                    "line {}: {} values for {} columns",
                    idx + 1,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self {
            meta,
            columns,
            rows,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_width() {
        assert_eq!(columns(7).len(), 1 + 28 + 6 + 3 + 3 + 3);
        assert_eq!(dof_for_width(columns(7).len()), Some(7));
        assert_eq!(dof_for_width(17), None);
        let cols = columns(2);
        assert_eq!(cols[0], "t");
        assert_eq!(cols[3], "qd0");
        assert_eq!(cols.last().unwrap(), "contact_link");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut trace = Trace::new(1);
        trace.meta.insert("seed".into(), "42".into());
        let width = trace.columns.len();
        trace.push_row((0..width).map(|i| (i as f64).sqrt() * 1e-3 + 0.1).collect());
        trace.push_row((0..width).map(|i| -(i as f64) / 3.0).collect());
        let text = trace.to_csv();
        assert!(text.starts_with("# seed=42\nt,q0,"));
        assert_eq!(Trace::parse(&text).unwrap(), trace);
    }

    #[test]
    fn bad_header_is_schema_error() {
        let text = "t,q0,qd0\n0,0,0\n";
        assert!(matches!(Trace::parse(text), Err(Error::TraceSchema(_))));
        let mut cols = columns(1);
        cols.swap(1, 2);
        let text = format!("{}\n", cols.join(","));
        assert!(matches!(Trace::parse(&text), Err(Error::TraceSchema(_))));
    }

    #[test]
    fn short_row_is_rejected() {
        let text = format!("{}\n0,1\n", columns(1).join(","));
        let err = Trace::parse(&text).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
