//! Recorded trajectories and their on-disk formats.
//!
//! `trace.csv` holds one diagnostics row per record, preceded by a version
//! comment; `snapshots.json` optionally holds the full state at each row.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::NetworkState;

pub const TRACE_VERSION_LINE: &str = "# dsvm-trace v1";
pub const TRACE_HEADER: &str =
    "step,t,V,V_H1,V_H2,V_H3,consensus_residual,kkt_max_residual,objective";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("snapshot file: {0}")]
    Snapshots(#[from] serde_json::Error),
    #[error("{snapshots} snapshots for {rows} trace rows")]
    SnapshotCount { rows: usize, snapshots: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub t: f64,
    pub v: f64,
    pub v_h1: f64,
    pub v_h2: f64,
    pub v_h3: f64,
    pub consensus_residual: f64,
    pub kkt_max_residual: f64,
    pub objective: f64,
    #[serde(skip)]
    pub snapshot: Option<NetworkState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotEntry {
    step: u64,
    t: f64,
    state: NetworkState,
}

impl Trace {
    pub fn has_snapshots(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.snapshot.is_some())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(TRACE_VERSION_LINE);
        out.push('\n');
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.step,
                r.t,
                r.v,
                r.v_h1,
                r.v_h2,
                r.v_h3,
                r.consensus_residual,
                r.kkt_max_residual,
                r.objective
            )
            .unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, reason: &str| TraceError::Parse {
            line: line + 1,
            reason: reason.to_string(),
        };
        match lines.next() {
            Some((_, l)) if l.trim() == TRACE_VERSION_LINE => {}
            _ => return Err(err(0, "missing version line")),
        }
        match lines.next() {
            Some((_, l)) if l.trim() == TRACE_HEADER => {}
            _ => return Err(err(1, "missing or unexpected header")),
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(err(idx, &format!("expected 9 fields, found {}", fields.len())));
            }
            let step: u64 = fields[0]
                .trim()
                .parse()
                .map_err(|_| err(idx, "bad step index"))?;
            let mut vals = [0.0f64; 8];
            for (v, f) in vals.iter_mut().zip(&fields[1..]) {
                *v = f
                    .trim()
                    .parse()
                    .map_err(|_| err(idx, &format!("bad number {f:?}")))?;
            }
            if let Some(prev) = rows.last().map(|r: &TraceRow| r.t) {
                if vals[0] <= prev {
                    return Err(err(idx, "time is not strictly increasing"));
                }
            }
            rows.push(TraceRow {
                step,
                t: vals[0],
                v: vals[1],
                v_h1: vals[2],
                v_h2: vals[3],
                v_h3: vals[4],
                consensus_residual: vals[5],
                kkt_max_residual: vals[6],
                objective: vals[7],
                snapshot: None,
            });
        }
        if rows.is_empty() {
            return Err(err(2, "trace has no rows"));
        }
        if !text.ends_with('\n') {
            return Err(err(text.lines().count() - 1, "truncated: last row has no line terminator"));
        }
        Ok(Self { rows })
    }

    /// JSON array of `{step, t, state}`; `None` when no row carries a state.
    pub fn snapshots_json(&self) -> Option<String> {
        if !self.has_snapshots() {
            return None;
        }
        let entries: Vec<SnapshotEntry> = self
            .rows
            .iter()
            .map(|r| SnapshotEntry {
                step: r.step,
                t: r.t,
                state: r.snapshot.clone().expect("checked"),
            })
            .collect();
        Some(serde_json::to_string(&entries).expect("states serialize"))
    }

    pub fn attach_snapshots(&mut self, json: &str) -> Result<(), TraceError> {
        let entries: Vec<SnapshotEntry> = serde_json::from_str(json)?;
        if entries.len() != self.rows.len() {
            return Err(TraceError::SnapshotCount {
                rows: self.rows.len(),
                snapshots: entries.len(),
            });
        }
        for (row, e) in self.rows.iter_mut().zip(entries) {
            if row.step != e.step {
                return Err(TraceError::Parse {
                    line: 0,
                    reason: format!("snapshot step {} does not match row step {}", e.step, row.step),
                });
            }
            row.snapshot = Some(e.state);
        }
        Ok(())
    }
}
