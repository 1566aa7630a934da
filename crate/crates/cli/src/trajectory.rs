//! Trajectory and summary CSV schema.
//!
//! `trajectory.csv`: one row per control step,
//! `t, p{k}_x, p{k}_y, theta_{k} ... , phi_{i}_{j}, h_{i}_{j}, w_{i}_{j} ...`
//! with agents in index order (1-based) and pairs in lexicographic order.
//!
//! `summary.csv`: one row per pair with the minimum clearance, minimum
//! primal distance, and the largest post-transient duality gap.

use std::path::Path;

use ellipse_cbf::sim::SimLog;
use thiserror::Error;

use crate::csvfmt::{fmt_float, record};

/// Transient horizon (seconds) excluded from the summary's gap statistic.
pub const POST_TRANSIENT_START: f64 = 0.5;

pub fn trajectory_header(agents: usize, pairs: &[(usize, usize)]) -> String {
    let mut cols = vec!["t".to_string()];
    for k in 1..=agents {
        cols.push(format!("p{k}_x"));
        cols.push(format!("p{k}_y"));
        cols.push(format!("theta_{k}"));
    }
    for &(i, j) in pairs {
        cols.push(format!("phi_{}_{}", i + 1, j + 1));
        cols.push(format!("h_{}_{}", i + 1, j + 1));
        cols.push(format!("w_{}_{}", i + 1, j + 1));
    }
    record(&cols)
}

pub fn write_trajectory(log: &SimLog<f64>) -> String {
    let pairs: Vec<(usize, usize)> = log
        .records
        .first()
        .map(|r| r.pairs.iter().map(|p| (p.i, p.j)).collect())
        .unwrap_or_default();
    let agents = log.records.first().map_or(0, |r| r.states.len());
    let mut out = trajectory_header(agents, &pairs);
    for rec in &log.records {
        let mut fields = vec![fmt_float(rec.t)];
        for state in &rec.states {
            fields.push(fmt_float(state.p.x));
            fields.push(fmt_float(state.p.y));
            fields.push(fmt_float(state.theta()));
        }
        for pair in &rec.pairs {
            fields.push(fmt_float(pair.phi));
            fields.push(fmt_float(pair.h));
            fields.push(fmt_float(pair.w_star));
        }
        out.push_str(&record(&fields));
    }
    out
}

pub fn write_summary(log: &SimLog<f64>) -> String {
    let mut out = record(&[
        "pair".to_string(),
        "min_h".to_string(),
        "min_w".to_string(),
        "max_gap_post_transient".to_string(),
    ]);
    let Some(first) = log.records.first() else {
        return out;
    };
    for (k, pair) in first.pairs.iter().enumerate() {
        let mut min_h = f64::INFINITY;
        let mut min_w = f64::INFINITY;
        let mut max_gap = f64::NEG_INFINITY;
        let mut max_gap_any = f64::NEG_INFINITY;
        for rec in &log.records {
            let p = &rec.pairs[k];
            min_h = min_h.min(p.h);
            min_w = min_w.min(p.w_star);
            max_gap_any = max_gap_any.max(p.gap);
            if rec.t >= POST_TRANSIENT_START {
                max_gap = max_gap.max(p.gap);
            }
        }
        // Short runs have no post-transient window; report over everything.
        if !max_gap.is_finite() {
            max_gap = max_gap_any;
        }
        out.push_str(&record(&[
            format!("{}_{}", pair.i + 1, pair.j + 1),
            fmt_float(min_h),
            fmt_float(min_w),
            fmt_float(max_gap),
        ]));
    }
    out
}

#[derive(Debug, Error)]
pub enum TrajectoryReadError {
    #[error("could not read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("trajectory file is empty")]
    Empty,
    #[error("unknown column `{column}`")]
    UnknownColumn { column: String },
    #[error("row {row}: expected {expected} fields, got {got}")]
    FieldCount {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}: invalid number `{value}`")]
    BadNumber { row: usize, value: String },
}

pub struct TrajectoryRow {
    pub t: f64,
    /// Per agent: (x, y, theta).
    pub states: Vec<(f64, f64, f64)>,
    /// Per pair: (phi, h, w).
    pub pairs: Vec<(f64, f64, f64)>,
}

pub struct TrajectoryData {
    pub agents: usize,
    /// Zero-based pair indices in column order.
    pub pairs: Vec<(usize, usize)>,
    pub rows: Vec<TrajectoryRow>,
}

/// Parses a trajectory CSV, validating the header against the schema.
pub fn read_trajectory(path: &Path) -> Result<TrajectoryData, TrajectoryReadError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrajectoryReadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(TrajectoryReadError::Empty)?;

    let mut agents = 0usize;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (c, col) in header.split(',').enumerate() {
        if c == 0 {
            if col != "t" {
                return Err(TrajectoryReadError::UnknownColumn {
                    column: col.to_string(),
                });
            }
            continue;
        }
        if let Some(rest) = col.strip_prefix("theta_") {
            if rest.parse::<usize>() == Ok(agents + 1) && pairs.is_empty() {
                agents += 1;
                continue;
            }
        }
        if col.strip_prefix('p').is_some_and(|r| {
            let agent_col = r.strip_suffix("_x").or_else(|| r.strip_suffix("_y"));
            agent_col.and_then(|a| a.parse::<usize>().ok()) == Some(agents + 1) && pairs.is_empty()
        }) {
            continue;
        }
        let pair_col = |prefix: &str, col: &str| -> Option<(usize, usize)> {
            let rest = col.strip_prefix(prefix)?;
            let (i, j) = rest.split_once('_')?;
            Some((i.parse::<usize>().ok()? - 1, j.parse::<usize>().ok()? - 1))
        };
        if let Some(ij) = pair_col("phi_", col) {
            pairs.push(ij);
            continue;
        }
        if pair_col("h_", col).map(|ij| Some(&ij) == pairs.last()) == Some(true)
            || pair_col("w_", col).map(|ij| Some(&ij) == pairs.last()) == Some(true)
        {
            continue;
        }
        return Err(TrajectoryReadError::UnknownColumn {
            column: col.to_string(),
        });
    }

    let expected = 1 + 3 * agents + 3 * pairs.len();
    let mut rows = Vec::new();
    for (r, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(TrajectoryReadError::FieldCount {
                row: r + 2,
                expected,
                got: fields.len(),
            });
        }
        let num = |v: &str| -> Result<f64, TrajectoryReadError> {
            v.parse().map_err(|_| TrajectoryReadError::BadNumber {
                row: r + 2,
                value: v.to_string(),
            })
        };
        let t = num(fields[0])?;
        let mut states = Vec::with_capacity(agents);
        for k in 0..agents {
            states.push((
                num(fields[1 + 3 * k])?,
                num(fields[2 + 3 * k])?,
                num(fields[3 + 3 * k])?,
            ));
        }
        let base = 1 + 3 * agents;
        let mut pair_vals = Vec::with_capacity(pairs.len());
        for k in 0..pairs.len() {
            pair_vals.push((
                num(fields[base + 3 * k])?,
                num(fields[base + 3 * k + 1])?,
                num(fields[base + 3 * k + 2])?,
            ));
        }
        rows.push(TrajectoryRow {
            t,
            states,
            pairs: pair_vals,
        });
    }
    Ok(TrajectoryData {
        agents,
        pairs,
        rows,
    })
}
