//! Plot-ready data extraction from a finished run: ellipse boundary
//! polylines, supporting-line segments, and clearance segments at requested
//! snapshot times, plus the full clearance/distance time series.
//!
//! Shapes are not part of the trajectory schema, so the command reads
//! `scenario_resolved.csv` from the directory containing the trajectory file
//! (the run command always writes the two side by side).

use std::path::Path;
use std::time::Instant;

use ellipse_cbf::geometry::{
    boundary_point, deepest_point, effective_shape, AgentState, EllipseShape, SupportLineParam,
};
use ellipse_cbf::Vec2;

use crate::csvfmt::{fmt_float, record};
use crate::trajectory::{read_trajectory, TrajectoryData, TrajectoryRow};
use crate::{scenario, CliError, RunManifest, EXIT_OK};

/// Samples per ellipse boundary polyline.
const BOUNDARY_SAMPLES: usize = 64;
/// Half-length of the emitted supporting-line segment (m).
const LINE_HALF_LENGTH: f64 = 1.0;

pub fn cmd_plotdata(
    trajectory_path: &Path,
    out_dir: &Path,
    snapshots: &[f64],
) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new(None, out_dir);

    let data: TrajectoryData =
        read_trajectory(trajectory_path).map_err(|e| CliError::Validation(e.to_string()))?;
    if data.rows.is_empty() {
        return Err(CliError::Validation("trajectory has no rows".to_string()));
    }

    let resolved_path = trajectory_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("scenario_resolved.csv");
    let resolved_text = std::fs::read_to_string(&resolved_path).map_err(|e| {
        CliError::Validation(format!(
            "cannot read {} (needed for agent shapes): {e}",
            resolved_path.display()
        ))
    })?;
    let config = scenario::parse(&resolved_text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", resolved_path.display())))?;
    if config.agents.len() != data.agents {
        return Err(CliError::Validation(format!(
            "scenario has {} agents but trajectory has {}",
            config.agents.len(),
            data.agents
        )));
    }
    let shapes: Vec<EllipseShape<f64>> = config.agents.iter().map(|a| a.shape).collect();

    std::fs::create_dir_all(out_dir)?;

    for (s, &t_req) in snapshots.iter().enumerate() {
        let row = nearest_row(&data.rows, t_req);
        let states: Vec<AgentState<f64>> = row
            .states
            .iter()
            .map(|&(x, y, theta)| AgentState::new(Vec2::new(x, y), theta))
            .collect();

        // Boundary polylines.
        let mut boundaries = record(&[
            "t".into(),
            "agent".into(),
            "k".into(),
            "x".into(),
            "y".into(),
        ]);
        for (a, state) in states.iter().enumerate() {
            let q = effective_shape(state, &shapes[a]).matrix();
            for k in 0..BOUNDARY_SAMPLES {
                let alpha = 2.0 * std::f64::consts::PI * k as f64 / BOUNDARY_SAMPLES as f64;
                let point = q * Vec2::unit(alpha) + state.p;
                boundaries.push_str(&record(&[
                    fmt_float(row.t),
                    (a + 1).to_string(),
                    k.to_string(),
                    fmt_float(point.x),
                    fmt_float(point.y),
                ]));
            }
        }
        write_file(&mut manifest, &format!("boundaries_s{s}.csv"), &boundaries)?;

        // Supporting-line segments, one per pair, centered at the tangency point.
        let mut lines = record(&[
            "t".into(),
            "pair".into(),
            "m_x".into(),
            "m_y".into(),
            "x0".into(),
            "y0".into(),
            "x1".into(),
            "y1".into(),
        ]);
        // Clearance segments from the line to the deepest point of the partner.
        let mut clearance = record(&[
            "t".into(),
            "pair".into(),
            "x0".into(),
            "y0".into(),
            "x1".into(),
            "y1".into(),
            "h".into(),
        ]);
        for (k, &(i, j)) in data.pairs.iter().enumerate() {
            let (phi, h, _) = row.pairs[k];
            let line = SupportLineParam::new(phi);
            let m = boundary_point(&states[i], &shapes[i], &line);
            let normal = effective_shape(&states[i], &shapes[i]).inverse() * line.direction();
            let tangent = normal.perp() / normal.norm();
            let a = m - tangent * LINE_HALF_LENGTH;
            let b = m + tangent * LINE_HALF_LENGTH;
            lines.push_str(&record(&[
                fmt_float(row.t),
                format!("{}_{}", i + 1, j + 1),
                fmt_float(m.x),
                fmt_float(m.y),
                fmt_float(a.x),
                fmt_float(a.y),
                fmt_float(b.x),
                fmt_float(b.y),
            ]));

            let n = deepest_point(&states[i], &shapes[i], &states[j], &shapes[j], &line);
            let foot = n - (normal / normal.norm()) * h;
            clearance.push_str(&record(&[
                fmt_float(row.t),
                format!("{}_{}", i + 1, j + 1),
                fmt_float(foot.x),
                fmt_float(foot.y),
                fmt_float(n.x),
                fmt_float(n.y),
                fmt_float(h),
            ]));
        }
        write_file(&mut manifest, &format!("lines_s{s}.csv"), &lines)?;
        write_file(&mut manifest, &format!("clearance_s{s}.csv"), &clearance)?;
    }

    // Clearance / distance / gap time series for every pair.
    let mut header = vec!["t".to_string()];
    for &(i, j) in &data.pairs {
        header.push(format!("h_{}_{}", i + 1, j + 1));
        header.push(format!("w_{}_{}", i + 1, j + 1));
        header.push(format!("gap_{}_{}", i + 1, j + 1));
    }
    let mut series = record(&header);
    for row in &data.rows {
        let mut fields = vec![fmt_float(row.t)];
        for &(_, h, w) in &row.pairs {
            fields.push(fmt_float(h));
            fields.push(fmt_float(w));
            fields.push(fmt_float(w - h));
        }
        series.push_str(&record(&fields));
    }
    write_file(&mut manifest, "timeseries.csv", &series)?;

    manifest.exit_status = EXIT_OK;
    manifest.wall = start.elapsed();
    Ok(manifest)
}

fn nearest_row(rows: &[TrajectoryRow], t: f64) -> &TrajectoryRow {
    rows.iter()
        .min_by(|a, b| {
            (a.t - t)
                .abs()
                .partial_cmp(&(b.t - t).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("nonempty rows")
}

fn write_file(manifest: &mut RunManifest, name: &str, contents: &str) -> Result<(), CliError> {
    let path = manifest.out_dir.join(name);
    std::fs::write(&path, contents)?;
    manifest.files.push(path);
    Ok(())
}
