//! Files written for a scenario run.

use std::fs;
use std::path::{Path, PathBuf};

use super::plot::{Chart, Series};
use super::Metrics;
use crate::error::OutputError;
use crate::simulation::Trace;

pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRAJECTORY_FILE: &str = "trajectory.svg";
pub const ATTITUDE_FILE: &str = "attitude.svg";
/// Only written when the run has a nonzero velocity reference.
pub const VELOCITY_FILE: &str = "velocity.svg";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub paths: Vec<PathBuf>,
}

fn write(dir: &Path, name: &str, contents: &[u8], out: &mut Vec<PathBuf>) -> Result<(), OutputError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| OutputError::Io { path: path.clone(), source })?;
    out.push(path);
    Ok(())
}

pub fn trajectory_chart(trace: &Trace) -> Chart {
    let truth = trace.rows.iter().map(|r| (r.position.px, r.position.py)).collect();
    let odo = trace.rows.iter().map(|r| (r.odometry.px, r.odometry.py)).collect();
    let mut c = Chart::new("Wheel trajectory", "x [m]", "y [m]")
        .with(Series::new("ground truth", "#1f77b4", truth))
        .with(Series::new("odometry", "#ff7f0e", odo).dashed());
    c.equal_aspect = true;
    c
}

pub fn attitude_chart(trace: &Trace) -> Chart {
    let deg = |i: usize| trace.rows.iter().map(|r| (r.t, r.state.q[i].to_degrees())).collect();
    Chart::new("Body attitude", "t [s]", "angle [deg]")
        .with(Series::new("theta1 (pitch)", "#1f77b4", deg(0)))
        .with(Series::new("theta2 (roll)", "#d62728", deg(1)))
}

pub fn velocity_chart(trace: &Trace) -> Chart {
    let col = |f: &dyn Fn(&crate::simulation::TraceRow) -> f64| trace.rows.iter().map(|r| (r.t, f(r))).collect();
    Chart::new("Wheel velocity", "t [s]", "rate [rad/s]")
        .with(Series::new("psi1_dot", "#1f77b4", col(&|r| r.psi_dot()[0])))
        .with(Series::new("psi1_dot ref", "#1f77b4", col(&|r| r.psi_dot_ref[0])).dashed())
        .with(Series::new("psi2_dot", "#d62728", col(&|r| r.psi_dot()[1])))
        .with(Series::new("psi2_dot ref", "#d62728", col(&|r| r.psi_dot_ref[1])).dashed())
}

/// Write the trace, metrics and plots into `dir` (created if missing).
pub fn emit_outputs(trace: &Trace, metrics: &Metrics, dir: &Path) -> Result<OutputFiles, OutputError> {
    if trace.is_empty() {
        return Err(OutputError::EmptyTrace);
    }
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    let mut paths = Vec::new();

    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    write(dir, TRACE_FILE, &csv, &mut paths)?;
    write(dir, METRICS_FILE, (metrics.to_json() + "\n").as_bytes(), &mut paths)?;
    write(dir, TRAJECTORY_FILE, trajectory_chart(trace).render().as_bytes(), &mut paths)?;
    write(dir, ATTITUDE_FILE, attitude_chart(trace).render().as_bytes(), &mut paths)?;
    if trace.rows.iter().any(|r| r.psi_dot_ref != nalgebra::Vector2::zeros()) {
        write(dir, VELOCITY_FILE, velocity_chart(trace).render().as_bytes(), &mut paths)?;
    }
    Ok(OutputFiles { paths })
}
