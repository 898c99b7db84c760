use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("parameter document: {0}")]
    Parse(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("unknown preset `{0}` (expected \"prototype\")")]
    UnknownPreset(String),
    #[error("invalid parameters: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("degenerate kinematics: R = {wheel_radius}, n·r = {roller_term}")]
    Degenerate { wheel_radius: f64, roller_term: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("mass matrix singular (|det| = {det:e})")]
    SingularMassMatrix { det: f64 },
    #[error("no equilibrium pitch on incline γ = {gamma} rad (ratio {ratio})")]
    NoEquilibrium { gamma: f64, ratio: f64 },
    #[error("incline must be aligned with |γ| < π/2, got γ = {0}")]
    InvalidIncline(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("(A, B) is not controllable (controllability rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },
    #[error("weight matrix invalid: {0}")]
    InvalidWeights(&'static str),
    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("Lyapunov equation singular")]
    SingularLyapunov,
    #[error("closed loop not stabilizing (spectral abscissa {0})")]
    NotStabilizing(f64),
    #[error("DC gain matrix C(BK - A)^-1 B is singular")]
    SingularDcGain,
}

#[derive(Debug, Error)]
pub enum GainsFileError {
    #[error("gains document: {0}")]
    Parse(String),
    #[error("`{field}` has {got} entries, expected {expected}")]
    Shape {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("`{0}` must be finite and non-negative")]
    Invalid(&'static str),
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("non-finite state at step {step} (t = {t} s)")]
    NonFinite { step: u64, t: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("trace CSV header mismatch: {0}")]
    Header(String),
    #[error("trace CSV line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("incomplete scenario: {0}")]
    Incomplete(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("nothing to write: trace is empty")]
    EmptyTrace,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}
