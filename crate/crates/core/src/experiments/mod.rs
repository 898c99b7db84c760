//! Scenario harness for the five balancing experiments: station keeping,
//! push recovery, velocity tracking, path following and incline balancing.
//!
//! Each [`ScenarioSpec`] fixes everything a run depends on, so
//! [`run_scenario`] is deterministic. [`compute_metrics`] is a pure function
//! of the scenario, the parameters and the trace; recomputing it from a written
//! CSV gives the same [`Metrics`].

pub mod geometry;
mod outputs;
pub mod plot;

use nalgebra::Vector2;
use serde::{Serialize, Serializer};

use crate::control::{GainSet, VelocityReference};
use crate::dynamics::{equilibrium_pitch, InclineConfig};
use crate::error::ScenarioError;
use crate::linearization::linear_coeffs;
use crate::model::RobotParams;
use crate::simulation::{run, Disturbance, PushAxis, SensorModel, SensorProfile, SimConfig, Trace, TraceRow};

pub use geometry::{min_enclosing_circle, Circle, Point};
pub use outputs::{emit_outputs, OutputFiles};

pub const DEFAULT_PUSH_TORQUE: f64 = 1.5;
pub const DEFAULT_PUSH_DURATION: f64 = 0.2;
pub const DEFAULT_TILT_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    StationKeeping,
    Disturbance,
    VelocityTracking,
    PathFollowing,
    Incline,
}

/// Trapezoidal velocity reference: hold zero until `start`, ramp to `peak`,
/// hold, ramp back to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidProfile {
    pub start: f64,
    pub ramp_up: f64,
    pub plateau: f64,
    pub ramp_down: f64,
    pub peak: VelocityReference,
}

impl TrapezoidProfile {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let d = [self.start, self.ramp_up, self.plateau, self.ramp_down];
        if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.peak.is_finite() {
            return Err(ScenarioError::Incomplete(format!("bad trapezoid {self:?}")));
        }
        Ok(())
    }

    pub fn plateau_start(&self) -> f64 {
        self.start + self.ramp_up
    }

    pub fn plateau_end(&self) -> f64 {
        self.plateau_start() + self.plateau
    }

    pub fn end(&self) -> f64 {
        self.plateau_end() + self.ramp_down
    }

    /// Fraction of `peak` commanded at `t`.
    pub fn scale(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end() {
            0.0
        } else if t < self.plateau_start() {
            (t - self.start) / self.ramp_up
        } else if t < self.plateau_end() {
            1.0
        } else {
            (self.end() - t) / self.ramp_down
        }
    }

    pub fn at(&self, t: f64) -> VelocityReference {
        VelocityReference {
            psi_dot_ref: self.peak.psi_dot_ref * self.scale(t),
        }
    }
}

/// Waypoint route driven at fixed speed from the start position.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    /// Visited in order after the start point (the origin).
    pub waypoints: Vec<Point>,
    /// m/s
    pub speed: f64,
    /// A waypoint counts as reached within this distance, m.
    pub proximity: f64,
    /// Slew limit on the commanded ground velocity, m/s².
    pub accel: f64,
}

impl PathSpec {
    pub const DEFAULT_SPEED: f64 = 0.1;
    pub const DEFAULT_PROXIMITY: f64 = 0.02;
    pub const DEFAULT_ACCEL: f64 = 0.5;

    pub fn new(waypoints: Vec<Point>, speed: f64) -> Self {
        Self {
            waypoints,
            speed,
            proximity: Self::DEFAULT_PROXIMITY,
            accel: Self::DEFAULT_ACCEL,
        }
    }

    /// Closed equilateral triangle starting along +x.
    pub fn triangle(side: f64, speed: f64) -> Self {
        let h = side * 3f64.sqrt() / 2.0;
        Self::new(
            vec![Point::new(side, 0.0), Point::new(side / 2.0, h), Point::new(0.0, 0.0)],
            speed,
        )
    }

    /// Closed circle through the origin, centred on +y, counter-clockwise.
    pub fn circle(radius: f64, segments: usize, speed: f64) -> Self {
        let pts = (1..=segments)
            .map(|k| {
                let a = -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * k as f64 / segments as f64;
                let p = Point::new(radius * a.cos(), radius + radius * a.sin());
                if k == segments { Point::zeros() } else { p }
            })
            .collect();
        Self::new(pts, speed)
    }

    /// The route including the start point.
    pub fn polyline(&self) -> Vec<Point> {
        std::iter::once(Point::zeros()).chain(self.waypoints.iter().copied()).collect()
    }

    pub fn length(&self) -> f64 {
        self.polyline().windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.waypoints.is_empty() {
            return Err(ScenarioError::Incomplete("path has no waypoints".into()));
        }
        if self.waypoints.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(ScenarioError::Incomplete("non-finite waypoint".into()));
        }
        for (name, v) in [("speed", self.speed), ("proximity", self.proximity), ("accel", self.accel)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ScenarioError::Incomplete(format!("path {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Turns waypoints into a slew-limited velocity reference.
///
/// The scheduler steers a carrot it integrates from its own commands; the
/// position loop then pulls the robot onto the carrot.
#[derive(Debug, Clone)]
pub struct PathScheduler {
    path: PathSpec,
    next: usize,
    carrot: Point,
    velocity: Vector2<f64>,
    period: f64,
}

impl PathScheduler {
    pub fn new(path: PathSpec, period: f64) -> Self {
        Self {
            path,
            next: 0,
            carrot: Point::zeros(),
            velocity: Vector2::zeros(),
            period,
        }
    }

    pub fn finished(&self) -> bool {
        self.next >= self.path.waypoints.len()
    }

    pub fn carrot(&self) -> Point {
        self.carrot
    }

    /// Ground velocity for the next control period.
    pub fn step(&mut self) -> Vector2<f64> {
        while let Some(w) = self.path.waypoints.get(self.next) {
            if (w - self.carrot).norm() > self.path.proximity {
                break;
            }
            self.next += 1;
        }
        let desired = match self.path.waypoints.get(self.next) {
            Some(w) => {
                let d = w - self.carrot;
                // Slow down on the final approach so the route ends at rest.
                let last = self.next + 1 == self.path.waypoints.len();
                let cap = if last { (2.0 * self.path.accel * d.norm()).sqrt() } else { f64::INFINITY };
                d.normalize() * self.path.speed.min(cap)
            }
            None => Vector2::zeros(),
        };
        let dv = desired - self.velocity;
        let max = self.path.accel * self.period;
        self.velocity += if dv.norm() > max { dv * (max / dv.norm()) } else { dv };
        self.carrot += self.velocity * self.period;
        self.velocity
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioParams {
    StationKeeping,
    Disturbance { pushes: Vec<Disturbance> },
    VelocityTracking { profile: TrapezoidProfile },
    PathFollowing { path: PathSpec },
    /// Slope angle, rad, uphill along +x.
    Incline { gamma: f64 },
}

impl ScenarioParams {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Self::StationKeeping => ScenarioKind::StationKeeping,
            Self::Disturbance { .. } => ScenarioKind::Disturbance,
            Self::VelocityTracking { .. } => ScenarioKind::VelocityTracking,
            Self::PathFollowing { .. } => ScenarioKind::PathFollowing,
            Self::Incline { .. } => ScenarioKind::Incline,
        }
    }
}

/// Pass/fail limits and metric windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criteria {
    /// Leading fraction of the run ignored by steady-state metrics.
    pub settle_fraction: f64,
    pub pos_tol: f64,
    pub angle_tol: f64,
    /// Span before a push averaged for the resting position, s.
    pub pre_push_window: f64,
    pub max_diameter_ideal: f64,
    pub max_diameter_realistic: f64,
    pub max_recovery_time: f64,
    pub max_tracking_error_pct: f64,
    pub lean_law_rel_tol: f64,
    pub max_path_rms: f64,
    /// A waypoint counts as visited when the robot passes this close, m.
    pub waypoint_tol: f64,
    pub incline_tol: f64,
    pub flat_pitch_tol: f64,
}

impl Default for Criteria {
    fn default() -> Self {
        Self {
            settle_fraction: 0.5,
            pos_tol: 0.05,
            angle_tol: 1f64.to_radians(),
            pre_push_window: 1.0,
            max_diameter_ideal: 0.005,
            max_diameter_realistic: 0.10,
            max_recovery_time: 3.0,
            max_tracking_error_pct: 5.0,
            lean_law_rel_tol: 0.10,
            max_path_rms: 0.05,
            waypoint_tol: 0.1,
            incline_tol: 0.5f64.to_radians(),
            flat_pitch_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub params: ScenarioParams,
    pub duration: f64,
    /// Initial body tilt from the gravity vertical, rad.
    pub tilt: [f64; 2],
    pub sensor: SensorProfile,
    pub seed: u64,
    pub criteria: Criteria,
}

impl ScenarioSpec {
    pub const NAMES: [&'static str; 6] = [
        "station-keeping",
        "disturbance",
        "velocity-tracking",
        "path-triangle",
        "path-circle",
        "incline",
    ];

    fn base(name: &str, params: ScenarioParams, duration: f64, tilt: [f64; 2]) -> Self {
        Self {
            name: name.into(),
            params,
            duration,
            tilt,
            sensor: SensorProfile::Realistic,
            seed: 0,
            criteria: Criteria::default(),
        }
    }

    /// Release from 5° on both axes and hold position for 20 s.
    pub fn station_keeping() -> Self {
        let t = DEFAULT_TILT_DEG.to_radians();
        Self::base("station-keeping", ScenarioParams::StationKeeping, 20.0, [t, t])
    }

    /// Pitch push at 4 s, roll push at 9 s.
    pub fn disturbance() -> Self {
        let push = |start, axis| Disturbance {
            start,
            duration: DEFAULT_PUSH_DURATION,
            axis,
            torque: DEFAULT_PUSH_TORQUE,
        };
        let pushes = vec![push(4.0, PushAxis::Theta1), push(9.0, PushAxis::Theta2)];
        Self::base("disturbance", ScenarioParams::Disturbance { pushes }, 14.0, [0.0, 0.0])
    }

    /// Trapezoid to `vx` m/s: 1 s ramps around an 8 s plateau, starting once
    /// the release transient has died out.
    pub fn velocity_tracking(vx: f64, p: &RobotParams) -> Result<Self, ScenarioError> {
        let peak = VelocityReference::from_ground_velocity(vx, 0.0, p)
            .map_err(|e| ScenarioError::Incomplete(e.to_string()))?;
        let profile = TrapezoidProfile {
            start: 4.0,
            ramp_up: 1.0,
            plateau: 8.0,
            ramp_down: 1.0,
            peak,
        };
        Ok(Self::base(
            "velocity-tracking",
            ScenarioParams::VelocityTracking { profile },
            profile.end() + 4.0,
            [0.0, 0.0],
        ))
    }

    fn path(name: &str, path: PathSpec) -> Self {
        // Route time plus slack for the corners and the final stop.
        let duration = (path.length() / path.speed * 1.3 + 6.0).ceil();
        Self::base(name, ScenarioParams::PathFollowing { path }, duration, [0.0, 0.0])
    }

    pub fn path_triangle() -> Self {
        Self::path("path-triangle", PathSpec::triangle(0.6, PathSpec::DEFAULT_SPEED))
    }

    pub fn path_circle() -> Self {
        Self::path("path-circle", PathSpec::circle(0.3, 36, PathSpec::DEFAULT_SPEED))
    }

    /// Released upright (gravity vertical) on a slope of `gamma` rad.
    pub fn incline(gamma: f64) -> Self {
        Self::base("incline", ScenarioParams::Incline { gamma }, 20.0, [0.0, 0.0])
    }

    /// Built-in scenario by CLI name.
    pub fn builtin(name: &str, p: &RobotParams) -> Result<Self, ScenarioError> {
        match name {
            "station-keeping" => Ok(Self::station_keeping()),
            "disturbance" => Ok(Self::disturbance()),
            "velocity-tracking" => Self::velocity_tracking(0.2, p),
            "path-triangle" => Ok(Self::path_triangle()),
            "path-circle" => Ok(Self::path_circle()),
            "incline" => Ok(Self::incline(15f64.to_radians())),
            other => Err(ScenarioError::Incomplete(format!(
                "unknown scenario `{other}` (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn all(p: &RobotParams) -> Result<Vec<Self>, ScenarioError> {
        Self::NAMES.iter().map(|n| Self::builtin(n, p)).collect()
    }

    pub fn with_sensor(mut self, sensor: SensorProfile, seed: u64) -> Self {
        self.sensor = sensor;
        self.seed = seed;
        self
    }

    pub fn kind(&self) -> ScenarioKind {
        self.params.kind()
    }

    pub fn sensor_model(&self) -> SensorModel {
        SensorModel::from_profile(self.sensor, self.seed)
    }

    pub fn incline_config(&self) -> Result<InclineConfig, ScenarioError> {
        match self.params {
            ScenarioParams::Incline { gamma } => Ok(InclineConfig::aligned(gamma)?),
            _ => Ok(InclineConfig::flat()),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(ScenarioError::Incomplete("duration must be positive".into()));
        }
        if !self.tilt.iter().all(|t| t.is_finite()) {
            return Err(ScenarioError::Incomplete("tilt must be finite".into()));
        }
        match &self.params {
            ScenarioParams::StationKeeping => {}
            ScenarioParams::Disturbance { pushes } => {
                if pushes.is_empty() {
                    return Err(ScenarioError::Incomplete("disturbance needs at least one push".into()));
                }
                if pushes.windows(2).any(|w| w[1].start < w[0].end()) {
                    return Err(ScenarioError::Incomplete("pushes must be ordered and disjoint".into()));
                }
                if pushes.iter().any(|d| d.end() >= self.duration) {
                    return Err(ScenarioError::Incomplete("push ends after the run".into()));
                }
            }
            ScenarioParams::VelocityTracking { profile } => {
                profile.validate()?;
                if profile.plateau <= 0.0 || profile.plateau_end() > self.duration {
                    return Err(ScenarioError::Incomplete("plateau must lie inside the run".into()));
                }
            }
            ScenarioParams::PathFollowing { path } => path.validate()?,
            ScenarioParams::Incline { .. } => {
                self.incline_config()?;
            }
        }
        Ok(())
    }

    pub fn sim_config(&self) -> Result<SimConfig, ScenarioError> {
        self.validate()?;
        let mut cfg = SimConfig::new(self.duration, self.incline_config()?, self.tilt);
        if let ScenarioParams::Disturbance { pushes } = &self.params {
            cfg.disturbances = pushes.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub trace: Trace,
    pub metrics: Metrics,
}

pub fn run_scenario(spec: &ScenarioSpec, p: &RobotParams, gains: &GainSet) -> Result<ScenarioRun, ScenarioError> {
    let cfg = spec.sim_config()?;
    let sm = spec.sensor_model();
    let trace = match &spec.params {
        ScenarioParams::VelocityTracking { profile } => run(&cfg, p, gains, &sm, |t| profile.at(t))?,
        ScenarioParams::PathFollowing { path } => {
            let mut sched = PathScheduler::new(path.clone(), cfg.control_period());
            let mut failure = None;
            let trace = run(&cfg, p, gains, &sm, |_| {
                let v = sched.step();
                VelocityReference::from_ground_velocity(v.x, v.y, p).unwrap_or_else(|e| {
                    failure = Some(e);
                    VelocityReference::zero()
                })
            })?;
            if let Some(e) = failure {
                return Err(ScenarioError::Incomplete(e.to_string()));
            }
            trace
        }
        _ => run(&cfg, p, gains, &sm, |_| VelocityReference::zero())?,
    };
    let metrics = compute_metrics(spec, p, &trace)?;
    Ok(ScenarioRun { trace, metrics })
}

/// Run scenarios on separate threads; results keep the input order.
pub fn run_all(specs: &[ScenarioSpec], p: &RobotParams, gains: &GainSet) -> Vec<Result<ScenarioRun, ScenarioError>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = specs.iter().map(|spec| s.spawn(move || run_scenario(spec, p, gains))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

fn inf_aware<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

fn inf_aware_vec<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct W(#[serde(serialize_with = "inf_aware")] Option<f64>);
    match v {
        Some(xs) => s.collect_seq(xs.iter().map(|x| W(Some(*x)))),
        None => s.serialize_none(),
    }
}

/// Scenario outcome. Fields that do not apply to the scenario kind are
/// `None` (`null` in JSON); a recovery that never happens is `inf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub sensor: String,
    pub seed: u64,
    pub duration: f64,
    pub fell: bool,
    pub fell_at: Option<f64>,
    /// m
    pub steady_state_region_diameter: Option<f64>,
    /// s, worst over all pushes.
    #[serde(serialize_with = "inf_aware")]
    pub recovery_time: Option<f64>,
    #[serde(serialize_with = "inf_aware_vec")]
    pub recovery_times: Option<Vec<f64>>,
    /// %
    pub velocity_tracking_error_pct: Option<f64>,
    /// Wheel first moves against the reference.
    pub initial_reversal: Option<bool>,
    /// Mean pitch over the scored plateau window, rad.
    pub plateau_pitch: Option<f64>,
    /// Steady lean predicted from ground friction, rad.
    pub lean_law_pitch: Option<f64>,
    /// m
    pub path_rms_deviation: Option<f64>,
    pub path_completed: Option<bool>,
    /// Gravity-referenced, rad.
    pub incline_equilibrium_pitch: Option<f64>,
    pub incline_expected_pitch: Option<f64>,
    pub failures: Vec<String>,
    pub passed: bool,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

fn position(r: &TraceRow) -> Point {
    Point::new(r.position.px, r.position.py)
}

fn settled_rows(trace: &Trace, settle_fraction: f64) -> &[TraceRow] {
    let Some(first) = trace.rows.first() else {
        return &[];
    };
    let t0 = first.t + settle_fraction.clamp(0.0, 1.0) * trace.duration();
    let i = trace.rows.partition_point(|r| r.t < t0);
    &trace.rows[i..]
}

/// Diameter of the smallest circle enclosing the ground-truth positions
/// after the first `settle_fraction` of the run.
pub fn compute_region_diameter(trace: &Trace, settle_fraction: f64) -> f64 {
    let pts: Vec<Point> = settled_rows(trace, settle_fraction).iter().map(position).collect();
    min_enclosing_circle(&pts).map_or(0.0, |c| c.diameter())
}

/// Time after `push_end` from which the robot stays within `pos_tol` of its
/// mean pre-push position and within `angle_tol` of upright until the end
/// of `rows`. Infinite if it never settles.
pub fn compute_recovery_time(
    rows: &[TraceRow],
    push_start: f64,
    push_end: f64,
    pos_tol: f64,
    angle_tol: f64,
    pre_window: f64,
) -> f64 {
    let pre: Vec<Point> = rows
        .iter()
        .filter(|r| r.t < push_start && r.t >= push_start - pre_window)
        .map(position)
        .collect();
    if pre.is_empty() {
        return f64::INFINITY;
    }
    let rest = pre.iter().sum::<Point>() / pre.len() as f64;
    let post = &rows[rows.partition_point(|r| r.t < push_end)..];
    if post.is_empty() {
        return f64::INFINITY;
    }
    let ok = |r: &TraceRow| {
        !r.fell && (position(r) - rest).norm() <= pos_tol && r.state.q[0].abs() <= angle_tol && r.state.q[1].abs() <= angle_tol
    };
    match post.iter().rposition(|r| !ok(r)) {
        None => 0.0,
        Some(i) if i + 1 == post.len() => f64::INFINITY,
        Some(i) => post[i + 1].t - push_end,
    }
}

/// Whether the first clear wheel motion after the reference starts is
/// against it. Wheel rate is averaged over [`REVERSAL_SMOOTHING`] and taken
/// relative to its mean over the second before the start.
pub fn initial_reversal(trace: &Trace, profile: &TrapezoidProfile) -> bool {
    let peak = profile.peak.psi_dot_ref[0];
    let rows = &trace.rows;
    let base = mean(
        rows.iter()
            .filter(|r| r.t >= profile.start - 1.0 && r.t < profile.start)
            .map(|r| r.psi_dot()[0]),
    )
    .unwrap_or(0.0);
    let thresh = REVERSAL_THRESHOLD * peak.abs();
    let from = rows.partition_point(|r| r.t < profile.start);
    let to = rows.partition_point(|r| r.t < profile.plateau_start());
    (from..to)
        .filter_map(|i| {
            let lo = rows[..=i].partition_point(|r| r.t < rows[i].t - REVERSAL_SMOOTHING).max(from);
            mean(rows[lo..=i].iter().map(|r| r.psi_dot()[0] - base))
        })
        .find(|v| v.abs() > thresh)
        .is_some_and(|v| v.signum() != peak.signum())
}

/// Averaging span for [`initial_reversal`], s.
pub const REVERSAL_SMOOTHING: f64 = 0.1;
/// Fraction of the peak rate that counts as clear motion.
pub const REVERSAL_THRESHOLD: f64 = 0.02;

fn mean<I: IntoIterator<Item = f64>>(it: I) -> Option<f64> {
    let (s, n) = it.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Recompute every metric for `spec` from a trace.
pub fn compute_metrics(spec: &ScenarioSpec, p: &RobotParams, trace: &Trace) -> Result<Metrics, ScenarioError> {
    let c = &spec.criteria;
    let mut m = Metrics {
        scenario: spec.name.clone(),
        kind: spec.kind(),
        sensor: spec.sensor.to_string(),
        seed: spec.seed,
        duration: trace.duration(),
        fell: trace.fell(),
        fell_at: trace.fell_at(),
        steady_state_region_diameter: None,
        recovery_time: None,
        recovery_times: None,
        velocity_tracking_error_pct: None,
        initial_reversal: None,
        plateau_pitch: None,
        lean_law_pitch: None,
        path_rms_deviation: None,
        path_completed: None,
        incline_equilibrium_pitch: None,
        incline_expected_pitch: None,
        failures: Vec::new(),
        passed: false,
    };
    let mut failures = Vec::new();
    let mut fail = |msg: String| failures.push(msg);
    if trace.is_empty() {
        fail("empty trace".into());
    }
    if let Some(t) = trace.fell_at() {
        fail(format!("fell at t = {t} s"));
    }

    match &spec.params {
        ScenarioParams::StationKeeping => {
            let d = compute_region_diameter(trace, c.settle_fraction);
            let limit = match spec.sensor {
                SensorProfile::Ideal => c.max_diameter_ideal,
                SensorProfile::Realistic => c.max_diameter_realistic,
            };
            if !(d < limit) {
                fail(format!("region diameter {d:.4} m not below {limit} m"));
            }
            m.steady_state_region_diameter = Some(d);
        }
        ScenarioParams::Disturbance { pushes } => {
            let times: Vec<f64> = pushes
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let until = pushes.get(i + 1).map_or(f64::INFINITY, |n| n.start);
                    let rows = &trace.rows[..trace.rows.partition_point(|r| r.t < until)];
                    compute_recovery_time(rows, d.start, d.end(), c.pos_tol, c.angle_tol, c.pre_push_window)
                })
                .collect();
            let worst = times.iter().copied().fold(0.0, f64::max);
            if !(worst <= c.max_recovery_time) {
                fail(format!("recovery time {worst} s exceeds {} s", c.max_recovery_time));
            }
            m.recovery_time = Some(worst);
            m.recovery_times = Some(times);
        }
        ScenarioParams::VelocityTracking { profile } => {
            let window = |a: f64, b: f64| trace.rows.iter().filter(move |r| r.t >= a && r.t < b);
            let scored = || window(profile.plateau_start() + profile.plateau / 2.0, profile.plateau_end());
            let peak = profile.peak.psi_dot_ref;
            // Error of the plateau-mean velocity; sample noise is not tracking error.
            let n = scored().count();
            let err = (n > 0).then(|| {
                let e = scored().map(|r| r.psi_dot() - r.psi_dot_ref).sum::<Vector2<f64>>() / n as f64;
                100.0 * e.norm() / peak.norm()
            });
            match err {
                Some(e) if e < c.max_tracking_error_pct => {}
                Some(e) => fail(format!("tracking error {e:.2}% not below {}%", c.max_tracking_error_pct)),
                None => fail("no samples on the plateau".into()),
            }
            m.velocity_tracking_error_pct = err;

            if peak[0] != 0.0 {
                let reversal = initial_reversal(trace, profile);
                if !reversal {
                    fail("wheel did not first move against the reference".into());
                }
                m.initial_reversal = Some(reversal);

                let a3 = linear_coeffs(p).a3;
                let law = -p.mu_g * peak[0] / a3;
                let pitch = mean(scored().map(|r| r.state.q[0]));
                if let Some(th) = pitch {
                    if !((th - law).abs() <= c.lean_law_rel_tol * law.abs()) {
                        fail(format!("plateau pitch {th:.5} rad vs lean law {law:.5} rad"));
                    }
                }
                m.plateau_pitch = pitch;
                m.lean_law_pitch = Some(law);
            }
        }
        ScenarioParams::PathFollowing { path } => {
            let route = path.polyline();
            let rms = mean(trace.rows.iter().map(|r| geometry::distance_to_polyline(&position(r), &route).powi(2)))
                .map(f64::sqrt);
            let mut next = 0;
            for r in &trace.rows {
                if next < path.waypoints.len() && (position(r) - path.waypoints[next]).norm() <= c.waypoint_tol {
                    next += 1;
                }
            }
            let end = *route.last().expect("route has the start point");
            let home = trace.rows.last().is_some_and(|r| (position(r) - end).norm() <= c.pos_tol);
            let completed = next == path.waypoints.len() && home;
            if next < path.waypoints.len() {
                fail(format!("passed {next} of {} waypoints", path.waypoints.len()));
            } else if !home {
                fail("did not stop at the end of the route".into());
            }
            match rms {
                Some(v) if v < c.max_path_rms => {}
                Some(v) => fail(format!("path RMS deviation {v:.4} m not below {} m", c.max_path_rms)),
                None => {}
            }
            if path.speed > 0.2 {
                fail(format!("path speed {} m/s above 0.2 m/s", path.speed));
            }
            m.path_rms_deviation = rms;
            m.path_completed = Some(completed);
        }
        ScenarioParams::Incline { gamma } => {
            let expected = equilibrium_pitch(*gamma, p)?;
            let pitch = mean(settled_rows(trace, c.settle_fraction).iter().map(|r| r.state.q[0] - gamma));
            if let Some(th) = pitch {
                let tol = if *gamma == 0.0 { c.flat_pitch_tol } else { c.incline_tol };
                if !((th - expected).abs() <= tol) {
                    fail(format!("pitch {th:.5} rad vs equilibrium {expected:.5} rad"));
                }
            }
            m.incline_equilibrium_pitch = pitch;
            m.incline_expected_pitch = Some(expected);
        }
    }
    m.passed = failures.is_empty();
    m.failures = failures;
    Ok(m)
}
