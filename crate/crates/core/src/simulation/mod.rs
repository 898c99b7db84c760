//! Closed-loop simulation: RK4 physics at a fixed step under a zero-order-hold
//! digital controller.
//!
//! [`Engine`] is the stepped form (one control tick per call) used by both
//! the offline [`run`] and the teleoperation service.

pub mod sensors;
pub mod trace;

use nalgebra::{Vector2, Vector4};

use crate::control::{control_step, pi_compensate, ControllerState, GainSet, VelocityReference};
use crate::dynamics::{forward_dynamics, gravity_attitude, total_energy, InclineConfig};
use crate::error::{DynamicsError, SimError};
use crate::kinematics::{odometry_update, MotorAngles, PlanarPosition};
use crate::model::{ControlInput, GeneralizedState, RobotParams};

pub use sensors::{quantize, SensorModel, SensorProfile, SensorReading, Sensors};
pub use trace::{read_trace_csv, Trace, TraceRow};

/// Gravity-referenced body angle beyond which the robot counts as fallen.
pub const FALL_ANGLE_DEG: f64 = 80.0;
pub const DEFAULT_PHYSICS_DT: f64 = 1e-3;

/// One classical RK4 step of `(q, q̇)`.
pub fn integrate_step(
    s: &GeneralizedState,
    u: &ControlInput,
    p: &RobotParams,
    inc: &InclineConfig,
    u_ext: &Vector4<f64>,
    dt: f64,
) -> Result<GeneralizedState, DynamicsError> {
    let f = |q: Vector4<f64>, dq: Vector4<f64>| -> Result<(Vector4<f64>, Vector4<f64>), DynamicsError> {
        let acc = forward_dynamics(&GeneralizedState::new(q, dq), u, p, inc, u_ext)?;
        Ok((dq, acc))
    };
    let (k1q, k1v) = f(s.q, s.dq)?;
    let (k2q, k2v) = f(s.q + k1q * (dt / 2.0), s.dq + k1v * (dt / 2.0))?;
    let (k3q, k3v) = f(s.q + k2q * (dt / 2.0), s.dq + k2v * (dt / 2.0))?;
    let (k4q, k4v) = f(s.q + k3q * dt, s.dq + k3v * dt)?;
    Ok(GeneralizedState::new(
        s.q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0),
        s.dq + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushAxis {
    Theta1,
    Theta2,
}

impl PushAxis {
    pub fn index(self) -> usize {
        match self {
            PushAxis::Theta1 => 0,
            PushAxis::Theta2 => 1,
        }
    }
}

/// External torque pulse on a body angle over `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub start: f64,
    pub duration: f64,
    pub axis: PushAxis,
    pub torque: f64,
}

impl Disturbance {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub physics_dt: f64,
    pub control_rate: f64,
    pub duration: f64,
    pub incline: InclineConfig,
    pub disturbances: Vec<Disturbance>,
    pub initial_state: GeneralizedState,
}

impl SimConfig {
    /// 125 Hz control, 1 kHz physics, starting at rest with the given tilt
    /// from the gravity vertical.
    pub fn new(duration: f64, incline: InclineConfig, tilt: [f64; 2]) -> Self {
        Self {
            physics_dt: DEFAULT_PHYSICS_DT,
            control_rate: sensors::DEFAULT_CONTROL_RATE,
            duration,
            incline,
            disturbances: Vec::new(),
            initial_state: GeneralizedState::tilted(incline.gamma + tilt[0], tilt[1]),
        }
    }

    pub fn control_period(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Physics steps per control tick.
    pub fn substeps(&self) -> Result<usize, SimError> {
        let ratio = self.control_period() / self.physics_dt;
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * ratio {
            return Err(SimError::Config(format!(
                "physics_dt {} does not divide the control period {}",
                self.physics_dt,
                self.control_period()
            )));
        }
        Ok(n as usize)
    }

    /// Control ticks after t = 0; the trace has one more row than this.
    pub fn ticks(&self) -> u64 {
        (self.duration * self.control_rate).round() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.physics_dt > 0.0 && self.physics_dt.is_finite()) {
            return Err(SimError::Config("physics_dt must be positive".into()));
        }
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return Err(SimError::Config("control_rate must be positive".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::Config("duration must be positive".into()));
        }
        self.substeps()?;
        self.incline.validate()?;
        if !self.initial_state.is_finite() {
            return Err(SimError::Config("initial state not finite".into()));
        }
        for d in &self.disturbances {
            if !(d.start >= 0.0 && d.duration >= 0.0 && d.torque.is_finite()) {
                return Err(SimError::Config(format!("bad disturbance {d:?}")));
            }
        }
        Ok(())
    }
}

/// Stepped closed-loop simulation.
///
/// Each [`Engine::step`] samples sensors, runs the position loop and the
/// state feedback at the current tick, records a row, then holds the torque
/// while integrating to the next tick.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: SimConfig,
    p: RobotParams,
    gains: GainSet,
    sensors: Sensors,
    controller: ControllerState,
    state: GeneralizedState,
    substeps: usize,
    tick: u64,
    psi0: Vector2<f64>,
    last_angles: Option<MotorAngles>,
    odometry: PlanarPosition,
    target: PlanarPosition,
    pushes: Vec<Disturbance>,
    fell: bool,
}

impl Engine {
    pub fn new(cfg: SimConfig, p: RobotParams, gains: GainSet, sm: SensorModel) -> Result<Self, SimError> {
        cfg.validate()?;
        let substeps = cfg.substeps()?;
        Ok(Self {
            state: cfg.initial_state,
            psi0: cfg.initial_state.psi(),
            pushes: cfg.disturbances.clone(),
            cfg,
            p,
            gains,
            sensors: Sensors::new(sm)?,
            controller: ControllerState::new(),
            substeps,
            tick: 0,
            last_angles: None,
            odometry: PlanarPosition::default(),
            target: PlanarPosition::default(),
            fell: false,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn params(&self) -> &RobotParams {
        &self.p
    }

    pub fn gains(&self) -> &GainSet {
        &self.gains
    }

    pub fn sensor_model(&self) -> &SensorModel {
        self.sensors.model()
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.control_period()
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn state(&self) -> &GeneralizedState {
        &self.state
    }

    pub fn has_fallen(&self) -> bool {
        self.fell
    }

    /// Contact point relative to the start, from absolute wheel angles.
    pub fn position(&self) -> PlanarPosition {
        let d = self.state.psi() - self.psi0;
        PlanarPosition::new(self.p.R * d[0], self.p.r * d[1])
    }

    pub fn target(&self) -> PlanarPosition {
        self.target
    }

    pub fn schedule_push(&mut self, d: Disturbance) {
        self.pushes.push(d);
    }

    fn push_torque(&self, t: f64) -> Vector4<f64> {
        let mut u = Vector4::zeros();
        for d in self.pushes.iter().filter(|d| d.active(t)) {
            u[d.axis.index()] += d.torque;
        }
        u
    }

    /// Advance one control tick under `reference` and return the record for
    /// the tick's start time. After a fall the torque is zero and the state
    /// is frozen.
    pub fn step(&mut self, reference: &VelocityReference) -> Result<TraceRow, SimError> {
        let row = self.control(reference);
        if !self.fell {
            self.advance(&ControlInput { u: row.u }, reference)?;
        }
        self.tick += 1;
        Ok(row)
    }

    fn control(&mut self, reference: &VelocityReference) -> TraceRow {
        let t = self.time();
        let period = self.cfg.control_period();
        let reading = self.sensors.sample(&self.state, &self.p, &self.cfg.incline, t);
        if let Some(prev) = self.last_angles {
            let delta = MotorAngles::new(
                reading.motor_angles.beta1 - prev.beta1,
                reading.motor_angles.beta2 - prev.beta2,
            );
            self.odometry = odometry_update(self.odometry, delta, &self.p);
        }
        self.last_angles = Some(reading.motor_angles);

        let (theta_ref, u, saturated) = if self.fell {
            (Vector2::zeros(), Vector2::zeros(), [false; 2])
        } else {
            let theta_ref = pi_compensate(&mut self.controller, &self.odometry, &self.target, period, &self.gains);
            let out = control_step(&reading.x, reference, &theta_ref, &self.gains);
            self.controller.saturated = out.saturated;
            (theta_ref, out.input.u, out.saturated)
        };
        let push = self.push_torque(t);

        TraceRow {
            t,
            state: self.state,
            measured: reading.x,
            odometry: self.odometry,
            position: self.position(),
            psi_dot_ref: reference.psi_dot_ref,
            theta_ref,
            u,
            saturated,
            push: Vector2::new(push[0], push[1]),
            energy: total_energy(&self.state, &self.p, &self.cfg.incline),
            fell: self.fell,
        }
    }

    fn advance(&mut self, u: &ControlInput, reference: &VelocityReference) -> Result<(), SimError> {
        let t0 = self.time();
        let h = self.cfg.physics_dt;
        for k in 0..self.substeps {
            let t = t0 + k as f64 * h;
            let u_ext = self.push_torque(t);
            let next = integrate_step(&self.state, u, &self.p, &self.cfg.incline, &u_ext, h)?;
            if !next.is_finite() {
                return Err(SimError::NonFinite { step: self.tick, t });
            }
            self.state = next;
        }
        let period = self.cfg.control_period();
        self.target.px += self.p.R * reference.psi_dot_ref[0] * period;
        self.target.py += self.p.r * reference.psi_dot_ref[1] * period;

        let limit = FALL_ANGLE_DEG.to_radians();
        if gravity_attitude(&self.state, &self.cfg.incline).iter().any(|a| a.abs() > limit) {
            self.fell = true;
        }
        Ok(())
    }
}

/// Run to `cfg.duration` (or until a fall), querying `schedule` at each tick.
pub fn run<F>(
    cfg: &SimConfig,
    p: &RobotParams,
    gains: &GainSet,
    sm: &SensorModel,
    mut schedule: F,
) -> Result<Trace, SimError>
where
    F: FnMut(f64) -> VelocityReference,
{
    let mut engine = Engine::new(cfg.clone(), *p, *gains, *sm)?;
    let ticks = cfg.ticks();
    let mut rows = Vec::with_capacity(ticks as usize + 1);
    for _ in 0..=ticks {
        let reference = schedule(engine.time());
        let row = engine.step(&reference)?;
        let fell = row.fell;
        rows.push(row);
        if fell {
            break;
        }
    }
    Ok(Trace { rows })
}
