//! Stepped simulation driven by operator commands.
//!
//! A [`Session`] owns one [`Engine`]. Commands are applied between ticks and
//! seen by the next [`Session::tick`]. Velocity and push commands are logged
//! per episode (reset to reset) so the run can be replayed offline.

use omniwheel::control::{GainSet, VelocityReference};
use omniwheel::dynamics::InclineConfig;
use omniwheel::simulation::{self, Disturbance, Engine, PushAxis, SensorModel, SensorProfile, SimConfig, Trace, TraceRow};
use omniwheel::{RobotParams, SimError};

use crate::error::{Rejection, TeleopError};
use crate::protocol::{Axis, Command, Frame, Status};

pub type ClientId = u64;

pub const DEFAULT_STREAM_RATE: f64 = 30.0;

/// The engine never stops on its own.
const OPEN_ENDED: f64 = f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    /// Ground speed, m/s.
    pub max_speed: f64,
    /// N·m.
    pub max_push_torque: f64,
    /// s.
    pub max_push_duration: f64,
    /// rad.
    pub max_incline: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_speed: 0.5,
            max_push_torque: 5.0,
            max_push_duration: 1.0,
            max_incline: 25f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub params: RobotParams,
    pub gains: GainSet,
    pub sensor: SensorProfile,
    pub seed: u64,
    /// Telemetry frames per second.
    pub stream_rate: f64,
    pub limits: Limits,
}

impl SessionConfig {
    pub fn new(params: RobotParams, gains: GainSet) -> Self {
        Self {
            params,
            gains,
            sensor: SensorProfile::Realistic,
            seed: 0,
            stream_rate: DEFAULT_STREAM_RATE,
            limits: Limits::default(),
        }
    }

    pub fn sensor_model(&self) -> SensorModel {
        SensorModel::from_profile(self.sensor, self.seed)
    }

    /// Engine configuration for an episode on slope `gamma`, starting upright.
    pub fn sim_config(&self, gamma: f64) -> Result<SimConfig, TeleopError> {
        Ok(SimConfig::new(OPEN_ENDED, InclineConfig::aligned(gamma)?, [0.0, 0.0]))
    }
}

/// A velocity or push command and the first tick that sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedCommand {
    pub tick: u64,
    pub command: Command,
}

/// What happened since the last reset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub gamma: f64,
    pub log: Vec<LoggedCommand>,
    /// Control ticks executed.
    pub ticks: u64,
}

#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    engine: Engine,
    reference: VelocityReference,
    pending_gamma: Option<f64>,
    paused: bool,
    clients: Vec<ClientId>,
    driver: Option<ClientId>,
    last: Option<TraceRow>,
    episode: Episode,
    frame_phase: f64,
    frame_seq: u64,
}

fn axis(a: Axis) -> PushAxis {
    match a {
        Axis::Pitch => PushAxis::Theta1,
        Axis::Roll => PushAxis::Theta2,
    }
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, TeleopError> {
        let rate = cfg.sim_config(0.0)?.control_rate;
        if !(cfg.stream_rate > 0.0 && cfg.stream_rate <= rate) {
            return Err(TeleopError::Config(format!("stream rate must be in (0, {rate}] Hz")));
        }
        let engine = Engine::new(cfg.sim_config(0.0)?, cfg.params, cfg.gains, cfg.sensor_model())?;
        Ok(Self {
            cfg,
            engine,
            reference: VelocityReference::zero(),
            pending_gamma: None,
            paused: false,
            clients: Vec::new(),
            driver: None,
            last: None,
            episode: Episode::default(),
            frame_phase: rate,
            frame_seq: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn reference(&self) -> VelocityReference {
        self.reference
    }

    pub fn control_period(&self) -> f64 {
        self.engine.config().control_period()
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn driver(&self) -> Option<ClientId> {
        self.driver
    }

    pub fn status(&self) -> Status {
        if self.engine.has_fallen() {
            Status::Fell
        } else if self.paused {
            Status::Paused
        } else {
            Status::Balancing
        }
    }

    /// Register a client; the first one gets the driver token. Returns
    /// whether `id` now drives.
    pub fn connect(&mut self, id: ClientId) -> bool {
        self.clients.push(id);
        self.driver.get_or_insert(id);
        self.driver == Some(id)
    }

    /// Drop a client. A departing driver hands the token to the oldest
    /// remaining client.
    pub fn disconnect(&mut self, id: ClientId) {
        self.clients.retain(|&c| c != id);
        if self.driver == Some(id) {
            self.driver = self.clients.first().copied();
        }
    }

    /// Apply a command from `client`, enforcing the driver token.
    pub fn handle(&mut self, client: ClientId, c: &Command) -> Result<u64, Rejection> {
        if *c == Command::TakeControl {
            if !self.clients.contains(&client) {
                return Err(Rejection::Invalid("unknown client".into()));
            }
            self.driver = Some(client);
            return Ok(self.engine.tick_index());
        }
        if self.driver != Some(client) {
            return Err(Rejection::NotDriver);
        }
        self.apply_command(c)
    }

    /// Apply a command to the simulation. Returns the first control tick
    /// that sees it.
    pub fn apply_command(&mut self, c: &Command) -> Result<u64, Rejection> {
        if self.engine.has_fallen() && !matches!(c, Command::Reset | Command::TakeControl) {
            return Err(Rejection::Fell);
        }
        let tick = self.engine.tick_index();
        let limits = self.cfg.limits;
        match *c {
            Command::SetVelocity { vx, vy } => {
                if !(vx.is_finite() && vy.is_finite()) || vx.hypot(vy) > limits.max_speed {
                    return Err(Rejection::VelocityLimit);
                }
                self.reference = VelocityReference::from_ground_velocity(vx, vy, &self.cfg.params)
                    .map_err(|e| Rejection::Invalid(e.to_string()))?;
                self.episode.log.push(LoggedCommand { tick, command: *c });
            }
            Command::Push { axis: a, torque, duration } => {
                let ok = torque.is_finite()
                    && torque.abs() <= limits.max_push_torque
                    && duration > 0.0
                    && duration <= limits.max_push_duration;
                if !ok {
                    return Err(Rejection::PushLimit);
                }
                self.engine.schedule_push(Disturbance { start: self.engine.time(), duration, axis: axis(a), torque });
                self.episode.log.push(LoggedCommand { tick, command: *c });
            }
            Command::SetIncline { gamma } => {
                if !(gamma.is_finite() && gamma.abs() <= limits.max_incline) {
                    return Err(Rejection::InclineLimit);
                }
                self.pending_gamma = Some(gamma);
            }
            Command::Reset => {
                self.reset().map_err(|e| Rejection::Invalid(e.to_string()))?;
                return Ok(0);
            }
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::TakeControl => {}
        }
        Ok(tick)
    }

    /// Fresh upright engine on the pending slope; references cleared, sensor
    /// noise restarted from the configured seed.
    fn reset(&mut self) -> Result<(), TeleopError> {
        let gamma = self.pending_gamma.take().unwrap_or(self.episode.gamma);
        self.engine = Engine::new(self.cfg.sim_config(gamma)?, self.cfg.params, self.cfg.gains, self.cfg.sensor_model())?;
        self.reference = VelocityReference::zero();
        self.paused = false;
        self.last = None;
        self.episode = Episode { gamma, ..Episode::default() };
        // The first tick after a reset always produces a frame.
        self.frame_phase = self.engine.config().control_rate;
        Ok(())
    }

    /// One control tick. Returns a frame when one is due at the stream rate.
    /// While paused the simulation does not advance but frames keep coming.
    pub fn tick(&mut self) -> Result<Option<Frame>, SimError> {
        if !self.paused {
            self.last = Some(self.engine.step(&self.reference)?);
            self.episode.ticks += 1;
        }
        let rate = self.engine.config().control_rate;
        self.frame_phase += self.cfg.stream_rate;
        if self.frame_phase < rate {
            return Ok(None);
        }
        self.frame_phase -= rate;
        Ok(self.frame())
    }

    /// Frame for the most recent tick, if any has run since the last reset.
    pub fn frame(&mut self) -> Option<Frame> {
        let row = self.last?;
        let psi_dot = row.psi_dot();
        let f = Frame {
            seq: self.frame_seq,
            tick: self.episode.ticks - 1,
            t: row.t,
            px: row.position.px,
            py: row.position.py,
            odo_px: row.odometry.px,
            odo_py: row.odometry.py,
            theta1: row.state.q[0],
            theta2: row.state.q[1],
            psidot1: psi_dot[0],
            psidot2: psi_dot[1],
            psidot_ref1: row.psi_dot_ref[0],
            psidot_ref2: row.psi_dot_ref[1],
            u1: row.u[0],
            u2: row.u[1],
            sat1: row.saturated[0],
            sat2: row.saturated[1],
            status: self.status(),
        };
        self.frame_seq += 1;
        Some(f)
    }
}

/// Re-run an episode offline through [`simulation::run`]. The trace has one
/// row per executed tick, fewer if the robot fell.
pub fn replay(cfg: &SessionConfig, episode: &Episode) -> Result<Trace, TeleopError> {
    let mut sim = cfg.sim_config(episode.gamma)?;
    let period = sim.control_period();
    let last = episode.ticks.checked_sub(1).ok_or_else(|| TeleopError::Config("empty episode".into()))?;
    sim.duration = last as f64 * period;
    let mut velocity = Vec::new();
    for logged in &episode.log {
        match logged.command {
            Command::SetVelocity { vx, vy } => velocity.push((
                logged.tick,
                VelocityReference::from_ground_velocity(vx, vy, &cfg.params)
                    .map_err(|e| TeleopError::Config(e.to_string()))?,
            )),
            Command::Push { axis: a, torque, duration } => sim.disturbances.push(Disturbance {
                start: logged.tick as f64 * period,
                duration,
                axis: axis(a),
                torque,
            }),
            _ => {}
        }
    }
    if last == 0 {
        // A single tick: the run below needs a positive duration.
        sim.duration = period;
    }
    let rate = sim.control_rate;
    let mut trace = simulation::run(&sim, &cfg.params, &cfg.gains, &cfg.sensor_model(), |t| {
        let tick = (t * rate).round() as u64;
        velocity.iter().rev().find(|(k, _)| *k <= tick).map(|(_, r)| *r).unwrap_or_default()
    })?;
    trace.rows.truncate(episode.ticks as usize);
    Ok(trace)
}
