//! IMU and encoder models.
//!
//! The IMU is taken to report already-filtered attitude, so it is modelled as
//! truth + constant bias + white noise. Encoders are quantized motor shaft
//! angles; wheel rates come from backward differences of those readings.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::{gravity_attitude, InclineConfig};
use crate::error::SimError;
use crate::kinematics::{motor_angles_from_relative, relative_from_motor_angles, MotorAngles};
use crate::linearization::StateVector6;
use crate::model::{GeneralizedState, RobotParams};

pub const DEFAULT_COUNTS_PER_REV: u32 = 4096;
pub const DEFAULT_CONTROL_RATE: f64 = 125.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SensorProfile {
    #[default]
    Ideal,
    Realistic,
}

impl std::str::FromStr for SensorProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(Self::Ideal),
            "realistic" => Ok(Self::Realistic),
            other => Err(format!("unknown sensor profile `{other}` (ideal | realistic)")),
        }
    }
}

impl std::fmt::Display for SensorProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ideal => "ideal",
            Self::Realistic => "realistic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// Constant attitude offset [pitch, roll], rad.
    pub imu_bias: Vector2<f64>,
    pub imu_noise_std: f64,
    pub imu_rate_noise_std: f64,
    pub encoder_counts_per_rev: u32,
    /// Backward-difference span for encoder velocity, s.
    pub encoder_velocity_window: f64,
    pub seed: u64,
}

impl SensorModel {
    /// No bias or noise; encoder quantization kept.
    pub fn ideal() -> Self {
        Self {
            imu_bias: Vector2::zeros(),
            imu_noise_std: 0.0,
            imu_rate_noise_std: 0.0,
            encoder_counts_per_rev: DEFAULT_COUNTS_PER_REV,
            encoder_velocity_window: 1.0 / DEFAULT_CONTROL_RATE,
            seed: 0,
        }
    }

    /// Bias drawn once from the seed, uniform in ±1° per axis; 0.05° attitude
    /// noise and 0.1°/s rate noise.
    pub fn realistic(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = 1f64.to_radians();
        Self {
            imu_bias: Vector2::new(rng.random_range(-b..=b), rng.random_range(-b..=b)),
            imu_noise_std: 0.05f64.to_radians(),
            imu_rate_noise_std: 0.1f64.to_radians(),
            encoder_counts_per_rev: DEFAULT_COUNTS_PER_REV,
            encoder_velocity_window: 1.0 / DEFAULT_CONTROL_RATE,
            seed,
        }
    }

    pub fn from_profile(profile: SensorProfile, seed: u64) -> Self {
        match profile {
            SensorProfile::Ideal => Self { seed, ..Self::ideal() },
            SensorProfile::Realistic => Self::realistic(seed),
        }
    }

    pub fn with_bias(mut self, pitch: f64, roll: f64) -> Self {
        self.imu_bias = Vector2::new(pitch, roll);
        self
    }

    /// One encoder count, rad.
    pub fn encoder_resolution(&self) -> f64 {
        TAU / self.encoder_counts_per_rev as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.imu_noise_std >= 0.0
            && self.imu_rate_noise_std >= 0.0
            && self.imu_noise_std.is_finite()
            && self.imu_rate_noise_std.is_finite()
            && self.imu_bias.iter().all(|b| b.is_finite())
            && self.encoder_counts_per_rev > 0
            && self.encoder_velocity_window > 0.0
            && self.encoder_velocity_window.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("invalid sensor model {self:?}")))
        }
    }
}

impl Default for SensorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Round to the nearest multiple of `resolution`.
pub fn quantize(angle: f64, resolution: f64) -> f64 {
    (angle / resolution).round() * resolution
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    /// Measured `[θ1, θ2, θ̇1, θ̇2, φ̇1, φ̇2]`, attitude relative to gravity.
    pub x: StateVector6,
    /// Quantized motor shaft angles.
    pub motor_angles: MotorAngles,
}

/// Stateful sampler: noise stream plus encoder history for differencing.
#[derive(Debug, Clone)]
pub struct Sensors {
    model: SensorModel,
    rng: ChaCha8Rng,
    angle_noise: Normal<f64>,
    rate_noise: Normal<f64>,
    history: VecDeque<(f64, Vector2<f64>)>,
}

impl Sensors {
    pub fn new(model: SensorModel) -> Result<Self, SimError> {
        model.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        // Separate stream from the one the bias was drawn from.
        rng.set_stream(1);
        let bad = |e: rand_distr::NormalError| SimError::Config(e.to_string());
        Ok(Self {
            angle_noise: Normal::new(0.0, model.imu_noise_std).map_err(bad)?,
            rate_noise: Normal::new(0.0, model.imu_rate_noise_std).map_err(bad)?,
            model,
            rng,
            history: VecDeque::new(),
        })
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    pub fn sample(&mut self, s: &GeneralizedState, p: &RobotParams, inc: &InclineConfig, t: f64) -> SensorReading {
        let att = gravity_attitude(s, inc);
        let mut x = StateVector6::zeros();
        // Draw order is fixed so a seed always yields the same sequence.
        for i in 0..2 {
            x[i] = att[i] + self.model.imu_bias[i] + self.angle_noise.sample(&mut self.rng);
        }
        for i in 0..2 {
            x[2 + i] = s.dq[i] + self.rate_noise.sample(&mut self.rng);
        }

        let res = self.model.encoder_resolution();
        let exact = motor_angles_from_relative(&s.phi(), p);
        let motor_angles = MotorAngles::new(quantize(exact.beta1, res), quantize(exact.beta2, res));
        let phi = relative_from_motor_angles(&motor_angles, p);

        let window = self.model.encoder_velocity_window;
        let tol = 1e-9 * window;
        while self.history.len() > 1 && t - self.history[1].0 >= window - tol {
            self.history.pop_front();
        }
        let phi_dot = match self.history.front() {
            Some(&(t0, phi0)) if t > t0 => (phi - phi0) / (t - t0),
            _ => Vector2::zeros(),
        };
        x[4] = phi_dot[0];
        x[5] = phi_dot[1];
        self.history.push_back((t, phi));

        SensorReading { x, motor_angles }
    }
}
