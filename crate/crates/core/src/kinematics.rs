//! Velocity and position kinematics of the active omniwheel at the nominal
//! upright configuration.
//!
//! The motor-speed Jacobian is
//!
//! ```text
//! [vx]   [ R    0  ] [ω1]
//! [vy] = [ n·r  n·r] [ω2]
//! ```
//!
//! where ω1 drives the main wheel and ω2 drives the rollers through a gear
//! train with speed factor `n`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix2, Vector2};

use crate::error::KinematicsError;
use crate::model::RobotParams;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorSpeeds {
    /// Longitudinal (main wheel) motor, rad/s.
    pub omega1: f64,
    /// Lateral (roller drive) motor, rad/s.
    pub omega2: f64,
}

impl MotorSpeeds {
    pub fn new(omega1: f64, omega2: f64) -> Self {
        Self { omega1, omega2 }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.omega1, self.omega2)
    }
}

/// Ground-plane velocity of the contact point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyVelocity {
    pub vx: f64,
    pub vy: f64,
    /// Moving direction in `[0, 2π)`; `None` when the robot is stationary.
    pub alpha: Option<f64>,
}

impl BodyVelocity {
    pub fn new(vx: f64, vy: f64) -> Self {
        let alpha = if vx == 0.0 && vy == 0.0 {
            None
        } else {
            Some(normalize_angle(vy.atan2(vx)))
        };
        Self { vx, vy, alpha }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

fn normalize_angle(a: f64) -> f64 {
    let a = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if a >= TAU {
        0.0
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorAngles {
    pub beta1: f64,
    pub beta2: f64,
}

impl MotorAngles {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Self { beta1, beta2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarPosition {
    pub px: f64,
    pub py: f64,
}

impl PlanarPosition {
    pub fn new(px: f64, py: f64) -> Self {
        Self { px, py }
    }

    pub fn distance(&self, other: &PlanarPosition) -> f64 {
        (self.px - other.px).hypot(self.py - other.py)
    }
}

/// The motor-speed Jacobian `J`.
pub fn jacobian(p: &RobotParams) -> Matrix2<f64> {
    let nr = p.n * p.r;
    Matrix2::new(p.R, 0.0, nr, nr)
}

pub fn forward_velocity(w: MotorSpeeds, p: &RobotParams) -> BodyVelocity {
    // Written out rather than J·ω so that vy carries the exact sign of ω1 + ω2.
    BodyVelocity::new(w.omega1 * p.R, p.n * (w.omega1 + w.omega2) * p.r)
}

/// Motor speeds producing `v`, by the closed-form inverse of `J`.
pub fn inverse_velocity(v: &BodyVelocity, p: &RobotParams) -> Result<MotorSpeeds, KinematicsError> {
    let nr = p.n * p.r;
    if p.R == 0.0 || nr == 0.0 || !p.R.is_finite() || !nr.is_finite() {
        return Err(KinematicsError::Degenerate {
            wheel_radius: p.R,
            roller_term: nr,
        });
    }
    let omega1 = v.vx / p.R;
    let omega2 = v.vy / nr - omega1;
    Ok(MotorSpeeds { omega1, omega2 })
}

/// Absolute wheel and roller rates `ψ̇ = [ψ̇1, ψ̇2]` that realise a ground
/// velocity at upright: `ψ̇1 = ω1`, `ψ̇2 = n·(ω1 + ω2)`.
pub fn wheel_rates_for_velocity(
    v: &BodyVelocity,
    p: &RobotParams,
) -> Result<Vector2<f64>, KinematicsError> {
    let w = inverse_velocity(v, p)?;
    Ok(Vector2::new(w.omega1, p.n * (w.omega1 + w.omega2)))
}

/// Ground velocity for absolute wheel/roller rates (`vx = R ψ̇1`, `vy = r ψ̇2`).
pub fn velocity_for_wheel_rates(psi_dot: &Vector2<f64>, p: &RobotParams) -> BodyVelocity {
    BodyVelocity::new(p.R * psi_dot[0], p.r * psi_dot[1])
}

/// Motor shaft angles for given wheel/roller angles relative to the body.
///
/// Motor 1 turns the wheel directly; the roller turns at `n·(β1 + β2)`.
pub fn motor_angles_from_relative(phi: &Vector2<f64>, p: &RobotParams) -> MotorAngles {
    MotorAngles {
        beta1: phi[0],
        beta2: phi[1] / p.n - phi[0],
    }
}

pub fn relative_from_motor_angles(b: &MotorAngles, p: &RobotParams) -> Vector2<f64> {
    Vector2::new(b.beta1, p.n * (b.beta1 + b.beta2))
}

/// Moving-direction classes of the motor-speed table, plus stationary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Stationary,
    /// α = 0
    PositiveX,
    /// 0 < α < π/2
    Quadrant1,
    /// α = π/2
    PositiveY,
    /// π/2 < α < π
    Quadrant2,
    /// α = π
    NegativeX,
    /// π < α < 3π/2
    Quadrant3,
    /// α = 3π/2
    NegativeY,
    /// 3π/2 < α < 2π
    Quadrant4,
}

impl Direction {
    /// Whether `alpha` (normalized to `[0, 2π)`) lies in this class. Axis
    /// classes accept a 1e-12 rad rounding band, which the open quadrants
    /// exclude.
    pub fn contains(&self, alpha: f64) -> bool {
        const EPS: f64 = 1e-12;
        let on = |axis: f64| (alpha - axis).abs() <= EPS;
        let between = |lo: f64, hi: f64| alpha > lo + EPS && alpha < hi - EPS;
        match self {
            Direction::Stationary => false,
            Direction::PositiveX => on(0.0) || on(TAU),
            Direction::Quadrant1 => between(0.0, FRAC_PI_2),
            Direction::PositiveY => on(FRAC_PI_2),
            Direction::Quadrant2 => between(FRAC_PI_2, PI),
            Direction::NegativeX => on(PI),
            Direction::Quadrant3 => between(PI, 3.0 * FRAC_PI_2),
            Direction::NegativeY => on(3.0 * FRAC_PI_2),
            Direction::Quadrant4 => between(3.0 * FRAC_PI_2, TAU),
        }
    }
}

/// Classify from the signs of ω1 and ω1 + ω2 alone.
pub fn classify_direction(w: MotorSpeeds) -> Direction {
    use std::cmp::Ordering::*;
    let s1 = w.omega1.partial_cmp(&0.0).unwrap_or(Equal);
    let s2 = (w.omega1 + w.omega2).partial_cmp(&0.0).unwrap_or(Equal);
    match (s1, s2) {
        (Equal, Equal) => Direction::Stationary,
        (Greater, Equal) => Direction::PositiveX,
        (Greater, Greater) => Direction::Quadrant1,
        (Equal, Greater) => Direction::PositiveY,
        (Less, Greater) => Direction::Quadrant2,
        (Less, Equal) => Direction::NegativeX,
        (Less, Less) => Direction::Quadrant3,
        (Equal, Less) => Direction::NegativeY,
        (Greater, Less) => Direction::Quadrant4,
    }
}

/// Incremental odometry: `pos + J·delta`.
pub fn odometry_update(pos: PlanarPosition, delta: MotorAngles, p: &RobotParams) -> PlanarPosition {
    PlanarPosition {
        px: pos.px + p.R * delta.beta1,
        py: pos.py + p.n * (delta.beta1 + delta.beta2) * p.r,
    }
}
