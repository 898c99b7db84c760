//! Simulation and control synthesis for a dual-axis wheeled inverted
//! pendulum: a single wheel balancing in pitch, driven rollers on the rim
//! balancing in roll.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod kinematics;
pub mod linearization;
pub mod model;
pub mod simulation;

pub use error::*;
pub use model::{ControlInput, GeneralizedState, RobotParams};
