use thiserror::Error;

use omniwheel::{DynamicsError, SimError};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Json(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("bad {kind} payload: {msg}")]
    Payload { kind: String, msg: String },
}

/// Why a well-formed command was refused. The `Display` text is the
/// `reason` sent to the client.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Rejection {
    #[error("velocity limit")]
    VelocityLimit,
    #[error("push limit")]
    PushLimit,
    #[error("incline limit")]
    InclineLimit,
    #[error("not driver")]
    NotDriver,
    #[error("fell: reset required")]
    Fell,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
