//! Teleoperation service: a stepped simulation steered over a WebSocket.

pub mod error;
pub mod protocol;
pub mod server;
pub mod session;

pub use error::{ProtocolError, Rejection, TeleopError};
pub use protocol::{decode_command, Command, Envelope, Frame, ServerMessage, Status};
pub use server::serve;
pub use session::{replay, Session, SessionConfig};
