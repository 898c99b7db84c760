//! JSON messages exchanged over the WebSocket.
//!
//! Client commands are `{"type": ..., "seq": n, "payload": {...}}`. The
//! server sends `frame`, `ack`, `reject` and `error` messages, each with a
//! `type` and a `seq`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "pitch", alias = "theta1")]
    Pitch,
    #[serde(rename = "roll", alias = "theta2")]
    Roll,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    /// Ground velocity in m/s.
    SetVelocity { vx: f64, vy: f64 },
    /// Torque pulse in N·m on one body axis, starting at the next tick.
    Push { axis: Axis, torque: f64, duration: f64 },
    Reset,
    /// Slope angle in rad, applied at the next reset.
    SetIncline { gamma: f64 },
    Pause,
    Resume,
    TakeControl,
}

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::SetVelocity { .. } => "set_velocity",
            Command::Push { .. } => "push",
            Command::Reset => "reset",
            Command::SetIncline { .. } => "set_incline",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::TakeControl => "take_control",
        }
    }

    fn payload(&self) -> Value {
        match *self {
            Command::SetVelocity { vx, vy } => serde_json::json!({ "vx": vx, "vy": vy }),
            Command::Push { axis, torque, duration } => {
                serde_json::json!({ "axis": axis, "torque": torque, "duration": duration })
            }
            Command::SetIncline { gamma } => serde_json::json!({ "gamma": gamma }),
            _ => serde_json::json!({}),
        }
    }
}

/// A decoded client command with its sequence number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub command: Command,
}

impl Envelope {
    pub fn new(seq: u64, command: Command) -> Self {
        Self { seq, command }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "type": self.command.kind(), "seq": self.seq, "payload": self.command.payload() })
            .to_string()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvelope {
    #[serde(rename = "type")]
    kind: String,
    seq: u64,
    #[serde(default)]
    payload: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VelocityPayload {
    vx: f64,
    vy: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PushPayload {
    axis: Axis,
    torque: f64,
    duration: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InclinePayload {
    gamma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyPayload {}

fn payload<T: for<'de> Deserialize<'de>>(kind: &str, v: Value) -> Result<T, ProtocolError> {
    serde_json::from_value(v).map_err(|e| ProtocolError::Payload { kind: kind.to_string(), msg: e.to_string() })
}

fn empty(kind: &str, v: Value) -> Result<(), ProtocolError> {
    // A missing payload is the same as `{}` for commands without arguments.
    if v.is_null() {
        return Ok(());
    }
    payload::<EmptyPayload>(kind, v).map(|_| ())
}

/// Decode one client text message.
pub fn decode_command(text: &str) -> Result<Envelope, ProtocolError> {
    let raw: RawEnvelope = serde_json::from_str(text).map_err(|e| ProtocolError::Json(e.to_string()))?;
    let kind = raw.kind.as_str();
    let command = match kind {
        "set_velocity" => {
            let p: VelocityPayload = payload(kind, raw.payload)?;
            Command::SetVelocity { vx: p.vx, vy: p.vy }
        }
        "push" => {
            let p: PushPayload = payload(kind, raw.payload)?;
            Command::Push { axis: p.axis, torque: p.torque, duration: p.duration }
        }
        "set_incline" => Command::SetIncline { gamma: payload::<InclinePayload>(kind, raw.payload)?.gamma },
        "reset" => empty(kind, raw.payload).map(|_| Command::Reset)?,
        "pause" => empty(kind, raw.payload).map(|_| Command::Pause)?,
        "resume" => empty(kind, raw.payload).map(|_| Command::Resume)?,
        "take_control" => empty(kind, raw.payload).map(|_| Command::TakeControl)?,
        _ => return Err(ProtocolError::UnknownType(raw.kind)),
    };
    Ok(Envelope { seq: raw.seq, command })
}

/// Best-effort `seq` of a message that failed to decode.
pub fn peek_seq(text: &str) -> Option<u64> {
    serde_json::from_str::<Value>(text).ok()?.get("seq")?.as_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Balancing,
    Fell,
    Paused,
}

/// Telemetry sample. `seq` counts frames; `tick` is the control tick the
/// sample was taken at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u64,
    pub tick: u64,
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub odo_px: f64,
    pub odo_py: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub psidot1: f64,
    pub psidot2: f64,
    pub psidot_ref1: f64,
    pub psidot_ref2: f64,
    pub u1: f64,
    pub u2: f64,
    pub sat1: bool,
    pub sat2: bool,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(Frame),
    /// `tick` is the first control tick that sees the command.
    Ack { seq: u64, tick: u64 },
    Reject { seq: u64, reason: String },
    /// Protocol violation; the connection is closed after this.
    Error { seq: Option<u64>, reason: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_every_command() {
        let cases = [
            (r#"{"type":"set_velocity","seq":1,"payload":{"vx":0.1,"vy":-0.05}}"#, Command::SetVelocity { vx: 0.1, vy: -0.05 }),
            (
                r#"{"type":"push","seq":2,"payload":{"axis":"roll","torque":1.5,"duration":0.2}}"#,
                Command::Push { axis: Axis::Roll, torque: 1.5, duration: 0.2 },
            ),
            (r#"{"type":"reset","seq":3,"payload":{}}"#, Command::Reset),
            (r#"{"type":"set_incline","seq":4,"payload":{"gamma":0.1}}"#, Command::SetIncline { gamma: 0.1 }),
            (r#"{"type":"pause","seq":5,"payload":{}}"#, Command::Pause),
            (r#"{"type":"resume","seq":6}"#, Command::Resume),
            (r#"{"type":"take_control","seq":7,"payload":null}"#, Command::TakeControl),
        ];
        for (i, (text, cmd)) in cases.iter().enumerate() {
            let env = decode_command(text).unwrap();
            assert_eq!(env, Envelope::new(i as u64 + 1, *cmd));
            assert_eq!(decode_command(&env.to_json()).unwrap(), env);
        }
    }

    #[test]
    fn axis_aliases() {
        let env = decode_command(r#"{"type":"push","seq":0,"payload":{"axis":"theta1","torque":1,"duration":0.1}}"#);
        assert!(matches!(env.unwrap().command, Command::Push { axis: Axis::Pitch, .. }));
    }

    #[test]
    fn rejects_malformed() {
        let bad = [
            "",
            "not json",
            "[]",
            r#"{"type":"set_velocity","payload":{"vx":0,"vy":0}}"#,
            r#"{"type":"set_velocity","seq":-1,"payload":{"vx":0,"vy":0}}"#,
            r#"{"type":"set_velocity","seq":1}"#,
            r#"{"type":"set_velocity","seq":1,"payload":{"vx":0}}"#,
            r#"{"type":"set_velocity","seq":1,"payload":{"vx":"fast","vy":0}}"#,
            r#"{"type":"set_velocity","seq":1,"payload":{"vx":0,"vy":0,"vz":0}}"#,
            r#"{"type":"push","seq":1,"payload":{"axis":"yaw","torque":1,"duration":0.1}}"#,
            r#"{"type":"reset","seq":1,"payload":{"hard":true}}"#,
            r#"{"type":"fly","seq":1,"payload":{}}"#,
            r#"{"type":"reset","seq":1,"extra":0}"#,
        ];
        for text in bad {
            assert!(decode_command(text).is_err(), "accepted {text:?}");
        }
        assert!(matches!(decode_command(r#"{"type":"fly","seq":1}"#), Err(ProtocolError::UnknownType(t)) if t == "fly"));
    }

    #[test]
    fn peeks_seq_of_bad_messages() {
        assert_eq!(peek_seq(r#"{"type":"fly","seq":9}"#), Some(9));
        assert_eq!(peek_seq("garbage"), None);
    }

    #[test]
    fn frame_has_the_documented_fields() {
        let f = Frame {
            seq: 0,
            tick: 0,
            t: 0.0,
            px: 0.0,
            py: 0.0,
            odo_px: 0.0,
            odo_py: 0.0,
            theta1: 0.0,
            theta2: 0.0,
            psidot1: 0.0,
            psidot2: 0.0,
            psidot_ref1: 0.0,
            psidot_ref2: 0.0,
            u1: 0.0,
            u2: 0.0,
            sat1: false,
            sat2: true,
            status: Status::Paused,
        };
        let v: Value = serde_json::from_str(&ServerMessage::Frame(f).to_json()).unwrap();
        let obj = v.as_object().unwrap();
        for key in [
            "type", "seq", "t", "px", "py", "odo_px", "odo_py", "theta1", "theta2", "psidot1", "psidot2", "u1", "u2",
            "sat1", "sat2", "status",
        ] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert_eq!(v["type"], "frame");
        assert_eq!(v["status"], "paused");
        assert_eq!(v["sat2"], true);
    }

    #[test]
    fn replies_serialize() {
        let ack: Value = serde_json::from_str(&ServerMessage::Ack { seq: 3, tick: 10 }.to_json()).unwrap();
        assert_eq!(ack, serde_json::json!({"type": "ack", "seq": 3, "tick": 10}));
        let rej: Value =
            serde_json::from_str(&ServerMessage::Reject { seq: 4, reason: "velocity limit".into() }.to_json()).unwrap();
        assert_eq!(rej, serde_json::json!({"type": "reject", "seq": 4, "reason": "velocity limit"}));
        let msg = ServerMessage::Error { seq: None, reason: "bad".into() };
        assert_eq!(serde_json::from_str::<ServerMessage>(&msg.to_json()).unwrap(), msg);
    }
}
