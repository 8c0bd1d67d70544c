//! Streaming message schema, version 1. Every message is one JSON text
//! frame carrying `"v": 1` and a `"type"` tag.
//!
//! Client → server:
//!
//! | type          | fields                                        |
//! |---------------|-----------------------------------------------|
//! | `twist`       | `linear: [m/s; 3]`, `angular: [rad/s; 3]`     |
//! | `task_switch` | `ns: bool` (false: end effector, true: base)  |
//! | `gains_scale` | `wall_scale: ≥ 0` (fed-back wall stiffness)   |
//!
//! Server → client: `hello` once per connection, `telemetry` every
//! `decimation` ticks, `reject` for any inbound frame that does not parse
//! or validate (the session continues).

use serde::{Deserialize, Serialize};
use serde_json::Value;
use wbteleop::geometry::Pose;
use wbteleop::teleop::TickLog;

use crate::experiment::Command;

pub const PROTOCOL_VERSION: u32 = 1;

/// Validates and decodes one inbound frame.
pub fn parse_inbound(text: &str) -> Result<Command, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object_mut().ok_or("message must be a JSON object")?;
    match obj.remove("v") {
        Some(Value::Number(n)) if n.as_u64() == Some(u64::from(PROTOCOL_VERSION)) => {}
        Some(v) => return Err(format!("unsupported protocol version {v}")),
        None => return Err("missing protocol version `v`".into()),
    }
    let command: Command = serde_json::from_value(value).map_err(|e| format!("invalid message: {e}"))?;
    match &command {
        Command::Twist { linear, angular } => {
            if linear.iter().chain(angular).any(|x| !x.is_finite()) {
                return Err("twist components must be finite".into());
            }
        }
        Command::GainsScale { wall_scale } => {
            if !(*wall_scale >= 0.0 && wall_scale.is_finite()) {
                return Err("wall_scale must be finite and non-negative".into());
            }
        }
        Command::TaskSwitch { .. } => {}
        Command::Disconnect => return Err("`disconnect` is not a client message".into()),
    }
    Ok(command)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    /// m, world frame.
    pub position: [f64; 3],
    /// `[w, x, y, z]`.
    pub quaternion: [f64; 4],
}

impl From<&Pose> for PoseMsg {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.to_quaternion();
        PoseMsg {
            position: [p.position.x, p.position.y, p.position.z],
            quaternion: [q.eta, q.eps.x, q.eps.y, q.eps.z],
        }
    }
}

/// Passivity values after the controllers acted (J).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassivityMsg {
    pub master_x: f64,
    pub master_b: f64,
    pub slave_x: f64,
    pub slave_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub tick: u64,
    /// s
    pub time: f64,
    /// Operator task flag.
    pub ns: bool,
    /// Task the slave is currently driving: `"x"` or `"b"`.
    pub routing: String,
    pub master: PoseMsg,
    pub base: PoseMsg,
    pub base_des: PoseMsg,
    pub ee: PoseMsg,
    pub ee_des: PoseMsg,
    /// Wrench felt at the master `[N; 3] ++ [N·m; 3]`, master body frame.
    pub wall_force: [f64; 6],
    /// N
    pub wall_force_norm: f64,
    pub w: PassivityMsg,
}

impl From<&TickLog> for Telemetry {
    fn from(l: &TickLog) -> Self {
        let f = l.f_m.to_vector();
        Telemetry {
            tick: l.tick,
            time: l.time,
            ns: l.ns,
            routing: l.routing.suffix().into(),
            master: (&l.master_pose).into(),
            base: (&l.base_pose).into(),
            base_des: (&l.b_des).into(),
            ee: (&l.ee_pose).into(),
            ee_des: (&l.x_des).into(),
            wall_force: [f[0], f[1], f[2], f[3], f[4], f[5]],
            wall_force_norm: l.f_m.force.norm(),
            w: PassivityMsg {
                master_x: l.w_master[0],
                master_b: l.w_master[1],
                slave_x: l.w_slave[0],
                slave_b: l.w_slave[1],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Hello {
        v: u32,
        /// s
        dt: f64,
        decimation: u64,
        scenario: String,
    },
    Telemetry {
        v: u32,
        #[serde(flatten)]
        data: Box<Telemetry>,
    },
    Reject {
        v: u32,
        reason: String,
        /// Offending frame, truncated to 256 bytes.
        received: String,
    },
}

impl Outbound {
    pub fn telemetry(log: &TickLog) -> Self {
        Outbound::Telemetry {
            v: PROTOCOL_VERSION,
            data: Box::new(log.into()),
        }
    }

    pub fn reject(reason: String, received: &str) -> Self {
        let mut end = received.len().min(256);
        while !received.is_char_boundary(end) {
            end -= 1;
        }
        Outbound::Reject {
            v: PROTOCOL_VERSION,
            reason,
            received: received[..end].to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}
