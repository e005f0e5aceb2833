//! Wire messages between the teleop server and its clients, and the
//! length-prefixed framing used on plain TCP.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::ObjectClass;
use crate::pose::EstimateMode;
use crate::sim::SimEvent;

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest accepted frame payload.
pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMsg {
    /// Haptic handle position, meters.
    pub position: [f64; 3],
    /// Closed fraction in [0, 1].
    pub gripper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locks: Option<[bool; 3]>,
    /// Client clock, seconds.
    pub timestamp: f64,
}

impl ControlMsg {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !self.position.iter().all(|x| x.is_finite()) || !self.gripper.is_finite() || !self.timestamp.is_finite() {
            return Err(ProtocolError::Invalid("non-finite number".into()));
        }
        if let Some(s) = self.scale {
            if !(1..=5).contains(&s) {
                return Err(ProtocolError::Invalid(format!("scale {s} not in 1..=5")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMsg {
    pub class: ObjectClass,
    pub center: [f64; 3],
    pub source: EstimateMode,
    pub pixel_count: usize,
    pub timestamp: f64,
}

/// Ground-truth pose of a classed scene object, for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMsg {
    pub id: u32,
    pub class: ObjectClass,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    pub tick: u64,
    /// Seconds since session start.
    pub time: f64,
    pub joints: [f64; 6],
    pub ee: [f64; 3],
    pub gripper: f64,
    pub held: Option<u32>,
    pub estimates: Vec<EstimateMsg>,
    pub objects: Vec<ObjectMsg>,
    pub scale: u8,
    pub locks: [bool; 3],
    /// Simulator events since the previous state.
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Operator,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMsg {
    Control {
        v: u32,
        #[serde(flatten)]
        msg: ControlMsg,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMsg {
    Hello {
        v: u32,
        role: Role,
        tick_period: f64,
    },
    State {
        v: u32,
        #[serde(flatten)]
        msg: StateMsg,
    },
    Bye {
        v: u32,
        reason: String,
    },
}

impl ClientMsg {
    pub fn control(msg: ControlMsg) -> Self {
        ClientMsg::Control {
            v: PROTOCOL_VERSION,
            msg,
        }
    }

    /// Parses and validates a client message.
    pub fn decode(text: &str) -> Result<ControlMsg, ProtocolError> {
        let ClientMsg::Control { v, msg } = serde_json::from_str(text)?;
        if v != PROTOCOL_VERSION {
            return Err(ProtocolError::Version(v));
        }
        msg.validate()?;
        Ok(msg)
    }
}

impl ServerMsg {
    pub fn state(msg: StateMsg) -> Self {
        ServerMsg::State {
            v: PROTOCOL_VERSION,
            msg,
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

pub fn encode<T: Serialize>(msg: &T) -> Result<String, ProtocolError> {
    Ok(serde_json::to_string(msg)?)
}

/// Writes one frame: a 4-byte big-endian length, then the payload.
pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<(), ProtocolError> {
    if payload.len() > MAX_FRAME {
        return Err(ProtocolError::FrameTooLarge(payload.len()));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a header.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(ProtocolError::FrameTooLarge(n));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}
