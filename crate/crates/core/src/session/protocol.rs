//! Session messages: one JSON object per line, `{"type", "t", "payload"}`.
//! The same records serve as the wire protocol and the session log.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord::ChordLabel;
use crate::tokenizer::TOKENS_PER_BAR;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Human,
    Robot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    LateStrike,
    InfeasibleMove,
    OffTarget,
    LateNote,
    BudgetOverrun,
    Protocol,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    Hello {
        role: String,
        version: u32,
    },
    NoteOn {
        pitch: u8,
        velocity: u8,
    },
    NoteOff {
        pitch: u8,
    },
    BarClosed {
        p: u32,
        tokens: [u8; TOKENS_PER_BAR],
    },
    /// The accompaniment decided for bar `p`.
    Chord {
        p: u32,
        label: ChordLabel,
        ck: u8,
        strike_times: Vec<f64>,
        velocities: Vec<u8>,
    },
    Strike {
        t: f64,
        pitches: [u8; 3],
        velocity: u8,
    },
    Beat {
        agent: Agent,
        p: u32,
        at: f64,
    },
    Metrics {
        tg: f64,
        si: f64,
        mae: f64,
        entropy: f64,
    },
    Fault {
        kind: FaultKind,
        detail: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    /// Server-clock seconds.
    pub t: f64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("non-finite timestamp")]
    BadTime,
    #[error("pitch {0} is outside the piano range")]
    BadPitch(u8),
    #[error("velocity {0} exceeds 127")]
    BadVelocity(u8),
    #[error("`{0}` messages are sent by the server only")]
    ServerOnly(&'static str),
}

impl Message {
    pub fn new(t: f64, body: Body) -> Self {
        Message { t, body }
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            Body::Hello { .. } => "hello",
            Body::NoteOn { .. } => "note_on",
            Body::NoteOff { .. } => "note_off",
            Body::BarClosed { .. } => "bar_closed",
            Body::Chord { .. } => "chord",
            Body::Strike { .. } => "strike",
            Body::Beat { .. } => "beat",
            Body::Metrics { .. } => "metrics",
            Body::Fault { .. } => "fault",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, ProtocolError> {
        let m: Message =
            serde_json::from_str(line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if !m.t.is_finite() {
            return Err(ProtocolError::BadTime);
        }
        Ok(m)
    }

    /// Parse and validate a message received from a client.
    pub fn from_client(line: &str) -> Result<Self, ProtocolError> {
        let m = Self::from_line(line)?;
        match &m.body {
            Body::Hello { .. } => {}
            Body::NoteOn { pitch, velocity } => {
                check_pitch(*pitch)?;
                if *velocity > 127 {
                    return Err(ProtocolError::BadVelocity(*velocity));
                }
            }
            Body::NoteOff { pitch } => check_pitch(*pitch)?,
            _ => return Err(ProtocolError::ServerOnly(m.kind())),
        }
        Ok(m)
    }
}

fn check_pitch(p: u8) -> Result<(), ProtocolError> {
    if (crate::midi::LOWEST_PIANO_KEY..=crate::midi::HIGHEST_PIANO_KEY).contains(&p) {
        Ok(())
    } else {
        Err(ProtocolError::BadPitch(p))
    }
}

/// Render messages as JSON lines.
pub fn to_jsonl(messages: &[Message]) -> String {
    let mut s = String::new();
    for m in messages {
        s.push_str(&m.to_line());
        s.push('\n');
    }
    s
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Message>, (usize, ProtocolError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Message::from_line(l).map_err(|e| (i + 1, e)))
        .collect()
}
