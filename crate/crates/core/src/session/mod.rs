//! Duet sessions: configuration, wire messages, the shared control loop, and
//! its replay and live drivers.

pub mod config;
pub mod live;
pub mod performer;
pub mod pieces;
pub mod protocol;
pub mod replay;

pub use config::{ConfigError, KeyValues, Mode, SessionConfig, ENV_PREFIX};
pub use live::LiveSession;
pub use performer::{heavy_beat, DecisionSource, Fault, Performance, Performer, StrokeBank};
pub use pieces::{scripted_pieces, Piece};
pub use protocol::{
    parse_jsonl, to_jsonl, Agent, Body, FaultKind, Message, ProtocolError, PROTOCOL_VERSION,
};
pub use replay::{melody_notes, run_replay, BeatRecord, ReplayOutcome};
