//! Core engine for a human-robot piano duet: MIDI I/O, melody tokenization,
//! corpus extraction, the chord classifier, accompaniment scheduling, the
//! oscillator-driven robot hand and synchronization metrics.

pub mod accompaniment;
pub mod chord;
pub mod cpg;
pub mod dataset;
pub mod fixtures;
pub mod metrics;
pub mod midi;
pub mod mir;
pub mod model;
pub mod robot;
pub mod session;
pub mod tokenizer;

pub use accompaniment::{AccompanimentPlan, Decision, StrikeDynamics, StrikeThresholds};
pub use chord::{ChordLabel, ChordVoicing, NUM_CHORDS};
pub use cpg::{KeystrokeWaveform, OscillatorParams, StrokeGeometry};
pub use dataset::ChordMelodyPair;
pub use metrics::{AnalysisConfig, SyncReport};
pub use midi::{parse_smf, write_smf, MidiError, MidiTrack, NoteEvent};
pub use mir::MirConfig;
pub use model::{ChordClassifier, ModelConfig, ReplacementTable, TrainConfig};
pub use robot::{KeyboardGeometry, MovePlan, MpcConfig, MpcDecision, TrajectoryLog};
pub use session::{DecisionSource, Message, SessionConfig, StrokeBank};
pub use tokenizer::{BarTokens, TimeSignature};
