//! Standard MIDI File I/O and the note-event model.
//!
//! Notes are stored as press/release pairs in seconds. Tick arithmetic is
//! done in integers against the tempo map and converted to seconds only at
//! the end, so a parse/write round trip is exact to tick resolution.

mod parse;
mod tempo;
mod write;

pub use parse::parse_smf;
pub use tempo::{TempoChange, TempoMap, DEFAULT_US_PER_QUARTER};
pub use write::write_smf;

use serde::{Deserialize, Serialize};

/// Lowest and highest piano keys (A0 and C8).
pub const LOWEST_PIANO_KEY: u8 = 21;
pub const HIGHEST_PIANO_KEY: u8 = 108;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MidiError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated chunk at byte {offset}: {detail}")]
    Truncated { offset: usize, detail: String },
    #[error("malformed event at byte {offset}: {detail}")]
    MalformedEvent { offset: usize, detail: String },
    #[error(
        "unmatched note-on for pitch {pitch} at tick {tick} (track {track}, channel {channel})"
    )]
    UnmatchedNoteOn {
        pitch: u8,
        tick: u64,
        track: u16,
        channel: u8,
    },
    #[error("unsupported SMF type {0}")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    UnsupportedTiming,
    #[error("invalid note: {0}")]
    InvalidNote(String),
    #[error(
        "{detail} is not representable at {tpq} ticks per quarter; try {suggested_tpq} or higher"
    )]
    NotRepresentable {
        detail: String,
        tpq: u16,
        suggested_tpq: u16,
    },
}

/// One sounded key: press and release instants plus strike velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub velocity: u8,
    /// Seconds from the start of the session.
    pub t_press: f64,
    pub t_release: f64,
    pub channel: u8,
    /// Index of the SMF track the note came from (0 for format 0).
    #[serde(default)]
    pub track: u16,
}

impl NoteEvent {
    pub fn new(pitch: u8, velocity: u8, t_press: f64, t_release: f64) -> Result<Self, MidiError> {
        let ev = NoteEvent {
            pitch,
            velocity,
            t_press,
            t_release,
            channel: 0,
            track: 0,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn with_channel(mut self, channel: u8) -> Self {
        self.channel = channel;
        self
    }

    pub fn validate(&self) -> Result<(), MidiError> {
        if !(LOWEST_PIANO_KEY..=HIGHEST_PIANO_KEY).contains(&self.pitch) {
            return Err(MidiError::InvalidNote(format!(
                "pitch {} outside piano range {LOWEST_PIANO_KEY}..={HIGHEST_PIANO_KEY}",
                self.pitch
            )));
        }
        if self.velocity > 127 {
            return Err(MidiError::InvalidNote(format!(
                "velocity {}",
                self.velocity
            )));
        }
        if !(self.t_press.is_finite() && self.t_release.is_finite())
            || self.t_release <= self.t_press
        {
            return Err(MidiError::InvalidNote(format!(
                "release {} must follow press {}",
                self.t_release, self.t_press
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.t_release - self.t_press
    }

    /// True when the key is down at `t` (press inclusive, release exclusive).
    pub fn sounding_at(&self, t: f64) -> bool {
        self.t_press <= t && t < self.t_release
    }
}

/// A flattened performance: all note events of a file in press order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidiTrack {
    pub events: Vec<NoteEvent>,
    pub ticks_per_quarter: u16,
    pub tempo_map: Vec<TempoChange>,
    /// Names from track-name meta events, indexed by SMF track.
    #[serde(default)]
    pub track_names: Vec<Option<String>>,
    /// Notes dropped by the parser because they fall outside the piano range.
    #[serde(default)]
    pub dropped_out_of_range: usize,
}

impl MidiTrack {
    pub fn new(
        mut events: Vec<NoteEvent>,
        ticks_per_quarter: u16,
        tempo_map: Vec<TempoChange>,
    ) -> Self {
        sort_events(&mut events);
        MidiTrack {
            events,
            ticks_per_quarter,
            tempo_map,
            track_names: Vec::new(),
            dropped_out_of_range: 0,
        }
    }

    /// A track at a single fixed tempo.
    pub fn with_bpm(events: Vec<NoteEvent>, ticks_per_quarter: u16, bpm: f64) -> Self {
        let us = (60_000_000.0 / bpm).round() as u32;
        Self::new(
            events,
            ticks_per_quarter,
            vec![TempoChange {
                tick: 0,
                us_per_quarter: us,
            }],
        )
    }

    pub fn tempo(&self) -> TempoMap {
        TempoMap::new(self.ticks_per_quarter, &self.tempo_map)
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.events.iter().map(|e| e.t_release).fold(0.0, f64::max)
    }
}

/// Sort by press time; ties by ascending pitch. Stable.
pub fn sort_events(events: &mut [NoteEvent]) {
    events.sort_by(|a, b| {
        a.t_press
            .total_cmp(&b.t_press)
            .then_with(|| a.pitch.cmp(&b.pitch))
    });
}

/// Articulation and dynamics of a single keystroke.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeystrokeMetrics {
    /// Key-press velocity (MIDI-normalized 0..127).
    pub v_press: f64,
    /// Seconds the key was held down.
    pub t_hold: f64,
    /// Seconds until the next distinct press; absent for the final onset.
    pub t_gap: Option<f64>,
    /// Local tempo in beats per second, the reciprocal of `t_gap`.
    pub tempo_beat: Option<f64>,
}

impl KeystrokeMetrics {
    /// Idle time between release and the next press, if the key was released first.
    pub fn t_idle(&self) -> Option<f64> {
        self.t_gap
            .map(|g| g - self.t_hold)
            .filter(|&idle| idle > 0.0)
    }

    pub fn bpm(&self) -> Option<f64> {
        self.tempo_beat.map(|b| b * 60.0)
    }
}

/// Per-note hold time and press-to-press gap. Notes pressed together share
/// the gap to the next later onset, so every reported gap is positive.
pub fn keystroke_metrics(events: &[NoteEvent]) -> Vec<KeystrokeMetrics> {
    let mut out = Vec::with_capacity(events.len());
    for (i, ev) in events.iter().enumerate() {
        let t_gap = events[i + 1..]
            .iter()
            .map(|n| n.t_press - ev.t_press)
            .find(|&g| g > 0.0);
        out.push(KeystrokeMetrics {
            v_press: f64::from(ev.velocity),
            t_hold: ev.t_release - ev.t_press,
            t_gap,
            tempo_beat: t_gap.map(|g| 1.0 / g),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn note(p: u8, a: f64, b: f64) -> NoteEvent {
        NoteEvent::new(p, 64, a, b).unwrap()
    }

    #[test]
    fn gap_of_two_thirds_second_is_ninety_bpm() {
        let m = keystroke_metrics(&[note(60, 0.0, 0.5), note(62, 2.0 / 3.0, 1.0)]);
        assert_relative_eq!(m[0].t_gap.unwrap(), 0.6667, epsilon = 1e-3);
        assert_relative_eq!(m[0].tempo_beat.unwrap(), 1.5, epsilon = 1e-9);
        assert_relative_eq!(m[0].bpm().unwrap(), 90.0, epsilon = 1e-9);
        assert!(m[1].t_gap.is_none());
    }

    #[test]
    fn single_note_has_hold_and_no_gap() {
        let m = keystroke_metrics(&[note(60, 1.0, 1.4)]);
        assert_eq!(m.len(), 1);
        assert_relative_eq!(m[0].t_hold, 0.4, epsilon = 1e-12);
        assert_eq!(m[0].t_gap, None);
        assert!(keystroke_metrics(&[]).is_empty());
    }

    #[test]
    fn sixteen_even_presses_over_a_ninety_bpm_bar() {
        let t_bar = 60.0 * 4.0 / 90.0;
        let step = t_bar / 16.0;
        let evs: Vec<_> = (0..16)
            .map(|i| {
                note(
                    60 + (i % 5) as u8,
                    i as f64 * step,
                    i as f64 * step + step * 0.5,
                )
            })
            .collect();
        let m = keystroke_metrics(&evs);
        assert_eq!(m.iter().filter(|k| k.t_gap.is_some()).count(), 15);
        for k in &m[..15] {
            assert_relative_eq!(k.t_gap.unwrap(), 0.1667, epsilon = 1e-3);
            assert_relative_eq!(k.t_idle().unwrap(), step * 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn chord_notes_share_the_gap_to_the_next_onset() {
        let m = keystroke_metrics(&[
            note(48, 0.0, 0.5),
            note(52, 0.0, 0.5),
            note(55, 0.0, 0.5),
            note(60, 0.5, 1.0),
        ]);
        assert!(m[..3].iter().all(|k| k.t_gap == Some(0.5)));
    }

    #[test]
    fn note_validation() {
        assert!(NoteEvent::new(20, 64, 0.0, 1.0).is_err());
        assert!(NoteEvent::new(109, 64, 0.0, 1.0).is_err());
        assert!(NoteEvent::new(60, 128, 0.0, 1.0).is_err());
        assert!(NoteEvent::new(60, 64, 1.0, 1.0).is_err());
        assert!(NoteEvent::new(60, 64, 0.0, f64::NAN).is_err());
        assert!(NoteEvent::new(21, 0, 0.0, 0.1).is_ok());
    }

    #[test]
    fn track_sorts_by_press_then_pitch() {
        let t = MidiTrack::with_bpm(
            vec![note(67, 0.0, 1.0), note(60, 0.5, 1.0), note(64, 0.0, 1.0)],
            480,
            90.0,
        );
        let p: Vec<u8> = t.events.iter().map(|e| e.pitch).collect();
        assert_eq!(p, vec![64, 67, 60]);
    }
}
