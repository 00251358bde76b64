//! Whole-session simulation from a recorded melody.

use serde::{Deserialize, Serialize};

use super::config::SessionConfig;
use super::performer::{DecisionSource, Performance, Performer, StrokeBank};
use super::protocol::to_jsonl;
use crate::metrics::{analyze, AnalysisConfig, MetricsError, SyncReport};
use crate::midi::{MidiTrack, NoteEvent};

pub const MELODY_TRACK: &str = "MELODY";
pub const ACCOMPANIMENT_TRACK: &str = "ACCOMPANIMENT";

/// Notes of the track named MELODY when there is one, otherwise every note.
pub fn melody_notes(track: &MidiTrack) -> Vec<NoteEvent> {
    let named = track.track_names.iter().position(|n| {
        n.as_deref()
            .is_some_and(|n| n.eq_ignore_ascii_case(MELODY_TRACK))
    });
    match named {
        Some(i) => track
            .events
            .iter()
            .filter(|e| usize::from(e.track) == i)
            .cloned()
            .collect(),
        None => track.events.clone(),
    }
}

/// Bars touched by a note press.
pub fn bars_spanned(notes: &[NoteEvent], t_bar: f64) -> u32 {
    notes
        .iter()
        .map(|e| (e.t_press / t_bar + 1e-9).floor() as u32 + 1)
        .max()
        .unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum InputKind {
    Off,
    On,
}

/// Melody as time-ordered key events; a release sorts before a press at the
/// same instant.
pub fn input_events(notes: &[NoteEvent]) -> Vec<(f64, u8, u8, bool)> {
    let mut v: Vec<(f64, InputKind, u8, u8)> = notes
        .iter()
        .flat_map(|e| {
            [
                (e.t_press, InputKind::On, e.pitch, e.velocity),
                (e.t_release, InputKind::Off, e.pitch, 0),
            ]
        })
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    v.into_iter()
        .map(|(t, k, p, vel)| (t, p, vel, k == InputKind::On))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ReplayOutcome {
    pub performance: Performance,
    pub bars: u32,
    pub t_bar: f64,
    pub config: SessionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatRecord {
    pub bar: u32,
    pub human: f64,
    pub robot: f64,
}

impl ReplayOutcome {
    /// Melody above, chords below, one track each.
    pub fn merged_midi(&self) -> MidiTrack {
        let mut events: Vec<NoteEvent> = self
            .performance
            .melody
            .iter()
            .map(|e| NoteEvent {
                track: 0,
                channel: 0,
                ..e.clone()
            })
            .collect();
        events.extend(self.performance.accompaniment.iter().map(|e| NoteEvent {
            track: 1,
            channel: 1,
            ..e.clone()
        }));
        let quarter_bpm = self.config.tempo * 4.0 / f64::from(self.config.signature.unit);
        let mut t = MidiTrack::with_bpm(events, 480, quarter_bpm);
        t.track_names = vec![Some(MELODY_TRACK.into()), Some(ACCOMPANIMENT_TRACK.into())];
        t
    }

    pub fn log_jsonl(&self) -> String {
        to_jsonl(&self.performance.log)
    }

    pub fn beats(&self) -> Vec<BeatRecord> {
        let (bars, h, r) = self.performance.matched_beats();
        bars.into_iter()
            .zip(h.into_iter().zip(r))
            .map(|(bar, (human, robot))| BeatRecord { bar, human, robot })
            .collect()
    }

    /// Bar-start grid covering every matched beat.
    pub fn grid(&self) -> Vec<f64> {
        (0..=self.bars.max(1))
            .map(|p| f64::from(p) * self.t_bar)
            .collect()
    }

    pub fn report(&self, cfg: &AnalysisConfig) -> Result<SyncReport, MetricsError> {
        let (_, h, r) = self.performance.matched_beats();
        analyze(&h, &r, &self.grid(), cfg)
    }
}

/// Feed `melody` to a performer at its recorded timestamps and play every
/// bar after the first that the melody reaches.
pub fn run_replay(
    melody: &MidiTrack,
    source: DecisionSource,
    bank: &StrokeBank,
    cfg: &SessionConfig,
) -> ReplayOutcome {
    let notes = melody_notes(melody);
    let t_bar = cfg.t_bar();
    let bars = bars_spanned(&notes, t_bar);
    let mut performer = Performer::new(cfg.clone(), source, bank.clone(), false);
    performer.set_end_bar(bars);
    for (t, pitch, velocity, on) in input_events(&notes) {
        performer.advance_to(t);
        if on {
            performer.note_on(t, pitch, velocity);
        } else {
            performer.note_off(t, pitch);
        }
    }
    let end = notes
        .iter()
        .map(|e| e.t_release)
        .fold(f64::from(bars) * t_bar, f64::max);
    ReplayOutcome {
        performance: performer.finish(end),
        bars,
        t_bar,
        config: cfg.clone(),
    }
}
