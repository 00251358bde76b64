//! Melody bars as 16 compressed-pitch tokens.
//!
//! A pitch is folded to its pitch class plus one (1..=12) so that 0 can mark
//! a rest. Each bar is sampled at sixteen evenly spaced instants.

use serde::{Deserialize, Serialize};

use crate::midi::{NoteEvent, HIGHEST_PIANO_KEY, LOWEST_PIANO_KEY};

pub const TOKENS_PER_BAR: usize = 16;
/// Number of distinct token values, rest included.
pub const TOKEN_VOCAB: usize = 13;
pub const DEFAULT_DELTA_MELODY: f64 = 0.030;
/// Onsets this close after a token instant still count as sounding at it,
/// absorbing rounding in tick-to-second conversion.
pub const ONSET_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSignature {
    /// Beats per bar.
    pub beats: u8,
    /// Note value that gets one beat (4 = quarter).
    pub unit: u8,
}

impl Default for TimeSignature {
    fn default() -> Self {
        TimeSignature { beats: 4, unit: 4 }
    }
}

impl std::fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.beats, self.unit)
    }
}

impl std::str::FromStr for TimeSignature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| format!("expected X/Y, got `{s}`"))?;
        let beats: u8 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad beat count `{a}`"))?;
        let unit: u8 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad beat unit `{b}`"))?;
        if beats == 0 || unit == 0 {
            return Err(format!("time signature `{s}` must be positive"));
        }
        Ok(TimeSignature { beats, unit })
    }
}

/// Seconds in one bar of `beats` beats at `bpm`.
pub fn bar_duration(bpm: f64, beats: u8) -> f64 {
    60.0 * f64::from(beats) / bpm
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PitchClassInfo {
    pub compressed: u8,
    pub octave: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("pitch {0} outside piano range")]
pub struct PitchOutOfRange(pub u8);

pub fn compress_pitch(pitch: u8) -> Result<PitchClassInfo, PitchOutOfRange> {
    if !(LOWEST_PIANO_KEY..=HIGHEST_PIANO_KEY).contains(&pitch) {
        return Err(PitchOutOfRange(pitch));
    }
    Ok(PitchClassInfo {
        compressed: pitch % 12 + 1,
        octave: (pitch / 12) % 12,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarTokens {
    pub tokens: [u8; TOKENS_PER_BAR],
    pub bar_start: f64,
    pub bar_duration: f64,
}

impl BarTokens {
    pub fn silent(bar_start: f64, bar_duration: f64) -> Self {
        BarTokens {
            tokens: [0; TOKENS_PER_BAR],
            bar_start,
            bar_duration,
        }
    }

    pub fn from_tokens(tokens: [u8; TOKENS_PER_BAR]) -> Self {
        BarTokens {
            tokens,
            bar_start: 0.0,
            bar_duration: bar_duration(90.0, 4),
        }
    }

    pub fn token_time(&self, j: usize) -> f64 {
        self.bar_start + (j as f64 / TOKENS_PER_BAR as f64) * self.bar_duration
    }

    pub fn is_valid(&self) -> bool {
        self.tokens.iter().all(|&t| (t as usize) < TOKEN_VOCAB)
    }
}

/// Sample one bar of melody into tokens.
///
/// Token `j` is taken at `bar_start + j/16 * t_bar` from the notes with
/// `press <= t < release + delta_melody`. Among several such notes the one
/// covering most of the token's interval wins; ties go to the lower pitch.
pub fn tokenize_bar(
    events: &[NoteEvent],
    bar_start: f64,
    t_bar: f64,
    delta_melody: f64,
) -> BarTokens {
    let mut bar = BarTokens::silent(bar_start, t_bar);
    let slot = t_bar / TOKENS_PER_BAR as f64;
    let bar_end = bar_start + t_bar;
    let candidates: Vec<&NoteEvent> = events
        .iter()
        .take_while(|e| e.t_press < bar_end)
        .filter(|e| e.t_release + delta_melody > bar_start)
        .collect();
    for j in 0..TOKENS_PER_BAR {
        let t = bar.token_time(j);
        let t_end = t + slot;
        let mut best: Option<(f64, u8)> = None;
        for e in &candidates {
            let end = e.t_release + delta_melody;
            if !(e.t_press <= t + ONSET_TOLERANCE && t < end) {
                continue;
            }
            let overlap = end.min(t_end) - t.max(e.t_press);
            best = match best {
                Some((o, p)) if o > overlap || (o == overlap && p <= e.pitch) => Some((o, p)),
                _ => Some((overlap, e.pitch)),
            };
        }
        if let Some((_, p)) = best {
            bar.tokens[j] = p % 12 + 1;
        }
    }
    bar
}

/// Tokenize `n_bars` consecutive bars starting at `origin`.
pub fn tokenize_bars(
    events: &[NoteEvent],
    origin: f64,
    t_bar: f64,
    n_bars: usize,
    delta_melody: f64,
) -> Vec<BarTokens> {
    (0..n_bars)
        .map(|p| tokenize_bar(events, origin + p as f64 * t_bar, t_bar, delta_melody))
        .collect()
}

/// One plus the number of adjacent token pairs that are both sounding and differ.
pub fn pitch_variation(bar: &BarTokens) -> u32 {
    1 + bar
        .tokens
        .windows(2)
        .filter(|w| w[0] != 0 && w[1] != 0 && w[0] != w[1])
        .count() as u32
}
