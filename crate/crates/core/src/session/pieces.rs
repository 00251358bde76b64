//! Short scripted melodies with a chord chart, written in a tiny notation:
//! `E5:1.5` is E5 for one and a half beats, `r:1` a one-beat rest, `|`
//! separates bars.

use thiserror::Error;

use crate::chord::ChordLabel;
use crate::midi::{MidiTrack, NoteEvent};

/// Fraction of each written duration that the key stays down.
const ARTICULATION: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum NotationError {
    #[error("bar {bar}: cannot read `{token}`")]
    Token { bar: usize, token: String },
    #[error("bar {bar} holds {found} beats, expected {expected}")]
    BarLength {
        bar: usize,
        found: f64,
        expected: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub name: &'static str,
    pub melody: &'static str,
    /// Chord per bar.
    pub chart: Vec<ChordLabel>,
}

fn pitch_of(name: &str) -> Option<u8> {
    let mut chars = name.chars();
    let step = match chars.next()? {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let rest: String = chars.collect();
    let (accidental, octave) = if let Some(o) = rest.strip_prefix('#') {
        (1, o)
    } else if let Some(o) = rest.strip_prefix('b') {
        (-1, o)
    } else {
        (0, rest.as_str())
    };
    let octave: i32 = octave.parse().ok()?;
    u8::try_from(12 * (octave + 1) + step + accidental).ok()
}

/// Notes of `melody` at `bpm` with `beats` beats per bar.
pub fn parse_melody(melody: &str, bpm: f64, beats: u8) -> Result<Vec<NoteEvent>, NotationError> {
    let beat = 60.0 / bpm;
    let mut t = 0.0;
    let mut out = Vec::new();
    for (bar, text) in melody.split('|').enumerate() {
        let mut filled = 0.0;
        for token in text.split_whitespace() {
            let bad = || NotationError::Token {
                bar,
                token: token.to_string(),
            };
            let (name, dur) = token.split_once(':').unwrap_or((token, "1"));
            let dur: f64 = dur.parse().map_err(|_| bad())?;
            if dur.is_nan() || dur <= 0.0 {
                return Err(bad());
            }
            if name != "r" {
                let pitch = pitch_of(name).ok_or_else(bad)?;
                let ev = NoteEvent::new(
                    pitch,
                    80,
                    t + filled * beat,
                    t + (filled + ARTICULATION * dur) * beat,
                )
                .map_err(|_| bad())?;
                out.push(ev);
            }
            filled += dur;
        }
        if (filled - f64::from(beats)).abs() > 1e-9 {
            return Err(NotationError::BarLength {
                bar,
                found: filled,
                expected: f64::from(beats),
            });
        }
        t += filled * beat;
    }
    Ok(out)
}

impl Piece {
    pub fn bars(&self) -> usize {
        self.melody.split('|').count()
    }

    pub fn track(&self, bpm: f64, beats: u8) -> Result<MidiTrack, NotationError> {
        let mut t = MidiTrack::with_bpm(parse_melody(self.melody, bpm, beats)?, 480, bpm);
        t.track_names = vec![Some("MELODY".into())];
        Ok(t)
    }
}

/// Four pieces in 4/4 covering one, two and four strikes per bar.
pub fn scripted_pieces() -> Vec<Piece> {
    use ChordLabel::*;
    vec![
        Piece {
            name: "hymn",
            melody: "E5 E5 F5 G5 | G5 F5 E5 D5 | C5 C5 D5 E5 | E5:1.5 D5:0.5 D5:2 | \
                     E5 E5 F5 G5 | G5 F5 E5 D5 | C5 C5 D5 E5 | D5:1.5 C5:0.5 C5:2",
            chart: vec![C, G, C, G, C, G, C, C],
        },
        Piece {
            name: "nursery",
            melody: "C5 C5 G5 G5 | A5 A5 G5:2 | F5 F5 E5 E5 | D5 D5 C5:2 | \
                     G5 G5 F5 F5 | E5 E5 D5:2 | G5 G5 F5 F5 | E5 E5 D5:2 | \
                     C5 C5 G5 G5 | A5 A5 G5:2 | F5 F5 E5 E5 | D5 D5 C5:2",
            chart: vec![C, F, F, G, C, G, C, G, C, F, F, C],
        },
        Piece {
            name: "runs",
            melody: "C5:0.25 D5:0.25 E5:0.25 F5:0.25 G5:0.25 A5:0.25 B5:0.25 C6:0.25 \
                     B5:0.25 A5:0.25 G5:0.25 F5:0.25 E5:0.25 D5:0.25 C5:0.25 D5:0.25 | \
                     E5:0.25 F5:0.25 G5:0.25 A5:0.25 B5:0.5 A5:0.5 G5:0.5 F5:0.5 E5:0.5 D5:0.5 | \
                     A4:0.25 B4:0.25 C5:0.25 D5:0.25 E5:0.25 F5:0.25 G5:0.25 A5:0.25 \
                     G5:0.25 F5:0.25 E5:0.25 D5:0.25 C5:0.25 B4:0.25 A4:0.25 C5:0.25 | \
                     D5:0.5 F5:0.5 A5:0.5 F5:0.5 G5:0.5 B5:0.5 D6:0.5 B5:0.5 | \
                     C6:0.25 B5:0.25 A5:0.25 G5:0.25 F5:0.5 E5:0.5 D5:0.5 C5:0.5 D5:0.5 E5:0.5 | \
                     F5:0.25 G5:0.25 A5:0.25 B5:0.25 C6:0.25 D6:0.25 E6:0.25 D6:0.25 \
                     C6:0.25 B5:0.25 A5:0.25 G5:0.25 F5:0.25 E5:0.25 D5:0.25 E5:0.25 | \
                     E6:0.25 D6:0.25 C6:0.25 B5:0.25 A5:0.5 G5:0.5 F5:0.5 E5:0.5 D5:0.5 E5:0.5 | C5:4",
            chart: vec![C, G, Am, Dm, F, G, Em, C],
        },
        Piece {
            name: "broken chords",
            melody: "C5 E5 G5 E5 | A4 C5 E5 C5 | F5 A5 C6 A5 | G5 B5 D6 B5 | \
                     C5:2 G5:2 | A5:2 E5:2 | F5 G5 A5 B5 | C6:4",
            chart: vec![C, Am, F, G, C, Am, F, C],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn note_names() {
        assert_eq!(pitch_of("C4"), Some(60));
        assert_eq!(pitch_of("A4"), Some(69));
        assert_eq!(pitch_of("F#5"), Some(78));
        assert_eq!(pitch_of("Bb3"), Some(58));
        assert_eq!(pitch_of("H4"), None);
    }

    #[test]
    fn durations_and_rests() {
        let n = parse_melody("C5:2 r:1 E5 | G5:4", 60.0, 4).unwrap();
        assert_eq!(n.len(), 3);
        assert!((n[1].t_press - 3.0).abs() < 1e-12);
        assert!((n[0].t_release - 1.8).abs() < 1e-12);
        assert!((n[2].t_press - 4.0).abs() < 1e-12);
        assert!(matches!(
            parse_melody("C5 C5 C5", 60.0, 4),
            Err(NotationError::BarLength { bar: 0, .. })
        ));
        assert!(matches!(
            parse_melody("Q5:4", 60.0, 4),
            Err(NotationError::Token { .. })
        ));
    }

    #[test]
    fn pieces_are_well_formed() {
        for p in scripted_pieces() {
            assert_eq!(p.bars(), p.chart.len(), "{}", p.name);
            let t = p.track(90.0, 4).unwrap();
            let t_bar = 60.0 * 4.0 / 90.0;
            for bar in 0..p.bars() {
                let downbeat = bar as f64 * t_bar;
                assert!(
                    t.events.iter().any(|e| (e.t_press - downbeat).abs() < 1e-9),
                    "{} bar {bar}",
                    p.name
                );
            }
        }
    }
}
