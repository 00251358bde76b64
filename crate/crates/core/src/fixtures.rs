//! Synthetic corpora with planted ground truth.
//!
//! Planted songs carry one root-position triad per bar in the accompaniment
//! and a melody whose first token is the chord root and which touches every
//! chord tone. They are rendered at arbitrary tempos and keys so extraction
//! must undo both normalizations to recover the plan.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chord::ChordLabel;
use crate::dataset::ChordMelodyPair;
use crate::midi::{MidiTrack, NoteEvent, TempoChange, TempoMap};
use crate::tokenizer::TOKENS_PER_BAR;

pub const PLANTED_TPQ: u16 = 480;
const TICKS_PER_TOKEN: u64 = PLANTED_TPQ as u64 / 4;
const TICKS_PER_BAR: u64 = TICKS_PER_TOKEN * TOKENS_PER_BAR as u64;

/// The six triads a planted song may use.
pub const PLANTED_CHORDS: [ChordLabel; 6] = [
    ChordLabel::C,
    ChordLabel::Dm,
    ChordLabel::Em,
    ChordLabel::F,
    ChordLabel::G,
    ChordLabel::Am,
];

const WHITE_PCS: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

/// One bar of melody tokens under `chord`: root on the downbeat, all three
/// chord tones present, with holds, rests and occasional passing tones.
pub fn planted_bar<R: Rng>(chord: ChordLabel, rng: &mut R) -> [u8; TOKENS_PER_BAR] {
    let tones = chord.pitch_classes();
    let mut t = [0u8; TOKENS_PER_BAR];
    t[0] = tones[0] + 1;
    for j in 1..TOKENS_PER_BAR {
        let r: f64 = rng.random();
        t[j] = if r < 0.4 {
            t[j - 1]
        } else if r < 0.55 {
            0
        } else if r < 0.9 {
            tones[rng.random_range(0..3)] + 1
        } else {
            WHITE_PCS[rng.random_range(0..7)] + 1
        };
    }
    if tones[1..].iter().any(|tone| !t.contains(&(tone + 1))) {
        let j = rng.random_range(1..TOKENS_PER_BAR - 1);
        t[j] = tones[1] + 1;
        t[j + 1] = tones[2] + 1;
    }
    t
}

/// Training pairs drawn straight from the planted rule.
pub fn planted_pairs(n: usize, seed: u64) -> Vec<ChordMelodyPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let chord = PLANTED_CHORDS[rng.random_range(0..PLANTED_CHORDS.len())];
            ChordMelodyPair {
                chord_label: chord,
                tokens: planted_bar(chord, &mut rng),
                source: "planted".into(),
                bar: i as u32,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct PlantedSong {
    pub name: String,
    pub track: MidiTrack,
    pub bpm: f64,
    pub shift: i32,
    /// Expected pairs in the original key, one per bar.
    pub truth: Vec<ChordMelodyPair>,
}

fn note(map: &TempoMap, pitch: i32, on: u64, off: u64, velocity: u8, track: u16) -> NoteEvent {
    NoteEvent {
        pitch: pitch as u8,
        velocity,
        t_press: map.tick_to_seconds(on),
        t_release: map.tick_to_seconds(off),
        channel: track as u8,
        track,
    }
}

/// A planted song of `bars` bars at a random tempo and key. Every planted
/// chord appears at least once so the key is unambiguous.
pub fn planted_song(name: &str, bars: usize, seed: u64) -> PlantedSong {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bpm = f64::from(rng.random_range(70u32..=140));
    let shift: i32 = rng.random_range(-5..=6);
    let us = (60_000_000.0 / bpm).round() as u32;
    let tempo = vec![TempoChange {
        tick: 0,
        us_per_quarter: us,
    }];
    let map = TempoMap::new(PLANTED_TPQ, &tempo);

    let mut progression: Vec<ChordLabel> = PLANTED_CHORDS.to_vec();
    while progression.len() < bars.max(PLANTED_CHORDS.len()) {
        progression.push(PLANTED_CHORDS[rng.random_range(0..PLANTED_CHORDS.len())]);
    }
    progression.shuffle(&mut rng);
    progression.truncate(bars.max(PLANTED_CHORDS.len()));

    let mut events = Vec::new();
    let mut truth = Vec::new();
    for (b, &chord) in progression.iter().enumerate() {
        let bar_tick = b as u64 * TICKS_PER_BAR;
        let tokens = planted_bar(chord, &mut rng);

        let root = 48 + i32::from(chord.root_pitch_class()) + shift;
        let (third, fifth) = chord.intervals();
        let spread: [u64; 3] = [0, rng.random_range(0..=4), rng.random_range(0..=8)];
        for (k, iv) in [0, i32::from(third), i32::from(fifth)]
            .into_iter()
            .enumerate()
        {
            let on = bar_tick + spread[k];
            events.push(note(
                &map,
                root + iv,
                on,
                bar_tick + TICKS_PER_BAR - 120,
                70,
                0,
            ));
        }

        let mid = bar_tick + TICKS_PER_BAR / 2;
        match rng.random_range(0..4) {
            0 => events.push(note(&map, root - 12, mid, mid + 120, 60, 0)),
            1 => {
                for (k, iv) in [0, i32::from(third), i32::from(fifth)]
                    .into_iter()
                    .enumerate()
                {
                    let on = mid + 240 * k as u64;
                    events.push(note(&map, root + iv + 12, on, on + 200, 55, 0));
                }
            }
            2 => {
                // Augmented triad: simultaneous but never a vocabulary chord.
                for iv in [0, 4, 8] {
                    events.push(note(&map, 48 + iv + shift, mid, mid + 200, 55, 0));
                }
            }
            _ => {}
        }

        let mut j = 0;
        while j < TOKENS_PER_BAR {
            let v = tokens[j];
            let mut k = j + 1;
            while k < TOKENS_PER_BAR && tokens[k] == v {
                k += 1;
            }
            if v != 0 {
                let on = bar_tick + j as u64 * TICKS_PER_TOKEN;
                let off = bar_tick + k as u64 * TICKS_PER_TOKEN - TICKS_PER_TOKEN / 2;
                events.push(note(&map, 60 + i32::from(v - 1) + shift, on, off, 90, 1));
            }
            j = k;
        }

        truth.push(ChordMelodyPair {
            chord_label: chord,
            tokens,
            source: name.to_string(),
            bar: b as u32,
        });
    }

    let mut track = MidiTrack::new(events, PLANTED_TPQ, tempo);
    track.track_names = vec![Some("PIANO".into()), Some("MELODY".into())];
    PlantedSong {
        name: name.to_string(),
        track,
        bpm,
        shift,
        truth,
    }
}

/// `songs` planted songs named `planted_000`, `planted_001`, ...
pub fn planted_corpus(songs: usize, bars: usize, seed: u64) -> Vec<PlantedSong> {
    (0..songs)
        .map(|i| {
            planted_song(
                &format!("planted_{i:03}"),
                bars,
                seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
            )
        })
        .collect()
}

/// Recall and precision of `found` against `truth`, matching whole pairs.
pub fn recall_precision(truth: &[ChordMelodyPair], found: &[ChordMelodyPair]) -> (f64, f64) {
    use std::collections::HashMap;
    let mut want: HashMap<&ChordMelodyPair, usize> = HashMap::new();
    for p in truth {
        *want.entry(p).or_default() += 1;
    }
    let mut hits = 0usize;
    for p in found {
        if let Some(n) = want.get_mut(p) {
            if *n > 0 {
                *n -= 1;
                hits += 1;
            }
        }
    }
    let recall = if truth.is_empty() {
        1.0
    } else {
        hits as f64 / truth.len() as f64
    };
    let precision = if found.is_empty() {
        1.0
    } else {
        hits as f64 / found.len() as f64
    };
    (recall, precision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{parse_smf, write_smf};
    use crate::mir::{process_song, MirConfig};

    #[test]
    fn planted_bars_follow_the_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let c = PLANTED_CHORDS[rng.random_range(0..6)];
            let t = planted_bar(c, &mut rng);
            assert_eq!(t[0], c.root_pitch_class() + 1);
            for pc in c.pitch_classes() {
                assert!(t.contains(&(pc + 1)));
            }
        }
    }

    #[test]
    fn planted_song_round_trips_through_extraction() {
        let cfg = MirConfig::default();
        for seed in 0..8 {
            let song = planted_song("s", 12, seed);
            let bytes = write_smf(&song.track).unwrap();
            let parsed = parse_smf(&bytes).unwrap();
            let r = process_song(&parsed, &cfg, "s");
            assert_eq!(r.shift, -song.shift, "seed {seed}");
            let (recall, precision) = recall_precision(&song.truth, &r.pairs);
            assert_eq!(
                (recall, precision),
                (1.0, 1.0),
                "seed {seed} at {} bpm",
                song.bpm
            );
        }
    }

    #[test]
    fn recall_precision_counts_multiplicity() {
        let ps = planted_pairs(3, 2);
        let (r, p) = recall_precision(&ps, &[ps[0].clone(), ps[0].clone()]);
        assert!((r - 1.0 / 3.0).abs() < 1e-12);
        assert!((p - 0.5).abs() < 1e-12);
    }
}
