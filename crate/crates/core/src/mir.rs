//! Corpus preparation: tempo normalization, key normalization and
//! chord-melody pair extraction from accompaniment triads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chord::ChordLabel;
use crate::dataset::ChordMelodyPair;
use crate::midi::{
    parse_smf, MidiTrack, NoteEvent, TempoChange, HIGHEST_PIANO_KEY, LOWEST_PIANO_KEY,
};
use crate::tokenizer::{bar_duration, tokenize_bar, TimeSignature, DEFAULT_DELTA_MELODY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirConfig {
    /// Maximum press spread for notes of one chord is twice this value.
    pub delta_chord: f64,
    pub delta_melody: f64,
    pub target_bpm: f64,
    pub signature: TimeSignature,
    /// Allowed semitone distances between any two notes of a triad.
    pub permissible_intervals: Vec<u8>,
    /// Pitch classes of accidentals; triads touching them are rejected.
    pub black_keys: Vec<u8>,
    /// With no named melody track, notes at or above this pitch are melody.
    pub melody_split_pitch: u8,
    pub melody_track_name: String,
}

impl Default for MirConfig {
    fn default() -> Self {
        MirConfig {
            delta_chord: 0.050,
            delta_melody: DEFAULT_DELTA_MELODY,
            target_bpm: 90.0,
            signature: TimeSignature::default(),
            permissible_intervals: vec![3, 4, 7],
            black_keys: vec![1, 3, 6, 8, 10],
            melody_split_pitch: 60,
            melody_track_name: "MELODY".into(),
        }
    }
}

impl MirConfig {
    pub fn t_bar(&self) -> f64 {
        bar_duration(self.target_bpm, self.signature.beats)
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Rescale every timestamp so the song plays at `target_bpm` throughout.
/// Each tempo segment is stretched by its own bpm / target factor.
pub fn normalize_song(track: &MidiTrack, target_bpm: f64) -> MidiTrack {
    let segs: Vec<(f64, f64)> = track
        .tempo()
        .segments_seconds()
        .into_iter()
        .map(|(start, bpm)| (start, bpm / target_bpm))
        .collect();
    let mut out_starts = Vec::with_capacity(segs.len());
    let mut acc = 0.0;
    for (i, &(start, factor)) in segs.iter().enumerate() {
        out_starts.push(acc);
        if let Some(&(next, _)) = segs.get(i + 1) {
            acc += (next - start) * factor;
        }
    }
    let map = |t: f64| {
        let i = segs.partition_point(|s| s.0 <= t).max(1) - 1;
        out_starts[i] + (t - segs[i].0) * segs[i].1
    };
    let events = track
        .events
        .iter()
        .map(|e| NoteEvent {
            t_press: map(e.t_press),
            t_release: map(e.t_release),
            ..e.clone()
        })
        .collect();
    let mut out = MidiTrack::new(
        events,
        track.ticks_per_quarter,
        vec![TempoChange {
            tick: 0,
            us_per_quarter: (60_000_000.0 / target_bpm).round() as u32,
        }],
    );
    out.track_names = track.track_names.clone();
    out.dropped_out_of_range = track.dropped_out_of_range;
    out
}

/// Melody and accompaniment note lists, each in press order.
pub fn split_voices(track: &MidiTrack, cfg: &MirConfig) -> (Vec<NoteEvent>, Vec<NoteEvent>) {
    let melody_track = track.track_names.iter().position(|n| {
        n.as_deref()
            .is_some_and(|n| n.eq_ignore_ascii_case(&cfg.melody_track_name))
    });
    match melody_track {
        Some(idx) => track
            .events
            .iter()
            .cloned()
            .partition(|e| e.track as usize == idx),
        None => track
            .events
            .iter()
            .cloned()
            .partition(|e| e.pitch >= cfg.melody_split_pitch),
    }
}

/// A triad found in the accompaniment: index of its first note and label.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectedTriad {
    pub first: usize,
    pub label: ChordLabel,
    pub t_press: f64,
}

fn classify_triplet(notes: [&NoteEvent; 3], cfg: &MirConfig, shift: i32) -> Option<ChordLabel> {
    let mut p = notes.map(|n| i32::from(n.pitch) + shift);
    p.sort_unstable();
    let allowed = |d: i32| d > 0 && cfg.permissible_intervals.contains(&(d as u8));
    if !(allowed(p[1] - p[0]) && allowed(p[2] - p[1]) && allowed(p[2] - p[0])) {
        return None;
    }
    let pcs = p.map(|x| x.rem_euclid(12) as u8);
    if pcs.iter().any(|pc| cfg.black_keys.contains(pc)) {
        return None;
    }
    ChordLabel::from_root_and_intervals(pcs[0], (p[1] - p[0]) as u8, (p[2] - p[0]) as u8)
}

/// Scan accompaniment notes in press order for simultaneous vocabulary triads.
/// `shift` transposes pitches before classification.
pub fn detect_triads(accomp: &[NoteEvent], cfg: &MirConfig, shift: i32) -> Vec<DetectedTriad> {
    let mut out = Vec::new();
    let window = 2.0 * cfg.delta_chord;
    let mut i = 0;
    while i + 2 < accomp.len() {
        let (a, b, c) = (&accomp[i], &accomp[i + 1], &accomp[i + 2]);
        let g1 = b.t_press - a.t_press;
        let g2 = c.t_press - b.t_press;
        if g1 <= window && g2 <= window {
            if let Some(label) = classify_triplet([a, b, c], cfg, shift) {
                out.push(DetectedTriad {
                    first: i,
                    label,
                    t_press: a.t_press,
                });
                i += 3;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Outcome of key normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Transposition {
    pub track: MidiTrack,
    /// Semitones added to every pitch.
    pub shift: i32,
    /// True when no candidate shift produced a vocabulary triad.
    pub low_confidence: bool,
    pub triads: usize,
}

/// Shift the song so its accompaniment yields the most vocabulary triads.
/// Candidates 0..11 are tried; ties go to the smaller candidate. The applied
/// shift is the octave-equivalent in -6..=5 when that keeps notes on the
/// keyboard.
pub fn transpose_to_c(track: &MidiTrack, cfg: &MirConfig) -> Transposition {
    let (_, accomp) = split_voices(track, cfg);
    let mut best = (0usize, 0i32);
    for s in 0..12 {
        let n = detect_triads(&accomp, cfg, s).len();
        if n > best.0 {
            best = (n, s);
        }
    }
    let (count, s) = best;
    let lo = track
        .events
        .iter()
        .map(|e| i32::from(e.pitch))
        .min()
        .unwrap_or(60);
    let hi = track
        .events
        .iter()
        .map(|e| i32::from(e.pitch))
        .max()
        .unwrap_or(60);
    let fits =
        |d: i32| lo + d >= i32::from(LOWEST_PIANO_KEY) && hi + d <= i32::from(HIGHEST_PIANO_KEY);
    let preferred = if s > 5 { s - 12 } else { s };
    let shift = [preferred, preferred + 12, preferred - 12]
        .into_iter()
        .find(|&d| fits(d))
        .unwrap_or(0);
    let events = track
        .events
        .iter()
        .map(|e| NoteEvent {
            pitch: (i32::from(e.pitch) + shift) as u8,
            ..e.clone()
        })
        .collect();
    let mut out = MidiTrack::new(events, track.ticks_per_quarter, track.tempo_map.clone());
    out.track_names = track.track_names.clone();
    out.dropped_out_of_range = track.dropped_out_of_range;
    Transposition {
        track: out,
        shift,
        low_confidence: count == 0,
        triads: count,
    }
}

/// Pair each accompaniment triad with the melody bar starting at its press.
/// The track must already be at the target tempo and in the target key.
pub fn extract_pairs(track: &MidiTrack, cfg: &MirConfig, source: &str) -> Vec<ChordMelodyPair> {
    let (melody, accomp) = split_voices(track, cfg);
    let t_bar = cfg.t_bar();
    detect_triads(&accomp, cfg, 0)
        .into_iter()
        .map(|d| {
            let bar = tokenize_bar(&melody, d.t_press, t_bar, cfg.delta_melody);
            ChordMelodyPair {
                chord_label: d.label,
                tokens: bar.tokens,
                source: source.to_string(),
                bar: (d.t_press / t_bar + 1e-9).floor() as u32,
            }
        })
        .collect()
}

/// Normalize tempo and key, then extract pairs.
pub fn process_song(track: &MidiTrack, cfg: &MirConfig, source: &str) -> SongResult {
    let normalized = normalize_song(track, cfg.target_bpm);
    let t = transpose_to_c(&normalized, cfg);
    SongResult {
        source: source.to_string(),
        pairs: extract_pairs(&t.track, cfg, source),
        shift: t.shift,
        low_confidence: t.low_confidence,
    }
}

#[derive(Clone, Debug)]
pub struct SongResult {
    pub source: String,
    pub pairs: Vec<ChordMelodyPair>,
    pub shift: i32,
    pub low_confidence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub source: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub songs: usize,
    pub pairs: usize,
    pub per_chord: BTreeMap<String, usize>,
    pub low_confidence: Vec<String>,
    pub skipped: Vec<SkippedFile>,
}

impl Manifest {
    pub fn chord_count(&self, label: ChordLabel) -> usize {
        self.per_chord.get(label.name()).copied().unwrap_or(0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus directory {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no MIDI files under {0}")]
    Empty(PathBuf),
}

/// Every `.mid`/`.midi` file under `dir`, sorted, skipping `versions` folders.
pub fn list_midi_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let rd = std::fs::read_dir(&d).map_err(|source| CorpusError::Io {
            path: d.clone(),
            source,
        })?;
        for entry in rd {
            let entry = entry.map_err(|source| CorpusError::Io {
                path: d.clone(),
                source,
            })?;
            let path = entry.path();
            if path.is_dir() {
                if path.file_name().is_some_and(|n| n != "versions") {
                    stack.push(path);
                }
            } else if path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Run extraction over a directory of MIDI files in parallel. Output order
/// depends only on file names, never on scheduling.
pub fn extract_corpus(
    dir: &Path,
    cfg: &MirConfig,
) -> Result<(Vec<ChordMelodyPair>, Manifest), CorpusError> {
    let files = list_midi_files(dir)?;
    if files.is_empty() {
        return Err(CorpusError::Empty(dir.to_path_buf()));
    }
    let results: Vec<Result<SongResult, SkippedFile>> = files
        .par_iter()
        .map(|path| {
            let source = path
                .strip_prefix(dir)
                .unwrap_or(path)
                .with_extension("")
                .to_string_lossy()
                .replace('\\', "/");
            let bytes = std::fs::read(path).map_err(|e| SkippedFile {
                source: source.clone(),
                reason: e.to_string(),
            })?;
            let track = parse_smf(&bytes).map_err(|e| SkippedFile {
                source: source.clone(),
                reason: e.to_string(),
            })?;
            Ok(process_song(&track, cfg, &source))
        })
        .collect();

    let mut songs = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(s) => songs.push(s),
            Err(s) => skipped.push(s),
        }
    }
    Ok(merge_songs(songs, skipped, cfg))
}

/// Deterministic merge: songs by source id, pairs by bar within a song.
pub fn merge_songs(
    mut songs: Vec<SongResult>,
    skipped: Vec<SkippedFile>,
    cfg: &MirConfig,
) -> (Vec<ChordMelodyPair>, Manifest) {
    songs.sort_by(|a, b| a.source.cmp(&b.source));
    let mut pairs = Vec::new();
    let mut low_confidence = Vec::new();
    for s in &songs {
        if s.low_confidence {
            low_confidence.push(s.source.clone());
        }
        let mut ps = s.pairs.clone();
        ps.sort_by_key(|p| p.bar);
        pairs.extend(ps);
    }
    let mut per_chord: BTreeMap<String, usize> = ChordLabel::ALL
        .iter()
        .map(|c| (c.name().to_string(), 0))
        .collect();
    for p in &pairs {
        *per_chord
            .entry(p.chord_label.name().to_string())
            .or_default() += 1;
    }
    let manifest = Manifest {
        config_hash: cfg.hash(),
        songs: songs.len(),
        pairs: pairs.len(),
        per_chord,
        low_confidence,
        skipped,
    };
    (pairs, manifest)
}
