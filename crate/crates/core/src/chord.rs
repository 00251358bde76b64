//! The seven-triad chord vocabulary shared by the corpus pipeline, the
//! classifier, the accompaniment scheduler and the robot plant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of chord classes the classifier predicts.
pub const NUM_CHORDS: usize = 7;

/// A triad from the C-major vocabulary: three major, three minor, one diminished.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChordLabel {
    C,
    Dm,
    Em,
    F,
    G,
    Am,
    Bdim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriadQuality {
    Major,
    Minor,
    Diminished,
}

impl ChordLabel {
    /// Class order used by the classifier's output layer.
    pub const ALL: [ChordLabel; NUM_CHORDS] = [
        ChordLabel::C,
        ChordLabel::Dm,
        ChordLabel::Em,
        ChordLabel::F,
        ChordLabel::G,
        ChordLabel::Am,
        ChordLabel::Bdim,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ChordLabel::C => "C",
            ChordLabel::Dm => "Dm",
            ChordLabel::Em => "Em",
            ChordLabel::F => "F",
            ChordLabel::G => "G",
            ChordLabel::Am => "Am",
            ChordLabel::Bdim => "Bdim",
        }
    }

    pub fn quality(self) -> TriadQuality {
        match self {
            ChordLabel::C | ChordLabel::F | ChordLabel::G => TriadQuality::Major,
            ChordLabel::Dm | ChordLabel::Em | ChordLabel::Am => TriadQuality::Minor,
            ChordLabel::Bdim => TriadQuality::Diminished,
        }
    }

    /// Pitch class (0 = C) of the root.
    pub fn root_pitch_class(self) -> u8 {
        match self {
            ChordLabel::C => 0,
            ChordLabel::Dm => 2,
            ChordLabel::Em => 4,
            ChordLabel::F => 5,
            ChordLabel::G => 7,
            ChordLabel::Am => 9,
            ChordLabel::Bdim => 11,
        }
    }

    /// Semitone offsets of third and fifth above the root.
    pub fn intervals(self) -> (u8, u8) {
        match self.quality() {
            TriadQuality::Major => (4, 7),
            TriadQuality::Minor => (3, 7),
            TriadQuality::Diminished => (3, 6),
        }
    }

    /// Root, third and fifth pitch classes.
    pub fn pitch_classes(self) -> [u8; 3] {
        let r = self.root_pitch_class();
        let (third, fifth) = self.intervals();
        [r, (r + third) % 12, (r + fifth) % 12]
    }

    /// White-key index of the root counted from C (C = 0 .. B = 6).
    pub fn white_key_index(self) -> u8 {
        self.index() as u8
    }

    /// Identify a root-position triad from its root pitch class and intervals.
    pub fn from_root_and_intervals(root_pc: u8, third: u8, fifth: u8) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.root_pitch_class() == root_pc % 12 && c.intervals() == (third, fifth))
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown chord label `{0}`")]
pub struct UnknownChord(pub String);

impl FromStr for ChordLabel {
    type Err = UnknownChord;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownChord(s.to_string()))
    }
}

/// Fingers of the robot hand, preset in a chord-hitting pose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Finger {
    Thumb,
    Middle,
    Little,
}

/// A chord realized on the keyboard: concrete MIDI pitches plus the finger
/// that plays each one (little finger on the root, middle on the third,
/// thumb on the fifth).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChordVoicing {
    pub label: ChordLabel,
    /// MIDI pitch of the C at the bottom of the octave holding the root.
    pub octave_base: u8,
    pub root: u8,
    pub third: u8,
    pub fifth: u8,
}

/// Roots are placed in the octave starting at C3.
pub const DEFAULT_OCTAVE_BASE: u8 = 48;

impl ChordVoicing {
    pub fn new(label: ChordLabel, octave_base: u8) -> Self {
        let root = octave_base + label.root_pitch_class();
        let (third, fifth) = label.intervals();
        ChordVoicing {
            label,
            octave_base,
            root,
            third: root + third,
            fifth: root + fifth,
        }
    }

    pub fn pitches(&self) -> [u8; 3] {
        [self.root, self.third, self.fifth]
    }

    pub fn fingering(&self) -> [(Finger, u8); 3] {
        [
            (Finger::Little, self.root),
            (Finger::Middle, self.third),
            (Finger::Thumb, self.fifth),
        ]
    }
}

impl From<ChordLabel> for ChordVoicing {
    fn from(label: ChordLabel) -> Self {
        ChordVoicing::new(label, DEFAULT_OCTAVE_BASE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_matches_fingering_table() {
        let names = |c: ChordLabel| {
            const PC: [&str; 12] = [
                "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
            ];
            c.pitch_classes().map(|p| PC[p as usize])
        };
        assert_eq!(names(ChordLabel::C), ["C", "E", "G"]);
        assert_eq!(names(ChordLabel::Dm), ["D", "F", "A"]);
        assert_eq!(names(ChordLabel::Em), ["E", "G", "B"]);
        assert_eq!(names(ChordLabel::F), ["F", "A", "C"]);
        assert_eq!(names(ChordLabel::G), ["G", "B", "D"]);
        assert_eq!(names(ChordLabel::Am), ["A", "C", "E"]);
        assert_eq!(names(ChordLabel::Bdim), ["B", "D", "F"]);
    }

    #[test]
    fn all_triads_use_white_keys_only() {
        const BLACK: [u8; 5] = [1, 3, 6, 8, 10];
        for c in ChordLabel::ALL {
            assert!(c.pitch_classes().iter().all(|p| !BLACK.contains(p)), "{c}");
        }
    }

    #[test]
    fn labels_round_trip_through_strings() {
        for c in ChordLabel::ALL {
            assert_eq!(c.name().parse::<ChordLabel>().unwrap(), c);
            assert_eq!(ChordLabel::from_index(c.index()), Some(c));
        }
        assert!("Cmaj7".parse::<ChordLabel>().is_err());
    }

    #[test]
    fn voicing_places_root_in_bass_octave() {
        let v = ChordVoicing::from(ChordLabel::C);
        assert_eq!(v.pitches(), [48, 52, 55]);
        let v = ChordVoicing::from(ChordLabel::Am);
        assert_eq!(v.pitches(), [57, 60, 64]);
        assert_eq!(v.fingering()[0], (Finger::Little, 57));
    }
}
