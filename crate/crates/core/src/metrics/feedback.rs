//! Scripted human model playing against a steady robot under four feedback
//! conditions. The human's tempo drifts as a biased random walk; seeing
//! and/or hearing the robot adds a correction of the human's phase and tempo
//! toward the robot's last strike.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chord::{ChordLabel, ChordVoicing, DEFAULT_OCTAVE_BASE};
use crate::midi::{MidiTrack, NoteEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "NV-NA")]
    NvNa,
    #[serde(rename = "NV-A")]
    NvA,
    #[serde(rename = "V-NA")]
    VNa,
    #[serde(rename = "V-A")]
    VA,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::NvNa,
        Condition::NvA,
        Condition::VNa,
        Condition::VA,
    ];

    pub fn visual(self) -> bool {
        matches!(self, Condition::VNa | Condition::VA)
    }

    pub fn audio(self) -> bool {
        matches!(self, Condition::NvA | Condition::VA)
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::NvNa => "NV-NA",
            Condition::NvA => "NV-A",
            Condition::VNa => "V-NA",
            Condition::VA => "V-A",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown condition `{s}` (expected NV-NA, NV-A, V-NA or V-A)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    /// Heavy beats per run.
    pub beats: usize,
    /// Robot beat period (s).
    pub period: f64,
    pub gain_visual: f64,
    pub gain_audio: f64,
    /// Per-beat tempo drift bias and spread (s).
    pub drift_bias: f64,
    pub drift_sd: f64,
    /// Human motor timing noise (s).
    pub motor_sd: f64,
    /// Robot strike timing noise (s).
    pub robot_sd: f64,
    pub repetitions: usize,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        FeedbackParams {
            beats: 96,
            period: 60.0 * 4.0 / 90.0,
            gain_visual: 0.25,
            gain_audio: 0.35,
            drift_bias: 0.001,
            drift_sd: 0.004,
            motor_sd: 0.010,
            robot_sd: 0.005,
            repetitions: 5,
        }
    }
}

impl FeedbackParams {
    pub fn gain(&self, c: Condition) -> f64 {
        self.gain_visual * f64::from(u8::from(c.visual()))
            + self.gain_audio * f64::from(u8::from(c.audio()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRun {
    pub condition: Condition,
    pub seed: u64,
    pub repetition: usize,
    /// Robot beat period (s).
    pub period: f64,
    pub human_beats: Vec<f64>,
    pub robot_beats: Vec<f64>,
    /// Robot's nominal beat clock.
    pub grid: Vec<f64>,
    /// Human inter-beat interval leading into each beat.
    pub human_period: Vec<f64>,
}

impl FeedbackRun {
    /// Two-voice rendering: a melody note per human beat, a C triad per robot beat.
    pub fn to_midi(&self) -> MidiTrack {
        let mut events = Vec::new();
        for &t in &self.human_beats {
            events.push(NoteEvent {
                pitch: 72,
                velocity: 90,
                t_press: t.max(0.0),
                t_release: t.max(0.0) + 0.3,
                channel: 1,
                track: 1,
            });
        }
        let chord = ChordVoicing::new(ChordLabel::C, DEFAULT_OCTAVE_BASE).pitches();
        for &t in &self.robot_beats {
            for p in chord {
                events.push(NoteEvent {
                    pitch: p,
                    velocity: 80,
                    t_press: t.max(0.0),
                    t_release: t.max(0.0) + 0.3,
                    channel: 0,
                    track: 0,
                });
            }
        }
        let mut track = MidiTrack::with_bpm(events, 480, 240.0 / self.period);
        track.track_names = vec![Some("ROBOT".into()), Some("MELODY".into())];
        track
    }
}

fn run_once(condition: Condition, seed: u64, repetition: usize, p: &FeedbackParams) -> FeedbackRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(condition.index() * 1_000_003 + repetition as u64);
    let motor = Normal::new(0.0, p.motor_sd).expect("finite sd");
    let drift = Normal::new(p.drift_bias, p.drift_sd).expect("finite sd");
    let jitter = Normal::new(0.0, p.robot_sd).expect("finite sd");
    let g = p.gain(condition);

    let grid: Vec<f64> = (0..p.beats).map(|n| n as f64 * p.period).collect();
    let robot: Vec<f64> = grid.iter().map(|t| t + jitter.sample(&mut rng)).collect();
    let mut human = Vec::with_capacity(p.beats);
    let mut periods = Vec::with_capacity(p.beats);
    let mut offset = 0.0;
    human.push(motor.sample(&mut rng));
    periods.push(p.period);
    for n in 1..p.beats {
        let err = human[n - 1] - robot[n - 1];
        offset = (1.0 - g) * offset + drift.sample(&mut rng) - 0.5 * g * err;
        let interval = p.period + offset - g * err + motor.sample(&mut rng);
        periods.push(interval);
        human.push(human[n - 1] + interval);
    }
    FeedbackRun {
        condition,
        seed,
        repetition,
        period: p.period,
        human_beats: human,
        robot_beats: robot,
        grid,
        human_period: periods,
    }
}

/// All repetitions of one condition. Each repetition draws from its own
/// stream of the seeded generator, so runs are reproducible individually.
pub fn simulate_feedback_conditions(
    condition: Condition,
    seed: u64,
    params: &FeedbackParams,
) -> Vec<FeedbackRun> {
    (0..params.repetitions)
        .map(|r| run_once(condition, seed, r, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{deviation_entropy, mae_sae};

    fn summary(c: Condition) -> (f64, f64) {
        let p = FeedbackParams::default();
        let runs = simulate_feedback_conditions(c, 11, &p);
        let n = runs.len() as f64;
        let mae = runs
            .iter()
            .map(|r| mae_sae(&r.human_beats, &r.robot_beats).unwrap().0)
            .sum::<f64>()
            / n;
        let ent = runs
            .iter()
            .map(|r| {
                let d: Vec<f64> = r
                    .human_beats
                    .iter()
                    .zip(&r.robot_beats)
                    .map(|(h, r)| h - r)
                    .collect();
                deviation_entropy(&d, 0.02).unwrap()
            })
            .sum::<f64>()
            / n;
        (mae, ent)
    }

    #[test]
    fn gains_follow_the_senses() {
        let p = FeedbackParams::default();
        assert_eq!(p.gain(Condition::NvNa), 0.0);
        assert_eq!(p.gain(Condition::VNa), 0.25);
        assert_eq!(p.gain(Condition::NvA), 0.35);
        assert!((p.gain(Condition::VA) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn feedback_orders_error_and_entropy() {
        let s: Vec<(f64, f64)> = Condition::ALL.iter().map(|&c| summary(c)).collect();
        let (nvna, va) = (s[0], s[3]);
        for other in &s[1..3] {
            assert!(va.0 < other.0 && other.0 < nvna.0, "{s:?}");
            assert!(va.1 < other.1 && other.1 < nvna.1, "{s:?}");
        }
    }

    #[test]
    fn without_feedback_the_tempo_drifts_one_way() {
        let p = FeedbackParams::default();
        let r = &simulate_feedback_conditions(Condition::NvNa, 3, &p)[0];
        let first: f64 = r.human_period[1..11].iter().sum::<f64>() / 10.0;
        let last: f64 = r.human_period[p.beats - 10..].iter().sum::<f64>() / 10.0;
        assert!(last > first + 0.02, "{first} {last}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = FeedbackParams::default();
        for c in Condition::ALL {
            assert_eq!(
                simulate_feedback_conditions(c, 9, &p),
                simulate_feedback_conditions(c, 9, &p)
            );
        }
        assert_ne!(
            simulate_feedback_conditions(Condition::VA, 9, &p),
            simulate_feedback_conditions(Condition::VA, 10, &p)
        );
    }

    #[test]
    fn condition_names_round_trip() {
        for c in Condition::ALL {
            assert_eq!(c.name().parse::<Condition>().unwrap(), c);
        }
        assert!("X".parse::<Condition>().is_err());
    }
}
