//! Bar-by-bar accompaniment decisions: chord choice from the previous bar's
//! melody, how many times to strike it, and when.

use serde::{Deserialize, Serialize};

use crate::chord::{ChordLabel, ChordVoicing, DEFAULT_OCTAVE_BASE};
use crate::model::ChordClassifier;
use crate::tokenizer::{pitch_variation, BarTokens, TOKENS_PER_BAR};

/// Pitch-variation levels at which the strike count steps up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrikeThresholds {
    pub double: u32,
    pub quadruple: u32,
}

impl Default for StrikeThresholds {
    fn default() -> Self {
        StrikeThresholds {
            double: 9,
            quadruple: 13,
        }
    }
}

/// Velocity of the first strike and the per-strike decay within a bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrikeDynamics {
    pub initial: f64,
    pub decay: f64,
}

impl Default for StrikeDynamics {
    fn default() -> Self {
        StrikeDynamics {
            initial: 96.0,
            decay: 0.85,
        }
    }
}

/// Strikes per bar for a melody with pitch variation `tau`: 1, 2 or 4.
pub fn d_of_tau(tau: u32, th: &StrikeThresholds) -> u8 {
    1 + u8::from(tau >= th.double) + 2 * u8::from(tau >= th.quadruple)
}

/// Evenly spaced strike instants, the first on the downbeat.
pub fn layout_strikes(ck: u8, bar_start: f64, t_bar: f64) -> Vec<f64> {
    strike_tokens(ck)
        .into_iter()
        .map(|j| bar_start + j as f64 / TOKENS_PER_BAR as f64 * t_bar)
        .collect()
}

/// Token indices (0-based) that strikes land on.
pub fn strike_tokens(ck: u8) -> Vec<usize> {
    let ck = usize::from(ck.max(1));
    (0..ck).map(|k| k * TOKENS_PER_BAR / ck).collect()
}

pub fn strike_velocities(ck: u8, dynamics: &StrikeDynamics) -> Vec<u8> {
    (0..i32::from(ck))
        .map(|k| {
            (dynamics.initial * dynamics.decay.powi(k))
                .round()
                .clamp(1.0, 127.0) as u8
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub chord: ChordLabel,
    pub ck: u8,
    pub tau: u32,
}

/// Chord and strike count for the next bar from the bar just completed.
pub fn decide_next(
    model: &ChordClassifier,
    last_bar: &BarTokens,
    th: &StrikeThresholds,
) -> Decision {
    let tau = pitch_variation(last_bar);
    Decision {
        chord: model.predict(&last_bar.tokens),
        ck: d_of_tau(tau, th),
        tau,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccompanimentPlan {
    /// Zero-based bar the plan is played in.
    pub bar: u32,
    pub chord: ChordLabel,
    pub ck: u8,
    pub tau: u32,
    pub strike_times: Vec<f64>,
    pub strike_tokens: Vec<usize>,
    pub velocities: Vec<u8>,
    pub pitches: [u8; 3],
}

impl AccompanimentPlan {
    pub fn new(
        bar: u32,
        decision: Decision,
        bar_start: f64,
        t_bar: f64,
        dynamics: &StrikeDynamics,
    ) -> Self {
        AccompanimentPlan {
            bar,
            chord: decision.chord,
            ck: decision.ck,
            tau: decision.tau,
            strike_times: layout_strikes(decision.ck, bar_start, t_bar),
            strike_tokens: strike_tokens(decision.ck),
            velocities: strike_velocities(decision.ck, dynamics),
            pitches: ChordVoicing::new(decision.chord, DEFAULT_OCTAVE_BASE).pitches(),
        }
    }
}

/// Sliding-window accompanist. Feeding the completed bar `p` yields the plan
/// for bar `p + 1`; nothing is ever planned for the first bar.
#[derive(Clone, Debug, Default)]
pub struct Accompanist {
    pub thresholds: StrikeThresholds,
    pub dynamics: StrikeDynamics,
}

impl Accompanist {
    pub fn plan_after(
        &self,
        model: &ChordClassifier,
        completed: u32,
        bar: &BarTokens,
    ) -> AccompanimentPlan {
        let d = decide_next(model, bar, &self.thresholds);
        let start = bar.bar_start + bar.bar_duration;
        AccompanimentPlan::new(completed + 1, d, start, bar.bar_duration, &self.dynamics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tokenizer::bar_duration;
    use proptest::prelude::*;

    #[test]
    fn strike_counts() {
        let th = StrikeThresholds::default();
        assert_eq!(d_of_tau(1, &th), 1);
        assert_eq!(d_of_tau(8, &th), 1);
        assert_eq!(d_of_tau(9, &th), 2);
        assert_eq!(d_of_tau(12, &th), 2);
        assert_eq!(d_of_tau(13, &th), 4);
        assert_eq!(d_of_tau(16, &th), 4);
    }

    #[test]
    fn strike_layout_at_ninety_bpm() {
        let t_bar = bar_duration(90.0, 4);
        assert_eq!(layout_strikes(1, 0.0, t_bar), vec![0.0]);
        let four = layout_strikes(4, 0.0, t_bar);
        for (a, b) in four.iter().zip([0.0, 2.0 / 3.0, 4.0 / 3.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let two = layout_strikes(2, 0.0, t_bar);
        assert!((two[1] - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(strike_tokens(2), vec![0, 8]);
        assert_eq!(strike_tokens(4), vec![0, 4, 8, 12]);
    }

    #[test]
    fn velocities_decay() {
        let v = strike_velocities(4, &StrikeDynamics::default());
        assert_eq!(v, vec![96, 82, 69, 59]);
    }

    #[test]
    fn silent_bar_strikes_once() {
        let m = ChordClassifier::seeded(ModelConfig::small(4), 1);
        let d = decide_next(
            &m,
            &BarTokens::silent(0.0, 2.0),
            &StrikeThresholds::default(),
        );
        assert_eq!((d.ck, d.tau), (1, 1));
    }

    #[test]
    fn fully_varied_bar_strikes_four_times() {
        let m = ChordClassifier::seeded(ModelConfig::small(4), 1);
        let tokens = [1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2];
        let d = decide_next(
            &m,
            &BarTokens::from_tokens(tokens),
            &StrikeThresholds::default(),
        );
        assert_eq!((d.tau, d.ck), (16, 4));
    }

    #[test]
    fn plan_targets_the_following_bar() {
        let m = ChordClassifier::seeded(ModelConfig::small(4), 2);
        let mut bar = BarTokens::silent(4.0, 2.0);
        bar.tokens[0] = 5;
        let p = Accompanist::default().plan_after(&m, 2, &bar);
        assert_eq!(p.bar, 3);
        assert_eq!(p.strike_times, vec![6.0]);
        assert_eq!(p.chord, m.predict(&bar.tokens));
    }

    proptest! {
        #[test]
        fn strike_count_is_monotone(a in 1u32..=16, b in 1u32..=16) {
            let th = StrikeThresholds::default();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(d_of_tau(lo, &th) <= d_of_tau(hi, &th));
            prop_assert!([1, 2, 4].contains(&d_of_tau(a, &th)));
        }

        #[test]
        fn strikes_stay_inside_the_bar(ck in prop::sample::select(vec![1u8, 2, 4]), start in 0.0f64..100.0, t_bar in 0.5f64..6.0) {
            let ts = layout_strikes(ck, start, t_bar);
            prop_assert_eq!(ts.len(), usize::from(ck));
            prop_assert_eq!(ts[0], start);
            for t in ts {
                prop_assert!(t >= start && t < start + t_bar);
            }
        }
    }
}
