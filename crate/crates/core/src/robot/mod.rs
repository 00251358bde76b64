//! Simulated robot hand: a horizontal axis along the keyboard driven by a
//! receding-horizon speed controller, and a vertical axis following the
//! oscillator keystroke waveform.

pub mod log;
pub mod mpc;
pub mod planner;
pub mod plant;

pub use log::{TrajectoryLog, TrajectoryRecord};
pub use mpc::{mpc_step, oracle_step, select_zeta, track_step, Infeasible, MpcConfig, MpcDecision};
pub use planner::{plan_trajectory, MovePlan};
pub use plant::{KeyEvent, KeyEventKind, Plant, PlantState};

use serde::{Deserialize, Serialize};

use crate::chord::ChordLabel;
use crate::cpg::StrokeGeometry;

pub const DEFAULT_KEY_WIDTH: f64 = 23.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyboardGeometry {
    /// White-key width in millimetres.
    pub key_width: f64,
    /// Horizontal position of the C anchor.
    pub origin: f64,
    pub stroke: StrokeGeometry,
}

impl Default for KeyboardGeometry {
    fn default() -> Self {
        KeyboardGeometry {
            key_width: DEFAULT_KEY_WIDTH,
            origin: 0.0,
            stroke: StrokeGeometry::default(),
        }
    }
}

impl KeyboardGeometry {
    /// Horizontal position of the hand when voicing `chord`.
    pub fn anchor(&self, chord: ChordLabel) -> f64 {
        self.origin + f64::from(chord.white_key_index()) * self.key_width
    }

    /// Number of white keys between two chord anchors.
    pub fn key_distance(&self, from: ChordLabel, to: ChordLabel) -> u32 {
        u32::from(from.white_key_index().abs_diff(to.white_key_index()))
    }

    /// Horizontal travel limits: one key beyond each end of the chord range.
    pub fn bounds(&self) -> (f64, f64) {
        (
            self.origin - self.key_width,
            self.origin + 7.0 * self.key_width,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChordLabel::*;

    #[test]
    fn anchors_are_one_key_apart() {
        let g = KeyboardGeometry::default();
        let tour = [C, Dm, Em, F, G, Am, Bdim];
        for w in tour.windows(2) {
            assert!((g.anchor(w[1]) - g.anchor(w[0]) - 23.5).abs() < 1e-12);
            assert_eq!(g.key_distance(w[0], w[1]), 1);
        }
        assert_eq!(g.key_distance(C, G), 4);
        assert!((g.anchor(G) - g.anchor(C) - 94.0).abs() < 1e-12);
    }
}
