//! Reference trajectory for one chord change.

use serde::{Deserialize, Serialize};

use super::KeyboardGeometry;
use crate::accompaniment::layout_strikes;
use crate::chord::ChordLabel;

/// Straight horizontal move ending on the next downbeat, followed by the
/// strikes of the next bar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovePlan {
    pub from: ChordLabel,
    pub to: ChordLabel,
    pub from_y: f64,
    pub to_y: f64,
    pub move_start: f64,
    pub move_end: f64,
    pub strikes: Vec<f64>,
}

impl MovePlan {
    pub fn displacement(&self) -> f64 {
        self.to_y - self.from_y
    }

    /// Reference horizontal position at time `t`.
    pub fn position_at(&self, t: f64) -> f64 {
        if t <= self.move_start {
            self.from_y
        } else if t >= self.move_end || self.move_end <= self.move_start {
            self.to_y
        } else {
            let u = (t - self.move_start) / (self.move_end - self.move_start);
            self.from_y + u * (self.to_y - self.from_y)
        }
    }

    /// `n + 1` reference samples starting at `t`, spaced by `dt`.
    pub fn reference(&self, t: f64, n: usize, dt: f64) -> Vec<f64> {
        (0..=n)
            .map(|k| self.position_at(t + k as f64 * dt))
            .collect()
    }

    /// Start the move no earlier than `t`, keeping its end.
    pub fn not_before(mut self, t: f64) -> Self {
        if t > self.move_start {
            self.move_start = t.min(self.move_end);
        }
        self
    }
}

/// Plan the change from `current` to `next`. The move uses the final `zeta`
/// fraction of the last strike slot of the bar ending at `downbeat`; the
/// next bar has `ck` strikes.
#[allow(clippy::too_many_arguments)]
pub fn plan_trajectory(
    current: ChordLabel,
    next: ChordLabel,
    ck: u8,
    geometry: &KeyboardGeometry,
    t_bar: f64,
    slot: f64,
    zeta: f64,
    downbeat: f64,
) -> MovePlan {
    MovePlan {
        from: current,
        to: next,
        from_y: geometry.anchor(current),
        to_y: geometry.anchor(next),
        move_start: downbeat - zeta * slot,
        move_end: downbeat,
        strikes: layout_strikes(ck, downbeat, t_bar),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChordLabel::*;

    fn plan(a: ChordLabel, b: ChordLabel) -> MovePlan {
        plan_trajectory(a, b, 2, &KeyboardGeometry::default(), 2.0, 1.0, 0.5, 10.0)
    }

    #[test]
    fn same_chord_has_no_horizontal_motion() {
        let p = plan(F, F);
        assert_eq!(p.displacement(), 0.0);
        assert_eq!(p.strikes, vec![10.0, 11.0]);
        assert!(p.reference(9.0, 200, 0.01).iter().all(|&y| y == p.from_y));
    }

    #[test]
    fn c_to_g_spans_four_keys() {
        let p = plan(C, G);
        assert!((p.displacement() - 94.0).abs() < 1e-12);
        assert_eq!(p.position_at(9.5), 0.0);
        assert!((p.position_at(9.75) - 47.0).abs() < 1e-9);
        assert!((p.position_at(10.0) - 94.0).abs() < 1e-12);
    }

    #[test]
    fn white_key_tour_moves_one_key_each_time() {
        let tour = [C, Dm, Em, F, G, Am];
        for w in tour.windows(2) {
            assert!((plan(w[0], w[1]).displacement() - 23.5).abs() < 1e-12);
        }
    }

    #[test]
    fn late_start_keeps_the_deadline() {
        let p = plan(C, G).not_before(9.8);
        assert_eq!((p.move_start, p.move_end), (9.8, 10.0));
        assert!((p.position_at(9.9) - 47.0).abs() < 1e-9);
    }
}
