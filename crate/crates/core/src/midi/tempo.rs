use serde::{Deserialize, Serialize};

/// 120 BPM, the SMF default when a file carries no tempo event.
pub const DEFAULT_US_PER_QUARTER: u32 = 500_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoChange {
    pub tick: u64,
    pub us_per_quarter: u32,
}

impl TempoChange {
    pub fn bpm(&self) -> f64 {
        60_000_000.0 / f64::from(self.us_per_quarter)
    }
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    tick: u64,
    us_per_quarter: u32,
    /// Elapsed tick-microseconds at `tick`, in units of 1 / (tpq * 1e6) s.
    acc: u128,
}

/// Piecewise-constant tempo map with exact integer accumulation.
#[derive(Clone, Debug)]
pub struct TempoMap {
    tpq: u16,
    segments: Vec<Segment>,
}

impl TempoMap {
    pub fn new(tpq: u16, changes: &[TempoChange]) -> Self {
        let mut sorted: Vec<TempoChange> = changes.to_vec();
        sorted.sort_by_key(|c| c.tick);
        if sorted.first().is_none_or(|c| c.tick > 0) {
            sorted.insert(
                0,
                TempoChange {
                    tick: 0,
                    us_per_quarter: DEFAULT_US_PER_QUARTER,
                },
            );
        }
        let mut segments: Vec<Segment> = Vec::with_capacity(sorted.len());
        for c in sorted {
            match segments.last_mut() {
                Some(last) if last.tick == c.tick => last.us_per_quarter = c.us_per_quarter,
                Some(last) => {
                    let acc =
                        last.acc + u128::from(c.tick - last.tick) * u128::from(last.us_per_quarter);
                    segments.push(Segment {
                        tick: c.tick,
                        us_per_quarter: c.us_per_quarter,
                        acc,
                    });
                }
                None => segments.push(Segment {
                    tick: c.tick,
                    us_per_quarter: c.us_per_quarter,
                    acc: 0,
                }),
            }
        }
        TempoMap { tpq, segments }
    }

    pub fn ticks_per_quarter(&self) -> u16 {
        self.tpq
    }

    fn scale(&self) -> f64 {
        f64::from(self.tpq) * 1e6
    }

    pub fn tick_to_seconds(&self, tick: u64) -> f64 {
        let idx = self.segments.partition_point(|s| s.tick <= tick) - 1;
        let s = &self.segments[idx];
        let acc = s.acc + u128::from(tick - s.tick) * u128::from(s.us_per_quarter);
        acc as f64 / self.scale()
    }

    /// Nearest tick to `seconds`. Returns `None` for negative or non-finite input
    /// and for times beyond the u64 tick range.
    pub fn seconds_to_tick(&self, seconds: f64) -> Option<u64> {
        if !seconds.is_finite() || seconds < 0.0 {
            return None;
        }
        let target = seconds * self.scale();
        let idx = self
            .segments
            .partition_point(|s| (s.acc as f64) <= target)
            .max(1)
            - 1;
        let s = &self.segments[idx];
        let ticks = ((target - s.acc as f64) / f64::from(s.us_per_quarter)).round();
        let t = s.tick as f64 + ticks;
        if t >= u64::MAX as f64 {
            return None;
        }
        Some(t as u64)
    }

    pub fn changes(&self) -> Vec<TempoChange> {
        self.segments
            .iter()
            .map(|s| TempoChange {
                tick: s.tick,
                us_per_quarter: s.us_per_quarter,
            })
            .collect()
    }

    /// Tempo in BPM in effect at `seconds`.
    pub fn bpm_at(&self, seconds: f64) -> f64 {
        let target = seconds.max(0.0) * self.scale();
        let idx = self
            .segments
            .partition_point(|s| (s.acc as f64) <= target)
            .max(1)
            - 1;
        60_000_000.0 / f64::from(self.segments[idx].us_per_quarter)
    }

    /// Start time in seconds of each tempo segment, paired with its BPM.
    pub fn segments_seconds(&self) -> Vec<(f64, f64)> {
        self.segments
            .iter()
            .map(|s| {
                (
                    s.acc as f64 / self.scale(),
                    60_000_000.0 / f64::from(s.us_per_quarter),
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_tempo_is_120() {
        let m = TempoMap::new(480, &[]);
        assert_relative_eq!(m.tick_to_seconds(480), 0.5);
        assert_eq!(m.seconds_to_tick(1.0), Some(960));
    }

    #[test]
    fn piecewise_accumulation() {
        let m = TempoMap::new(
            96,
            &[
                TempoChange {
                    tick: 0,
                    us_per_quarter: 1_000_000,
                },
                TempoChange {
                    tick: 192,
                    us_per_quarter: 250_000,
                },
            ],
        );
        assert_relative_eq!(m.tick_to_seconds(192), 2.0);
        assert_relative_eq!(m.tick_to_seconds(288), 2.25);
        assert_eq!(m.seconds_to_tick(2.25), Some(288));
        assert_eq!(m.seconds_to_tick(1.0), Some(96));
        assert_relative_eq!(m.bpm_at(1.0), 60.0);
        assert_relative_eq!(m.bpm_at(2.1), 240.0);
        assert!(m.seconds_to_tick(-0.1).is_none());
    }

    #[test]
    fn duplicate_tick_keeps_last_change() {
        let m = TempoMap::new(
            480,
            &[
                TempoChange {
                    tick: 0,
                    us_per_quarter: 600_000,
                },
                TempoChange {
                    tick: 0,
                    us_per_quarter: 666_667,
                },
            ],
        );
        assert_eq!(m.changes().len(), 1);
        assert_eq!(m.changes()[0].us_per_quarter, 666_667);
    }
}
