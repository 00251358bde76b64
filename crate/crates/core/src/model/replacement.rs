//! Directional chord-replacement confidence mined from the corpus.
//!
//! Pairs sharing an identical melody form a group. The group's most frequent
//! chord is its target; every other chord in the group counts as a
//! replacement for that target.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chord::{ChordLabel, NUM_CHORDS};
use crate::dataset::ChordMelodyPair;

pub const DEFAULT_STRENGTH: f64 = 0.25;

pub type Matrix = [[f64; NUM_CHORDS]; NUM_CHORDS];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementTable {
    /// `p[target][substitute]`; the diagonal is 1.
    pub p: Matrix,
    pub lambda: [[bool; NUM_CHORDS]; NUM_CHORDS],
    pub threshold: f64,
    pub strength: f64,
    /// Classes that occur anywhere in the source data.
    pub observed: [bool; NUM_CHORDS],
}

impl ReplacementTable {
    pub fn identity() -> Self {
        let mut p = [[0.0; NUM_CHORDS]; NUM_CHORDS];
        for (i, row) in p.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self::from_probabilities(p, [true; NUM_CHORDS], DEFAULT_STRENGTH)
    }

    /// Derive the threshold and indicator from a probability matrix. The
    /// threshold spans the off-diagonal entries among observed classes; an
    /// entry is credited when it reaches the threshold and is nonzero.
    pub fn from_probabilities(p: Matrix, observed: [bool; NUM_CHORDS], strength: f64) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for mu in 0..NUM_CHORDS {
            for nu in 0..NUM_CHORDS {
                if mu != nu && observed[mu] && observed[nu] {
                    lo = lo.min(p[mu][nu]);
                    hi = hi.max(p[mu][nu]);
                }
            }
        }
        let threshold = if lo.is_finite() {
            lo + strength * (hi - lo)
        } else {
            0.0
        };
        let mut lambda = [[false; NUM_CHORDS]; NUM_CHORDS];
        for mu in 0..NUM_CHORDS {
            for nu in 0..NUM_CHORDS {
                lambda[mu][nu] = mu == nu || (p[mu][nu] >= threshold && p[mu][nu] > 0.0);
            }
        }
        ReplacementTable {
            p,
            lambda,
            threshold,
            strength,
            observed,
        }
    }

    pub fn get(&self, target: ChordLabel, substitute: ChordLabel) -> f64 {
        self.p[target.index()][substitute.index()]
    }

    pub fn credited(&self, target: ChordLabel, substitute: ChordLabel) -> bool {
        self.lambda[target.index()][substitute.index()]
    }

    /// Off-diagonal entries sorted by descending confidence.
    pub fn ranked(&self) -> Vec<(ChordLabel, ChordLabel, f64)> {
        let mut v: Vec<_> = ChordLabel::ALL
            .iter()
            .flat_map(|&mu| ChordLabel::ALL.iter().map(move |&nu| (mu, nu)))
            .filter(|(mu, nu)| mu != nu)
            .map(|(mu, nu)| (mu, nu, self.get(mu, nu)))
            .collect();
        v.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        v
    }
}

/// Target chord of a group: highest count, ties to the label that sorts
/// first as a string.
pub fn group_target(counts: &[usize; NUM_CHORDS]) -> ChordLabel {
    let mut best: Option<ChordLabel> = None;
    for c in ChordLabel::ALL {
        let n = counts[c.index()];
        if n == 0 {
            continue;
        }
        best = match best {
            Some(b) if counts[b.index()] > n || (counts[b.index()] == n && b.name() < c.name()) => {
                Some(b)
            }
            _ => Some(c),
        };
    }
    best.expect("group is nonempty")
}

pub fn replacement_table(pairs: &[ChordMelodyPair], strength: f64) -> ReplacementTable {
    let mut groups: BTreeMap<[u8; 16], [usize; NUM_CHORDS]> = BTreeMap::new();
    let mut observed = [false; NUM_CHORDS];
    for p in pairs {
        groups.entry(p.tokens).or_insert([0; NUM_CHORDS])[p.chord_label.index()] += 1;
        observed[p.chord_label.index()] = true;
    }
    let mut target_total = [0usize; NUM_CHORDS];
    let mut replaced = [[0usize; NUM_CHORDS]; NUM_CHORDS];
    for counts in groups.values() {
        let tc = group_target(counts).index();
        target_total[tc] += counts[tc];
        for (nu, &n) in counts.iter().enumerate() {
            if nu != tc {
                replaced[tc][nu] += n;
            }
        }
    }
    let mut p = [[0.0; NUM_CHORDS]; NUM_CHORDS];
    for mu in 0..NUM_CHORDS {
        p[mu][mu] = 1.0;
        if target_total[mu] == 0 {
            continue;
        }
        for nu in 0..NUM_CHORDS {
            if nu != mu {
                p[mu][nu] = replaced[mu][nu] as f64 / target_total[mu] as f64;
            }
        }
    }
    ReplacementTable::from_probabilities(p, observed, strength)
}
