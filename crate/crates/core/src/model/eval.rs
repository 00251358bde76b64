//! Confusion-matrix accuracy with credit for accepted chord substitutions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::lstm::{ChordClassifier, Tokens};
use super::replacement::ReplacementTable;
use super::ModelError;
use crate::chord::{ChordLabel, NUM_CHORDS};
use crate::dataset::ChordMelodyPair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Rows are targets, columns are predictions.
    pub confusion: [[u64; NUM_CHORDS]; NUM_CHORDS],
    pub raw_accuracy: f64,
    pub refined_accuracy: f64,
    pub total: u64,
}

impl EvaluationReport {
    pub fn from_confusion(
        confusion: [[u64; NUM_CHORDS]; NUM_CHORDS],
        table: &ReplacementTable,
    ) -> Result<Self, ModelError> {
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(ModelError::EmptyDataset);
        }
        let mut diag = 0u64;
        let mut credited = 0u64;
        for (mu, row) in confusion.iter().enumerate() {
            for (nu, &n) in row.iter().enumerate() {
                if mu == nu {
                    diag += n;
                } else if table.lambda[mu][nu] {
                    credited += n;
                }
            }
        }
        Ok(EvaluationReport {
            confusion,
            raw_accuracy: diag as f64 / total as f64,
            refined_accuracy: (diag + credited) as f64 / total as f64,
            total,
        })
    }

    /// Plain-text report: accuracies, confusion matrix and the replacement table.
    pub fn render(&self, table: &ReplacementTable) -> String {
        let classes: Vec<ChordLabel> = ChordLabel::ALL
            .into_iter()
            .filter(|c| {
                table.observed[c.index()] || self.confusion[c.index()].iter().any(|&n| n > 0)
            })
            .collect();
        let mut s = String::new();
        writeln!(s, "samples          {}", self.total).unwrap();
        writeln!(s, "raw accuracy     {:.4}", self.raw_accuracy).unwrap();
        writeln!(s, "refined accuracy {:.4}", self.refined_accuracy).unwrap();
        writeln!(
            s,
            "threshold        {:.4} (strength {:.4})",
            table.threshold, table.strength
        )
        .unwrap();
        writeln!(s).unwrap();
        writeln!(s, "confusion (rows target, columns predicted)").unwrap();
        write!(s, "{:>6}", "").unwrap();
        for c in &classes {
            write!(s, "{:>7}", c.name()).unwrap();
        }
        writeln!(s).unwrap();
        for r in &classes {
            write!(s, "{:>6}", r.name()).unwrap();
            for c in &classes {
                write!(s, "{:>7}", self.confusion[r.index()][c.index()]).unwrap();
            }
            writeln!(s).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(
            s,
            "replacement confidence (rows target, columns substitute; * = credited)"
        )
        .unwrap();
        write!(s, "{:>6}", "").unwrap();
        for c in &classes {
            write!(s, "{:>7}", c.name()).unwrap();
        }
        writeln!(s).unwrap();
        for r in &classes {
            write!(s, "{:>6}", r.name()).unwrap();
            for c in &classes {
                let mark = if r != c && table.credited(*r, *c) {
                    "*"
                } else {
                    " "
                };
                write!(s, "{:>6.2}{}", table.get(*r, *c), mark).unwrap();
            }
            writeln!(s).unwrap();
        }
        s
    }
}

pub fn confusion_matrix(
    model: &ChordClassifier,
    pairs: &[ChordMelodyPair],
) -> [[u64; NUM_CHORDS]; NUM_CHORDS] {
    let mut conf = [[0u64; NUM_CHORDS]; NUM_CHORDS];
    for chunk in pairs.chunks(1024) {
        let xs: Vec<Tokens> = chunk.iter().map(|p| p.tokens).collect();
        for (p, pred) in chunk.iter().zip(model.predict_batch(&xs)) {
            conf[p.chord_label.index()][pred] += 1;
        }
    }
    conf
}

pub fn evaluate(
    model: &ChordClassifier,
    test: &[ChordMelodyPair],
    table: &ReplacementTable,
) -> Result<EvaluationReport, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    EvaluationReport::from_confusion(confusion_matrix(model, test), table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn diag(n: u64) -> [[u64; 7]; 7] {
        let mut c = [[0; 7]; 7];
        for (i, row) in c.iter_mut().enumerate() {
            row[i] = n;
        }
        c
    }

    #[test]
    fn perfect_predictions() {
        let r = EvaluationReport::from_confusion(diag(5), &ReplacementTable::identity()).unwrap();
        assert_eq!((r.raw_accuracy, r.refined_accuracy), (1.0, 1.0));
    }

    #[test]
    fn all_wrong_but_all_credited() {
        let mut c = [[0u64; 7]; 7];
        c[0][3] = 4;
        c[5][0] = 6;
        let mut t = ReplacementTable::identity();
        t.lambda[0][3] = true;
        t.lambda[5][0] = true;
        let r = EvaluationReport::from_confusion(c, &t).unwrap();
        assert_eq!((r.raw_accuracy, r.refined_accuracy), (0.0, 1.0));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(
            EvaluationReport::from_confusion([[0; 7]; 7], &ReplacementTable::identity()).is_err()
        );
    }

    #[test]
    fn random_confusions_match_recount() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let samples: Vec<(usize, usize)> = (0..200)
                .map(|_| (rng.random_range(0..7), rng.random_range(0..7)))
                .collect();
            let mut t = ReplacementTable::identity();
            for row in t.lambda.iter_mut() {
                for x in row.iter_mut() {
                    *x = rng.random_bool(0.3);
                }
            }
            let mut c = [[0u64; 7]; 7];
            for &(a, b) in &samples {
                c[a][b] += 1;
            }
            let r = EvaluationReport::from_confusion(c, &t).unwrap();
            let ok = samples
                .iter()
                .filter(|(a, b)| a == b || t.lambda[*a][*b])
                .count();
            assert_eq!(r.refined_accuracy, ok as f64 / 200.0);
            let exact = samples.iter().filter(|(a, b)| a == b).count();
            assert_eq!(r.raw_accuracy, exact as f64 / 200.0);
        }
    }

    proptest! {
        #[test]
        fn refined_never_below_raw(cells in prop::array::uniform7(prop::array::uniform7(0u64..20)), bits in prop::array::uniform7(prop::array::uniform7(any::<bool>()))) {
            prop_assume!(cells.iter().flatten().sum::<u64>() > 0);
            let mut t = ReplacementTable::identity();
            t.lambda = bits;
            let r = EvaluationReport::from_confusion(cells, &t).unwrap();
            prop_assert!(r.refined_accuracy >= r.raw_accuracy);
        }
    }
}
