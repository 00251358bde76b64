//! Mini-batch training with Adam and best-validation checkpoint selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{argmax, ChordClassifier, DropoutMasks, ModelConfig, Tokens, Weights};
use super::ModelError;
use crate::dataset::ChordMelodyPair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Train, validation and test proportions.
    pub split: [u32; 3],
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop when validation loss has not improved for this many epochs.
    pub patience: Option<usize>,
    /// Stop once validation accuracy (training accuracy if there is no
    /// validation set) reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            batch_size: 256,
            learning_rate: 0.001,
            max_epochs: 500,
            split: [8, 1, 1],
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: None,
            stop_at_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        crate::mir::hex(&Sha256::digest(json))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct DataSplit {
    pub train: Vec<ChordMelodyPair>,
    pub val: Vec<ChordMelodyPair>,
    pub test: Vec<ChordMelodyPair>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ChordClassifier,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub split: DataSplit,
}

/// Shuffle with `rng` and cut by the given proportions.
pub fn split_dataset(
    pairs: &[ChordMelodyPair],
    ratio: [u32; 3],
    rng: &mut ChaCha8Rng,
) -> DataSplit {
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(rng);
    let total: u32 = ratio.iter().sum();
    let n = pairs.len();
    let n_train = n * ratio[0] as usize / total as usize;
    let n_val = n * ratio[1] as usize / total as usize;
    let take = |r: &[usize]| r.iter().map(|&i| pairs[i].clone()).collect::<Vec<_>>();
    DataSplit {
        train: take(&idx[..n_train]),
        val: take(&idx[n_train..n_train + n_val]),
        test: take(&idx[n_train + n_val..]),
    }
}

pub struct Adam {
    m: Weights,
    v: Weights,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(cfg: &ModelConfig, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            m: Weights::zeros(cfg),
            v: Weights::zeros(cfg),
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step(&mut self, params: &mut Weights, grad: &Weights, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grad.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

fn as_arrays(pairs: &[ChordMelodyPair]) -> (Vec<Tokens>, Vec<usize>) {
    (
        pairs.iter().map(|p| p.tokens).collect(),
        pairs.iter().map(|p| p.chord_label.index()).collect(),
    )
}

/// Inference-mode loss and accuracy, evaluated in fixed-size chunks.
pub fn evaluate_loss(model: &ChordClassifier, xs: &[Tokens], ys: &[usize]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (xc, yc) in xs.chunks(1024).zip(ys.chunks(1024)) {
        let p = model.forward_batch(xc);
        for (r, &y) in yc.iter().enumerate() {
            loss -= p[[r, y]].max(f64::MIN_POSITIVE).ln();
            if argmax(p.row(r).as_slice().expect("row")) == y {
                correct += 1;
            }
        }
    }
    (loss / xs.len() as f64, correct as f64 / xs.len() as f64)
}

/// Split `pairs`, then train on the training part.
pub fn train(pairs: &[ChordMelodyPair], cfg: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let split = split_dataset(pairs, cfg.split, &mut rng);
    let (model, history, best_epoch) = train_on(&split.train, &split.val, cfg, &mut rng)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        split,
    })
}

pub fn train_on(
    train: &[ChordMelodyPair],
    val: &[ChordMelodyPair],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ChordClassifier, Vec<EpochStats>, usize), ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(ModelError::InvalidConfig(format!(
            "batch {} and learning rate {} must be positive",
            cfg.batch_size, cfg.learning_rate
        )));
    }
    let mut model = ChordClassifier::init(cfg.model.clone(), rng);
    let mut adam = Adam::new(&cfg.model, cfg.beta1, cfg.beta2, cfg.epsilon);
    let (xs, ys) = as_arrays(train);
    let (vx, vy) = as_arrays(val);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, ChordClassifier)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let bx: Vec<Tokens> = chunk.iter().map(|&i| xs[i]).collect();
            let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let masks = DropoutMasks::sample(&cfg.model, bx.len(), rng);
            let (loss, grad) = model.loss_and_grad(&bx, &by, masks.as_ref());
            if !loss.is_finite() || !grad.all_finite() {
                return Err(ModelError::NonFinite {
                    epoch,
                    batch: bi,
                    detail: format!("loss {loss}"),
                });
            }
            loss_sum += loss * bx.len() as f64;
            adam.step(&mut model.weights, &grad, cfg.learning_rate);
        }
        let (_, train_accuracy) = evaluate_loss(&model, &xs, &ys);
        let train_loss = loss_sum / xs.len() as f64;
        let (val_loss, val_accuracy) = if vx.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_loss(&model, &vx, &vy);
            (Some(l), Some(a))
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });

        let score_acc = val_accuracy.unwrap_or(train_accuracy);
        let score_loss = val_loss.unwrap_or(train_loss);
        let improved = match &best {
            None => true,
            Some((a, l, _, _)) => score_acc > *a || (score_acc == *a && score_loss < *l),
        };
        if improved {
            best = Some((score_acc, score_loss, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.patience.is_some_and(|p| since_best >= p) {
            break;
        }
        if cfg.stop_at_accuracy.is_some_and(|t| score_acc >= t) {
            break;
        }
    }
    let (_, _, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history, best_epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chord::ChordLabel;
    use rand::Rng;

    fn random_pairs(n: usize, seed: u64) -> Vec<ChordMelodyPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| ChordMelodyPair {
                chord_label: ChordLabel::ALL[rng.random_range(0..7)],
                tokens: std::array::from_fn(|_| rng.random_range(0..13)),
                source: "rand".into(),
                bar: i as u32,
            })
            .collect()
    }

    #[test]
    fn split_is_eight_one_one() {
        let ps = random_pairs(1000, 1);
        let s = split_dataset(&ps, [8, 1, 1], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (800, 100, 100));
    }

    #[test]
    fn memorizes_three_samples() {
        let ps = random_pairs(3, 4);
        let cfg = TrainConfig {
            model: ModelConfig::small(16),
            max_epochs: 400,
            learning_rate: 0.01,
            split: [1, 0, 0],
            ..TrainConfig::default()
        };
        let out = train(&ps, &cfg).unwrap();
        for p in &ps {
            let prob = out.model.forward(&p.melody());
            assert!(prob[p.chord_label.index()] > 0.99, "{prob:?}");
        }
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let ps = random_pairs(40, 9);
        let cfg = TrainConfig {
            model: ModelConfig::small(6),
            max_epochs: 3,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let a = train(&ps, &cfg).unwrap();
        let b = train(&ps, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(
            train(&[], &TrainConfig::default()),
            Err(ModelError::EmptyDataset)
        ));
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let cfg = ModelConfig::small(2);
        let mut w = Weights::zeros(&cfg);
        let mut g = Weights::zeros(&cfg);
        g.b_out[0] = 3.0;
        g.b_out[1] = -0.5;
        let mut adam = Adam::new(&cfg, 0.9, 0.999, 1e-8);
        adam.step(&mut w, &g, 0.001);
        assert!((w.b_out[0] + 0.001).abs() < 1e-9);
        assert!((w.b_out[1] - 0.001).abs() < 1e-9);
        assert_eq!(w.b_out[2], 0.0);
    }
}
