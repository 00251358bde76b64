//! Self-describing JSON checkpoints holding every tensor at full precision.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::lstm::{ChordClassifier, LstmLayer, ModelConfig, Weights};
use super::ModelError;

pub const CHECKPOINT_FORMAT: &str = "duet-lstm";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub config_hash: String,
    pub seed: u64,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &ChordClassifier, config_hash: &str, seed: u64) -> Self {
        let tensors = Weights::shapes(&model.config)
            .into_iter()
            .zip(model.weights.slices())
            .map(|((name, shape), data)| Tensor {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            config_hash: config_hash.into(),
            seed,
            tensors,
        }
    }

    /// Rebuild the model, checking every tensor against the declared config.
    pub fn into_model(self) -> Result<ChordClassifier, ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unknown format `{}`",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let expected = Weights::shapes(&self.config);
        if expected.len() != self.tensors.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name
                || *shape != t.shape
                || shape.iter().product::<usize>() != t.data.len()
            {
                return Err(ModelError::ShapeMismatch(format!(
                    "tensor `{}` {:?} ({} values), expected `{}` {:?}",
                    t.name,
                    t.shape,
                    t.data.len(),
                    name,
                    shape
                )));
            }
        }
        let mut it = self.tensors.into_iter();
        let mut take = || it.next().expect("count checked");
        let matrix = |t: Tensor| {
            Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data).expect("shape checked")
        };
        let mut layers = Vec::with_capacity(self.config.layers);
        for _ in 0..self.config.layers {
            let w = matrix(take());
            let b = Array1::from_vec(take().data);
            layers.push(LstmLayer { w, b });
        }
        let w_out = matrix(take());
        let b_out = Array1::from_vec(take().data);
        Ok(ChordClassifier {
            config: self.config,
            weights: Weights {
                layers,
                w_out,
                b_out,
            },
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

pub fn save_model(
    path: &Path,
    model: &ChordClassifier,
    config_hash: &str,
    seed: u64,
) -> Result<(), ModelError> {
    let ck = Checkpoint::from_model(model, config_hash, seed);
    std::fs::write(path, ck.to_json())
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::from_json(&text)
}

/// Load a model, requiring it to match `expected` when given.
pub fn load_model(
    path: &Path,
    expected: Option<&ModelConfig>,
) -> Result<ChordClassifier, ModelError> {
    let ck = load_checkpoint(path)?;
    if let Some(e) = expected {
        if *e != ck.config {
            return Err(ModelError::ShapeMismatch(format!(
                "checkpoint has {:?}, expected {:?}",
                ck.config, e
            )));
        }
    }
    ck.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = ChordClassifier::seeded(ModelConfig::small(5), 17);
        let ck = Checkpoint::from_model(&m, "abc", 17);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back.seed, 17);
        assert_eq!(back.config_hash, "abc");
        let m2 = back.into_model().unwrap();
        for (a, b) in m.weights.slices().iter().zip(m2.weights.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let m = ChordClassifier::seeded(ModelConfig::small(5), 1);
        let mut ck = Checkpoint::from_model(&m, "", 1);
        ck.tensors[1].data.pop();
        ck.tensors[1].shape = vec![19];
        assert!(matches!(ck.into_model(), Err(ModelError::ShapeMismatch(_))));

        let mut ck = Checkpoint::from_model(&m, "", 1);
        ck.config.hidden = 6;
        assert!(matches!(ck.into_model(), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn load_rejects_unexpected_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = ChordClassifier::seeded(ModelConfig::small(3), 1);
        save_model(&path, &m, "h", 1).unwrap();
        assert_eq!(load_model(&path, Some(&ModelConfig::small(3))).unwrap(), m);
        assert!(matches!(
            load_model(&path, Some(&ModelConfig::default())),
            Err(ModelError::ShapeMismatch(_))
        ));
    }
}
