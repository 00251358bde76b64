//! Chord classifier: LSTM network, training, gradient verification,
//! substitution-aware evaluation and checkpoints.

pub mod checkpoint;
pub mod eval;
pub mod gradcheck;
pub mod lstm;
pub mod replacement;
pub mod train;

pub use checkpoint::{load_model, save_model, Checkpoint};
pub use eval::{confusion_matrix, evaluate, EvaluationReport};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use lstm::{ChordClassifier, DropoutMasks, ModelConfig, Tokens, Weights};
pub use replacement::{replacement_table, ReplacementTable, DEFAULT_STRENGTH};
pub use train::{train, train_on, DataSplit, EpochStats, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss or gradient at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
}
