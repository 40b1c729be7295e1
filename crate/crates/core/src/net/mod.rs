//! Learned power allocation: features, network, training and checkpoints.

pub mod checkpoint;
pub mod features;
pub mod mlp;
pub mod train;

pub use checkpoint::Checkpoint;
pub use features::{build_features, input_size, power_matrix, scale_labels, FeatureVector};
pub use mlp::{loss, Dense, Gradients, LossKind, MlpModel, DEFAULT_HIDDEN};
pub use train::{predict, train, AdamState, Split, TrainConfig, TrainHistory, TrainOutcome};
