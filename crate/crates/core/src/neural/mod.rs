//! Multilayer perceptrons, their gradients, optimiser and checkpoints.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, ArtifactKind, Checkpoint, MAGIC, VERSION};
pub use mlp::{
    log_softmax, softmax, Batch, Head, LossFn, MixtureBatch, MixtureGrad, MixtureLoss, MlpModel, Targets, TimeEmbedding,
};
