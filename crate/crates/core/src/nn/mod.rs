//! Dense feed-forward networks with reverse-mode gradients, Adam and
//! portable checkpoints. All arithmetic is `f64`.

mod adam;
mod checkpoint;
pub(crate) mod mlp;

pub use adam::{soft_update, Adam};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use mlp::{finite_difference_error, random_batch, relative_error, Activation, Cache, Gradients, Layer, Mlp};

pub use ndarray::{Array1, Array2};
