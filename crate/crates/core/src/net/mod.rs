//! Dense-array math core: tensors, the embedding backbone with exact
//! backprop, losses, optimizers and checkpointing.

pub mod backbone;
pub mod checkpoint;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use backbone::{backward, forward, BackboneCfg, BatchCache, ConvBlock, EmbeddingParams};
pub use checkpoint::{pack, unpack, Checkpoint};
pub use loss::{kl_divergence, linear_backward, linear_forward, softmax_cross_entropy, softmax_rows};
pub use optim::{LrSchedule, OptKind, OptimizerState};
pub use tensor::{Real, Tensor};
