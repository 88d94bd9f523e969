//! Few-shot meta-learning for induction-motor fault diagnosis from
//! stator-current signals.
//!
//! The pipeline: synthetic (or ingested) current signals are windowed,
//! reshaped into square grayscale images, enhanced with grayscale
//! morphology, and fed to a small convolutional embedding network. The
//! embedding is trained with pooled cross-entropy, refined by
//! self-distillation, and optionally meta-trained episodically; per-task
//! classification uses a ridge-regularized linear head or a cosine
//! similarity classifier over frozen embeddings.

pub mod adapt;
pub mod config;
pub mod episodes;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod metalearn;
pub mod net;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod signalgen;

pub use error::{Error, Result};
