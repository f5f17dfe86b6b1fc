//! A small decoder-only transformer language model.
//!
//! The model uses pre-norm residual blocks, causal multi-head attention with
//! rotary position embeddings and a GELU feed-forward layer. Gradients are
//! computed by hand (no autodiff), which keeps the crate dependency-light and
//! lets the same code run in `f32` for training and `f64` for numerical checks.
//!
//! The main entry points are:
//! - [`init_params`] to build a freshly initialized model,
//! - [`train()`] for causal language-model training with AdamW,
//! - [`generate()`] for greedy or sampled continuation,
//! - [`perplexity_window`] and [`token_nll_trace`] for document scoring.

pub mod checkpoint;
pub mod config;
mod error;
pub mod generate;
pub mod gradcheck;
mod layout;
pub mod loss;
mod math;
pub mod model;
pub mod optim;
pub mod params;
pub mod rope;
mod scalar;
pub mod score;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{Precision, Schedule, TinyLmConfig, TrainConfig};
pub use error::ModelError;
pub use generate::{generate, GenerateConfig};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layout::{ParamLayout, TensorKind, TensorSpec};
pub use loss::{clm_loss, log_softmax_row};
pub use model::{forward, forward_at, Logits};
pub use params::{init_params, init_params_with_std, TinyLmParams};
pub use rope::{rope_apply, rope_rotate};
pub use scalar::Scalar;
pub use score::{perplexity_window, token_nll_trace, WindowScore, DEFAULT_SKIP, DEFAULT_END};
pub use train::{train, LossPoint, StopReason, TrainReport, Trainer};
