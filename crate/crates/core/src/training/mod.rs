//! Optimization, checkpointing, and the training loop.

pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
mod trainer;

pub use gradcheck::{gradcheck, GradcheckReport, Selection};
pub use checkpoint::{Checkpoint, SamplerState};
pub use optim::{clip_grad_norm, grad_norm, Adam, AdamState, OneCycle};
pub use trainer::{batch_tensors, load_params, train, StepRecord, Trainer};
