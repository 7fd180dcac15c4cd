pub mod config;
pub mod data_io;
pub mod embed_decode;
pub mod frequency_block;
pub mod metrics_eval;
mod error;
pub mod model;
pub mod nn;
pub mod reconstruction;
pub mod sft_block;
pub mod training;
pub mod windowed_attention;

pub use error::{Error, Result};
pub use model::{joint_loss, Forward, JointLoss, Sftformer};
