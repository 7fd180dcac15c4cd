mod eval;
mod gradcheck;
mod predict;
mod synth;
mod train;

pub use eval::eval;
pub use gradcheck::gradcheck;
pub use predict::predict;
pub use synth::synth;
pub use train::{train, TrainArgs};

use std::path::Path;

use sftformer::training::Checkpoint;

use crate::dataset::require_file;
use crate::error::{io_at, CliResult};

pub(crate) fn create_out(dir: &Path) -> CliResult<()> {
    io_at(dir, std::fs::create_dir_all(dir))
}

pub(crate) fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    require_file(path, "checkpoint")?;
    Ok(Checkpoint::load(path)?)
}

pub(crate) fn load_model(ckpt: &Checkpoint) -> CliResult<sftformer::Sftformer<f32>> {
    let model = sftformer::Sftformer::new(&ckpt.config.model, ckpt.config.seed)?;
    sftformer::training::load_params(&model, &ckpt.params)?;
    Ok(model)
}
