use std::path::Path;

use sftformer::data_io::{write_sequence, EchoSequence};

use super::{create_out, load_checkpoint, load_model};
use crate::dataset::{load_sequence, require_dir};
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;
use crate::render::{frame_grid, save_png};

pub const PREDICTION_DIR: &str = "prediction";
pub const GRID_FILE: &str = "grid.png";

/// Forecasts from the first `t_in` frames; frames after those, when present,
/// are drawn as the truth row.
pub fn predict(input: &Path, checkpoint: &Path, out: &Path) -> CliResult<()> {
    let mut rec = Recorder::new("predict");
    require_dir(input, "input container")?;
    let ckpt = load_checkpoint(checkpoint)?;
    let cfg = &ckpt.config;
    rec.config(cfg);
    rec.input(input);
    rec.input(checkpoint);
    let seq = load_sequence(input, cfg)?;
    let (t_in, t_out) = (cfg.model.t_in, cfg.model.t_out);
    if seq.len() < t_in {
        return Err(CliError::usage(format!(
            "input has {} frames but the model needs t_in = {t_in}",
            seq.len()
        )));
    }
    let model = load_model(&ckpt)?;
    let observed = seq.slice(0, t_in)?;
    let (h, w) = (seq.height(), seq.width());
    let x = observed.frames().clone().reshape(vec![1, t_in, 1, h, w]).expect("same size");
    rec.lap("load");
    // the decoder's final activation is leaky, so clamp into the container range
    let y = model.predict(x)?.map(|v| v.clamp(0.0, 1.0)).reshape(vec![t_out, h, w]).expect("same size");
    rec.lap("inference");
    let forecast = EchoSequence::new(
        y,
        seq.frame_interval_minutes,
        sftformer::data_io::ValueConvention::NormalizedUnit,
        format!("{}/forecast", seq.source_id),
    )?;
    create_out(out)?;
    let pred_dir = out.join(PREDICTION_DIR);
    write_sequence(&forecast, &pred_dir)?;
    let truth_len = (seq.len() - t_in).min(t_out);
    let truth = (truth_len > 0).then(|| seq.slice(t_in, truth_len)).transpose()?;
    let mut rows = vec![observed.frames()];
    if let Some(t) = &truth {
        rows.push(t.frames());
    }
    rows.push(forecast.frames());
    let grid_path = out.join(GRID_FILE);
    save_png(&frame_grid(&rows)?, &grid_path)?;
    rec.lap("write");
    rec.output(&pred_dir);
    rec.output(&grid_path);
    rec.write(out)?;
    println!(
        "forecast {t_out} frames to {}; grid {} ({} rows)",
        pred_dir.display(),
        grid_path.display(),
        rows.len()
    );
    Ok(())
}
