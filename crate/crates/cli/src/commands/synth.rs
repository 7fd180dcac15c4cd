use std::path::Path;

use sftformer::config::SftformerConfig;
use sftformer::data_io::{generate_synthetic, write_sequence, GeneratorParams};

use super::create_out;
use crate::dataset::read_config;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

pub fn synth(seed: u64, count: usize, frames: usize, size: usize, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let mut rec = Recorder::new("synth");
    let mut cfg = match config {
        Some(p) => {
            rec.input(p);
            read_config(p)?
        }
        None => SftformerConfig::default(),
    };
    if count == 0 || frames == 0 {
        return Err(CliError::usage("--count and --frames must be positive"));
    }
    // frames must be usable by a model of this config at this size
    cfg.model.height = size;
    cfg.model.width = size;
    cfg.model.validate()?;
    rec.seed(seed);
    let seqs = generate_synthetic(seed, count, frames, size, size, &GeneratorParams::default())?;
    rec.lap("generate");
    create_out(out)?;
    for (i, s) in seqs.iter().enumerate() {
        write_sequence(s, &out.join(format!("seq_{i:05}")))?;
    }
    rec.lap("write");
    rec.output(out);
    rec.write(out)?;
    println!("wrote {count} sequences of {frames}x{size}x{size} to {}", out.display());
    Ok(())
}
