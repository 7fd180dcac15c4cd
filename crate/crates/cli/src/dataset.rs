use std::path::{Path, PathBuf};

use sftformer::config::SftformerConfig;
use sftformer::data_io::{build_windows, read_sequence, EchoSequence, SequenceWindow, MANIFEST_FILE};

use crate::error::{io_at, CliError, CliResult};

pub fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} is not a directory", path.display())))
    }
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Container directories under `dir` in name order; `dir` itself if it is one.
pub fn container_dirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    require_dir(dir, "data directory")?;
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in io_at(dir, std::fs::read_dir(dir))? {
        let p = io_at(dir, entry)?.path();
        if p.join(MANIFEST_FILE).is_file() {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::usage(format!("no sequence containers found in {}", dir.display())));
    }
    Ok(out)
}

/// Reads a container in normalized units at the model's frame size.
pub fn load_sequence(dir: &Path, cfg: &SftformerConfig) -> CliResult<EchoSequence> {
    let seq = read_sequence(dir)?.to_normalized();
    let (h, w) = (cfg.model.height, cfg.model.width);
    if seq.height() == h && seq.width() == w {
        Ok(seq)
    } else {
        Ok(seq.resize_bilinear(h, w)?)
    }
}

pub fn load_sequences(dir: &Path, cfg: &SftformerConfig) -> CliResult<Vec<EchoSequence>> {
    container_dirs(dir)?.iter().map(|d| load_sequence(d, cfg)).collect()
}

pub fn windows(seqs: &[EchoSequence], cfg: &SftformerConfig) -> CliResult<Vec<SequenceWindow>> {
    let mut out = Vec::new();
    for s in seqs {
        if s.len() >= cfg.window_width() {
            out.extend(build_windows(s, cfg.window_width(), cfg.data.stride, cfg.model.t_in)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage(format!(
            "no sequence is long enough for a {}-frame window",
            cfg.window_width()
        )));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> CliResult<SftformerConfig> {
    require_file(path, "config file")?;
    let text = io_at(path, std::fs::read_to_string(path))?;
    let cfg = SftformerConfig::from_toml(&text)?;
    cfg.validate()?;
    Ok(cfg)
}
