use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use sftformer::config::SftformerConfig;
use sftformer::training::Trainer;

use super::{create_out, load_checkpoint};
use crate::dataset::{load_sequences, read_config, windows};
use crate::error::{io_at, CliError, CliResult};
use crate::manifest::Recorder;

pub struct TrainArgs {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub out: PathBuf,
}

pub const LOG_FILE: &str = "train_log.jsonl";
pub const FINAL_CHECKPOINT: &str = "checkpoint.bin";

fn apply_overrides(cfg: &mut SftformerConfig, args: &TrainArgs) -> CliResult<()> {
    if let Some(s) = args.steps {
        cfg.train.steps = s;
    }
    if let Some(l) = args.lambda {
        cfg.train.recon_weight = l;
    }
    cfg.validate()?;
    Ok(())
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let mut rec = Recorder::new("train");
    let file_cfg = args.config.as_deref().map(read_config).transpose()?;
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if let Some(c) = &file_cfg {
                if c.model_hash() != ckpt.config.model_hash() {
                    return Err(CliError::usage(format!(
                        "config architecture hash {} does not match checkpoint {}",
                        c.model_hash(),
                        ckpt.config.model_hash()
                    )));
                }
            }
            if args.seed.is_some() {
                return Err(CliError::usage("--seed cannot change a resumed run"));
            }
            rec.input(path);
            let mut tr = Trainer::from_checkpoint(&ckpt)?;
            let mut cfg = tr.config.clone();
            apply_overrides(&mut cfg, &args)?;
            tr.schedule.total_steps = cfg.train.steps;
            tr.config = cfg;
            tr
        }
        None => {
            let mut cfg = file_cfg.unwrap_or_default();
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            apply_overrides(&mut cfg, &args)?;
            Trainer::new(&cfg)?
        }
    };
    let cfg = trainer.config.clone();
    rec.config(&cfg);
    if let Some(p) = &args.config {
        rec.input(p);
    }
    rec.input(&args.data);
    let seqs = load_sequences(&args.data, &cfg)?;
    let data = windows(&seqs, &cfg)?;
    rec.lap("load");
    create_out(&args.out)?;
    let config_path = args.out.join("config.toml");
    io_at(&config_path, std::fs::write(&config_path, cfg.to_toml()))?;
    let log_path = args.out.join(LOG_FILE);
    let log_file = io_at(
        &log_path,
        File::options().create(true).append(args.resume.is_some()).write(true).truncate(args.resume.is_none()).open(&log_path),
    )?;
    let mut log = BufWriter::new(log_file);
    let out = args.out.clone();
    let total = cfg.train.steps;
    let start_step = trainer.step;
    let result = trainer.run(&data, Some(&mut log), |ckpt| {
        let name = if ckpt.step == total {
            FINAL_CHECKPOINT.to_string()
        } else {
            format!("checkpoint_step{:06}.bin", ckpt.step)
        };
        ckpt.save(&out.join(name))
    });
    io_at(&log_path, log.flush())?;
    let records = result?;
    rec.lap("train");
    rec.output(&config_path);
    rec.output(&log_path);
    rec.output(&args.out.join(FINAL_CHECKPOINT));
    rec.write(&args.out)?;
    match (records.first(), records.last()) {
        (Some(a), Some(b)) => println!(
            "trained steps {start_step}..{total} on {} windows: loss {:.6} -> {:.6}",
            data.len(),
            a.loss,
            b.loss
        ),
        _ => println!("checkpoint already at step {total}; nothing to train"),
    }
    Ok(())
}
