use std::path::Path;

use sftformer::training::gradcheck::{gradcheck as run, Selection, TOLERANCE};

use super::create_out;
use crate::error::{io_at, CliError, CliResult};
use crate::manifest::Recorder;

pub fn gradcheck(select: &[String], seed: u64, samples: usize, out: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("gradcheck");
    rec.seed(seed);
    let selections = if select.is_empty() {
        Selection::ALL.to_vec()
    } else {
        select
            .iter()
            .map(|s| s.parse().map_err(|e: sftformer::Error| CliError::usage(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?
    };
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for sel in selections {
        let r = run(sel, seed, samples.max(1))?;
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {sel}: max rel err {:.3e} (tolerance {TOLERANCE:e})", r.max_rel_err);
        for name in r.failures() {
            failed.push(format!("{sel}/{name}"));
        }
        reports.push(r);
    }
    rec.lap("check");
    if let Some(dir) = out {
        create_out(dir)?;
        let path = dir.join("gradcheck.json");
        io_at(&path, std::fs::write(&path, serde_json::to_string_pretty(&reports).expect("serializes")))?;
        rec.output(&path);
        rec.write(dir)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::runtime(format!("gradient check failed for {}", failed.join(", "))))
    }
}
