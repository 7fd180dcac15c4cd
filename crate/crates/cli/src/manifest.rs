use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{io_at, CliResult};

pub const MANIFEST_FILE: &str = "run_manifest.json";

pub fn version() -> &'static str {
    env!("SFTFORMER_VERSION")
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: Option<String>,
    pub model_hash: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_ms: u128,
    /// Named phases in seconds, in execution order.
    pub timings: Vec<(String, f64)>,
    pub wall_seconds: f64,
}

/// Collects a manifest while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    start: Instant,
    phase: Instant,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        let now = Instant::now();
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                version: version().to_string(),
                config_hash: None,
                model_hash: None,
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_unix_ms: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis())
                    .unwrap_or(0),
                timings: Vec::new(),
                wall_seconds: 0.0,
            },
            start: now,
            phase: now,
        }
    }

    pub fn config(&mut self, cfg: &sftformer::config::SftformerConfig) {
        self.manifest.config_hash = Some(cfg.hash());
        self.manifest.model_hash = Some(cfg.model_hash());
        self.manifest.seed = Some(cfg.seed);
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.manifest.outputs.push(p.to_path_buf());
    }

    /// Closes the current phase under `name`.
    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.timings.push((name.to_string(), (now - self.phase).as_secs_f64()));
        self.phase = now;
    }

    pub fn write(mut self, out_dir: &Path) -> CliResult<()> {
        self.manifest.wall_seconds = self.start.elapsed().as_secs_f64();
        let path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        io_at(&path, std::fs::write(&path, text))
    }
}
