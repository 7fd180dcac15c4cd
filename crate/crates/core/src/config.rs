//! Hyperparameter records and their validation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Observed frames per sample. Must be even (odd/even frame pairing).
    pub t_in: usize,
    /// Forecast frames per sample.
    pub t_out: usize,
    pub height: usize,
    pub width: usize,
    /// Conv layers in the embedding (and mirrored decoder) stack.
    pub embed_depth: usize,
    /// Latent channels after embedding.
    pub channels: usize,
    /// Stacked SFT-Blocks.
    pub blocks: usize,
    pub window_size: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub relative_position_bias: bool,
    pub norm_groups: usize,
    pub leaky_slope: f64,
    /// Channel width of the frequency kernel.
    pub d_feb: usize,
    /// Retained Fourier modes; `None` keeps all `t_in / 2 + 1`.
    pub feb_modes: Option<usize>,
    pub temporal_heads: usize,
    pub se_reduction: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            t_in: 10,
            t_out: 10,
            height: 128,
            width: 128,
            embed_depth: 4,
            channels: 64,
            blocks: 8,
            window_size: 8,
            heads: 4,
            mlp_ratio: 4,
            relative_position_bias: true,
            norm_groups: 8,
            leaky_slope: 0.2,
            d_feb: 64,
            feb_modes: None,
            temporal_heads: 4,
            se_reduction: 4,
        }
    }
}

impl ModelConfig {
    /// Spatial downsampling factor of the embedding stack.
    pub fn downsample(&self) -> usize {
        1 << (self.embed_depth / 2)
    }

    pub fn latent_hw(&self) -> (usize, usize) {
        (self.height / self.downsample(), self.width / self.downsample())
    }

    pub fn modes(&self) -> usize {
        self.feb_modes.unwrap_or(self.t_in / 2 + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        if self.t_in < 2 || self.t_in % 2 != 0 {
            return config(format!("t_in must be even and >= 2, got {}", self.t_in));
        }
        if self.t_out == 0 {
            return config("t_out must be positive");
        }
        if self.embed_depth < 4 || self.embed_depth % 2 != 0 {
            return config(format!("embed_depth must be even and >= 4, got {}", self.embed_depth));
        }
        let f = self.downsample();
        if self.height == 0 || self.width == 0 || self.height % f != 0 || self.width % f != 0 {
            return config(format!(
                "frame size {}x{} must be divisible by the downsampling factor {f}",
                self.height, self.width
            ));
        }
        let (h, w) = self.latent_hw();
        if self.window_size == 0 || h % self.window_size != 0 || w % self.window_size != 0 {
            return config(format!(
                "latent {h}x{w} (frame {}x{} / {f}) must be divisible by window_size {}",
                self.height, self.width, self.window_size
            ));
        }
        if self.blocks == 0 {
            return config("blocks must be >= 1");
        }
        if c < 2 || c % 2 != 0 || self.norm_groups == 0 || (c / 2) % self.norm_groups != 0 {
            return config(format!(
                "channels {c} must be even with channels/2 divisible by norm_groups {}",
                self.norm_groups
            ));
        }
        if self.heads == 0 || (self.t_in * c) % self.heads != 0 || (2 * c) % self.heads != 0 {
            return config(format!("heads {} must divide both t_in*channels and 2*channels", self.heads));
        }
        if self.temporal_heads == 0 || (h * w) % self.temporal_heads != 0 {
            return config(format!("temporal_heads {} must divide latent pixels {}", self.temporal_heads, h * w));
        }
        let max_modes = self.t_in / 2 + 1;
        if self.d_feb == 0 || self.modes() == 0 || self.modes() > max_modes {
            return config(format!("feb_modes {} must be in 1..={max_modes}; d_feb must be positive", self.modes()));
        }
        if self.mlp_ratio == 0 || self.se_reduction == 0 || c < self.se_reduction {
            return config("mlp_ratio and se_reduction must be positive with se_reduction <= channels");
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return config("leaky_slope must be a finite nonnegative number");
        }
        Ok(())
    }
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fraction of the cycle spent warming up.
    pub pct_start: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
    /// Weight of the reconstruction loss in the joint objective.
    pub recon_weight: f64,
    /// Checkpoint cadence in steps; `0` writes only the final checkpoint.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 4,
            max_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
            grad_clip: 1.0,
            recon_weight: 0.01,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return config("steps and batch_size must be positive");
        }
        if !(self.max_lr > 0.0 && self.div_factor > 0.0 && self.final_div_factor > 0.0) {
            return config("max_lr, div_factor and final_div_factor must be positive");
        }
        if !(0.0..1.0).contains(&self.pct_start) {
            return config("pct_start must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return config("betas must lie in [0, 1)");
        }
        if self.recon_weight < 0.0 || self.grad_clip < 0.0 {
            return config("recon_weight and grad_clip must be nonnegative");
        }
        Ok(())
    }
}

/// Dataset construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Sliding-window stride in frames; the width is `t_in + t_out`.
    pub stride: usize,
    pub frame_interval_minutes: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            stride: 5,
            frame_interval_minutes: 6,
        }
    }
}

/// One evaluation threshold, in rain rate or directly in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpec {
    RainRate(f64),
    Pixel(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<ThresholdSpec>,
    /// Z-R coefficients used for rain-rate thresholds.
    pub zr_a: f64,
    pub zr_b: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: [0.5, 2.0, 5.0, 10.0, 30.0]
                .into_iter()
                .map(ThresholdSpec::RainRate)
                .collect(),
            zr_a: 58.53,
            zr_b: 1.56,
        }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftformerConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Default for SftformerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn digest(value: &impl Serialize) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

impl SftformerConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.stride == 0 {
            return config("data.stride must be positive");
        }
        Ok(())
    }

    pub fn window_width(&self) -> usize {
        self.model.t_in + self.model.t_out
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the whole configuration.
    pub fn hash(&self) -> String {
        digest(self)
    }

    /// SHA-256 of the architecture alone; checkpoints are compatible iff equal.
    pub fn model_hash(&self) -> String {
        digest(&self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SftformerConfig::default().validate().unwrap();
        assert_eq!(ModelConfig::default().latent_hw(), (32, 32));
        assert_eq!(ModelConfig::default().modes(), 6);
    }

    #[test]
    fn size_48_fails_window_divisibility() {
        let cfg = ModelConfig {
            height: 48,
            width: 48,
            ..Default::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("divisible by window_size 8"), "{msg}");
    }

    #[test]
    fn odd_t_in_rejected() {
        let cfg = ModelConfig {
            t_in: 9,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let mut cfg = SftformerConfig::default();
        cfg.eval.thresholds.push(ThresholdSpec::Pixel(0.3));
        let text = cfg.to_toml();
        let back = SftformerConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.model.blocks = 2;
        assert_ne!(other.model_hash(), cfg.model_hash());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = SftformerConfig::from_toml("[model]\nblocks = 2\nchannels = 32\n").unwrap();
        assert_eq!(cfg.model.blocks, 2);
        assert_eq!(cfg.model.t_in, 10);
        assert!(SftformerConfig::from_toml("[model]\nbogus = 1\n").is_err());
    }
}
