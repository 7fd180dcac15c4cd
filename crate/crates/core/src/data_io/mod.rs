//! Echo sequences, their on-disk container, windowing, thresholds, and the
//! synthetic lifecycle generator.

mod container;
mod synthetic;
mod threshold;
mod windows;

use serde::{Deserialize, Serialize};
use sftformer_autograd::Tensor;

pub use container::{read_sequence, write_sequence, ContainerManifest, FRAMES_FILE, MANIFEST_FILE};
pub use synthetic::{generate_synthetic, lifecycle_envelope, render_cells, CellSpec, GeneratorParams};
pub use threshold::{rate_to_pixel, ThresholdMap, DEFAULT_ZR_A, DEFAULT_ZR_B};
pub use windows::{build_windows, SequenceWindow};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueConvention {
    /// Values in `[0, 1]`, reflectivity mapped affinely from `[-10, 60]` dBZ.
    NormalizedUnit,
    /// Raw 8-bit pixel values in `[0, 255]`.
    #[serde(rename = "dbz_8bit")]
    Dbz8bit,
}

/// A stack of single-channel frames `[t, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSequence {
    frames: Tensor<f32>,
    pub frame_interval_minutes: u32,
    pub value_convention: ValueConvention,
    pub source_id: String,
}

impl EchoSequence {
    pub fn new(
        frames: Tensor<f32>,
        frame_interval_minutes: u32,
        value_convention: ValueConvention,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 3 || s.iter().any(|&d| d == 0) {
            return Err(Error::Domain(format!("frames must be a nonempty [t, h, w] stack, got {s:?}")));
        }
        if frame_interval_minutes == 0 {
            return Err(Error::Domain("frame interval must be positive".into()));
        }
        let (lo, hi) = match value_convention {
            ValueConvention::NormalizedUnit => (0.0, 1.0),
            ValueConvention::Dbz8bit => (0.0, 255.0),
        };
        if let Some(bad) = frames.data().iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::Domain(format!(
                "value {bad} outside [{lo}, {hi}] for {value_convention:?}"
            )));
        }
        Ok(Self {
            frames,
            frame_interval_minutes,
            value_convention,
            source_id: source_id.into(),
        })
    }

    /// Normalized-unit sequence with the default 6-minute interval.
    pub fn normalized(frames: Tensor<f32>, source_id: impl Into<String>) -> Result<Self> {
        Self::new(frames, 6, ValueConvention::NormalizedUnit, source_id)
    }

    pub fn frames(&self) -> &Tensor<f32> {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.height() * self.width();
        &self.frames.data()[t * n..(t + 1) * n]
    }

    /// Frames `[start, start + count)` as a new sequence with the same metadata.
    pub fn slice(&self, start: usize, count: usize) -> Result<Self> {
        Ok(Self {
            frames: self.frames.slice_axis0(start, count)?,
            frame_interval_minutes: self.frame_interval_minutes,
            value_convention: self.value_convention,
            source_id: self.source_id.clone(),
        })
    }

    /// Converts to the normalized-unit convention.
    pub fn to_normalized(&self) -> Self {
        match self.value_convention {
            ValueConvention::NormalizedUnit => self.clone(),
            ValueConvention::Dbz8bit => Self {
                frames: self.frames.map(|v| v / 255.0),
                value_convention: ValueConvention::NormalizedUnit,
                ..self.clone()
            },
        }
    }

    /// Bilinear resampling of every frame to `height x width` (align-corners off).
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Domain("target size must be positive".into()));
        }
        let (t, h, w) = (self.len(), self.height(), self.width());
        let sy = h as f64 / height as f64;
        let sx = w as f64 / width as f64;
        let coord = |o: usize, scale: f64, n: usize| {
            let c = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = c.floor() as usize;
            (i0, (i0 + 1).min(n - 1), c - i0 as f64)
        };
        let mut out = Vec::with_capacity(t * height * width);
        for f in 0..t {
            let src = self.frame(f);
            for oy in 0..height {
                let (y0, y1, fy) = coord(oy, sy, h);
                for ox in 0..width {
                    let (x0, x1, fx) = coord(ox, sx, w);
                    let v = |y: usize, x: usize| src[y * w + x] as f64;
                    let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
                    let bot = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
                    out.push((top * (1.0 - fy) + bot * fy) as f32);
                }
            }
        }
        Ok(Self {
            frames: Tensor::new(vec![t, height, width], out)?,
            ..self.clone()
        })
    }
}
