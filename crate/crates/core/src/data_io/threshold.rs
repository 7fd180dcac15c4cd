//! Rain-rate to pixel-threshold conversion through a Z-R power law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ZR_A: f64 = 58.53;
pub const DEFAULT_ZR_B: f64 = 1.56;

/// Pixel value in `[0, 1]` for a rain rate in mm/h, with dBZ mapped affinely
/// from `[-10, 60]`.
pub fn rate_to_pixel(rain_rate_mmh: f64, zr_a: f64, zr_b: f64) -> Result<f64> {
    if !(rain_rate_mmh > 0.0) {
        return Err(Error::Domain(format!("rain rate must be positive, got {rain_rate_mmh}")));
    }
    if !(zr_a > 0.0 && zr_b > 0.0) {
        return Err(Error::Domain(format!("Z-R coefficients must be positive, got a={zr_a} b={zr_b}")));
    }
    let dbz = 10.0 * zr_a.log10() + 10.0 * zr_b * rain_rate_mmh.log10();
    Ok(((dbz + 10.0) / 70.0).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMap {
    pub rain_rate_mmh: f64,
    pub pixel_threshold: f64,
}

impl ThresholdMap {
    pub fn from_rate(rain_rate_mmh: f64, zr_a: f64, zr_b: f64) -> Result<Self> {
        Ok(Self {
            rain_rate_mmh,
            pixel_threshold: rate_to_pixel(rain_rate_mmh, zr_a, zr_b)?,
        })
    }
}
