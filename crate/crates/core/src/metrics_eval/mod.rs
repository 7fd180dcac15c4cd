//! Categorical forecast verification: thresholding, confusion counts,
//! CSI/GSS/HSS per threshold and lead time, and the persistence control.

mod report;
mod scores;

pub use report::{evaluate, CountTable, LeadRow, MetricReport, ReportRecord, ThresholdSummary};
pub use scores::{binarize_and_count, csi, ets, gss, hss, ConfusionCounts};

use serde::{Deserialize, Serialize};
use sftformer_autograd::Tensor;

use crate::config::{EvalConfig, ThresholdSpec};
use crate::data_io::{rate_to_pixel, EchoSequence};
use crate::error::{Error, Result};

/// A resolved threshold: the pixel cut, plus the rain rate it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub pixel: f64,
    pub rain_rate_mmh: Option<f64>,
}

impl Threshold {
    pub fn pixel(pixel: f64) -> Self {
        Self {
            pixel,
            rain_rate_mmh: None,
        }
    }

    pub fn resolve(spec: ThresholdSpec, zr_a: f64, zr_b: f64) -> Result<Self> {
        match spec {
            ThresholdSpec::Pixel(p) if (0.0..=1.0).contains(&p) => Ok(Self::pixel(p)),
            ThresholdSpec::Pixel(p) => Err(Error::Domain(format!("pixel threshold {p} outside [0, 1]"))),
            ThresholdSpec::RainRate(r) => Ok(Self {
                pixel: rate_to_pixel(r, zr_a, zr_b)?,
                rain_rate_mmh: Some(r),
            }),
        }
    }

    pub fn label(&self) -> String {
        match self.rain_rate_mmh {
            Some(r) => format!("{r}mm/h"),
            None => format!("px{}", self.pixel),
        }
    }
}

pub fn resolve_thresholds(cfg: &EvalConfig) -> Result<Vec<Threshold>> {
    cfg.thresholds
        .iter()
        .map(|&s| Threshold::resolve(s, cfg.zr_a, cfg.zr_b))
        .collect()
}

/// Repeats the last observed frame `t_out` times: `[t_out, h, w]`.
pub fn persistence_baseline(input: &EchoSequence, t_out: usize) -> Result<Tensor<f32>> {
    if input.is_empty() {
        return Err(Error::Domain("persistence needs at least one observed frame".into()));
    }
    let frame = input.frame(input.len() - 1);
    let mut data = Vec::with_capacity(t_out * frame.len());
    for _ in 0..t_out {
        data.extend_from_slice(frame);
    }
    Ok(Tensor::new(vec![t_out, input.height(), input.width()], data)?)
}
