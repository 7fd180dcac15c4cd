use std::io::Write;

use serde::{Deserialize, Serialize};
use sftformer_autograd::Tensor;

use super::scores::{binarize_and_count, csi, ets, gss, hss, ConfusionCounts};
use super::Threshold;
use crate::error::{Error, Result};

/// Pooled counts indexed by `[threshold][lead_time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub thresholds: Vec<Threshold>,
    pub lead_times: usize,
    pub counts: Vec<Vec<ConfusionCounts>>,
}

impl CountTable {
    pub fn new(thresholds: &[Threshold], lead_times: usize) -> Self {
        Self {
            thresholds: thresholds.to_vec(),
            lead_times,
            counts: vec![vec![ConfusionCounts::default(); lead_times]; thresholds.len()],
        }
    }

    /// Adds one `[t, h, w]` prediction against its truth.
    pub fn add_pair(&mut self, pred: &Tensor<f32>, truth: &Tensor<f32>) -> Result<()> {
        if pred.shape() != truth.shape() || pred.rank() != 3 || pred.shape()[0] != self.lead_times {
            return Err(Error::Domain(format!(
                "prediction {:?} and truth {:?} must both be [{}, h, w]",
                pred.shape(),
                truth.shape(),
                self.lead_times
            )));
        }
        let frame = pred.shape()[1] * pred.shape()[2];
        for (k, th) in self.thresholds.iter().enumerate() {
            for t in 0..self.lead_times {
                let r = t * frame..(t + 1) * frame;
                self.counts[k][t] += binarize_and_count(&pred.data()[r.clone()], &truth.data()[r], th.pixel)?;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CountTable) -> Result<()> {
        if other.thresholds != self.thresholds || other.lead_times != self.lead_times {
            return Err(Error::Domain("count tables have different layouts".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadRow {
    pub threshold: Threshold,
    /// 1-based forecast step.
    pub lead_time: usize,
    pub counts: ConfusionCounts,
    pub csi: Option<f64>,
    pub gss: Option<f64>,
    pub hss: Option<f64>,
    pub ets: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub threshold: Threshold,
    pub mean_csi: Option<f64>,
    pub mean_gss: Option<f64>,
    pub mean_hss: Option<f64>,
    pub mean_ets: Option<f64>,
    pub last: LeadRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Threshold-major, then lead time.
    pub rows: Vec<LeadRow>,
    pub summaries: Vec<ThresholdSummary>,
}

/// Mean of the present values; `None` if every value is missing.
fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricReport {
    pub fn from_counts(table: &CountTable) -> Self {
        let mut rows = Vec::new();
        let mut summaries = Vec::new();
        for (th, per_lead) in table.thresholds.iter().zip(&table.counts) {
            let start = rows.len();
            for (t, c) in per_lead.iter().enumerate() {
                rows.push(LeadRow {
                    threshold: *th,
                    lead_time: t + 1,
                    counts: *c,
                    csi: csi(c),
                    gss: gss(c),
                    hss: hss(c),
                    ets: ets(c),
                });
            }
            let mine = &rows[start..];
            if let Some(last) = mine.last() {
                summaries.push(ThresholdSummary {
                    threshold: *th,
                    mean_csi: mean_present(mine.iter().map(|r| r.csi)),
                    mean_gss: mean_present(mine.iter().map(|r| r.gss)),
                    mean_hss: mean_present(mine.iter().map(|r| r.hss)),
                    mean_ets: mean_present(mine.iter().map(|r| r.ets)),
                    last: last.clone(),
                });
            }
        }
        Self { rows, summaries }
    }

    /// Per-lead-time values of one score at threshold index `k`.
    pub fn curve(&self, k: usize, score: impl Fn(&LeadRow) -> Option<f64>) -> Vec<Option<f64>> {
        let Some(th) = self.summaries.get(k).map(|s| s.threshold) else {
            return Vec::new();
        };
        self.rows.iter().filter(|r| r.threshold == th).map(score).collect()
    }

    pub fn records(&self, predictor: &str) -> Vec<ReportRecord> {
        self.rows
            .iter()
            .map(|r| ReportRecord {
                predictor: predictor.to_string(),
                threshold_pixel: r.threshold.pixel,
                rain_rate_mmh: r.threshold.rain_rate_mmh,
                lead_time: r.lead_time,
                tp: r.counts.tp,
                fp: r.counts.fp,
                fn_: r.counts.fn_,
                tn: r.counts.tn,
                csi: r.csi,
                gss: r.gss,
                hss: r.hss,
                ets: r.ets,
            })
            .collect()
    }
}

/// One line of the JSONL report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub predictor: String,
    pub threshold_pixel: f64,
    pub rain_rate_mmh: Option<f64>,
    pub lead_time: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub csi: Option<f64>,
    pub gss: Option<f64>,
    pub hss: Option<f64>,
    pub ets: Option<f64>,
}

impl ReportRecord {
    pub fn write_jsonl(records: &[ReportRecord], w: &mut impl Write) -> std::io::Result<()> {
        for r in records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Plotting-ready CSV; missing scores are empty cells.
    pub fn write_csv(records: &[ReportRecord], w: &mut impl Write) -> std::io::Result<()> {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "predictor,threshold_pixel,rain_rate_mmh,lead_time,csi,gss,hss,ets")?;
        for r in records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.predictor,
                r.threshold_pixel,
                cell(r.rain_rate_mmh),
                r.lead_time,
                cell(r.csi),
                cell(r.gss),
                cell(r.hss),
                cell(r.ets)
            )?;
        }
        Ok(())
    }
}

/// Pools counts over all `(prediction, truth)` pairs, each `[t, h, w]`.
pub fn evaluate(pairs: &[(Tensor<f32>, Tensor<f32>)], thresholds: &[Threshold]) -> Result<MetricReport> {
    let lead_times = pairs.first().map_or(0, |(p, _)| p.shape().first().copied().unwrap_or(0));
    let mut table = CountTable::new(thresholds, lead_times);
    for (p, t) in pairs {
        table.add_pair(p, t)?;
    }
    Ok(MetricReport::from_counts(&table))
}
