use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2x2 contingency table of thresholded forecast versus truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Chance expectations `(E_TP, E_TN)` from the marginals.
    pub fn expected(&self) -> Option<(f64, f64)> {
        let n = self.total();
        if n == 0 {
            return None;
        }
        let (tp, fp, fn_, tn) = self.as_f64();
        let n = n as f64;
        Some(((tp + fp) * (tp + fn_) / n, (fn_ + tn) * (fp + tn) / n))
    }

    fn as_f64(&self) -> (f64, f64, f64, f64) {
        (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64)
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Pixels `>= tau` are events in both fields.
pub fn binarize_and_count(pred: &[f32], truth: &[f32], tau: f64) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::Domain(format!(
            "prediction has {} pixels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("threshold {tau} outside [0, 1]")));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p as f64 >= tau, t as f64 >= tau) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

pub fn csi(c: &ConfusionCounts) -> Option<f64> {
    let (tp, fp, fn_, _) = c.as_f64();
    ratio(tp, tp + fn_ + fp)
}

/// Skill score with chance-corrected hits *and* correct negatives.
pub fn gss(c: &ConfusionCounts) -> Option<f64> {
    let (e_tp, e_tn) = c.expected()?;
    let (tp, fp, fn_, tn) = c.as_f64();
    ratio((tp - e_tp) + (tn - e_tn), tp + fn_ + fp + tn - e_tp - e_tn)
}

pub fn hss(c: &ConfusionCounts) -> Option<f64> {
    let (tp, fp, fn_, tn) = c.as_f64();
    ratio(2.0 * (tp * tn - fn_ * fp), (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn))
}

/// Standard equitable threat score (no correct-negative terms).
pub fn ets(c: &ConfusionCounts) -> Option<f64> {
    let (e_tp, _) = c.expected()?;
    let (tp, fp, fn_, _) = c.as_f64();
    ratio(tp - e_tp, tp + fn_ + fp - e_tp)
}
