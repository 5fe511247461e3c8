//! Precision, recall and F-score over anchor-zone bits, plus rejection and
//! savings statistics.
//!
//! Every ratio with a zero denominator is defined as 0.

use fcaz_core::fc_engine::AzConfig;
use serde::Serialize;

use crate::MlError;

/// Normal quantile of a two-sided 98% confidence interval.
pub const Z_98: f64 = 2.326;

pub fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn fscore(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn add(&mut self, predicted: &[bool], truth: &[bool]) {
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => self.tn += 1,
            }
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    pub fn fscore(&self) -> f64 {
        fscore(self.precision(), self.recall())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    /// Micro-averaged over every (sample, link) bit.
    pub fscore: f64,
    /// Mean of per-sample F-scores.
    pub macro_fscore: f64,
    pub counts: Counts,
}

pub fn metrics(predicted: &[AzConfig], truth: &[AzConfig]) -> Result<Scores, MlError> {
    if predicted.len() != truth.len() {
        return Err(MlError::Dimension(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let mut counts = Counts::default();
    let mut macro_sum = 0.0;
    for (i, (p, t)) in predicted.iter().zip(truth).enumerate() {
        if p.len() != t.len() {
            return Err(MlError::Dimension(format!("sample {i}: {} predicted bits, {} true bits", p.len(), t.len())));
        }
        let mut c = Counts::default();
        c.add(p.bits(), t.bits());
        macro_sum += c.fscore();
        counts.tp += c.tp;
        counts.fp += c.fp;
        counts.fn_ += c.fn_;
        counts.tn += c.tn;
    }
    Ok(Scores {
        precision: counts.precision(),
        recall: counts.recall(),
        fscore: counts.fscore(),
        macro_fscore: ratio(macro_sum, predicted.len() as f64),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rejection {
    pub rejected: usize,
    pub total: usize,
    pub probability: f64,
    /// Normal-approximation half-width at 98% confidence.
    pub half_width: f64,
}

pub fn rejection(rejected: usize, total: usize) -> Result<Rejection, MlError> {
    if total == 0 {
        return Err(MlError::TooFewExamples { need: 1, got: 0 });
    }
    if rejected > total {
        return Err(MlError::Invalid(format!("{rejected} rejections out of {total}")));
    }
    let p = rejected as f64 / total as f64;
    Ok(Rejection { rejected, total, probability: p, half_width: Z_98 * (p * (1.0 - p) / total as f64).sqrt() })
}

/// `1 - mean(charged) / mean(reference)`, where rejected samples are already
/// charged the reference objective by the caller.
pub fn resources_saved(charged: &[f64], reference: &[f64]) -> Result<f64, MlError> {
    if charged.len() != reference.len() {
        return Err(MlError::Dimension(format!("{} objectives for {} references", charged.len(), reference.len())));
    }
    if charged.is_empty() {
        return Err(MlError::TooFewExamples { need: 1, got: 0 });
    }
    let reference: f64 = reference.iter().sum();
    if !(reference > 0.0) {
        return Err(MlError::Invalid("reference objective is not positive".into()));
    }
    Ok(1.0 - charged.iter().sum::<f64>() / reference)
}
