//! Binary classification metrics with MCI as the positive class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
    pub tn: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metrics require at least one prediction")]
    Empty,
}

/// Pools (prediction, label) pairs into one confusion matrix. An abstained
/// prediction counts as the wrong class: a false negative for an MCI label,
/// a false positive for an HC label. F1 is 0 when its denominator is 0.
pub fn compute_metrics(pairs: &[(Option<Label>, Label)]) -> Result<Metrics, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = Confusion::default();
    for (predicted, actual) in pairs {
        let effective = predicted.unwrap_or(match actual {
            Label::Mci => Label::Hc,
            Label::Hc => Label::Mci,
        });
        match (effective, actual) {
            (Label::Mci, Label::Mci) => c.tp += 1,
            (Label::Mci, Label::Hc) => c.fp += 1,
            (Label::Hc, Label::Mci) => c.fn_ += 1,
            (Label::Hc, Label::Hc) => c.tn += 1,
        }
    }
    Ok(metrics_from_confusion(c))
}

pub fn metrics_from_confusion(c: Confusion) -> Metrics {
    let total = (c.tp + c.fp + c.fn_ + c.tn) as f64;
    let accuracy = (c.tp + c.tn) as f64 / total;
    let denom = 2 * c.tp + c.fp + c.fn_;
    let f1 = if denom == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    };
    Metrics {
        accuracy,
        f1,
        confusion: c,
    }
}

/// Arithmetic mean of accuracy and F1 across seeds; confusion counts are
/// summed for reference.
pub fn mean_metrics(all: &[Metrics]) -> Result<Metrics, MetricsError> {
    if all.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = all.len() as f64;
    let mut confusion = Confusion::default();
    for m in all {
        confusion.tp += m.confusion.tp;
        confusion.fp += m.confusion.fp;
        confusion.fn_ += m.confusion.fn_;
        confusion.tn += m.confusion.tn;
    }
    Ok(Metrics {
        accuracy: all.iter().map(|m| m.accuracy).sum::<f64>() / n,
        f1: all.iter().map(|m| m.f1).sum::<f64>() / n,
        confusion,
    })
}
