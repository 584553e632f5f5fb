//! Accuracy, TPR, FPR and F1 over a multi-class confusion matrix.

use serde::{Deserialize, Serialize};

use crate::FlError;

/// `counts[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Confusion { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_pairs(classes: usize, predicted: &[usize], actual: &[usize]) -> Result<Self, FlError> {
        if predicted.len() != actual.len() {
            return Err(FlError::Metrics(format!("{} predictions for {} labels", predicted.len(), actual.len())));
        }
        let mut c = Confusion::new(classes);
        for (&p, &a) in predicted.iter().zip(actual) {
            if p >= classes || a >= classes {
                return Err(FlError::Metrics(format!("class index out of range: {p}/{a}")));
            }
            c.counts[a][p] += 1;
        }
        Ok(c)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// One-vs-rest counts `(tp, tn, fp, fn)` for class `k`.
    pub fn one_vs_rest(&self, k: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[k][k];
        let actual: u64 = self.counts[k].iter().sum();
        let predicted: u64 = self.counts.iter().map(|row| row[k]).sum();
        let fp = predicted - tp;
        let fn_ = actual - tp;
        (tp, self.total() - tp - fp - fn_, fp, fn_)
    }
}

/// Rates from one set of binary counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryRates {
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn binary_rates(tp: u64, tn: u64, fp: u64, fn_: u64) -> BinaryRates {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    BinaryRates {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        tpr: ratio(tp, tp + fn_),
        fpr: ratio(fp, fp + tn),
        f1: ratio(2.0 * tp, 2.0 * tp + fp + fn_),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Micro-averaged; equal to accuracy for single-label data.
    pub tpr: f64,
    /// Macro-averaged one-vs-rest.
    pub fpr: f64,
    /// Support-weighted one-vs-rest.
    pub f1: f64,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(confusion: Confusion) -> Result<Self, FlError> {
        let total = confusion.total();
        if total == 0 {
            return Err(FlError::Metrics("no samples to evaluate".into()));
        }
        let k = confusion.classes();
        let mut tp_sum = 0u64;
        let mut fn_sum = 0u64;
        let mut fpr_sum = 0.0;
        let mut f1_weighted = 0.0;
        for c in 0..k {
            let (tp, tn, fp, fn_) = confusion.one_vs_rest(c);
            let r = binary_rates(tp, tn, fp, fn_);
            tp_sum += tp;
            fn_sum += fn_;
            fpr_sum += r.fpr;
            f1_weighted += r.f1 * (tp + fn_) as f64;
        }
        let correct: u64 = (0..k).map(|c| confusion.counts[c][c]).sum();
        Ok(Metrics {
            accuracy: correct as f64 / total as f64,
            tpr: ratio(tp_sum as f64, (tp_sum + fn_sum) as f64),
            fpr: fpr_sum / k as f64,
            f1: f1_weighted / total as f64,
            confusion,
        })
    }
}

pub fn evaluate(classes: usize, predicted: &[usize], actual: &[usize]) -> Result<Metrics, FlError> {
    if predicted.is_empty() {
        return Err(FlError::Metrics("no samples to evaluate".into()));
    }
    Metrics::from_confusion(Confusion::from_pairs(classes, predicted, actual)?)
}
