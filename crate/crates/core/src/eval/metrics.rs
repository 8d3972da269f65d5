//! Classification metrics.

use super::EvalError;

/// Macro-averaged F1 with per-class detail.
#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub macro_f1: f64,
    /// `(class, f1)` for every class present in the labels or the
    /// predictions, ascending by class.
    pub per_class: Vec<(u32, f64)>,
}

/// Per-class F1 (harmonic mean of precision and recall, 0 when
/// undefined) averaged without weights over every class that appears
/// in either vector. A class absent from both contributes nothing.
pub fn macro_f1(predicted: &[u32], actual: &[u32]) -> Result<F1Report, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predicted.len(),
            labels: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::LengthMismatch { predictions: 0, labels: 0 });
    }
    let classes: std::collections::BTreeSet<u32> =
        predicted.iter().chain(actual).copied().collect();
    let mut per_class = Vec::with_capacity(classes.len());
    for class in classes {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p == class, a == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push((class, f1));
    }
    let macro_f1 = per_class.iter().map(|(_, f)| f).sum::<f64>() / per_class.len() as f64;
    Ok(F1Report { macro_f1, per_class })
}
