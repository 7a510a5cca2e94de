use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// Recall per class; `None` for classes absent from the truth.
    pub per_class_recall: Vec<Option<f64>>,
    pub n_test: usize,
    pub wall_seconds: f64,
    pub budget_exceeded: bool,
}

fn check(pred: &[usize], truth: &[usize]) -> Result<()> {
    ensure!(pred.len() == truth.len(), "{} predictions for {} truths", pred.len(), truth.len());
    ensure!(!truth.is_empty(), "metrics need at least one node");
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

pub fn per_class_recall(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<Option<f64>>> {
    check(pred, truth)?;
    ensure!(
        truth.iter().all(|&t| t < n_classes),
        "truth label outside 0..{n_classes}"
    );
    let mut support = vec![0usize; n_classes];
    let mut hits = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        support[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    Ok(support
        .iter()
        .zip(&hits)
        .map(|(&s, &h)| (s > 0).then(|| h as f64 / s as f64))
        .collect())
}

/// Mean recall over the classes present in `truth`.
pub fn balanced_accuracy(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    let recalls: Vec<f64> = per_class_recall(pred, truth, n_classes)?.into_iter().flatten().collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}
