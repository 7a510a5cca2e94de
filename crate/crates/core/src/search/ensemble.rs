use serde::Serialize;

use super::trial::{argmax_rows, rows_accuracy, TrialResult};
use crate::autodiff::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Ensemble {
    /// Indices into the trial list, in the order they were added.
    pub members: Vec<usize>,
    pub val_acc: f64,
    #[serde(skip)]
    pub val_softmax: Matrix,
    #[serde(skip)]
    pub test_softmax: Matrix,
}

impl Ensemble {
    /// Arg-max class of every test node, in `test_ids` order.
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(&self.test_softmax)
    }
}

fn average(trials: &[TrialResult], members: &[usize], pick: fn(&TrialResult) -> &Matrix) -> Matrix {
    let mut sum = pick(&trials[members[0]]).clone();
    for &m in &members[1..] {
        sum += pick(&trials[m]);
    }
    sum / members.len() as f64
}

/// Greedy forward selection over uniform softmax averages.
///
/// Starts from the most accurate trial on validation and keeps adding the
/// trial that raises validation accuracy the most, until none strictly
/// improves it or `k_max` members are reached. Failed trials are skipped.
pub fn build_ensemble(trials: &[TrialResult], val_truth: &[usize], k_max: usize) -> Result<Ensemble> {
    let usable: Vec<usize> = (0..trials.len()).filter(|&i| !trials[i].failed).collect();
    let first = *usable
        .iter()
        .max_by(|&&a, &&b| {
            let (va, vb) = (
                rows_accuracy(&trials[a].val_softmax, val_truth),
                rows_accuracy(&trials[b].val_softmax, val_truth),
            );
            va.total_cmp(&vb).then(b.cmp(&a))
        })
        .ok_or_else(|| Error::Budget("no completed trial to ensemble".into()))?;

    let mut members = vec![first];
    let mut val_softmax = trials[first].val_softmax.clone();
    let mut val_acc = rows_accuracy(&val_softmax, val_truth);
    while members.len() < k_max.max(1) {
        let mut best: Option<(usize, f64, Matrix)> = None;
        for &cand in &usable {
            if members.contains(&cand) {
                continue;
            }
            let mut with = members.clone();
            with.push(cand);
            let avg = average(trials, &with, |t| &t.val_softmax);
            let acc = rows_accuracy(&avg, val_truth);
            if acc > val_acc && best.as_ref().is_none_or(|(_, b, _)| acc > *b) {
                best = Some((cand, acc, avg));
            }
        }
        let Some((cand, acc, avg)) = best else { break };
        members.push(cand);
        val_acc = acc;
        val_softmax = avg;
    }
    let test_softmax = average(trials, &members, |t| &t.test_softmax);
    Ok(Ensemble {
        members,
        val_acc,
        val_softmax,
        test_softmax,
    })
}
