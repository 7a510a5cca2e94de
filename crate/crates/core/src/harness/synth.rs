use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{ensure, Result};
use crate::graph::{save_dataset, write_labels, DatasetBundle, SparseGraph, DEFAULT_TIME_BUDGET};

/// Stochastic block model with noisy class-indicator features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
    pub train_fraction: f64,
    /// Standard deviation of the Gaussian noise added to the indicators.
    pub feature_noise: f64,
}

impl SbmParams {
    pub fn new(nodes: usize, classes: usize, p_in: f64, p_out: f64, seed: u64) -> Self {
        SbmParams {
            nodes,
            classes,
            p_in,
            p_out,
            seed,
            train_fraction: 0.2,
            feature_noise: 1.0,
        }
    }
}

/// A generated dataset and the labels of its test nodes.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub bundle: DatasetBundle,
    /// `(node_id, label)` for every test node, in `test_ids` order.
    pub truth: Vec<(usize, usize)>,
}

impl SynthDataset {
    /// Writes the dataset files plus `labels_test.tsv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        save_dataset(&self.bundle, dir)?;
        write_labels(dir.join("labels_test.tsv"), &self.truth)
    }
}

pub fn generate_sbm(p: &SbmParams) -> Result<SynthDataset> {
    ensure!(p.nodes >= 2 && p.classes >= 1, "sbm needs at least two nodes and one class");
    ensure!(p.classes <= p.nodes, "more classes than nodes");
    ensure!(
        (0.0..=1.0).contains(&p.p_in) && (0.0..=1.0).contains(&p.p_out),
        "edge probabilities must lie in [0, 1]"
    );
    ensure!(
        p.train_fraction > 0.0 && p.train_fraction < 1.0,
        "train fraction must lie in (0, 1)"
    );
    let n = p.nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut class: Vec<usize> = (0..n).map(|i| i * p.classes / n).collect();
    class.shuffle(&mut rng);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let prob = if class[i] == class[j] { p.p_in } else { p.p_out };
            if rng.random::<f64>() < prob {
                edges.push((i, j, 1.0));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, edges, false, false)?;

    let noise = Normal::new(0.0, p.feature_noise.max(0.0)).expect("finite sigma");
    let mut features = Matrix::zeros((n, p.classes));
    for i in 0..n {
        for c in 0..p.classes {
            let base = if class[i] == c { 1.0 } else { 0.0 };
            features[[i, c]] = base + noise.sample(&mut rng);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((p.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut train_mask = vec![false; n];
    for &i in &order[..n_train] {
        train_mask[i] = true;
    }
    let test_mask: Vec<bool> = train_mask.iter().map(|t| !t).collect();
    let test_ids: Vec<usize> = (0..n).filter(|&i| test_mask[i]).collect();
    let labels = (0..n)
        .map(|i| if train_mask[i] { class[i] as i64 } else { -1 })
        .collect();
    let truth = test_ids.iter().map(|&i| (i, class[i])).collect();
    Ok(SynthDataset {
        bundle: DatasetBundle {
            graph,
            features: Some(features),
            labels,
            train_mask,
            test_mask,
            test_ids,
            n_classes: p.classes,
            time_budget_seconds: DEFAULT_TIME_BUDGET,
        },
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_is_deterministic_and_homophilous() {
        let p = SbmParams::new(200, 4, 0.1, 0.01, 7);
        let a = generate_sbm(&p).unwrap();
        let b = generate_sbm(&p).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.bundle.graph.col_idx(), b.bundle.graph.col_idx());
        a.bundle.validate().unwrap();
        assert_eq!(a.bundle.train_nodes().len(), 40);
        assert_eq!(a.truth.len(), 160);
    }
}
