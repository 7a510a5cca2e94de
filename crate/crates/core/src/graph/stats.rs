use serde::{Deserialize, Serialize};

use super::dataset::DatasetBundle;

/// Dataset summary statistics in the layout of the challenge's dataset table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    /// Undirected edge count for undirected graphs, arc count for directed ones.
    pub n_edges: usize,
    pub avg_degree: f64,
    pub n_features: usize,
    pub n_classes: usize,
    pub directed: bool,
    pub weighted: bool,
    /// Largest over smallest training-class size, taken over classes that
    /// have at least one training node.
    pub skewness: f64,
}

pub fn compute_stats(bundle: &DatasetBundle) -> GraphStats {
    let g = &bundle.graph;
    let n_edges = if g.is_directed() {
        g.n_arcs()
    } else {
        g.n_arcs() / 2
    };
    let n_nodes = g.n_nodes();
    let avg_degree = if n_nodes == 0 {
        0.0
    } else {
        n_edges as f64 / n_nodes as f64
    };
    GraphStats {
        n_nodes,
        n_edges,
        avg_degree,
        n_features: bundle.features.as_ref().map_or(0, |x| x.ncols()),
        n_classes: bundle.n_classes,
        directed: g.is_directed(),
        weighted: g.is_weighted(),
        skewness: train_skewness(bundle),
    }
}

fn train_skewness(bundle: &DatasetBundle) -> f64 {
    let mut counts = vec![0usize; bundle.n_classes];
    for i in 0..bundle.n_nodes() {
        if let Some(l) = bundle.train_label(i) {
            counts[l] += 1;
        }
    }
    let present: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    match (present.iter().max(), present.iter().min()) {
        (Some(&max), Some(&min)) => max as f64 / min as f64,
        _ => 1.0,
    }
}
