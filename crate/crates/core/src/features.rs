//! Engineered node features.
//!
//! Neighbourhoods here ignore arc direction: a node's 1-hop set is every
//! node it shares an arc with.

use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{ensure, Error, Result};
use crate::graph::{DatasetBundle, SparseGraph};

/// Largest node count for which one-hot id features are materialized.
pub const ONE_HOT_CAP: usize = 20_000;

pub const DEFAULT_HUB_PERCENTILE: f64 = 99.0;

const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Raw,
    OneHot,
    Degree,
    #[serde(rename = "neigh_feat_1hop")]
    NeighFeat1hop,
    #[serde(rename = "neigh_feat_2hop")]
    NeighFeat2hop,
    #[serde(rename = "neigh_label_1hop")]
    NeighLabel1hop,
    #[serde(rename = "neigh_label_2hop")]
    NeighLabel2hop,
    Hub,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 8] = [
        FeatureSource::Raw,
        FeatureSource::OneHot,
        FeatureSource::Degree,
        FeatureSource::NeighFeat1hop,
        FeatureSource::NeighFeat2hop,
        FeatureSource::NeighLabel1hop,
        FeatureSource::NeighLabel2hop,
        FeatureSource::Hub,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSource::Raw => "raw",
            FeatureSource::OneHot => "one_hot",
            FeatureSource::Degree => "degree",
            FeatureSource::NeighFeat1hop => "neigh_feat_1hop",
            FeatureSource::NeighFeat2hop => "neigh_feat_2hop",
            FeatureSource::NeighLabel1hop => "neigh_label_1hop",
            FeatureSource::NeighLabel2hop => "neigh_label_2hop",
            FeatureSource::Hub => "hub",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Usage(format!("unknown feature block {name:?}")))
    }

    /// Whether the block reads training labels.
    pub fn uses_labels(self) -> bool {
        matches!(self, FeatureSource::NeighLabel1hop | FeatureSource::NeighLabel2hop)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub name: String,
    pub source: FeatureSource,
    pub matrix: Matrix,
}

impl FeatureBlock {
    fn new(source: FeatureSource, matrix: Matrix) -> Self {
        FeatureBlock {
            name: source.name().to_string(),
            source,
            matrix,
        }
    }

    pub fn width(&self) -> usize {
        self.matrix.ncols()
    }
}

fn undirected(bundle: &DatasetBundle) -> SparseGraph {
    bundle.graph.to_undirected()
}

pub fn raw_features(bundle: &DatasetBundle) -> Result<FeatureBlock> {
    let x = bundle
        .features
        .as_ref()
        .ok_or_else(|| Error::Contract("raw features requested on a featureless dataset".into()))?;
    Ok(FeatureBlock::new(FeatureSource::Raw, x.clone()))
}

/// Identity indicator per node, for featureless datasets.
pub fn one_hot_ids(bundle: &DatasetBundle) -> Result<FeatureBlock> {
    ensure!(bundle.is_featureless(), "one-hot ids are only built for featureless datasets");
    let n = bundle.n_nodes();
    if n > ONE_HOT_CAP {
        return Err(Error::Capacity(format!(
            "one-hot features for {n} nodes exceed the cap of {ONE_HOT_CAP}"
        )));
    }
    Ok(FeatureBlock::new(FeatureSource::OneHot, Matrix::eye(n)))
}

/// Columns: in-degree, out-degree, `ln(1 + total degree)`.
///
/// For undirected graphs in = out = the edge count of the node, and the
/// total degree is that same count.
pub fn degree_features(bundle: &DatasetBundle) -> FeatureBlock {
    let g = &bundle.graph;
    let n = g.n_nodes();
    let indeg = g.in_degrees();
    let mut m = Matrix::zeros((n, 3));
    for i in 0..n {
        let (din, dout) = (indeg[i] as f64, g.out_degree(i) as f64);
        let total = if g.is_directed() { din + dout } else { dout };
        m[[i, 0]] = din;
        m[[i, 1]] = dout;
        m[[i, 2]] = total.ln_1p();
    }
    FeatureBlock::new(FeatureSource::Degree, m)
}

/// Mean of raw feature rows over each node's `hops`-neighbourhood; zero
/// rows for empty neighbourhoods.
pub fn neighbor_feature_stats(bundle: &DatasetBundle, hops: usize) -> Result<FeatureBlock> {
    let x = bundle
        .features
        .as_ref()
        .ok_or_else(|| Error::Contract("neighbour feature stats need raw features".into()))?;
    let source = match hops {
        1 => FeatureSource::NeighFeat1hop,
        2 => FeatureSource::NeighFeat2hop,
        _ => return Err(Error::Contract(format!("hops must be 1 or 2, got {hops}"))),
    };
    let g = undirected(bundle);
    let mut out = Matrix::zeros(x.raw_dim());
    for i in 0..g.n_nodes() {
        let nb = g.k_hop(i, hops)?;
        if nb.is_empty() {
            continue;
        }
        let mut row = out.row_mut(i);
        for &j in &nb {
            row += &x.row(j);
        }
        row /= nb.len() as f64;
    }
    Ok(FeatureBlock::new(source, out))
}

/// Class histogram of the training-labelled nodes in each `hops`-
/// neighbourhood (excluding the node itself), normalized to sum to 1.
/// Nodes without labelled neighbours get the uniform row.
pub fn neighbor_label_distribution(bundle: &DatasetBundle, hops: usize) -> Result<FeatureBlock> {
    neighbor_label_distribution_masked(bundle, hops, &bundle.train_mask)
}

/// As [`neighbor_label_distribution`], reading labels only where
/// `label_mask` holds (which must be a subset of the training mask).
pub fn neighbor_label_distribution_masked(
    bundle: &DatasetBundle,
    hops: usize,
    label_mask: &[bool],
) -> Result<FeatureBlock> {
    let source = match hops {
        1 => FeatureSource::NeighLabel1hop,
        2 => FeatureSource::NeighLabel2hop,
        _ => return Err(Error::Contract(format!("hops must be 1 or 2, got {hops}"))),
    };
    let n = bundle.n_nodes();
    ensure!(label_mask.len() == n, "label mask length");
    ensure!(
        (0..n).all(|i| !label_mask[i] || bundle.train_mask[i]),
        "label mask reaches outside the training nodes"
    );
    let c = bundle.n_classes;
    ensure!(c >= 1, "label distribution needs at least one class");
    let g = undirected(bundle);
    let mut out = Matrix::zeros((n, c));
    for i in 0..n {
        let mut row = out.row_mut(i);
        let mut total = 0.0;
        for j in g.k_hop(i, hops)? {
            if label_mask[j] {
                row[bundle.labels[j] as usize] += 1.0;
                total += 1.0;
            }
        }
        if total > 0.0 {
            row /= total;
        } else {
            row.fill(1.0 / c as f64);
        }
    }
    Ok(FeatureBlock::new(source, out))
}

/// Linear-interpolated percentile of `values` (`p` in [0, 100]).
fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// 1.0 where some 1-hop neighbour is a hub, else 0.0.
///
/// A hub is a node whose degree reaches the given percentile of the degree
/// distribution and is strictly above the median degree, so graphs where
/// every node has the same degree have no hubs.
pub fn hub_indicator(bundle: &DatasetBundle, pct: f64) -> FeatureBlock {
    let g = undirected(bundle);
    let n = g.n_nodes();
    let deg: Vec<f64> = (0..n).map(|i| g.out_degree(i) as f64).collect();
    let threshold = percentile(&deg, pct);
    let median = percentile(&deg, 50.0);
    let is_hub: Vec<bool> = deg.iter().map(|&d| d >= threshold && d > median).collect();
    let mut out = Matrix::zeros((n, 1));
    for i in 0..n {
        if g.neighbors(i).iter().any(|&j| is_hub[j]) {
            out[[i, 0]] = 1.0;
        }
    }
    FeatureBlock::new(FeatureSource::Hub, out)
}

/// Builds one block by source, with one-hot falling back to degree
/// features above the cap. `label_mask` restricts which training labels
/// the label-distribution blocks may read.
pub fn compute_block(
    bundle: &DatasetBundle,
    source: FeatureSource,
    label_mask: &[bool],
) -> Result<FeatureBlock> {
    match source {
        FeatureSource::Raw => raw_features(bundle),
        FeatureSource::OneHot => match one_hot_ids(bundle) {
            Err(Error::Capacity(msg)) => {
                log::warn!("{msg}; using degree features instead");
                Ok(degree_features(bundle))
            }
            other => other,
        },
        FeatureSource::Degree => Ok(degree_features(bundle)),
        FeatureSource::NeighFeat1hop => neighbor_feature_stats(bundle, 1),
        FeatureSource::NeighFeat2hop => neighbor_feature_stats(bundle, 2),
        FeatureSource::NeighLabel1hop => neighbor_label_distribution_masked(bundle, 1, label_mask),
        FeatureSource::NeighLabel2hop => neighbor_label_distribution_masked(bundle, 2, label_mask),
        FeatureSource::Hub => Ok(hub_indicator(bundle, DEFAULT_HUB_PERCENTILE)),
    }
}

/// Concatenates blocks column-wise in order. With `standardize`, every
/// column becomes `(x - mean) / std` over all nodes, std floored at 1e-8.
pub fn assemble(blocks: &[&FeatureBlock], standardize: bool) -> Result<Matrix> {
    ensure!(!blocks.is_empty(), "assemble needs at least one block");
    let n = blocks[0].matrix.nrows();
    ensure!(
        blocks.iter().all(|b| b.matrix.nrows() == n),
        "feature blocks disagree on node count"
    );
    let views: Vec<_> = blocks.iter().map(|b| b.matrix.view()).collect();
    let mut x = ndarray::concatenate(ndarray::Axis(1), &views).expect("row counts checked");
    if standardize && n > 0 {
        for mut col in x.columns_mut() {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt().max(STD_FLOOR);
            col.mapv_inplace(|v| (v - mean) / std);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub(crate) fn bundle(graph: SparseGraph, features: Option<Matrix>, labels: Vec<i64>, c: usize) -> DatasetBundle {
        let n = graph.n_nodes();
        DatasetBundle {
            graph,
            features,
            train_mask: labels.iter().map(|&l| l >= 0).collect(),
            labels,
            test_mask: vec![false; n],
            test_ids: vec![],
            n_classes: c,
            time_budget_seconds: 60.0,
        }
    }

    fn path3() -> SparseGraph {
        SparseGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)], false, false).unwrap()
    }

    fn star(leaves: usize) -> SparseGraph {
        SparseGraph::from_edges(leaves + 1, (1..=leaves).map(|i| (0, i, 1.0)), false, false).unwrap()
    }

    #[test]
    fn one_hot_is_identity() {
        let b = bundle(SparseGraph::empty(3, false), None, vec![-1; 3], 2);
        let blk = one_hot_ids(&b).unwrap();
        assert_eq!(blk.matrix, Matrix::eye(3));
        assert!(blk.matrix.rows().into_iter().all(|r| r.sum() == 1.0));
    }

    #[test]
    fn one_hot_rejects_featureful() {
        let b = bundle(SparseGraph::empty(3, false), Some(Matrix::zeros((3, 2))), vec![-1; 3], 2);
        assert!(matches!(one_hot_ids(&b), Err(Error::Contract(_))));
    }

    #[test]
    fn one_hot_over_cap_falls_back_to_degree() {
        let n = ONE_HOT_CAP + 1;
        let b = bundle(SparseGraph::empty(n, false), None, vec![-1; n], 2);
        assert!(matches!(one_hot_ids(&b), Err(Error::Capacity(_))));
        let blk = compute_block(&b, FeatureSource::OneHot, &b.train_mask.clone()).unwrap();
        assert_eq!(blk.source, FeatureSource::Degree);
    }

    #[test]
    fn degree_columns() {
        let b = bundle(path3(), None, vec![-1; 3], 2);
        let d = degree_features(&b).matrix;
        assert_eq!(d.row(1).to_vec()[..2], [2.0, 2.0]);
        assert!((d[[1, 2]] - 3f64.ln()).abs() < 1e-15);

        let iso = bundle(SparseGraph::empty(2, false), None, vec![-1; 2], 2);
        assert_eq!(degree_features(&iso).matrix.row(0).to_vec(), vec![0.0; 3]);

        let arc = SparseGraph::from_edges(2, [(0, 1, 1.0)], true, false).unwrap();
        let d = degree_features(&bundle(arc, None, vec![-1; 2], 2)).matrix;
        assert_eq!(d.row(0).to_vec()[..2], [0.0, 1.0]);
        assert_eq!(d.row(1).to_vec()[..2], [1.0, 0.0]);
    }

    #[test]
    fn neighbor_means() {
        let b = bundle(path3(), Some(array![[1.0], [2.0], [4.0]]), vec![-1; 3], 2);
        let m = neighbor_feature_stats(&b, 1).unwrap().matrix;
        assert_eq!(m[[1, 0]], 2.5);
        let m2 = neighbor_feature_stats(&b, 2).unwrap().matrix;
        assert_eq!(m2[[0, 0]], 3.0);

        let iso = bundle(SparseGraph::empty(2, false), Some(array![[1.0], [2.0]]), vec![-1; 2], 2);
        assert!(neighbor_feature_stats(&iso, 1).unwrap().matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn label_distribution_histogram_and_fallback() {
        let g = star(2);
        let b = bundle(g, None, vec![-1, 0, 0], 2);
        let m = neighbor_label_distribution(&b, 1).unwrap().matrix;
        assert_eq!(m.row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(m.row(1).to_vec(), vec![0.5, 0.5]);

        let iso = bundle(SparseGraph::empty(2, false), None, vec![0, -1], 4);
        let m = neighbor_label_distribution(&iso, 2).unwrap().matrix;
        assert_eq!(m.row(1).to_vec(), vec![0.25; 4]);
    }

    #[test]
    fn hub_indicator_star_ring_empty() {
        let b = bundle(star(10), None, vec![-1; 11], 2);
        let h = hub_indicator(&b, 99.0).matrix;
        assert!((1..=10).all(|i| h[[i, 0]] == 1.0));
        assert_eq!(h[[0, 0]], 0.0);

        let ring = SparseGraph::from_edges(8, (0..8).map(|i| (i, (i + 1) % 8, 1.0)), false, false)
            .unwrap();
        let h = hub_indicator(&bundle(ring, None, vec![-1; 8], 2), 99.0).matrix;
        assert!(h.iter().all(|&v| v == 0.0));

        let h = hub_indicator(&bundle(SparseGraph::empty(5, false), None, vec![-1; 5], 2), 99.0);
        assert!(h.matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assemble_order_and_standardize() {
        let a = FeatureBlock::new(FeatureSource::Degree, array![[1.0], [3.0]]);
        let c = FeatureBlock::new(FeatureSource::Hub, array![[5.0], [5.0]]);
        assert_eq!(assemble(&[&a], false).unwrap(), a.matrix);
        let x = assemble(&[&a, &c], false).unwrap();
        assert_eq!(x, array![[1.0, 5.0], [3.0, 5.0]]);
        let z = assemble(&[&a, &c], true).unwrap();
        assert_eq!(z.column(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(z.column(0).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn block_names_round_trip() {
        for s in FeatureSource::ALL {
            assert_eq!(FeatureSource::from_name(s.name()).unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!(FeatureSource::from_name("bogus").is_err());
    }
}
