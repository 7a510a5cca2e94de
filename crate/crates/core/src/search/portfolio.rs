use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trial::TrialConfig;
use crate::features::{FeatureSource, ONE_HOT_CAP};
use crate::graph::{compute_stats, DatasetBundle};
use crate::zoo::{LayerKind, ModelSpec};

/// Average degree above which a graph counts as dense.
pub const DENSE_AVG_DEGREE: f64 = 50.0;

/// Raw feature width up to which neighbour feature means are offered.
pub const NEIGH_FEAT_MAX_DIM: usize = 256;

pub const DEFAULT_WEIGHT_DECAY: f64 = 5e-4;
pub const DEFAULT_MAX_EPOCHS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatures {
    pub n_nodes: f64,
    pub n_edges: f64,
    pub avg_degree: f64,
    pub n_features: f64,
    pub n_classes: f64,
    pub skewness: f64,
    pub directed: bool,
    pub weighted: bool,
    pub featureless: bool,
}

pub fn extract_meta_features(bundle: &DatasetBundle) -> MetaFeatures {
    let s = compute_stats(bundle);
    MetaFeatures {
        n_nodes: s.n_nodes as f64,
        n_edges: s.n_edges as f64,
        avg_degree: s.avg_degree,
        n_features: s.n_features as f64,
        n_classes: s.n_classes as f64,
        skewness: s.skewness,
        directed: s.directed,
        weighted: s.weighted,
        featureless: bundle.is_featureless(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphClass {
    Featureless,
    DenseDirected,
    SparseAttributed,
}

impl GraphClass {
    /// 1-based class number.
    pub fn number(self) -> u8 {
        match self {
            GraphClass::Featureless => 1,
            GraphClass::DenseDirected => 2,
            GraphClass::SparseAttributed => 3,
        }
    }
}

pub fn classify(meta: &MetaFeatures) -> GraphClass {
    if meta.featureless {
        GraphClass::Featureless
    } else if meta.avg_degree > DENSE_AVG_DEGREE || meta.directed {
        GraphClass::DenseDirected
    } else {
        GraphClass::SparseAttributed
    }
}

/// Feature blocks of one trial. With `late_labels`, label-distribution
/// blocks skip the GNN and join right before the output MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    #[serde(rename = "feature_blocks")]
    pub blocks: Vec<FeatureSource>,
    #[serde(default, rename = "late_label_features")]
    pub late_labels: bool,
}

impl FeatureSet {
    fn new(blocks: &[FeatureSource], late_labels: bool) -> Self {
        FeatureSet { blocks: blocks.to_vec(), late_labels }
    }
}

/// Sizes the feature blocks take on a given dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDims {
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
}

impl FeatureDims {
    pub fn of(bundle: &DatasetBundle) -> Self {
        FeatureDims {
            n_nodes: bundle.n_nodes(),
            n_features: bundle.features.as_ref().map_or(0, |x| x.ncols()),
            n_classes: bundle.n_classes,
        }
    }

    pub fn width(&self, source: FeatureSource) -> usize {
        match source {
            FeatureSource::Raw | FeatureSource::NeighFeat1hop | FeatureSource::NeighFeat2hop => {
                self.n_features
            }
            FeatureSource::OneHot if self.n_nodes <= ONE_HOT_CAP => self.n_nodes,
            FeatureSource::OneHot | FeatureSource::Degree => 3,
            FeatureSource::NeighLabel1hop | FeatureSource::NeighLabel2hop => self.n_classes,
            FeatureSource::Hub => 1,
        }
    }

    /// (input width, late width) of a feature set.
    pub fn split_widths(&self, set: &FeatureSet) -> (usize, usize) {
        let mut input = 0;
        let mut late = 0;
        for &b in &set.blocks {
            if set.late_labels && b.uses_labels() {
                late += self.width(b);
            } else {
                input += self.width(b);
            }
        }
        (input, late)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub graph_class: GraphClass,
    /// Symmetrize the graph before any layer sees it.
    pub symmetrize: bool,
    pub feature_sets: Vec<FeatureSet>,
    pub layer_kinds: Vec<LayerKind>,
    pub include_mlp: bool,
    pub lrs: Vec<f64>,
    pub hiddens: Vec<usize>,
    pub dropouts: Vec<f64>,
    pub layer_counts: Vec<usize>,
    pub tagconv_ks: Vec<usize>,
    pub gat_heads: Vec<usize>,
    pub weight_decay: f64,
    pub max_epochs: usize,
}

pub fn select_portfolio(meta: &MetaFeatures) -> SearchSpace {
    use FeatureSource::*;
    let class = classify(meta);
    let mut space = SearchSpace {
        graph_class: class,
        symmetrize: false,
        feature_sets: vec![],
        layer_kinds: vec![],
        include_mlp: true,
        lrs: vec![0.01, 0.005],
        hiddens: vec![16, 64, 128],
        dropouts: vec![0.2, 0.5],
        layer_counts: vec![2, 3],
        tagconv_ks: vec![2, 3],
        gat_heads: vec![1, 4],
        weight_decay: DEFAULT_WEIGHT_DECAY,
        max_epochs: DEFAULT_MAX_EPOCHS,
    };
    match class {
        GraphClass::Featureless => {
            space.feature_sets = vec![
                FeatureSet::new(&[OneHot], false),
                FeatureSet::new(&[OneHot, NeighLabel1hop, NeighLabel2hop], true),
                FeatureSet::new(&[Degree, Hub, NeighLabel1hop, NeighLabel2hop], false),
            ];
            space.layer_kinds = vec![LayerKind::Gcn, LayerKind::Tagconv];
        }
        GraphClass::DenseDirected => {
            space.symmetrize = true;
            space.feature_sets = vec![
                FeatureSet::new(&[Raw], false),
                FeatureSet::new(&[Raw, Degree], false),
            ];
            space.layer_kinds = vec![LayerKind::SageMean, LayerKind::Gat];
            space.dropouts = vec![0.5, 0.6];
        }
        GraphClass::SparseAttributed => {
            space.feature_sets = vec![FeatureSet::new(&[Raw], false)];
            if meta.n_features as usize <= NEIGH_FEAT_MAX_DIM {
                space
                    .feature_sets
                    .push(FeatureSet::new(&[Raw, NeighFeat1hop, NeighFeat2hop], false));
            }
            space.feature_sets.push(FeatureSet::new(
                &[Raw, Degree, NeighLabel1hop, NeighLabel2hop],
                true,
            ));
            space.layer_kinds = LayerKind::ALL.to_vec();
        }
    }
    space
}

/// Features the baseline and MLP configs read.
pub fn base_features(dims: &FeatureDims) -> FeatureSet {
    if dims.n_features > 0 {
        FeatureSet::new(&[FeatureSource::Raw], false)
    } else {
        FeatureSet::new(&[FeatureSource::OneHot], false)
    }
}

/// Two-layer bias-free GCN, hidden 16, dropout 0.5, lr 0.01.
pub fn baseline_config(dims: &FeatureDims, max_epochs: usize, seed: u64) -> TrialConfig {
    let features = base_features(dims);
    let (d, _) = dims.split_widths(&features);
    TrialConfig {
        model: ModelSpec::gcn(d, 16, dims.n_classes, 2, 0.5, false),
        features,
        lr: 0.01,
        weight_decay: DEFAULT_WEIGHT_DECAY,
        dropout_p: 0.5,
        max_epochs,
        seed,
    }
}

impl SearchSpace {
    /// A space holding just the baseline configuration.
    pub fn singleton_baseline() -> Self {
        SearchSpace {
            graph_class: GraphClass::SparseAttributed,
            symmetrize: false,
            feature_sets: vec![],
            layer_kinds: vec![],
            include_mlp: false,
            lrs: vec![],
            hiddens: vec![],
            dropouts: vec![],
            layer_counts: vec![],
            tagconv_ks: vec![],
            gat_heads: vec![],
            weight_decay: DEFAULT_WEIGHT_DECAY,
            max_epochs: DEFAULT_MAX_EPOCHS,
        }
    }

    /// Every configuration of the space: the baseline first, then the grid
    /// in a seeded shuffled order. Trial seeds follow list position.
    pub fn configs(&self, dims: &FeatureDims, seed: u64) -> Vec<TrialConfig> {
        let mut grid = Vec::new();
        let c = dims.n_classes;
        for set in &self.feature_sets {
            let (d, late) = dims.split_widths(set);
            for &lr in &self.lrs {
                for &hidden in &self.hiddens {
                    for &dropout in &self.dropouts {
                        let mut models = Vec::new();
                        if self.include_mlp {
                            models.push(ModelSpec::mlp(d, hidden, c, dropout));
                        }
                        for &kind in &self.layer_kinds {
                            for &layers in &self.layer_counts {
                                let base = ModelSpec::stack(kind, d, hidden, c, layers, dropout);
                                match kind {
                                    LayerKind::Tagconv => {
                                        models.extend(self.tagconv_ks.iter().map(|&k| {
                                            let mut m = base.clone();
                                            m.gnn_layers.iter_mut().for_each(|l| l.k = k);
                                            m
                                        }))
                                    }
                                    LayerKind::Gat => {
                                        models.extend(self.gat_heads.iter().map(|&h| {
                                            let mut m = base.clone();
                                            m.gnn_layers.iter_mut().for_each(|l| l.heads = h);
                                            m
                                        }))
                                    }
                                    _ => models.push(base),
                                }
                            }
                        }
                        for model in models {
                            grid.push(TrialConfig {
                                model: model.with_late_features(late),
                                features: set.clone(),
                                lr,
                                weight_decay: self.weight_decay,
                                dropout_p: dropout,
                                max_epochs: self.max_epochs,
                                seed: 0,
                            });
                        }
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        grid.shuffle(&mut rng);
        let mut out = vec![baseline_config(dims, self.max_epochs, 0)];
        out.extend(grid);
        for (i, cfg) in out.iter_mut().enumerate() {
            cfg.seed = seed.wrapping_add(i as u64);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(featureless: bool, directed: bool, avg_degree: f64) -> MetaFeatures {
        MetaFeatures {
            n_nodes: 100.0,
            n_edges: 200.0,
            avg_degree,
            n_features: if featureless { 0.0 } else { 20.0 },
            n_classes: 3.0,
            skewness: 1.0,
            directed,
            weighted: false,
            featureless,
        }
    }

    #[test]
    fn three_classes() {
        assert_eq!(classify(&meta(true, true, 300.0)), GraphClass::Featureless);
        assert_eq!(classify(&meta(false, true, 291.7)), GraphClass::DenseDirected);
        assert_eq!(classify(&meta(false, false, 51.0)), GraphClass::DenseDirected);
        assert_eq!(classify(&meta(false, false, 1.9)), GraphClass::SparseAttributed);
    }

    #[test]
    fn configs_start_with_baseline_and_are_seeded() {
        let space = select_portfolio(&meta(false, false, 4.0));
        let dims = FeatureDims { n_nodes: 100, n_features: 20, n_classes: 3 };
        let a = space.configs(&dims, 5);
        let b = space.configs(&dims, 5);
        assert_eq!(a, b);
        assert_eq!(a[0].model, ModelSpec::gcn(20, 16, 3, 2, 0.5, false));
        for cfg in &a {
            cfg.validate(&dims).unwrap();
        }
        assert!(a.iter().any(|c| c.model.is_mlp_only()));
        let c = space.configs(&dims, 6);
        assert_ne!(a[1..], c[1..]);
    }

    #[test]
    fn featureless_configs_validate() {
        let space = select_portfolio(&meta(true, false, 4.0));
        let dims = FeatureDims { n_nodes: 50, n_features: 0, n_classes: 4 };
        for cfg in space.configs(&dims, 1) {
            cfg.validate(&dims).unwrap();
        }
    }
}
