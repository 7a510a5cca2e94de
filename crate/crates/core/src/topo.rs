//! Search over the inter-layer wiring of a GCN stack.
//!
//! A topology decides, for each layer, which earlier outputs feed it and
//! how they are fused, and which layer outputs reach the classifier. The
//! aggregation operator itself stays fixed to GCN.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::graph::DatasetBundle;
use crate::search::{
    base_features, search, split_validation, FeatureDims, SearchOptions, TimeBudget, TrialConfig,
    TrialContext, TrialResult, DEFAULT_MAX_EPOCHS, DEFAULT_WEIGHT_DECAY,
};
use crate::zoo::{Activation, LayerKind, LayerSpec, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Sum,
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalFusion {
    Sum,
    Mean,
    Max,
    Concat,
}

const LAYER_FUSIONS: [Fusion; 3] = [Fusion::Sum, Fusion::Mean, Fusion::Max];
const FINAL_FUSIONS: [FinalFusion; 4] = [
    FinalFusion::Sum,
    FinalFusion::Mean,
    FinalFusion::Max,
    FinalFusion::Concat,
];

/// Wiring of an `n_layers` stack.
///
/// Output index `0` is the source (the projected input features) and index
/// `k` is the output of layer `k`. `inputs[k - 1]` lists the outputs layer
/// `k` reads, ascending; `final_inputs` lists the layer outputs (`>= 1`)
/// fused for the classifier. A layer fusion only matters when a layer has
/// more than one input; single-input layers carry `sum`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologySpec {
    pub n_layers: usize,
    pub inputs: Vec<Vec<usize>>,
    pub layer_fusion: Vec<Fusion>,
    pub final_inputs: Vec<usize>,
    pub final_fusion: FinalFusion,
}

impl TopologySpec {
    pub fn validate(&self) -> Result<()> {
        let l = self.n_layers;
        ensure!(l >= 1, "topology needs at least one layer");
        ensure!(self.inputs.len() == l, "inputs has {} entries for {l} layers", self.inputs.len());
        ensure!(self.layer_fusion.len() == l, "layer_fusion length");
        for (k, inp) in self.inputs.iter().enumerate() {
            ensure!(!inp.is_empty(), "layer {} has no inputs", k + 1);
            ensure!(
                inp.windows(2).all(|w| w[0] < w[1]),
                "layer {} inputs not strictly increasing",
                k + 1
            );
            ensure!(
                inp.iter().all(|&s| s <= k),
                "layer {} reads an output that does not exist yet",
                k + 1
            );
        }
        ensure!(!self.final_inputs.is_empty(), "final fusion has no inputs");
        ensure!(
            self.final_inputs.windows(2).all(|w| w[0] < w[1]),
            "final inputs not strictly increasing"
        );
        ensure!(
            self.final_inputs.iter().all(|&s| (1..=l).contains(&s)),
            "final inputs must be layer outputs 1..={l}"
        );
        Ok(())
    }

    /// True when the source reaches the final fusion through the wiring.
    pub fn reaches_from_source(&self) -> bool {
        let mut reached = vec![false; self.n_layers + 1];
        reached[0] = true;
        for (k, inp) in self.inputs.iter().enumerate() {
            reached[k + 1] = inp.iter().any(|&s| reached[s]);
        }
        self.final_inputs.iter().any(|&s| reached[s])
    }
}

/// The sequential chain `source -> 1 -> ... -> L -> final`, all fusions sum.
pub fn plain_stack(n_layers: usize) -> TopologySpec {
    TopologySpec {
        n_layers,
        inputs: (0..n_layers).map(|k| vec![k]).collect(),
        layer_fusion: vec![Fusion::Sum; n_layers],
        final_inputs: vec![n_layers],
        final_fusion: FinalFusion::Sum,
    }
}

fn subset(mask: u64) -> Vec<usize> {
    (0..64).filter(|b| mask & (1 << b) != 0).collect()
}

/// Choices for layer `k` (1-based): every nonempty subset of `{0..k-1}`,
/// crossed with the fusions when the subset has more than one element.
fn layer_choices(k: usize) -> Vec<(Vec<usize>, Fusion)> {
    let mut out = Vec::new();
    for mask in 1u64..(1 << k) {
        let s = subset(mask);
        if s.len() == 1 {
            out.push((s, Fusion::Sum));
        } else {
            out.extend(LAYER_FUSIONS.iter().map(|&f| (s.clone(), f)));
        }
    }
    out
}

fn final_choices(n_layers: usize) -> Vec<(Vec<usize>, FinalFusion)> {
    let mut out = Vec::new();
    for mask in 1u64..(1 << n_layers) {
        let s: Vec<usize> = subset(mask).into_iter().map(|b| b + 1).collect();
        out.extend(FINAL_FUSIONS.iter().map(|&f| (s.clone(), f)));
    }
    out
}

/// Number of valid topologies with `n_layers` layers.
pub fn count_topologies(n_layers: usize) -> u128 {
    let layers: u128 = (1..=n_layers).map(|k| layer_choices(k).len() as u128).product();
    layers * final_choices(n_layers).len() as u128
}

struct Space {
    layers: Vec<Vec<(Vec<usize>, Fusion)>>,
    finals: Vec<(Vec<usize>, FinalFusion)>,
}

impl Space {
    fn new(n_layers: usize) -> Self {
        Space {
            layers: (1..=n_layers).map(layer_choices).collect(),
            finals: final_choices(n_layers),
        }
    }

    fn total(&self) -> usize {
        self.layers.iter().map(Vec::len).product::<usize>() * self.finals.len()
    }

    /// Mixed-radix decode; the last layer varies fastest, the final fusion
    /// slowest.
    fn decode(&self, mut idx: usize) -> TopologySpec {
        let n = self.layers.len();
        let mut inputs = vec![Vec::new(); n];
        let mut fusion = vec![Fusion::Sum; n];
        for k in (0..n).rev() {
            let radix = self.layers[k].len();
            let (s, f) = &self.layers[k][idx % radix];
            inputs[k] = s.clone();
            fusion[k] = *f;
            idx /= radix;
        }
        let (fi, ff) = &self.finals[idx];
        TopologySpec {
            n_layers: n,
            inputs,
            layer_fusion: fusion,
            final_inputs: fi.clone(),
            final_fusion: *ff,
        }
    }
}

/// Every valid topology of `n_layers` layers in a fixed order, with
/// `plain_stack(n_layers)` first. When more than `cap` exist, `cap - 1`
/// others are drawn uniformly without replacement (seeded) and kept in
/// enumeration order.
pub fn enumerate_topologies(n_layers: usize, cap: usize, seed: u64) -> Result<Vec<TopologySpec>> {
    ensure!((1..=4).contains(&n_layers), "exhaustive enumeration supports 1..=4 layers");
    ensure!(cap >= 1, "cap must be at least 1");
    let space = Space::new(n_layers);
    let plain = plain_stack(n_layers);
    let others = (0..space.total())
        .map(|i| space.decode(i))
        .filter(|t| *t != plain);
    let mut out = vec![plain.clone()];
    let total_others = space.total() - 1;
    if total_others < cap {
        out.extend(others);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, total_others, cap - 1).into_vec();
        picked.sort_unstable();
        let all: Vec<TopologySpec> = others.collect();
        out.extend(picked.into_iter().map(|i| all[i].clone()));
    }
    Ok(out)
}

/// `count` distinct random topologies (plain stack first), for stacks too
/// deep to enumerate.
pub fn sample_topologies(n_layers: usize, count: usize, seed: u64) -> Vec<TopologySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plain = plain_stack(n_layers);
    let mut seen: HashSet<TopologySpec> = HashSet::from([plain.clone()]);
    let mut out = vec![plain];
    let mut attempts = 0;
    while out.len() < count && attempts < count * 50 {
        attempts += 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut fusion = Vec::with_capacity(n_layers);
        for k in 1..=n_layers {
            let mask = rng.random_range(1u64..(1 << k.min(63)));
            let s = subset(mask);
            fusion.push(if s.len() > 1 {
                LAYER_FUSIONS[rng.random_range(0..3)]
            } else {
                Fusion::Sum
            });
            inputs.push(s);
        }
        let mask = rng.random_range(1u64..(1 << n_layers.min(63)));
        let t = TopologySpec {
            n_layers,
            inputs,
            layer_fusion: fusion,
            final_inputs: subset(mask).into_iter().map(|b| b + 1).collect(),
            final_fusion: FINAL_FUSIONS[rng.random_range(0..4)],
        };
        if seen.insert(t.clone()) {
            out.push(t);
        }
    }
    out
}

/// `[d -> hidden]` input MLP, the wired GCN layers, `[fused -> C]` output.
pub fn topology_model(
    in_dim: usize,
    hidden: usize,
    n_classes: usize,
    topology: &TopologySpec,
    dropout_p: f64,
) -> ModelSpec {
    let fused = match topology.final_fusion {
        FinalFusion::Concat => hidden * topology.final_inputs.len(),
        _ => hidden,
    };
    ModelSpec {
        input_mlp_dims: vec![in_dim, hidden],
        gnn_layers: (0..topology.n_layers)
            .map(|_| LayerSpec::new(LayerKind::Gcn, hidden, hidden))
            .collect(),
        output_mlp_dims: vec![fused, n_classes],
        dropout_p,
        activation: Activation::Relu,
        topology: Some(topology.clone()),
        late_feature_dim: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopoStrategy {
    Exhaustive { n_layers: usize, cap: usize },
    Random { n_layers: usize, count: usize },
}

impl TopoStrategy {
    pub fn candidates(self, seed: u64) -> Result<Vec<TopologySpec>> {
        match self {
            TopoStrategy::Exhaustive { n_layers, cap } => enumerate_topologies(n_layers, cap, seed),
            TopoStrategy::Random { n_layers, count } => {
                ensure!(n_layers >= 1, "topology needs at least one layer");
                Ok(sample_topologies(n_layers, count, seed))
            }
        }
    }
}

/// Default candidate cap for exhaustive enumeration.
pub const DEFAULT_TOPOLOGY_CAP: usize = 500;

#[derive(Debug, Clone)]
pub struct TopoSearchOutcome {
    pub best: TopologySpec,
    pub result: TrialResult,
    /// Every evaluated candidate, best validation accuracy first.
    pub evaluated: Vec<TrialResult>,
}

/// Trial configuration evaluating one topology with fixed defaults.
pub fn topology_config(dims: &FeatureDims, topology: &TopologySpec, hidden: usize, seed: u64) -> TrialConfig {
    let features = base_features(dims);
    let (d, _) = dims.split_widths(&features);
    TrialConfig {
        model: topology_model(d, hidden, dims.n_classes, topology, 0.5),
        features,
        lr: 0.01,
        weight_decay: DEFAULT_WEIGHT_DECAY,
        dropout_p: 0.5,
        max_epochs: DEFAULT_MAX_EPOCHS,
        seed,
    }
}

/// Trains every candidate topology (plain stack first) as a GCN trial and
/// keeps the one with the best validation accuracy; ties go to the lower
/// validation loss, then the earlier candidate. All candidates share one
/// trial seed.
pub fn topo_search(
    bundle: &DatasetBundle,
    budget: &TimeBudget,
    strategy: TopoStrategy,
    hidden: usize,
    opts: &SearchOptions,
) -> Result<TopoSearchOutcome> {
    bundle.validate()?;
    let masks = split_validation(bundle, opts.val_fraction, opts.seed)?;
    let ctx = TrialContext::new(bundle, masks, false)?;
    let configs: Vec<TrialConfig> = strategy
        .candidates(opts.seed)?
        .iter()
        .map(|t| topology_config(&ctx.dims, t, hidden, opts.seed))
        .collect();
    let evaluated = search(&configs, &ctx, budget, opts);
    let result = evaluated
        .first()
        .cloned()
        .ok_or_else(|| Error::Budget("no topology evaluated within the budget".into()))?;
    if result.budget_cut && evaluated.len() == 1 {
        log::warn!("budget ran out while training the plain stack");
    }
    let best = result.config.model.topology.clone().expect("topology trial");
    Ok(TopoSearchOutcome {
        best,
        result,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_stack_shapes() {
        let t = plain_stack(2);
        assert_eq!(t.inputs, vec![vec![0], vec![1]]);
        assert_eq!(t.final_inputs, vec![2]);
        t.validate().unwrap();
        assert!(t.reaches_from_source());
    }

    #[test]
    fn one_layer_has_four_topologies() {
        let all = enumerate_topologies(1, 500, 0).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0], plain_stack(1));
    }

    #[test]
    fn counts_by_depth() {
        assert_eq!(count_topologies(1), 4);
        assert_eq!(count_topologies(2), 5 * 3 * 4);
        assert_eq!(count_topologies(4), 5 * 15 * 37 * 60);
    }

    #[test]
    fn capped_enumeration_is_deterministic() {
        let a = enumerate_topologies(4, 50, 9).unwrap();
        let b = enumerate_topologies(4, 50, 9).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        assert_eq!(a[0], plain_stack(4));
        let unique: HashSet<_> = a.iter().collect();
        assert_eq!(unique.len(), 50);
    }

    #[test]
    fn sampled_topologies_are_valid() {
        for t in sample_topologies(6, 20, 3) {
            t.validate().unwrap();
            assert!(t.reaches_from_source());
        }
    }

    #[test]
    fn invalid_wiring_rejected() {
        let mut t = plain_stack(2);
        t.inputs[0] = vec![1];
        assert!(t.validate().is_err());
        let mut t = plain_stack(2);
        t.final_inputs = vec![0];
        assert!(t.validate().is_err());
    }
}
