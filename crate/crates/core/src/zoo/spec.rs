use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::topo::{FinalFusion, TopologySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Gcn,
    Tagconv,
    SageMean,
    Gat,
    TwoHopLinear,
}

impl LayerKind {
    pub const ALL: [LayerKind; 5] = [
        LayerKind::Gcn,
        LayerKind::Tagconv,
        LayerKind::SageMean,
        LayerKind::Gat,
        LayerKind::TwoHopLinear,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Elu,
}

pub const LEAKY_SLOPE: f64 = 0.2;
pub const ELU_ALPHA: f64 = 1.0;

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// One message-passing layer.
///
/// `k` is the TAGConv radius, `heads` the GAT head count, `alpha` the
/// initial self-path weight of the two-hop layer. For GAT in a hidden
/// position `out_dim` is the concatenated width (`heads` must divide it);
/// as the last GNN layer the heads are averaged and each head is `out_dim`
/// wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(rename = "K", default)]
    pub k: usize,
    #[serde(default = "one")]
    pub heads: usize,
    #[serde(default = "one_f")]
    pub alpha: f64,
    #[serde(default = "yes")]
    pub alpha_learnable: bool,
    #[serde(default = "yes")]
    pub bias: bool,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_dim: usize, out_dim: usize) -> Self {
        LayerSpec {
            kind,
            in_dim,
            out_dim,
            k: if kind == LayerKind::Tagconv { 2 } else { 0 },
            heads: 1,
            alpha: 1.0,
            alpha_learnable: true,
            bias: true,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }
}

/// Declarative pipeline: input MLP, GNN stack, output MLP.
///
/// MLP dim lists include their input width, so `[d, h]` is a single
/// `d -> h` linear map and an empty list means no MLP. Extra per-node
/// features (`late_feature_dim` columns) are concatenated right before the
/// output MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_mlp_dims: Vec<usize>,
    pub gnn_layers: Vec<LayerSpec>,
    pub output_mlp_dims: Vec<usize>,
    pub dropout_p: f64,
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub late_feature_dim: usize,
}

impl ModelSpec {
    /// Width of the features the model consumes.
    pub fn input_dim(&self) -> Option<usize> {
        self.input_mlp_dims
            .first()
            .copied()
            .or_else(|| self.gnn_layers.first().map(|l| l.in_dim))
            .or_else(|| self.output_mlp_dims.first().map(|&d| d - self.late_feature_dim))
    }

    pub fn is_mlp_only(&self) -> bool {
        self.gnn_layers.is_empty()
    }

    /// Width of the logits.
    pub fn output_dim(&self) -> Option<usize> {
        self.output_mlp_dims
            .last()
            .copied()
            .or_else(|| self.gnn_layers.last().map(|l| l.out_dim))
            .or_else(|| self.input_mlp_dims.last().copied())
    }

    pub fn validate(&self) -> Result<()> {
        ensure!((0.0..1.0).contains(&self.dropout_p), "dropout_p {} not in [0, 1)", self.dropout_p);
        ensure!(self.input_mlp_dims.len() != 1, "input_mlp_dims needs at least two entries");
        ensure!(self.output_mlp_dims.len() != 1, "output_mlp_dims needs at least two entries");
        let all_dims = self
            .input_mlp_dims
            .iter()
            .chain(&self.output_mlp_dims)
            .chain(self.gnn_layers.iter().flat_map(|l| [&l.in_dim, &l.out_dim]));
        for &d in all_dims {
            ensure!(d >= 1, "dimensions must be >= 1");
        }

        let mut width = self.input_mlp_dims.last().copied();
        if let Some(topo) = &self.topology {
            topo.validate()?;
            ensure!(
                self.gnn_layers.len() == topo.n_layers,
                "topology has {} layers, spec lists {}",
                topo.n_layers,
                self.gnn_layers.len()
            );
            let hidden = self.gnn_layers[0].in_dim;
            for l in &self.gnn_layers {
                ensure!(
                    l.kind == LayerKind::Gcn && l.in_dim == hidden && l.out_dim == hidden,
                    "topology layers must be {hidden}->{hidden} gcn layers"
                );
            }
            if let Some(w) = width {
                ensure!(w == hidden, "input MLP width {w} != topology width {hidden}");
            }
            width = Some(match topo.final_fusion {
                FinalFusion::Concat => hidden * topo.final_inputs.len(),
                _ => hidden,
            });
        } else {
            let last = self.gnn_layers.len().saturating_sub(1);
            for (i, l) in self.gnn_layers.iter().enumerate() {
                if let Some(w) = width {
                    ensure!(w == l.in_dim, "layer {i} expects width {}, got {w}", l.in_dim);
                }
                match l.kind {
                    LayerKind::Gat => {
                        ensure!(l.heads >= 1, "gat needs heads >= 1");
                        ensure!(
                            i == last || l.out_dim % l.heads == 0,
                            "gat out_dim {} not divisible by {} heads",
                            l.out_dim,
                            l.heads
                        );
                    }
                    LayerKind::TwoHopLinear => {
                        ensure!(l.in_dim == l.out_dim, "two_hop_linear needs in_dim == out_dim");
                    }
                    _ => {}
                }
                width = Some(l.out_dim);
            }
        }
        if self.late_feature_dim > 0 {
            ensure!(
                !self.output_mlp_dims.is_empty(),
                "late features need an output MLP"
            );
        }
        if let (Some(w), Some(&first)) = (width, self.output_mlp_dims.first()) {
            ensure!(
                first == w + self.late_feature_dim,
                "output MLP expects width {first}, got {} + {} late",
                w,
                self.late_feature_dim
            );
        }
        Ok(())
    }

    /// `[input MLP] -> gnn^layers -> [output MLP]` with all GNN layers of
    /// one kind at a common width.
    pub fn stack(
        kind: LayerKind,
        in_dim: usize,
        hidden: usize,
        n_classes: usize,
        n_layers: usize,
        dropout_p: f64,
    ) -> ModelSpec {
        ModelSpec {
            input_mlp_dims: vec![in_dim, hidden],
            gnn_layers: (0..n_layers).map(|_| LayerSpec::new(kind, hidden, hidden)).collect(),
            output_mlp_dims: vec![hidden, n_classes],
            dropout_p,
            activation: Activation::Relu,
            topology: None,
            late_feature_dim: 0,
        }
    }

    /// Plain GCN chain `in -> hidden -> ... -> n_classes` with no MLPs.
    pub fn gcn(
        in_dim: usize,
        hidden: usize,
        n_classes: usize,
        n_layers: usize,
        dropout_p: f64,
        bias: bool,
    ) -> ModelSpec {
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat_n(hidden, n_layers.saturating_sub(1)));
        dims.push(n_classes);
        let gnn_layers = dims
            .windows(2)
            .map(|w| {
                let l = LayerSpec::new(LayerKind::Gcn, w[0], w[1]);
                if bias {
                    l
                } else {
                    l.without_bias()
                }
            })
            .collect();
        ModelSpec {
            input_mlp_dims: vec![],
            gnn_layers,
            output_mlp_dims: vec![],
            dropout_p,
            activation: Activation::Relu,
            topology: None,
            late_feature_dim: 0,
        }
    }

    /// Two-layer MLP with no message passing.
    pub fn mlp(in_dim: usize, hidden: usize, n_classes: usize, dropout_p: f64) -> ModelSpec {
        ModelSpec {
            input_mlp_dims: vec![in_dim, hidden],
            gnn_layers: vec![],
            output_mlp_dims: vec![hidden, n_classes],
            dropout_p,
            activation: Activation::Relu,
            topology: None,
            late_feature_dim: 0,
        }
    }

    /// Adds `extra` late-feature columns in front of the output MLP.
    pub fn with_late_features(mut self, extra: usize) -> ModelSpec {
        if let Some(first) = self.output_mlp_dims.first_mut() {
            *first += extra;
            self.late_feature_dim += extra;
        }
        self
    }
}
