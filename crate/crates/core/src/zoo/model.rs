use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{self, GatHead};
use super::spec::{Activation, LayerKind, ModelSpec, ELU_ALPHA, LEAKY_SLOPE};
use crate::autodiff::{ComputeGraph, Matrix, ParamId, ParamStore, Var};
use crate::error::{ensure, Result};
use crate::graph::{CsrMatrix, NormMode, SparseGraph};
use crate::topo::{FinalFusion, Fusion};

/// GAT attention-score slope.
pub const GAT_SLOPE: f64 = 0.2;

/// Fraction of nonzeros below which input features are fed through the
/// sparse product.
const SPARSE_INPUT_DENSITY: f64 = 0.25;

/// The graph operators a model may need, each built on first use and shared
/// across every trial on the same graph.
#[derive(Debug)]
pub struct GraphViews {
    graph: SparseGraph,
    norm: OnceLock<Arc<CsrMatrix>>,
    mean_in: OnceLock<Arc<CsrMatrix>>,
    gat: OnceLock<Arc<CsrMatrix>>,
    two_hop: OnceLock<Arc<CsrMatrix>>,
}

impl GraphViews {
    pub fn new(graph: SparseGraph) -> Self {
        GraphViews {
            graph,
            norm: OnceLock::new(),
            mean_in: OnceLock::new(),
            gat: OnceLock::new(),
            two_hop: OnceLock::new(),
        }
    }

    pub fn graph(&self) -> &SparseGraph {
        &self.graph
    }

    /// Symmetric-normalized adjacency with self-loops; directed graphs are
    /// symmetrized first.
    pub fn norm(&self) -> Arc<CsrMatrix> {
        Arc::clone(self.norm.get_or_init(|| {
            let und = self.graph.to_undirected();
            Arc::new(
                und.normalize(NormMode::Symmetric, true)
                    .expect("undirected input")
                    .to_matrix(),
            )
        }))
    }

    pub fn mean_in(&self) -> Arc<CsrMatrix> {
        Arc::clone(
            self.mean_in
                .get_or_init(|| Arc::new(self.graph.mean_in_operator())),
        )
    }

    pub fn gat(&self) -> Arc<CsrMatrix> {
        Arc::clone(
            self.gat
                .get_or_init(|| Arc::new(layers::gat_structure(&self.graph))),
        )
    }

    /// Two-hop in-neighbourhoods, excluding the node itself.
    pub fn two_hop(&self) -> Arc<CsrMatrix> {
        Arc::clone(self.two_hop.get_or_init(|| {
            Arc::new(
                self.graph
                    .transpose()
                    .k_hop_pattern(2)
                    .expect("k = 2 is supported"),
            )
        }))
    }
}

/// Per-trial node inputs: the assembled feature matrix and optional
/// features concatenated before the output MLP.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub dense: Arc<Matrix>,
    pub sparse: Option<Arc<CsrMatrix>>,
    pub late: Option<Arc<Matrix>>,
}

impl ModelInput {
    pub fn new(x: Matrix, late: Option<Matrix>) -> Self {
        let nnz = x.iter().filter(|&&v| v != 0.0).count();
        let sparse = (x.len() > 0 && (nnz as f64) < SPARSE_INPUT_DENSITY * x.len() as f64)
            .then(|| {
                let x = x.as_standard_layout();
                Arc::new(CsrMatrix::from_dense(
                    x.nrows(),
                    x.ncols(),
                    x.as_slice().expect("standard layout"),
                ))
            });
        ModelInput {
            dense: Arc::new(x),
            sparse,
            late: late.map(Arc::new),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.dense.nrows()
    }
}

#[derive(Debug, Clone)]
struct Linear {
    w: ParamId,
    b: Option<ParamId>,
}

#[derive(Debug, Clone)]
enum LayerParams {
    Gcn(Linear),
    Tagconv { ws: Vec<ParamId>, b: Option<ParamId> },
    Sage { w_self: ParamId, w_neigh: ParamId, b: Option<ParamId> },
    Gat { heads: Vec<[ParamId; 3]>, b: Option<ParamId>, concat: bool },
    TwoHop { u: ParamId, lin: Linear, alpha: ParamId },
}

/// A built model: its spec plus the parameters the spec implies.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    pub params: ParamStore,
    input_mlp: Vec<Linear>,
    layers: Vec<LayerParams>,
    output_mlp: Vec<Linear>,
}

fn linear(store: &mut ParamStore, rng: &mut impl Rng, d_in: usize, d_out: usize, bias: bool) -> Linear {
    Linear {
        w: store.add_glorot(d_in, d_out, rng),
        b: bias.then(|| store.add_zeros(1, d_out)),
    }
}

/// Instantiates parameters for `spec` with Glorot weights and zero biases.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let input_mlp = spec
        .input_mlp_dims
        .windows(2)
        .map(|w| linear(&mut store, &mut rng, w[0], w[1], true))
        .collect();
    let last = spec.gnn_layers.len().saturating_sub(1);
    let mut layers = Vec::with_capacity(spec.gnn_layers.len());
    for (i, l) in spec.gnn_layers.iter().enumerate() {
        let (d_in, d_out) = (l.in_dim, l.out_dim);
        layers.push(match l.kind {
            LayerKind::Gcn => LayerParams::Gcn(linear(&mut store, &mut rng, d_in, d_out, l.bias)),
            LayerKind::Tagconv => LayerParams::Tagconv {
                ws: (0..=l.k)
                    .map(|_| store.add_glorot(d_in, d_out, &mut rng))
                    .collect(),
                b: l.bias.then(|| store.add_zeros(1, d_out)),
            },
            LayerKind::SageMean => LayerParams::Sage {
                w_self: store.add_glorot(d_in, d_out, &mut rng),
                w_neigh: store.add_glorot(d_in, d_out, &mut rng),
                b: l.bias.then(|| store.add_zeros(1, d_out)),
            },
            LayerKind::Gat => {
                let concat = i != last || spec.topology.is_some();
                let per_head = if concat { d_out / l.heads } else { d_out };
                let heads = (0..l.heads)
                    .map(|_| {
                        [
                            store.add_glorot(d_in, per_head, &mut rng),
                            store.add_glorot(per_head, 1, &mut rng),
                            store.add_glorot(per_head, 1, &mut rng),
                        ]
                    })
                    .collect();
                LayerParams::Gat {
                    heads,
                    b: l.bias.then(|| store.add_zeros(1, d_out)),
                    concat,
                }
            }
            LayerKind::TwoHopLinear => {
                let u = store.add_zeros(d_in, 1);
                let lin = linear(&mut store, &mut rng, d_in, d_out, l.bias);
                let alpha = store.add(Matrix::from_elem((1, 1), l.alpha));
                store.set_requires_grad(alpha, l.alpha_learnable);
                LayerParams::TwoHop { u, lin, alpha }
            }
        });
    }
    let output_mlp = spec
        .output_mlp_dims
        .windows(2)
        .map(|w| linear(&mut store, &mut rng, w[0], w[1], true))
        .collect();
    Ok(Model {
        spec: spec.clone(),
        params: store,
        input_mlp,
        layers,
        output_mlp,
    })
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Number of trainable scalars: weights, biases, attention vectors and
    /// learnable mixing scalars.
    pub fn count_params(&self) -> usize {
        self.params
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t.values.len())
            .sum()
    }

    fn activate(&self, g: &mut ComputeGraph, x: Var) -> Var {
        match self.spec.activation {
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu => g.leaky_relu(x, LEAKY_SLOPE),
            Activation::Elu => g.elu(x, ELU_ALPHA),
        }
    }

    fn apply_linear(&self, g: &mut ComputeGraph, x: Var, lin: &Linear) -> Result<Var> {
        let w = g.param(&self.params, lin.w);
        let out = g.matmul(x, w)?;
        match lin.b {
            Some(b) => {
                let b = g.param(&self.params, b);
                g.add_row(out, b)
            }
            None => Ok(out),
        }
    }

    fn hidden(
        &self,
        g: &mut ComputeGraph,
        x: Var,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let x = self.activate(g, x);
        g.dropout(x, self.spec.dropout_p, training, rng)
    }

    /// Runs the full pipeline and returns the recorded graph and the N x C
    /// logits node.
    pub fn forward(
        &self,
        views: &GraphViews,
        input: &ModelInput,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(ComputeGraph, Var)> {
        let mut g = ComputeGraph::new();
        let n = views.graph().n_nodes();
        ensure!(input.n_rows() == n, "input has {} rows for {n} nodes", input.n_rows());
        if let Some(d) = self.spec.input_dim() {
            ensure!(
                input.dense.ncols() == d,
                "model expects {d} input features, got {}",
                input.dense.ncols()
            );
        }
        let mut first_gnn = 0;
        let mut h: Var;
        if let Some((first, rest)) = self.input_mlp.split_first() {
            h = match &input.sparse {
                Some(xs) => {
                    let w = g.param(&self.params, first.w);
                    let out = g.spmm(xs, w)?;
                    match first.b {
                        Some(b) => {
                            let b = g.param(&self.params, b);
                            g.add_row(out, b)?
                        }
                        None => out,
                    }
                }
                None => {
                    let x = g.input((*input.dense).clone(), false);
                    self.apply_linear(&mut g, x, first)?
                }
            };
            h = self.hidden(&mut g, h, training, rng)?;
            for lin in rest {
                h = self.apply_linear(&mut g, h, lin)?;
                h = self.hidden(&mut g, h, training, rng)?;
            }
        } else if let (Some(LayerParams::Gcn(lin)), Some(xs), None) =
            (self.layers.first(), &input.sparse, &self.spec.topology)
        {
            let w = g.param(&self.params, lin.w);
            let b = lin.b.map(|b| g.param(&self.params, b));
            h = layers::gcn_layer_sparse_input(&mut g, &views.norm(), xs, w, b)?;
            if self.layers.len() > 1 || !self.output_mlp.is_empty() {
                h = self.hidden(&mut g, h, training, rng)?;
            }
            first_gnn = 1;
        } else {
            h = g.input((*input.dense).clone(), false);
        }

        if let Some(topo) = &self.spec.topology {
            let mut outs = vec![h];
            for (k, layer) in self.layers.iter().enumerate() {
                let parts: Vec<Var> = topo.inputs[k].iter().map(|&s| outs[s]).collect();
                let fused = fuse(&mut g, &parts, topo.layer_fusion[k])?;
                let z = self.layer_forward(&mut g, views, layer, fused)?;
                outs.push(self.hidden(&mut g, z, training, rng)?);
            }
            let parts: Vec<Var> = topo.final_inputs.iter().map(|&s| outs[s]).collect();
            h = match topo.final_fusion {
                FinalFusion::Concat => g.concat(&parts)?,
                FinalFusion::Sum => fuse(&mut g, &parts, Fusion::Sum)?,
                FinalFusion::Mean => fuse(&mut g, &parts, Fusion::Mean)?,
                FinalFusion::Max => fuse(&mut g, &parts, Fusion::Max)?,
            };
        } else {
            let last = self.layers.len().saturating_sub(1);
            for (i, layer) in self.layers.iter().enumerate().skip(first_gnn) {
                h = self.layer_forward(&mut g, views, layer, h)?;
                if i != last || !self.output_mlp.is_empty() {
                    h = self.hidden(&mut g, h, training, rng)?;
                }
            }
        }

        if let Some(late) = &input.late {
            let late = g.input((**late).clone(), false);
            h = g.concat(&[h, late])?;
        }
        let last = self.output_mlp.len().saturating_sub(1);
        for (i, lin) in self.output_mlp.iter().enumerate() {
            h = self.apply_linear(&mut g, h, lin)?;
            if i != last {
                h = self.hidden(&mut g, h, training, rng)?;
            }
        }
        Ok((g, h))
    }

    fn layer_forward(
        &self,
        g: &mut ComputeGraph,
        views: &GraphViews,
        layer: &LayerParams,
        h: Var,
    ) -> Result<Var> {
        let p = &self.params;
        match layer {
            LayerParams::Gcn(lin) => {
                let w = g.param(p, lin.w);
                let b = lin.b.map(|b| g.param(p, b));
                layers::gcn_layer(g, &views.norm(), h, w, b)
            }
            LayerParams::Tagconv { ws, b } => {
                let ws: Vec<Var> = ws.iter().map(|&w| g.param(p, w)).collect();
                let b = b.map(|b| g.param(p, b));
                layers::tagconv_layer(g, &views.norm(), h, &ws, b)
            }
            LayerParams::Sage { w_self, w_neigh, b } => {
                let ws = g.param(p, *w_self);
                let wn = g.param(p, *w_neigh);
                let b = b.map(|b| g.param(p, b));
                layers::sage_mean_layer(g, &views.mean_in(), h, ws, wn, b)
            }
            LayerParams::Gat { heads, b, concat } => {
                let heads: Vec<GatHead> = heads
                    .iter()
                    .map(|[w, a_src, a_dst]| GatHead {
                        w: g.param(p, *w),
                        a_src: g.param(p, *a_src),
                        a_dst: g.param(p, *a_dst),
                    })
                    .collect();
                let b = b.map(|b| g.param(p, b));
                layers::gat_layer(g, &views.gat(), h, &heads, GAT_SLOPE, *concat, b)
            }
            LayerParams::TwoHop { u, lin, alpha } => {
                let u = g.param(p, *u);
                let w = g.param(p, lin.w);
                let b = lin.b.map(|b| g.param(p, b));
                let alpha = g.param(p, *alpha);
                layers::two_hop_linear_layer(g, &views.two_hop(), h, u, w, b, alpha)
            }
        }
    }
}

fn fuse(g: &mut ComputeGraph, parts: &[Var], fusion: Fusion) -> Result<Var> {
    match fusion {
        Fusion::Sum => g.sum(parts),
        Fusion::Mean => g.mean(parts),
        Fusion::Max => g.max(parts),
    }
}

/// Number of trainable scalars of a built model.
pub fn count_params(model: &Model) -> usize {
    model.count_params()
}
