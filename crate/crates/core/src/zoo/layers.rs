//! Layer forward functions over recorded graph values.
//!
//! Each function takes the operator it needs (normalized adjacency,
//! in-neighbour mean, attention neighbourhood) as a constant sparse matrix
//! and returns the pre-activation output.

use std::sync::Arc;

use crate::autodiff::{ComputeGraph, Var};
use crate::error::{ensure, Result};
use crate::graph::CsrMatrix;

fn maybe_bias(g: &mut ComputeGraph, x: Var, b: Option<Var>) -> Result<Var> {
    match b {
        Some(b) => g.add_row(x, b),
        None => Ok(x),
    }
}

/// `Â · H · W + b`.
pub fn gcn_layer(
    g: &mut ComputeGraph,
    a_hat: &Arc<CsrMatrix>,
    h: Var,
    w: Var,
    b: Option<Var>,
) -> Result<Var> {
    let hw = g.matmul(h, w)?;
    let out = g.spmm(a_hat, hw)?;
    maybe_bias(g, out, b)
}

/// GCN layer whose input is a constant sparse matrix (e.g. raw bag-of-words
/// features): `Â · (X · W) + b`.
pub fn gcn_layer_sparse_input(
    g: &mut ComputeGraph,
    a_hat: &Arc<CsrMatrix>,
    x: &Arc<CsrMatrix>,
    w: Var,
    b: Option<Var>,
) -> Result<Var> {
    let xw = g.spmm(x, w)?;
    let out = g.spmm(a_hat, xw)?;
    maybe_bias(g, out, b)
}

/// `Σ_{k=0..K} Â^k · H · W_k + b`, with powers applied iteratively.
pub fn tagconv_layer(
    g: &mut ComputeGraph,
    a_hat: &Arc<CsrMatrix>,
    h: Var,
    ws: &[Var],
    b: Option<Var>,
) -> Result<Var> {
    ensure!(!ws.is_empty(), "tagconv needs K + 1 weight matrices");
    let mut power = h;
    let mut terms = Vec::with_capacity(ws.len());
    for (k, &w) in ws.iter().enumerate() {
        if k > 0 {
            power = g.spmm(a_hat, power)?;
        }
        terms.push(g.matmul(power, w)?);
    }
    let out = g.sum(&terms)?;
    maybe_bias(g, out, b)
}

/// `H · W_self + mean_in(H) · W_neigh + b`. `mean_in` is the row-stochastic
/// in-neighbour operator; isolated rows contribute zero.
pub fn sage_mean_layer(
    g: &mut ComputeGraph,
    mean_in: &Arc<CsrMatrix>,
    h: Var,
    w_self: Var,
    w_neigh: Var,
    b: Option<Var>,
) -> Result<Var> {
    let own = g.matmul(h, w_self)?;
    let neigh = g.spmm(mean_in, h)?;
    let neigh = g.matmul(neigh, w_neigh)?;
    let out = g.add(own, neigh)?;
    maybe_bias(g, out, b)
}

/// Parameters of one attention head.
#[derive(Debug, Clone, Copy)]
pub struct GatHead {
    pub w: Var,
    pub a_src: Var,
    pub a_dst: Var,
}

/// Multi-head graph attention.
///
/// `structure` row `i` lists the in-neighbours of `i` plus `i` itself.
/// Scores are `LeakyReLU(a_dst·Wh_i + a_src·Wh_j)`, which equals
/// `aᵀ[Wh_i ‖ Wh_j]` for `a = [a_dst; a_src]`. Heads are concatenated, or
/// averaged when `concat` is false.
pub fn gat_layer(
    g: &mut ComputeGraph,
    structure: &Arc<CsrMatrix>,
    h: Var,
    heads: &[GatHead],
    slope: f64,
    concat: bool,
    b: Option<Var>,
) -> Result<Var> {
    ensure!(!heads.is_empty(), "gat needs at least one head");
    let n = structure.n_rows;
    for i in 0..n {
        ensure!(
            structure.row(i).0.binary_search(&i).is_ok(),
            "gat neighbourhood of node {i} lacks its self-edge"
        );
    }
    let mut outs = Vec::with_capacity(heads.len());
    for head in heads {
        let z = g.matmul(h, head.w)?;
        let src = g.matmul(z, head.a_src)?;
        let dst = g.matmul(z, head.a_dst)?;
        outs.push(g.attention(z, Some(dst), src, structure, Some(slope))?);
    }
    let out = if concat { g.concat(&outs)? } else { g.mean(&outs)? };
    maybe_bias(g, out, b)
}

/// `ĥ(i) = Σ_{j∈N₂(i)} a_j h(j) + α (W h(i) + b)`, where
/// `a_j = softmax_{j∈N₂(i)}(u · h(j))`.
///
/// `two_hop` row `i` lists `N₂(i)`. With `u = 0` the aggregation is the
/// plain mean over the two-hop neighbourhood.
pub fn two_hop_linear_layer(
    g: &mut ComputeGraph,
    two_hop: &Arc<CsrMatrix>,
    h: Var,
    u: Var,
    w: Var,
    b: Option<Var>,
    alpha: Var,
) -> Result<Var> {
    let scores = g.matmul(h, u)?;
    let agg = g.attention(h, None, scores, two_hop, None)?;
    let lin = g.matmul(h, w)?;
    let lin = maybe_bias(g, lin, b)?;
    let self_path = g.scale(lin, alpha)?;
    g.add(agg, self_path)
}

/// Attention neighbourhood for GAT: in-neighbours plus the node itself.
pub fn gat_structure(graph: &crate::graph::SparseGraph) -> CsrMatrix {
    let t = graph.transpose();
    let n = t.n_nodes();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(t.n_arcs() + n);
    row_ptr.push(0);
    for i in 0..n {
        let nb = t.neighbors(i);
        let pos = nb.partition_point(|&j| j < i);
        col_idx.extend_from_slice(&nb[..pos]);
        col_idx.push(i);
        col_idx.extend_from_slice(&nb[pos..]);
        row_ptr.push(col_idx.len());
    }
    let nnz = col_idx.len();
    CsrMatrix {
        n_rows: n,
        n_cols: n,
        row_ptr,
        col_idx,
        values: vec![1.0; nnz],
    }
}
