use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Row-compressed sparse matrix with arbitrary shape.
///
/// This is the operator form every sparse product in the crate consumes:
/// normalized adjacencies, mean-aggregation operators, attention
/// neighbourhoods and sparse input feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds the CSR form of a dense row-major matrix, keeping nonzeros only.
    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..rows {
            for (c, &v) in data[r * cols..(r + 1) * cols].iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: rows,
            n_cols: cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &w) in cols.iter().zip(vals) {
                out[i * self.n_cols + j] += w;
            }
        }
        out
    }
}

/// Canonical CSR adjacency.
///
/// Undirected graphs store both arcs of every edge. Rows hold strictly
/// increasing column indices with no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGraph {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    edge_weight: Vec<f64>,
    directed: bool,
    weighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// `D^{-1/2} (A + I) D^{-1/2}`
    Symmetric,
    /// `D^{-1} (A + I)`
    Row,
}

impl SparseGraph {
    /// Builds a canonical graph from an arc list.
    ///
    /// For undirected graphs every listed edge is materialized in both
    /// directions. Self-loops are dropped. Repeated arcs are merged by
    /// summing weights (unweighted graphs keep weight 1).
    pub fn from_edges(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        directed: bool,
        weighted: bool,
    ) -> Result<Self> {
        let mut arcs = Vec::new();
        for (s, d, w) in edges {
            ensure!(
                s < n_nodes && d < n_nodes,
                "edge ({s}, {d}) out of range for {n_nodes} nodes"
            );
            if s == d {
                continue;
            }
            let w = if weighted { w } else { 1.0 };
            arcs.push((s, d, w));
            if !directed {
                arcs.push((d, s, w));
            }
        }
        Ok(Self::from_arcs_merged(n_nodes, arcs, directed, weighted))
    }

    fn from_arcs_merged(
        n_nodes: usize,
        mut arcs: Vec<(usize, usize, f64)>,
        directed: bool,
        weighted: bool,
    ) -> Self {
        arcs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_nodes + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(arcs.len());
        let mut edge_weight: Vec<f64> = Vec::with_capacity(arcs.len());
        let mut last: Option<(usize, usize)> = None;
        for (s, d, w) in arcs {
            if last == Some((s, d)) {
                if weighted {
                    *edge_weight.last_mut().unwrap() += w;
                }
                continue;
            }
            last = Some((s, d));
            row_ptr[s + 1] += 1;
            col_idx.push(d);
            edge_weight.push(w);
        }
        for i in 0..n_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseGraph {
            n_nodes,
            row_ptr,
            col_idx,
            edge_weight,
            directed,
            weighted,
        }
    }

    /// A graph with no arcs.
    pub fn empty(n_nodes: usize, directed: bool) -> Self {
        SparseGraph {
            n_nodes,
            row_ptr: vec![0; n_nodes + 1],
            col_idx: Vec::new(),
            edge_weight: Vec::new(),
            directed,
            weighted: false,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of stored arcs (twice the edge count for undirected graphs).
    pub fn n_arcs(&self) -> usize {
        self.col_idx.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn edge_weight(&self) -> &[f64] {
        &self.edge_weight
    }

    /// Out-neighbours of `i`, ascending.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    #[inline]
    pub fn weights(&self, i: usize) -> &[f64] {
        &self.edge_weight[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &j in &self.col_idx {
            deg[j] += 1;
        }
        deg
    }

    /// Iterates `(src, dst, weight)` over all stored arcs in CSR order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_nodes).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .zip(self.weights(i))
                .map(move |(&j, &w)| (i, j, w))
        })
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let nb = self.neighbors(i);
        nb.binary_search(&j).ok().map(|p| self.weights(i)[p])
    }

    /// Checks every structural invariant of the canonical form.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes;
        ensure!(self.row_ptr.len() == n + 1, "row_ptr length");
        ensure!(self.row_ptr[0] == 0, "row_ptr[0] != 0");
        ensure!(self.row_ptr[n] == self.col_idx.len(), "row_ptr[n] != nnz");
        ensure!(self.edge_weight.len() == self.col_idx.len(), "weight length");
        for i in 0..n {
            ensure!(self.row_ptr[i] <= self.row_ptr[i + 1], "row_ptr decreasing");
            let nb = self.neighbors(i);
            ensure!(nb.iter().all(|&j| j < n), "column out of range in row {i}");
            ensure!(
                nb.windows(2).all(|w| w[0] < w[1]),
                "row {i} not strictly increasing"
            );
        }
        if !self.weighted {
            ensure!(
                self.edge_weight.iter().all(|&w| w == 1.0),
                "unweighted graph with non-unit weight"
            );
        }
        if !self.directed {
            for (i, j, w) in self.arcs() {
                ensure!(self.weight(j, i) == Some(w), "asymmetric arc ({i}, {j})");
            }
        }
        Ok(())
    }

    /// Transposed graph: row `i` lists the in-neighbours of `i`.
    pub fn transpose(&self) -> SparseGraph {
        if !self.directed {
            return self.clone();
        }
        let arcs = self.arcs().map(|(i, j, w)| (j, i, w)).collect();
        Self::from_arcs_merged(self.n_nodes, arcs, true, self.weighted)
    }

    /// Symmetrizes the arc set; each pair gets the max of its two arc weights.
    pub fn to_undirected(&self) -> SparseGraph {
        if !self.directed {
            return self.clone();
        }
        let mut arcs: Vec<(usize, usize, f64)> = self
            .arcs()
            .flat_map(|(i, j, w)| [(i, j, w), (j, i, w)])
            .collect();
        arcs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(arcs.len());
        for (i, j, w) in arcs {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 = last.2.max(w),
                _ => merged.push((i, j, w)),
            }
        }
        Self::from_arcs_merged(self.n_nodes, merged, false, self.weighted)
    }

    /// Degree-normalized operator, optionally with unit self-loops.
    pub fn normalize(&self, mode: NormMode, add_self_loops: bool) -> Result<SparseGraph> {
        ensure!(
            !(mode == NormMode::Symmetric && self.directed),
            "symmetric normalization requires an undirected graph"
        );
        let n = self.n_nodes;
        let mut arcs: Vec<(usize, usize, f64)> = self.arcs().collect();
        if add_self_loops {
            arcs.extend((0..n).map(|i| (i, i, 1.0)));
        }
        let mut degree = vec![0.0; n];
        for &(i, _, w) in &arcs {
            degree[i] += w;
        }
        let inv = |d: f64| if d > 0.0 { 1.0 / d } else { 0.0 };
        for arc in arcs.iter_mut() {
            let (i, j) = (arc.0, arc.1);
            arc.2 *= match mode {
                NormMode::Symmetric => inv(degree[i] * degree[j]).sqrt(),
                NormMode::Row => inv(degree[i]),
            };
        }
        let mut g = Self::from_arcs_merged(n, arcs, self.directed, true);
        g.weighted = true;
        Ok(g)
    }

    /// Row-stochastic mean over in-neighbours: row `i` averages the rows of
    /// all `j` with an arc `j -> i`. Isolated rows stay empty.
    pub fn mean_in_operator(&self) -> CsrMatrix {
        let t = self.transpose();
        let mut m = t.to_matrix();
        for i in 0..m.n_rows {
            let (s, e) = (m.row_ptr[i], m.row_ptr[i + 1]);
            let k = (e - s) as f64;
            for v in &mut m.values[s..e] {
                *v = 1.0 / k;
            }
        }
        m
    }

    pub fn to_matrix(&self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.n_nodes,
            n_cols: self.n_nodes,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.edge_weight.clone(),
        }
    }

    /// Nodes within `k` hops of `node` (k in {1, 2}), excluding `node`, ascending.
    pub fn k_hop(&self, node: usize, k: usize) -> Result<Vec<usize>> {
        ensure!(node < self.n_nodes, "node {node} out of range");
        ensure!(k == 1 || k == 2, "k_hop supports k in {{1, 2}}, got {k}");
        let mut out: Vec<usize> = self.neighbors(node).to_vec();
        if k == 2 {
            for &j in self.neighbors(node) {
                out.extend_from_slice(self.neighbors(j));
            }
            out.sort_unstable();
            out.dedup();
        }
        out.retain(|&j| j != node);
        Ok(out)
    }

    /// The `k`-hop neighbourhood of every node as a pattern matrix (unit values).
    pub fn k_hop_pattern(&self, k: usize) -> Result<CsrMatrix> {
        let n = self.n_nodes;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            col_idx.extend(self.k_hop(i, k)?);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Ok(CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr,
            col_idx,
            values: vec![1.0; nnz],
        })
    }

    /// Applies a node relabelling: node `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> SparseGraph {
        let arcs = self.arcs().map(|(i, j, w)| (perm[i], perm[j], w)).collect();
        Self::from_arcs_merged(self.n_nodes, arcs, self.directed, self.weighted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> SparseGraph {
        SparseGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)], false, false).unwrap()
    }

    #[test]
    fn undirected_edges_materialize_both_arcs() {
        let g = SparseGraph::from_edges(2, [(0, 1, 1.0)], false, false).unwrap();
        assert_eq!(g.n_arcs(), 2);
        g.validate().unwrap();
    }

    #[test]
    fn duplicates_merge_by_sum_and_self_loops_drop() {
        let g = SparseGraph::from_edges(3, [(0, 1, 1.5), (0, 1, 2.0), (2, 2, 1.0)], true, true)
            .unwrap();
        assert_eq!(g.n_arcs(), 1);
        assert_eq!(g.weight(0, 1), Some(3.5));
        g.validate().unwrap();
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(SparseGraph::from_edges(2, [(0, 5, 1.0)], false, false).is_err());
    }

    #[test]
    fn normalize_edgeless_with_self_loops_is_identity() {
        let g = SparseGraph::empty(4, false);
        let a = g.normalize(NormMode::Symmetric, true).unwrap();
        assert_eq!(a.to_matrix(), CsrMatrix::identity(4));
    }

    #[test]
    fn normalize_single_edge_symmetric_gives_halves() {
        let g = SparseGraph::from_edges(2, [(0, 1, 1.0)], false, false).unwrap();
        let a = g.normalize(NormMode::Symmetric, true).unwrap();
        assert_eq!(a.to_matrix().to_dense(), vec![0.5; 4]);
    }

    #[test]
    fn normalize_symmetric_rejects_directed() {
        let g = SparseGraph::from_edges(2, [(0, 1, 1.0)], true, false).unwrap();
        assert!(g.normalize(NormMode::Symmetric, true).is_err());
        assert!(g.normalize(NormMode::Row, true).is_ok());
    }

    #[test]
    fn k_hop_on_path_and_isolated() {
        let g = path3();
        assert_eq!(g.k_hop(0, 1).unwrap(), vec![1]);
        assert_eq!(g.k_hop(0, 2).unwrap(), vec![1, 2]);
        let iso = SparseGraph::empty(3, false);
        assert!(iso.k_hop(1, 2).unwrap().is_empty());
        assert!(g.k_hop(3, 1).is_err());
        assert!(g.k_hop(0, 3).is_err());
    }

    #[test]
    fn k_hop_triangle() {
        let g =
            SparseGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], false, false)
                .unwrap();
        assert_eq!(g.k_hop(1, 1).unwrap(), vec![0, 2]);
    }

    #[test]
    fn to_undirected_max_rule() {
        let g = SparseGraph::from_edges(2, [(0, 1, 1.0), (1, 0, 3.0)], true, true).unwrap();
        let u = g.to_undirected();
        assert_eq!(u.weight(0, 1), Some(3.0));
        assert_eq!(u.weight(1, 0), Some(3.0));
        assert!(!u.is_directed());

        let single = SparseGraph::from_edges(2, [(0, 1, 2.0)], true, true).unwrap();
        let u = single.to_undirected();
        assert_eq!(u.weight(1, 0), Some(2.0));
        u.validate().unwrap();

        let p = path3();
        assert_eq!(p.to_undirected(), p);
    }

    #[test]
    fn mean_in_operator_uses_in_neighbors() {
        let g = SparseGraph::from_edges(3, [(0, 2, 1.0), (1, 2, 1.0)], true, false).unwrap();
        let m = g.mean_in_operator();
        let (cols, vals) = m.row(2);
        assert_eq!(cols, &[0, 1]);
        assert_eq!(vals, &[0.5, 0.5]);
        assert_eq!(m.row(0).0.len(), 0);
    }
}
