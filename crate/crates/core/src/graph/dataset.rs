use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::sparse::SparseGraph;
use crate::error::{ensure, Error, Result};

pub const DEFAULT_TIME_BUDGET: f64 = 600.0;

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub directed: bool,
    pub weighted: bool,
    #[serde(default = "default_budget")]
    pub time_budget_seconds: f64,
}

fn default_budget() -> f64 {
    DEFAULT_TIME_BUDGET
}

/// One transductive node-classification problem.
///
/// `labels[i]` is `-1` for every node whose label is not given to the
/// solution. `test_ids` keeps the order of `test_ids.tsv`, which is the
/// order predictions are written in.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub graph: SparseGraph,
    pub features: Option<Array2<f64>>,
    pub labels: Vec<i64>,
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub test_ids: Vec<usize>,
    pub n_classes: usize,
    pub time_budget_seconds: f64,
}

impl DatasetBundle {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn is_featureless(&self) -> bool {
        self.features.is_none()
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.train_mask[i]).collect()
    }

    /// Label of a training node; `None` for anything outside the train mask.
    pub fn train_label(&self, i: usize) -> Option<usize> {
        self.train_mask[i].then(|| self.labels[i] as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        self.graph.validate()?;
        ensure!(self.labels.len() == n, "labels length {} != {n}", self.labels.len());
        ensure!(self.train_mask.len() == n && self.test_mask.len() == n, "mask length");
        for i in 0..n {
            ensure!(
                !(self.train_mask[i] && self.test_mask[i]),
                "node {i} is in both train and test"
            );
            if self.train_mask[i] {
                ensure!(
                    self.labels[i] >= 0 && (self.labels[i] as usize) < self.n_classes,
                    "train node {i} has label {} outside [0, {})",
                    self.labels[i],
                    self.n_classes
                );
            }
        }
        if let Some(x) = &self.features {
            ensure!(x.nrows() == n, "features have {} rows, expected {n}", x.nrows());
        }
        ensure!(
            self.test_ids.iter().all(|&i| i < n && self.test_mask[i]),
            "test_ids inconsistent with test_mask"
        );
        Ok(())
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> DatasetBundle {
        let n = self.n_nodes();
        let mut labels = vec![-1; n];
        let mut train_mask = vec![false; n];
        let mut test_mask = vec![false; n];
        for i in 0..n {
            labels[perm[i]] = self.labels[i];
            train_mask[perm[i]] = self.train_mask[i];
            test_mask[perm[i]] = self.test_mask[i];
        }
        let features = self.features.as_ref().map(|x| {
            let mut out = Array2::zeros(x.raw_dim());
            for i in 0..n {
                out.row_mut(perm[i]).assign(&x.row(i));
            }
            out
        });
        DatasetBundle {
            graph: self.graph.permute(perm),
            features,
            labels,
            train_mask,
            test_mask,
            test_ids: self.test_ids.iter().map(|&i| perm[i]).collect(),
            n_classes: self.n_classes,
            time_budget_seconds: self.time_budget_seconds,
        }
    }
}

struct TsvRows<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> TsvRows<'a> {
    /// Skips the header; yields `(line_number, fields)` for non-empty lines.
    fn new(text: &'a str) -> Self {
        let mut lines = text.lines().enumerate();
        lines.next();
        TsvRows { lines }
    }
}

impl<'a> Iterator for TsvRows<'a> {
    type Item = (usize, Vec<&'a str>);

    fn next(&mut self) -> Option<Self::Item> {
        for (idx, line) in self.lines.by_ref() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            return Some((idx + 1, line.split('\t').collect()));
        }
        None
    }
}

fn read_file(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|source| Error::Load { path, source })
}

fn parse_node(file: &str, line: usize, field: &str, n: usize) -> Result<usize> {
    let id: i64 = field
        .trim()
        .parse()
        .map_err(|_| Error::format(file, line, format!("invalid node id {field:?}")))?;
    if id < 0 || id as usize >= n {
        return Err(Error::format(
            file,
            line,
            format!("node id {id} out of range [0, {n})"),
        ));
    }
    Ok(id as usize)
}

fn parse_real(file: &str, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::format(file, line, format!("invalid number {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::format(file, line, format!("non-finite value {field:?}")));
    }
    Ok(v)
}

fn expect_columns(file: &str, line: usize, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(Error::format(
            file,
            line,
            format!("expected {n} columns, found {}", fields.len()),
        ));
    }
    Ok(())
}

/// Reads a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let meta_text = read_file(dir, "meta.json")?;
    let edges_text = read_file(dir, "edges.tsv")?;
    let labels_text = read_file(dir, "labels_train.tsv")?;
    let test_text = read_file(dir, "test_ids.tsv")?;
    let features_text = match fs::read_to_string(dir.join("features.tsv")) {
        Ok(t) => Some(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(source) => {
            return Err(Error::Load {
                path: dir.join("features.tsv"),
                source,
            })
        }
    };

    let meta: DatasetMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::format("meta.json", e.line(), e.to_string()))?;
    let n = meta.n_nodes;

    let mut edges = Vec::new();
    for (line, f) in TsvRows::new(&edges_text) {
        if f.len() != 2 && f.len() != 3 {
            expect_columns("edges.tsv", line, &f, 3)?;
        }
        let s = parse_node("edges.tsv", line, f[0], n)?;
        let d = parse_node("edges.tsv", line, f[1], n)?;
        let w = match f.get(2) {
            Some(w) => parse_real("edges.tsv", line, w)?,
            None => 1.0,
        };
        edges.push((s, d, w));
    }
    let graph = SparseGraph::from_edges(n, edges, meta.directed, meta.weighted)?;

    let features = match features_text {
        None => None,
        Some(text) => Some(parse_features(&text, n)?),
    };

    let mut labels = vec![-1i64; n];
    let mut train_mask = vec![false; n];
    for (line, f) in TsvRows::new(&labels_text) {
        expect_columns("labels_train.tsv", line, &f, 2)?;
        let id = parse_node("labels_train.tsv", line, f[0], n)?;
        let label: i64 = f[1].trim().parse().map_err(|_| {
            Error::format("labels_train.tsv", line, format!("invalid label {:?}", f[1]))
        })?;
        if label < 0 || label as usize >= meta.n_classes {
            return Err(Error::format(
                "labels_train.tsv",
                line,
                format!("label {label} outside [0, {})", meta.n_classes),
            ));
        }
        if train_mask[id] && labels[id] != label {
            return Err(Error::format(
                "labels_train.tsv",
                line,
                format!("node {id} has conflicting labels {} and {label}", labels[id]),
            ));
        }
        train_mask[id] = true;
        labels[id] = label;
    }

    let mut test_mask = vec![false; n];
    let mut test_ids = Vec::new();
    for (line, f) in TsvRows::new(&test_text) {
        expect_columns("test_ids.tsv", line, &f, 1)?;
        let id = parse_node("test_ids.tsv", line, f[0], n)?;
        if train_mask[id] {
            return Err(Error::format(
                "test_ids.tsv",
                line,
                format!("node {id} is also a training node"),
            ));
        }
        if test_mask[id] {
            return Err(Error::format("test_ids.tsv", line, format!("duplicate node {id}")));
        }
        test_mask[id] = true;
        test_ids.push(id);
    }

    let bundle = DatasetBundle {
        graph,
        features,
        labels,
        train_mask,
        test_mask,
        test_ids,
        n_classes: meta.n_classes,
        time_budget_seconds: meta.time_budget_seconds,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn parse_features(text: &str, n: usize) -> Result<Array2<f64>> {
    const FILE: &str = "features.tsv";
    let d = text
        .lines()
        .next()
        .map(|h| h.trim_end_matches('\r').split('\t').count().saturating_sub(1))
        .unwrap_or(0);
    let mut x = Array2::zeros((n, d));
    let mut seen = vec![false; n];
    for (line, f) in TsvRows::new(text) {
        expect_columns(FILE, line, &f, d + 1)?;
        let id = parse_node(FILE, line, f[0], n)?;
        if seen[id] {
            return Err(Error::format(FILE, line, format!("duplicate node {id}")));
        }
        seen[id] = true;
        for (c, v) in f[1..].iter().enumerate() {
            x[[id, c]] = parse_real(FILE, line, v)?;
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::format(
            FILE,
            0,
            format!("no feature row for node {missing}"),
        ));
    }
    Ok(x)
}

/// Writes a bundle in canonical form. Loading the result and saving it
/// again reproduces the same bytes.
pub fn save_dataset(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        n_nodes: bundle.n_nodes(),
        n_classes: bundle.n_classes,
        directed: bundle.graph.is_directed(),
        weighted: bundle.graph.is_weighted(),
        time_budget_seconds: bundle.time_budget_seconds,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut s = String::from("src\tdst\tweight\n");
    let g = &bundle.graph;
    for (i, j, w) in g.arcs() {
        if g.is_directed() || i < j {
            writeln!(s, "{i}\t{j}\t{w}").unwrap();
        }
    }
    fs::write(dir.join("edges.tsv"), s)?;

    if let Some(x) = &bundle.features {
        let mut s = String::from("node_id");
        for c in 0..x.ncols() {
            write!(s, "\tf{c}").unwrap();
        }
        s.push('\n');
        for (i, row) in x.rows().into_iter().enumerate() {
            write!(s, "{i}").unwrap();
            for v in row {
                write!(s, "\t{v}").unwrap();
            }
            s.push('\n');
        }
        fs::write(dir.join("features.tsv"), s)?;
    } else {
        let _ = fs::remove_file(dir.join("features.tsv"));
    }

    let train: Vec<(usize, usize)> = (0..bundle.n_nodes())
        .filter_map(|i| bundle.train_label(i).map(|l| (i, l)))
        .collect();
    write_labels(dir.join("labels_train.tsv"), &train)?;

    let mut s = String::from("node_id\n");
    for id in &bundle.test_ids {
        writeln!(s, "{id}").unwrap();
    }
    fs::write(dir.join("test_ids.tsv"), s)?;
    Ok(())
}

/// Writes a `node_id label` table (used for train labels, ground truth
/// and predictions).
pub fn write_labels(path: impl AsRef<Path>, rows: &[(usize, usize)]) -> Result<()> {
    let mut s = String::from("node_id\tlabel\n");
    for (id, label) in rows {
        writeln!(s, "{id}\t{label}").unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads a `node_id label` table, keeping file order.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<(usize, i64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Load {
        path: path.to_path_buf(),
        source,
    })?;
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for (line, f) in TsvRows::new(&text) {
        expect_columns(&file, line, &f, 2)?;
        let id: usize = f[0]
            .trim()
            .parse()
            .map_err(|_| Error::format(&file, line, format!("invalid node id {:?}", f[0])))?;
        let label: i64 = f[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(&file, line, format!("invalid label {:?}", f[1])))?;
        rows.push((id, label));
    }
    Ok(rows)
}
