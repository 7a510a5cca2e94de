use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::budget::TimeBudget;
use super::portfolio::{FeatureDims, FeatureSet};
use crate::autodiff::{softmax_rows, AdamState, Matrix};
use crate::error::{ensure, Error, Result};
use crate::features::{assemble, compute_block, FeatureBlock, FeatureSource};
use crate::graph::DatasetBundle;
use crate::zoo::{build_model, GraphViews, ModelInput, ModelSpec};

/// Epoch at which a trial's validation loss is compared with its peers.
pub const EARLY_STOP_EPOCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub model: ModelSpec,
    #[serde(flatten)]
    pub features: FeatureSet,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout_p: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn validate(&self, dims: &FeatureDims) -> Result<()> {
        ensure!(self.lr > 0.0, "lr must be positive");
        ensure!(self.weight_decay >= 0.0, "weight_decay must be non-negative");
        ensure!(
            self.max_epochs >= EARLY_STOP_EPOCH,
            "max_epochs must be at least {EARLY_STOP_EPOCH}"
        );
        ensure!(
            self.model.dropout_p == self.dropout_p,
            "model dropout {} disagrees with trial dropout {}",
            self.model.dropout_p,
            self.dropout_p
        );
        ensure!(!self.features.blocks.is_empty(), "trial has no feature blocks");
        self.model.validate()?;
        let (d, late) = dims.split_widths(&self.features);
        ensure!(
            self.model.input_dim() == Some(d),
            "model input width {:?} but features give {d}",
            self.model.input_dim()
        );
        ensure!(
            self.model.late_feature_dim == late,
            "model late width {} but features give {late}",
            self.model.late_feature_dim
        );
        ensure!(
            self.model.output_dim() == Some(dims.n_classes),
            "model emits {:?} logits for {} classes",
            self.model.output_dim(),
            dims.n_classes
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub config: TrialConfig,
    pub val_acc: f64,
    pub val_loss: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Seconds into the budget when the trial started.
    pub started_at: f64,
    pub wall_seconds: f64,
    pub stopped_early: bool,
    /// The budget ran out mid-training; the result holds the best epoch so far.
    pub budget_cut: bool,
    /// Training diverged; the result carries no usable predictions.
    pub failed: bool,
    /// Softmax rows of the validation nodes, ascending node id.
    #[serde(skip)]
    pub val_softmax: Matrix,
    /// Softmax rows of the test nodes, in `test_ids` order.
    #[serde(skip)]
    pub test_softmax: Matrix,
}

/// Relative early-stop rule shared by all trials of one search.
///
/// A trial whose epoch-16 validation loss exceeds `factor` times the median
/// recorded so far is stopped, once at least `grace_trials` losses exist.
#[derive(Debug)]
pub struct EarlyStopRule {
    pub factor: f64,
    pub grace_trials: usize,
    losses: Mutex<Vec<f64>>,
}

impl Default for EarlyStopRule {
    fn default() -> Self {
        EarlyStopRule {
            factor: 1.1,
            grace_trials: 3,
            losses: Mutex::new(Vec::new()),
        }
    }
}

impl EarlyStopRule {
    /// A rule that never stops a trial.
    pub fn disabled() -> Self {
        EarlyStopRule {
            factor: f64::INFINITY,
            ..Default::default()
        }
    }

    pub fn median(&self) -> Option<f64> {
        let l = self.losses.lock().unwrap();
        if l.is_empty() {
            return None;
        }
        let mut v = l.clone();
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 0 { (v[m - 1] + v[m]) / 2.0 } else { v[m] })
    }

    pub fn should_stop(&self, val_loss: f64) -> bool {
        if self.losses.lock().unwrap().len() < self.grace_trials {
            return false;
        }
        self.median().is_some_and(|m| val_loss > self.factor * m)
    }

    pub fn record(&self, val_loss: f64) {
        self.losses.lock().unwrap().push(val_loss);
    }

    pub fn n_recorded(&self) -> usize {
        self.losses.lock().unwrap().len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
}

/// Stratified split of the labelled nodes. Each class with at least two
/// labelled nodes keeps one on each side; singletons stay in training.
pub fn split_validation(bundle: &DatasetBundle, fraction: f64, seed: u64) -> Result<SplitMasks> {
    ensure!((0.0..1.0).contains(&fraction), "validation fraction {fraction} not in [0, 1)");
    let n = bundle.n_nodes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); bundle.n_classes];
    for i in 0..n {
        if let Some(c) = bundle.train_label(i) {
            by_class[c].push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = bundle.train_mask.clone();
    let mut val = vec![false; n];
    for nodes in &mut by_class {
        let size = nodes.len();
        if fraction == 0.0 || size < 2 {
            continue;
        }
        let k = ((fraction * size as f64).round() as usize).clamp(1, size - 1);
        nodes.shuffle(&mut rng);
        for &i in &nodes[..k] {
            train[i] = false;
            val[i] = true;
        }
    }
    Ok(SplitMasks { train, val })
}

/// Everything trials on one dataset share: graph operators, the split and
/// a cache of prepared feature blocks.
#[derive(Debug)]
pub struct TrialContext<'a> {
    pub bundle: &'a DatasetBundle,
    pub views: GraphViews,
    pub masks: SplitMasks,
    pub dims: FeatureDims,
    val_nodes: Vec<usize>,
    blocks: Mutex<HashMap<FeatureSource, Arc<FeatureBlock>>>,
}

fn standardized(source: FeatureSource) -> bool {
    matches!(
        source,
        FeatureSource::Degree
            | FeatureSource::NeighFeat1hop
            | FeatureSource::NeighFeat2hop
            | FeatureSource::Hub
    )
}

impl<'a> TrialContext<'a> {
    pub fn new(bundle: &'a DatasetBundle, masks: SplitMasks, symmetrize: bool) -> Result<Self> {
        let n = bundle.n_nodes();
        ensure!(masks.train.len() == n && masks.val.len() == n, "mask length");
        ensure!(
            (0..n).all(|i| !(masks.train[i] || masks.val[i]) || bundle.train_mask[i]),
            "split reaches outside the labelled nodes"
        );
        let graph = if symmetrize && bundle.graph.is_directed() {
            bundle.graph.to_undirected()
        } else {
            bundle.graph.clone()
        };
        Ok(TrialContext {
            bundle,
            views: GraphViews::new(graph),
            val_nodes: (0..n).filter(|&i| masks.val[i]).collect(),
            masks,
            dims: FeatureDims::of(bundle),
            blocks: Mutex::new(HashMap::new()),
        })
    }

    pub fn val_nodes(&self) -> &[usize] {
        &self.val_nodes
    }

    pub fn val_truth(&self) -> Vec<usize> {
        self.val_nodes.iter().map(|&i| self.bundle.labels[i] as usize).collect()
    }

    /// A feature block as trials see it: engineered dense blocks are
    /// standardized; label blocks read only the training side of the split.
    pub fn block(&self, source: FeatureSource) -> Result<Arc<FeatureBlock>> {
        let mut cache = self.blocks.lock().unwrap();
        if let Some(b) = cache.get(&source) {
            return Ok(Arc::clone(b));
        }
        let mut block = compute_block(self.bundle, source, &self.masks.train)?;
        if standardized(block.source) {
            block.matrix = assemble(&[&block], true)?;
        }
        let block = Arc::new(block);
        cache.insert(source, Arc::clone(&block));
        Ok(block)
    }

    pub fn input_for(&self, set: &FeatureSet) -> Result<ModelInput> {
        let mut input = Vec::new();
        let mut late = Vec::new();
        for &s in &set.blocks {
            let b = self.block(s)?;
            if set.late_labels && s.uses_labels() {
                late.push(b);
            } else {
                input.push(b);
            }
        }
        ensure!(!input.is_empty(), "feature set has no input blocks");
        let refs: Vec<&FeatureBlock> = input.iter().map(|b| b.as_ref()).collect();
        let x = assemble(&refs, false)?;
        let late = if late.is_empty() {
            None
        } else {
            let refs: Vec<&FeatureBlock> = late.iter().map(|b| b.as_ref()).collect();
            Some(assemble(&refs, false)?)
        };
        Ok(ModelInput::new(x, late))
    }
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Arg-max class of each row; ties go to the lowest class.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.rows().into_iter().map(argmax).collect()
}

/// Fraction of rows whose arg-max matches `truth`; 0 for no rows.
pub fn rows_accuracy(m: &Matrix, truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = argmax_rows(m)
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    hits as f64 / truth.len() as f64
}

fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    m.select(ndarray::Axis(0), rows)
}

/// Mean negative log-likelihood of `truth` under row-softmaxed `logits`.
fn nll(logits: &Matrix, rows: &[usize], truth: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (&i, &t) in rows.iter().zip(truth) {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    total / rows.len() as f64
}

fn uniform(rows: usize, cols: usize) -> Matrix {
    Matrix::from_elem((rows, cols), 1.0 / cols.max(1) as f64)
}

/// Trains one configuration full-batch with Adam.
///
/// Keeps the epoch with the best validation accuracy, ties going to the
/// lower validation loss (the last epoch when there is no validation set), applies the early-stop rule at epoch 16 and
/// stops once the budget's hard limit passes.
pub fn run_trial(
    config: &TrialConfig,
    ctx: &TrialContext,
    budget: &TimeBudget,
    early_stop: &EarlyStopRule,
) -> Result<TrialResult> {
    if budget.remaining() <= 0.0 {
        return Err(Error::Budget("time budget exhausted; trial refused".into()));
    }
    let started_at = budget.elapsed();
    config.validate(&ctx.dims)?;
    let input = ctx.input_for(&config.features)?;
    let mut model = build_model(&config.model, config.seed)?;
    let mut adam = AdamState::new(&model.params, config.lr, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d20b);

    let labels = &ctx.bundle.labels;
    let val_nodes = ctx.val_nodes();
    let val_truth = ctx.val_truth();
    let test_nodes = &ctx.bundle.test_ids;
    let c = ctx.dims.n_classes;

    let mut result = TrialResult {
        config: config.clone(),
        val_acc: 0.0,
        val_loss: f64::INFINITY,
        epochs_run: 0,
        best_epoch: 0,
        started_at,
        wall_seconds: 0.0,
        stopped_early: false,
        budget_cut: false,
        failed: false,
        val_softmax: uniform(val_nodes.len(), c),
        test_softmax: uniform(test_nodes.len(), c),
    };
    let mut have_best = false;
    let mut loss_at_check = None;

    for epoch in 1..=config.max_epochs {
        let (mut g, logits) = model.forward(&ctx.views, &input, true, &mut rng)?;
        let loss = g.masked_cross_entropy(logits, labels, &ctx.masks.train)?;
        result.epochs_run = epoch;
        if !g.scalar(loss).is_finite() {
            result.failed = true;
            break;
        }
        model.params.zero_grad();
        g.backward(loss, &mut model.params)?;
        adam.step(&mut model.params);

        let (g, logits) = model.forward(&ctx.views, &input, false, &mut rng)?;
        let logits = g.value(logits);
        if logits.iter().any(|v| !v.is_finite()) {
            result.failed = true;
            break;
        }
        let val_loss = nll(logits, val_nodes, &val_truth);
        let probs = softmax_rows(logits);
        let val_softmax = select_rows(&probs, val_nodes);
        let val_acc = rows_accuracy(&val_softmax, &val_truth);
        let better = val_acc > result.val_acc
            || (val_acc == result.val_acc && val_loss < result.val_loss);
        if !have_best || val_nodes.is_empty() || better {
            have_best = true;
            result.val_acc = val_acc;
            result.val_loss = val_loss;
            result.best_epoch = epoch;
            result.val_softmax = val_softmax;
            result.test_softmax = select_rows(&probs, test_nodes);
        }

        if epoch == EARLY_STOP_EPOCH && !val_nodes.is_empty() {
            loss_at_check = Some(val_loss);
            if early_stop.should_stop(val_loss) {
                result.stopped_early = true;
                break;
            }
        }
        if budget.hard_exceeded() {
            result.budget_cut = epoch < config.max_epochs;
            break;
        }
    }

    if let Some(l) = loss_at_check {
        early_stop.record(l);
    }
    if result.failed {
        log::warn!("trial with seed {} diverged", config.seed);
        result.val_acc = 0.0;
        result.val_loss = f64::INFINITY;
        result.val_softmax = uniform(val_nodes.len(), c);
        result.test_softmax = uniform(test_nodes.len(), c);
    }
    result.wall_seconds = budget.elapsed() - started_at;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseGraph;

    fn bundle_with_labels(labels: Vec<i64>, c: usize) -> DatasetBundle {
        let n = labels.len();
        DatasetBundle {
            graph: SparseGraph::empty(n, false),
            features: Some(Matrix::zeros((n, 1))),
            train_mask: labels.iter().map(|&l| l >= 0).collect(),
            labels,
            test_mask: vec![false; n],
            test_ids: vec![],
            n_classes: c,
            time_budget_seconds: 60.0,
        }
    }

    #[test]
    fn stratified_split_counts() {
        let labels: Vec<i64> = (0..100).map(|i| (i % 5) as i64).collect();
        let b = bundle_with_labels(labels, 5);
        let m = split_validation(&b, 0.2, 3).unwrap();
        assert_eq!(m.val.iter().filter(|&&v| v).count(), 20);
        for c in 0..5 {
            let per = (0..100).filter(|&i| m.val[i] && b.labels[i] == c).count();
            assert_eq!(per, 4);
        }
        assert!((0..100).all(|i| m.train[i] != m.val[i]));
        assert_eq!(m, split_validation(&b, 0.2, 3).unwrap());
    }

    #[test]
    fn singleton_class_stays_in_train() {
        let b = bundle_with_labels(vec![0, 1, 1, 1, -1], 2);
        let m = split_validation(&b, 0.5, 0).unwrap();
        assert!(m.train[0] && !m.val[0]);
        assert!(!m.val[4] && !m.train[4]);
        let v = (1..4).filter(|&i| m.val[i]).count();
        assert!((1..=2).contains(&v));
    }

    #[test]
    fn early_stop_rule_grace_and_threshold() {
        let rule = EarlyStopRule::default();
        assert!(!rule.should_stop(100.0));
        for l in [1.0, 2.0, 3.0] {
            rule.record(l);
        }
        assert_eq!(rule.median(), Some(2.0));
        assert!(!rule.should_stop(2.2));
        assert!(rule.should_stop(2.21));
        assert!(!EarlyStopRule::disabled().should_stop(1e300));
    }
}
