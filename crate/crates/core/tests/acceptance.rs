//! Acceptance criteria, one line each. Run with
//! `cargo test --test acceptance [-- <criterion numbers>]`.
//!
//! The public-citation-graph criterion needs a dataset directory (in this
//! crate's format, public split, plus `labels_test.tsv`) named by
//! `AUTOGRAPH_CORA_DIR`; without it the criterion is reported as skipped.

use std::collections::HashSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use autograph::autodiff::{grad_check_sampled, Matrix, ParamStore};
use autograph::features::FeatureSource;
use autograph::graph::{NormMode, SparseGraph};
use autograph::harness::{
    accuracy, balanced_accuracy, generate_sbm, ingest, ingest_bundle, score, SbmParams,
    Solution, SynthDataset, PREDICTIONS_FILE,
};
use autograph::search::{
    base_features, extract_meta_features, fit_predict, run_trial, search, select_portfolio, split_validation,
    EarlyStopRule, FakeClock, FeatureDims, SearchOptions, TimeBudget, TrialConfig, TrialContext,
    DEFAULT_MAX_EPOCHS, DEFAULT_WEIGHT_DECAY,
};
use autograph::topo::{count_topologies, plain_stack, topo_search, FinalFusion, Fusion, TopoStrategy, TopologySpec};
use autograph::zoo::{build_model, count_params, Activation, GraphViews, LayerKind, ModelInput, ModelSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const CRITERIA: [(u32, &str, fn() -> Option<Outcome>); 11] = [
    (1, "metric oracle equivalence", || Some(metrics_oracle())),
    (2, "gradient correctness", || Some(gradients())),
    (3, "normalization correctness", || Some(normalization())),
    (4, "parameter count", || Some(parameter_count())),
    (5, "public citation graph sanity", public_dataset),
    (6, "synthetic end-to-end", || Some(synthetic_end_to_end())),
    (7, "budget enforcement", || Some(budget_enforcement())),
    (8, "ensemble property", || Some(ensemble_property())),
    (9, "topology search", || Some(topology_search())),
    (10, "leak freedom", || Some(leak_freedom())),
    (11, "determinism", || Some(determinism())),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Some(Err(format!("panicked: {msg}")))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Some(Ok(detail)) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Some(Err(detail)) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
            None => println!("criterion {n:>2} SKIP  {name}: AUTOGRAPH_CORA_DIR not set, not verified"),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn metrics_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let n = rng.random_range(1..=200);
        let c = rng.random_range(1..=10);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let hits = (0..n).filter(|&i| pred[i] == truth[i]).count();
        let mut recalls = Vec::new();
        for k in 0..c {
            let support = truth.iter().filter(|&&t| t == k).count();
            if support > 0 {
                let h = (0..n).filter(|&i| truth[i] == k && pred[i] == k).count();
                recalls.push(h as f64 / support as f64);
            }
        }
        let bal = recalls.iter().sum::<f64>() / recalls.len() as f64;
        check!(accuracy(&pred, &truth).unwrap() == hits as f64 / n as f64, "accuracy differs on case {case}");
        check!(balanced_accuracy(&pred, &truth, c).unwrap() == bal, "balanced accuracy differs on case {case}");
    }
    let secs = start.elapsed().as_secs_f64();
    check!(secs < 5.0, "took {secs:.2}s");
    Ok("1000/1000 instances exact".into())
}

fn random_graph(n: usize, p: f64, directed: bool, rng: &mut impl Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) && rng.random_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    SparseGraph::from_edges(n, edges, directed, false).unwrap()
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut specs: Vec<(String, ModelSpec)> = LayerKind::ALL
        .iter()
        .map(|&k| {
            let mut s = ModelSpec::stack(k, 3, 4, 3, 2, 0.0);
            if k == LayerKind::Gat {
                s.gnn_layers.iter_mut().for_each(|l| l.heads = 2);
            }
            (format!("{k:?}"), s)
        })
        .collect();
    let topo = TopologySpec {
        n_layers: 2,
        inputs: vec![vec![0], vec![0, 1]],
        layer_fusion: vec![Fusion::Sum, Fusion::Mean],
        final_inputs: vec![1, 2],
        final_fusion: FinalFusion::Concat,
    };
    specs.push(("topology".into(), autograph::topo::topology_model(3, 4, 3, &topo, 0.0)));
    for (name, mut spec) in specs {
        // Smooth activation keeps central differences away from kinks.
        spec.activation = Activation::Elu;
        let views = GraphViews::new(random_graph(10, 0.3, name == "SageMean", &mut rng));
        let mut model = build_model(&spec, rng.random()).unwrap();
        for t in model.params.iter_mut() {
            t.values.mapv_inplace(|v| v + 0.1 * (v.signum() + 0.3));
        }
        let x = Matrix::from_shape_fn((10, 3), |_| rng.random_range(-1.0..1.0));
        let input = ModelInput::new(x, None);
        let labels: Vec<i64> = (0..10).map(|_| rng.random_range(0..3)).collect();
        let mask: Vec<bool> = (0..10).map(|i| i % 3 != 0).collect();
        let mut store = std::mem::replace(&mut model.params, ParamStore::new());
        let err = grad_check_sampled(&mut store, 1e-6, 7, 400, |s| {
            let mut m = model.clone();
            m.params = s.clone();
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let (mut g, out) = m.forward(&views, &input, false, &mut r).unwrap();
            let loss = g.masked_cross_entropy(out, &labels, &mask).unwrap();
            (g, loss)
        });
        check!(err <= 1e-4, "{name}: max relative error {err:e}");
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    check!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("5 layer kinds + topology fusion + cross-entropy, max rel err {worst:.1e} (h=1e-6)"))
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(1..=50);
        let p = rng.random_range(0.0..0.3);
        let g = random_graph(n, p, false, &mut rng);
        let mut a = DMatrix::<f64>::identity(n, n);
        for (i, j, _) in g.arcs() {
            a[(i, j)] = 1.0;
        }
        let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        let oracle = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
        let norm = g.normalize(NormMode::Symmetric, true).unwrap();
        let mut got = DMatrix::zeros(n, n);
        for (i, j, w) in norm.arcs() {
            got[(i, j)] = w;
        }
        let err = (got - oracle).abs().max();
        check!(err <= 1e-12, "graph {case}: symmetric error {err:e}");
        worst = worst.max(err);
        let row = g.normalize(NormMode::Row, true).unwrap();
        for i in 0..n {
            let s: f64 = row.weights(i).iter().sum();
            check!((s - 1.0).abs() <= 1e-12, "graph {case}: row {i} sums to {s}");
        }
    }
    Ok(format!("100 graphs, max error {worst:.1e}, row sums 1"))
}

fn parameter_count() -> Outcome {
    let model = build_model(&ModelSpec::gcn(1433, 16, 7, 2, 0.5, false), 0).unwrap();
    let count = count_params(&model);
    let millions = format!("{:.3}", count as f64 / 1e6);
    check!(count == 1433 * 16 + 16 * 7 && count == 23_040, "count {count}");
    check!(millions == "0.023", "{millions}M");
    Ok(format!("{count} parameters = {millions}M"))
}

fn public_dataset() -> Option<Outcome> {
    let dir = PathBuf::from(std::env::var_os("AUTOGRAPH_CORA_DIR")?);
    Some((|| {
        let start = Instant::now();
        let out = tempfile::tempdir().unwrap();
        let opts = SearchOptions::default();
        ingest(&dir, Solution::BaselineGcn2, 600.0, &opts, out.path()).map_err(|e| e.to_string())?;
        let r = score(out.path().join(PREDICTIONS_FILE), dir.join("labels_test.tsv"), None)
            .map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        check!(r.accuracy >= 0.78, "test accuracy {:.4} < 0.78", r.accuracy);
        check!(secs < 120.0, "took {secs:.1}s");
        Ok(format!("baseline GCN(L2) test accuracy {:.4} >= 0.78", r.accuracy))
    })())
}

fn sbm(seed: u64) -> SynthDataset {
    generate_sbm(&SbmParams::new(1000, 5, 0.05, 0.005, seed)).unwrap()
}

fn test_accuracy(pred: &[usize], data: &SynthDataset) -> f64 {
    let truth: Vec<usize> = data.truth.iter().map(|&(_, l)| l).collect();
    accuracy(pred, &truth).unwrap()
}

fn mlp_accuracy(data: &SynthDataset, seed: u64) -> f64 {
    let bundle = &data.bundle;
    let dims = FeatureDims::of(bundle);
    let features = base_features(&dims);
    let (d, _) = dims.split_widths(&features);
    let cfg = TrialConfig {
        model: ModelSpec::mlp(d, 16, dims.n_classes, 0.5),
        features,
        lr: 0.01,
        weight_decay: DEFAULT_WEIGHT_DECAY,
        dropout_p: 0.5,
        max_epochs: DEFAULT_MAX_EPOCHS,
        seed,
    };
    let ctx = TrialContext::new(bundle, split_validation(bundle, 0.0, seed).unwrap(), false).unwrap();
    let t = run_trial(&cfg, &ctx, &TimeBudget::new(600.0), &EarlyStopRule::disabled()).unwrap();
    test_accuracy(&autograph::search::argmax_rows(&t.test_softmax), data)
}

struct SeedRun {
    gcn: f64,
    mlp: f64,
    autograph: f64,
    ensemble_val: f64,
    best_trial_val: f64,
    n_trials: usize,
}

const AUTOGRAPH_BUDGET: f64 = 30.0;

fn seed_runs() -> &'static [SeedRun] {
    static RUNS: std::sync::OnceLock<Vec<SeedRun>> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        (1..=3)
            .map(|seed| {
                let data = sbm(seed);
                let opts = SearchOptions {
                    seed,
                    ..SearchOptions::default()
                };
                let base = ingest_bundle(&data.bundle, Solution::BaselineGcn2, &TimeBudget::new(600.0), &opts);
                let gcn_pred: Vec<usize> = base.predictions.iter().map(|&(_, l)| l).collect();
                let fit = fit_predict(&data.bundle, &TimeBudget::new(AUTOGRAPH_BUDGET), &opts).unwrap();
                SeedRun {
                    gcn: test_accuracy(&gcn_pred, &data),
                    mlp: mlp_accuracy(&data, seed),
                    autograph: test_accuracy(&fit.predictions, &data),
                    ensemble_val: fit.ensemble.val_acc,
                    best_trial_val: fit.trials.iter().map(|t| t.val_acc).fold(0.0, f64::max),
                    n_trials: fit.trials.len(),
                }
            })
            .collect()
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn synthetic_end_to_end() -> Outcome {
    let runs = seed_runs();
    let gcn = median(runs.iter().map(|r| r.gcn).collect());
    let mlp = median(runs.iter().map(|r| r.mlp).collect());
    let auto = median(runs.iter().map(|r| r.autograph).collect());
    let detail = format!("median acc GCN(L2) {gcn:.4}, MLP {mlp:.4}, autograph {auto:.4}");
    check!(gcn - mlp >= 0.05, "(a) GCN - MLP < 5 points; {detail}");
    check!(auto >= gcn - 0.005, "(b) autograph < GCN - 0.5 points; {detail}");
    Ok(detail)
}

fn ensemble_property() -> Outcome {
    let runs = seed_runs();
    for (i, r) in runs.iter().enumerate() {
        check!(
            r.ensemble_val >= r.best_trial_val,
            "seed {}: ensemble val {} < best trial {}",
            i + 1,
            r.ensemble_val,
            r.best_trial_val
        );
    }
    let pairs: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.3}>={:.3} ({} trials)", r.ensemble_val, r.best_trial_val, r.n_trials))
        .collect();
    Ok(format!("ensemble vs best val acc: {}", pairs.join(", ")))
}

fn budget_enforcement() -> Outcome {
    let small = generate_sbm(&SbmParams::new(60, 3, 0.3, 0.02, 4)).unwrap().bundle;
    let ctx = TrialContext::new(&small, split_validation(&small, 0.2, 0).unwrap(), false).unwrap();
    let dims = FeatureDims::of(&small);
    let configs: Vec<TrialConfig> =
        (0..2000).map(|s| autograph::search::baseline_config(&dims, 16, s)).collect();
    let (total, tick) = (10.0, 0.002);
    let budget = TimeBudget::with_clock(total, Arc::new(FakeClock::new(tick)));
    let trials = search(&configs, &ctx, &budget, &SearchOptions::default());
    let latest = trials.iter().map(|t| t.started_at).fold(0.0, f64::max);
    // The start time is read a few clock ticks after the scheduling check.
    check!(latest <= 0.9 * total + 3.0 * tick, "fake clock: trial started at {latest}s of {total}s");
    check!(trials.len() < configs.len(), "fake clock: budget never bound");

    let mut lines = vec![format!("fake clock: {} trials, last start {latest:.3}s of {total}s", trials.len())];
    let data = sbm(1);
    let dir = tempfile::tempdir().unwrap();
    data.save(dir.path().join("data")).unwrap();
    for b in [5.0, 60.0] {
        let out = dir.path().join(format!("out{b}"));
        let start = Instant::now();
        let report = ingest(dir.path().join("data"), Solution::Autograph, b, &SearchOptions::default(), &out)
            .map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        check!(secs <= 1.05 * b, "B={b}s: finished after {secs:.2}s");
        let r = score(out.join(PREDICTIONS_FILE), dir.path().join("data/labels_test.tsv"), None)
            .map_err(|e| e.to_string())?;
        lines.push(format!(
            "B={b}s: {secs:.2}s, {} trials, acc {:.3}{}",
            report.meta.n_trials,
            r.accuracy,
            if report.meta.fallback { " (fallback)" } else { "" }
        ));
    }
    Ok(lines.join("; "))
}

/// Every wiring of `n_layers` layers, listed directly from the rules.
fn hand_enumeration(n_layers: usize) -> HashSet<TopologySpec> {
    fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
        (1u32..1 << items.len())
            .map(|m| items.iter().enumerate().filter(|(i, _)| m & (1 << i) != 0).map(|(_, &x)| x).collect())
            .collect()
    }
    let mut partial: Vec<(Vec<Vec<usize>>, Vec<Fusion>)> = vec![(vec![], vec![])];
    for k in 1..=n_layers {
        let mut next = Vec::new();
        for (inputs, fusions) in &partial {
            for s in subsets(&(0..k).collect::<Vec<_>>()) {
                let options: &[Fusion] = if s.len() == 1 { &[Fusion::Sum] } else { &[Fusion::Sum, Fusion::Mean, Fusion::Max] };
                for &f in options {
                    let mut i = inputs.clone();
                    i.push(s.clone());
                    let mut fu = fusions.clone();
                    fu.push(f);
                    next.push((i, fu));
                }
            }
        }
        partial = next;
    }
    let mut out = HashSet::new();
    for (inputs, fusions) in partial {
        for fin in subsets(&(1..=n_layers).collect::<Vec<_>>()) {
            for ff in [FinalFusion::Sum, FinalFusion::Mean, FinalFusion::Max, FinalFusion::Concat] {
                out.insert(TopologySpec {
                    n_layers,
                    inputs: inputs.clone(),
                    layer_fusion: fusions.clone(),
                    final_inputs: fin.clone(),
                    final_fusion: ff,
                });
            }
        }
    }
    out
}

fn topology_search() -> Outcome {
    let start = Instant::now();
    let data = sbm(1);
    let opts = SearchOptions {
        seed: 1,
        ..SearchOptions::default()
    };
    let mut lines = Vec::new();
    for (layers, expected) in [(1, 4), (2, 60)] {
        let hand = hand_enumeration(layers);
        check!(hand.len() == expected && count_topologies(layers) == expected as u128, "L={layers}: count");
        let strategy = TopoStrategy::Exhaustive { n_layers: layers, cap: 500 };
        let out = topo_search(&data.bundle, &TimeBudget::new(280.0), strategy, 16, &opts).map_err(|e| e.to_string())?;
        let seen: HashSet<TopologySpec> =
            out.evaluated.iter().map(|t| t.config.model.topology.clone().unwrap()).collect();
        check!(
            out.evaluated.len() == expected && seen == hand,
            "L={layers}: evaluated {} candidates, {} distinct, expected {expected}",
            out.evaluated.len(),
            seen.len()
        );
        let plain = out
            .evaluated
            .iter()
            .find(|t| t.config.model.topology.as_ref() == Some(&plain_stack(layers)))
            .unwrap();
        check!(
            out.result.val_acc >= plain.val_acc,
            "L={layers}: best {} < plain {}",
            out.result.val_acc,
            plain.val_acc
        );
        lines.push(format!("L={layers}: {expected} candidates, best val {:.3} >= plain {:.3}", out.result.val_acc, plain.val_acc));
    }
    let secs = start.elapsed().as_secs_f64();
    check!(secs < 300.0, "took {secs:.1}s");
    Ok(lines.join("; "))
}

fn same_bits(a: &Matrix, b: &Matrix) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Compares every feature block, one trial per portfolio feature set and
/// two solutions between a bundle carrying the true test labels and one
/// whose test labels are a sentinel. Returns (blocks, trials) compared.
fn leak_check(data: &SynthDataset, featureless: bool) -> Result<(usize, usize), String> {
    let mut truthful = data.bundle.clone();
    if featureless {
        truthful.features = None;
    }
    for &(i, l) in &data.truth {
        truthful.labels[i] = l as i64;
    }
    let mut dirty = truthful.clone();
    for i in 0..dirty.n_nodes() {
        if dirty.test_mask[i] {
            dirty.labels[i] = 987_654_321;
        }
    }
    let bundles = [&truthful, &dirty];
    let ctxs: Vec<TrialContext> = bundles
        .iter()
        .map(|b| TrialContext::new(b, split_validation(b, 0.2, 5).unwrap(), false).unwrap())
        .collect();
    let mut blocks = 0;
    for s in FeatureSource::ALL {
        match (ctxs[0].block(s), ctxs[1].block(s)) {
            (Ok(a), Ok(b)) => {
                check!(same_bits(&a.matrix, &b.matrix), "feature block {} differs", s.name());
                blocks += 1;
            }
            (Err(a), Err(b)) => check!(a.to_string() == b.to_string(), "block {} errors differ", s.name()),
            _ => return Err(format!("block {} builds on only one bundle", s.name())),
        }
    }

    let space = select_portfolio(&extract_meta_features(&truthful));
    let mut configs: Vec<TrialConfig> = Vec::new();
    for c in space.configs(&FeatureDims::of(&truthful), 5) {
        if !configs.iter().any(|k| k.features == c.features) {
            configs.push(c);
        }
    }
    for c in &mut configs {
        c.max_epochs = 60;
    }
    let runs: Vec<_> = ctxs
        .iter()
        .map(|ctx| search(&configs, ctx, &TimeBudget::new(600.0), &SearchOptions::default()))
        .collect();
    check!(runs[0].len() == configs.len() && runs[1].len() == configs.len(), "trial counts differ");
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        let same = a.val_acc.to_bits() == b.val_acc.to_bits()
            && a.val_loss.to_bits() == b.val_loss.to_bits()
            && a.config == b.config
            && same_bits(&a.val_softmax, &b.val_softmax)
            && same_bits(&a.test_softmax, &b.test_softmax);
        check!(same, "trial results differ");
    }

    let opts = SearchOptions {
        seed: 5,
        max_trials: Some(3),
        ..SearchOptions::default()
    };
    for s in [Solution::BaselineGcn2, Solution::Autograph] {
        let a = ingest_bundle(bundles[0], s, &TimeBudget::new(600.0), &opts);
        let b = ingest_bundle(bundles[1], s, &TimeBudget::new(600.0), &opts);
        check!(!a.meta.fallback, "{} fell back", s.name());
        check!(a.predictions == b.predictions, "{} predictions differ", s.name());
    }
    Ok((blocks, configs.len()))
}

fn leak_freedom() -> Outcome {
    let data = generate_sbm(&SbmParams::new(300, 4, 0.08, 0.01, 10)).unwrap();
    let mut parts = Vec::new();
    for (featureless, name) in [(false, "attributed"), (true, "featureless")] {
        let (blocks, trials) = leak_check(&data, featureless)?;
        parts.push(format!("{name}: {blocks} blocks, {trials} trials"));
    }
    Ok(format!("{}; baseline and autograph predictions bitwise identical", parts.join("; ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    generate_sbm(&SbmParams::new(300, 4, 0.08, 0.01, 2))
        .unwrap()
        .save(dir.path().join("data"))
        .unwrap();
    let run = |out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_autograph"))
            .args(["run", "--solution", "autograph", "--seed", "7", "--budget", "600", "--max-trials", "3"])
            .arg("--dataset")
            .arg(dir.path().join("data"))
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success(), "run exited with {status}");
        fs::read(dir.path().join(out).join(PREDICTIONS_FILE)).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    check!(!a.is_empty() && a == b, "prediction files differ");
    let rows = a.iter().filter(|&&c| c == b'\n').count();
    Ok(format!("two runs wrote byte-identical predictions.tsv ({rows} lines)"))
}
