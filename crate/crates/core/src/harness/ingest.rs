use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{load_dataset, write_labels, DatasetBundle};
use crate::search::{
    argmax_rows, baseline_config, fit_predict, run_trial, split_validation, EarlyStopRule, FeatureDims,
    SearchOptions, TimeBudget, TrialConfig, TrialContext, TrialResult, DEFAULT_MAX_EPOCHS,
};
use crate::topo::{plain_stack, topo_search, topology_config, TopoStrategy, TopologySpec, DEFAULT_TOPOLOGY_CAP};

pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const META_FILE: &str = "ingestion_meta.json";
pub const TRIALS_FILE: &str = "trials.json";

/// Hidden width of the four-layer GCN solutions.
pub const GCN4_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solution {
    BaselineGcn2,
    Gcn4,
    Autograph,
    F2gcn,
}

impl Solution {
    pub const ALL: [Solution; 4] = [
        Solution::BaselineGcn2,
        Solution::Gcn4,
        Solution::Autograph,
        Solution::F2gcn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Solution::BaselineGcn2 => "baseline_gcn2",
            Solution::Gcn4 => "gcn4",
            Solution::Autograph => "autograph",
            Solution::F2gcn => "f2gcn",
        }
    }
}

impl FromStr for Solution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solution::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Solution::ALL.iter().map(|x| x.name()).collect();
                Error::Usage(format!("unknown solution {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionMeta {
    pub solution: String,
    pub seed: u64,
    pub budget_seconds: f64,
    pub wall_seconds: f64,
    pub budget_exceeded: bool,
    /// Predictions are the majority training class.
    pub fallback: bool,
    pub n_trials: usize,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    /// `(node_id, label)` in `test_ids` order.
    pub predictions: Vec<(usize, usize)>,
    pub meta: IngestionMeta,
    pub trials: Vec<TrialResult>,
    pub topology: Option<TopologySpec>,
}

struct SolutionOutput {
    predictions: Vec<usize>,
    trials: Vec<TrialResult>,
    topology: Option<TopologySpec>,
}

/// Most frequent training label, ties to the lowest class; 0 without labels.
pub fn majority_class(bundle: &DatasetBundle) -> usize {
    let mut counts = vec![0usize; bundle.n_classes.max(1)];
    for i in bundle.train_nodes() {
        if let Some(c) = bundle.train_label(i) {
            counts[c] += 1;
        }
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

fn single_trial(
    bundle: &DatasetBundle,
    config: &TrialConfig,
    budget: &TimeBudget,
    val_fraction: f64,
    seed: u64,
) -> Result<SolutionOutput> {
    let masks = split_validation(bundle, val_fraction, seed)?;
    let ctx = TrialContext::new(bundle, masks, false)?;
    let trial = run_trial(config, &ctx, budget, &EarlyStopRule::disabled())?;
    if trial.failed {
        return Err(Error::Budget("the only trial diverged".into()));
    }
    Ok(SolutionOutput {
        predictions: argmax_rows(&trial.test_softmax),
        trials: vec![trial],
        topology: None,
    })
}

fn run_solution(
    bundle: &DatasetBundle,
    solution: Solution,
    budget: &TimeBudget,
    opts: &SearchOptions,
) -> Result<SolutionOutput> {
    let dims = FeatureDims::of(bundle);
    match solution {
        Solution::BaselineGcn2 => {
            let cfg = baseline_config(&dims, DEFAULT_MAX_EPOCHS, opts.seed);
            single_trial(bundle, &cfg, budget, 0.0, opts.seed)
        }
        Solution::Gcn4 => {
            let cfg = topology_config(&dims, &plain_stack(4), GCN4_HIDDEN, opts.seed);
            let mut out = single_trial(bundle, &cfg, budget, opts.val_fraction, opts.seed)?;
            out.topology = Some(plain_stack(4));
            Ok(out)
        }
        Solution::Autograph => {
            let fit = fit_predict(bundle, budget, opts)?;
            Ok(SolutionOutput {
                predictions: fit.predictions,
                trials: fit.trials,
                topology: None,
            })
        }
        Solution::F2gcn => {
            let strategy = TopoStrategy::Exhaustive {
                n_layers: 4,
                cap: DEFAULT_TOPOLOGY_CAP,
            };
            let out = topo_search(bundle, budget, strategy, GCN4_HIDDEN, opts)?;
            Ok(SolutionOutput {
                predictions: argmax_rows(&out.result.test_softmax),
                trials: out.evaluated,
                topology: Some(out.best),
            })
        }
    }
}

fn finish(
    bundle: &DatasetBundle,
    outcome: Result<SolutionOutput>,
    solution_name: &str,
    budget: &TimeBudget,
    seed: u64,
) -> IngestReport {
    let late = budget.elapsed() > budget.total_seconds;
    let (labels, trials, topology, fallback) = match outcome {
        Ok(out) if !late => (out.predictions, out.trials, out.topology, false),
        Ok(out) => {
            log::warn!("predictions arrived after the budget; using the majority class");
            (vec![], out.trials, out.topology, true)
        }
        Err(e) => {
            log::warn!("solution failed ({e}); using the majority class");
            (vec![], vec![], None, true)
        }
    };
    let labels = if fallback {
        vec![majority_class(bundle); bundle.test_ids.len()]
    } else {
        labels
    };
    let predictions = bundle.test_ids.iter().copied().zip(labels).collect();
    IngestReport {
        predictions,
        meta: IngestionMeta {
            solution: solution_name.to_string(),
            seed,
            budget_seconds: budget.total_seconds,
            wall_seconds: budget.elapsed(),
            budget_exceeded: fallback || late,
            fallback,
            n_trials: trials.len(),
        },
        trials,
        topology,
    }
}

fn guarded<T>(f: impl FnOnce() -> Result<T>) -> Result<T> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err(Error::Contract("solution panicked".into())))
}

/// Runs `solution` on an already loaded bundle under `budget`.
///
/// Never fails: a solution error, or predictions produced after the budget
/// ran out, yield majority-class predictions flagged as over budget.
pub fn ingest_bundle(
    bundle: &DatasetBundle,
    solution: Solution,
    budget: &TimeBudget,
    opts: &SearchOptions,
) -> IngestReport {
    let outcome = guarded(|| run_solution(bundle, solution, budget, opts));
    finish(bundle, outcome, solution.name(), budget, opts.seed)
}

/// Loads `dataset_dir`, runs `solution` within `budget_s` seconds counted
/// from the call, and writes the prediction file and sidecars into
/// `out_dir`.
pub fn ingest(
    dataset_dir: impl AsRef<Path>,
    solution: Solution,
    budget_s: f64,
    opts: &SearchOptions,
    out_dir: impl AsRef<Path>,
) -> Result<IngestReport> {
    let budget = TimeBudget::new(budget_s);
    let bundle = load_dataset(dataset_dir)?;
    let report = ingest_bundle(&bundle, solution, &budget, opts);
    write_outputs(&report, out_dir)?;
    Ok(report)
}

/// Retrains one exact trial configuration and writes its predictions.
pub fn replay(
    dataset_dir: impl AsRef<Path>,
    config: &TrialConfig,
    budget_s: f64,
    opts: &SearchOptions,
    out_dir: impl AsRef<Path>,
) -> Result<IngestReport> {
    let budget = TimeBudget::new(budget_s);
    let bundle = load_dataset(dataset_dir)?;
    let outcome = guarded(|| single_trial(&bundle, config, &budget, opts.val_fraction, opts.seed));
    let report = finish(&bundle, outcome, "replay", &budget, opts.seed);
    write_outputs(&report, out_dir)?;
    Ok(report)
}

pub fn write_outputs(report: &IngestReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    write_labels(dir.join(PREDICTIONS_FILE), &report.predictions)?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&report.meta)? + "\n")?;
    fs::write(dir.join(TRIALS_FILE), serde_json::to_string_pretty(&report.trials)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solution_names_parse() {
        for s in Solution::ALL {
            assert_eq!(s.name().parse::<Solution>().unwrap(), s);
        }
        assert!(matches!("gcn9".parse::<Solution>(), Err(Error::Usage(_))));
    }
}
