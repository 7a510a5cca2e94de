use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::budget::TimeBudget;
use super::ensemble::{build_ensemble, Ensemble};
use super::portfolio::{extract_meta_features, select_portfolio, FeatureDims, MetaFeatures, SearchSpace};
use super::trial::{run_trial, split_validation, EarlyStopRule, TrialConfig, TrialContext, TrialResult};
use crate::error::{Error, Result};
use crate::graph::DatasetBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub seed: u64,
    pub workers: usize,
    /// Upper bound on trials launched, on top of the time budget.
    pub max_trials: Option<usize>,
    pub val_fraction: f64,
    pub k_max: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            seed: 0,
            workers: 1,
            max_trials: None,
            val_fraction: 0.2,
            k_max: 5,
        }
    }
}

fn outcome(i: usize, r: Result<TrialResult>) -> Option<TrialResult> {
    match r {
        Ok(t) => Some(t),
        Err(e) => {
            log::warn!("trial {i} skipped: {e}");
            None
        }
    }
}

/// Runs `configs` in order under the budget and returns the completed
/// trials, best validation accuracy first, then lowest validation loss,
/// then launch order.
///
/// The first configuration always runs while any budget remains; later ones
/// only start before `safety_fraction` of the budget has elapsed.
pub fn search(
    configs: &[TrialConfig],
    ctx: &TrialContext,
    budget: &TimeBudget,
    opts: &SearchOptions,
) -> Vec<TrialResult> {
    let limit = opts.max_trials.unwrap_or(usize::MAX).min(configs.len());
    let configs = &configs[..limit];
    let rule = EarlyStopRule::default();
    let mut done: Vec<(usize, TrialResult)> = Vec::new();
    let may_start = |i: usize| budget.remaining() > 0.0 && (i == 0 || budget.may_schedule());

    if opts.workers <= 1 {
        for (i, cfg) in configs.iter().enumerate() {
            if !may_start(i) {
                break;
            }
            if let Some(t) = outcome(i, run_trial(cfg, ctx, budget, &rule)) {
                done.push((i, t));
            }
        }
    } else {
        let next = AtomicUsize::new(0);
        let results = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..opts.workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= configs.len() || !may_start(i) {
                        break;
                    }
                    if let Some(t) = outcome(i, run_trial(&configs[i], ctx, budget, &rule)) {
                        results.lock().unwrap().push((i, t));
                    }
                });
            }
        });
        done = results.into_inner().unwrap();
        done.sort_by_key(|(i, _)| *i);
    }
    let mut trials: Vec<TrialResult> = done.into_iter().map(|(_, t)| t).collect();
    trials.sort_by(|a, b| {
        b.val_acc
            .total_cmp(&a.val_acc)
            .then(a.val_loss.total_cmp(&b.val_loss))
    });
    trials
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutcome {
    pub meta: MetaFeatures,
    pub space: SearchSpace,
    pub trials: Vec<TrialResult>,
    pub ensemble: Ensemble,
    /// Predicted class per test node, in `test_ids` order.
    pub predictions: Vec<usize>,
}

/// Searches `space` on `bundle` and predicts the test nodes with the
/// greedy ensemble of the completed trials.
pub fn fit_predict_in(
    bundle: &DatasetBundle,
    space: &SearchSpace,
    budget: &TimeBudget,
    opts: &SearchOptions,
) -> Result<FitOutcome> {
    bundle.validate()?;
    let meta = extract_meta_features(bundle);
    let masks = split_validation(bundle, opts.val_fraction, opts.seed)?;
    let ctx = TrialContext::new(bundle, masks, space.symmetrize)?;
    let configs = space.configs(&FeatureDims::of(bundle), opts.seed);
    let trials = search(&configs, &ctx, budget, opts);
    if trials.is_empty() {
        return Err(Error::Budget("no trial completed within the budget".into()));
    }
    let ensemble = build_ensemble(&trials, &ctx.val_truth(), opts.k_max)?;
    let predictions = ensemble.predictions();
    Ok(FitOutcome {
        meta,
        space: space.clone(),
        trials,
        ensemble,
        predictions,
    })
}

/// Meta-features, portfolio choice, split, search and ensembling.
pub fn fit_predict(bundle: &DatasetBundle, budget: &TimeBudget, opts: &SearchOptions) -> Result<FitOutcome> {
    let space = select_portfolio(&extract_meta_features(bundle));
    log::info!("portfolio class {}", space.graph_class.number());
    fit_predict_in(bundle, &space, budget, opts)
}
