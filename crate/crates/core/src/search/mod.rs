//! Time-budgeted search over feature sets, architectures and
//! hyperparameters, with portfolio selection, early stopping and greedy
//! ensembling.

mod budget;
mod controller;
mod ensemble;
mod portfolio;
mod trial;

pub use budget::{Clock, FakeClock, SystemClock, TimeBudget, DEFAULT_HARD_FRACTION, DEFAULT_SAFETY_FRACTION};
pub use controller::{fit_predict, fit_predict_in, search, FitOutcome, SearchOptions};
pub use ensemble::{build_ensemble, Ensemble};
pub use portfolio::{
    base_features, baseline_config, classify, extract_meta_features, select_portfolio, FeatureDims,
    FeatureSet, GraphClass, MetaFeatures, SearchSpace, DEFAULT_MAX_EPOCHS, DEFAULT_WEIGHT_DECAY,
    DENSE_AVG_DEGREE, NEIGH_FEAT_MAX_DIM,
};
pub use trial::{
    argmax_rows, rows_accuracy, run_trial, split_validation, EarlyStopRule, SplitMasks, TrialConfig,
    TrialContext, TrialResult, EARLY_STOP_EPOCH,
};
