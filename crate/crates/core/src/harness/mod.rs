//! Challenge protocol: ingestion under a time budget, scoring, and the
//! leaderboard, plus a synthetic dataset generator.

mod ingest;
mod metrics;
mod score;
mod synth;

pub use ingest::{
    ingest, ingest_bundle, majority_class, replay, write_outputs, IngestReport, IngestionMeta, Solution,
    GCN4_HIDDEN, META_FILE, PREDICTIONS_FILE, TRIALS_FILE,
};
pub use metrics::{accuracy, balanced_accuracy, per_class_recall, MetricsReport};
pub use score::{leaderboard, score, write_report, SCORES_FILE};
pub use synth::{generate_sbm, SbmParams, SynthDataset};
