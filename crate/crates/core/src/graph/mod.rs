//! Graph storage, dataset files and statistics.

mod dataset;
mod sparse;
mod stats;

pub use dataset::{
    load_dataset, read_labels, save_dataset, write_labels, DatasetBundle, DatasetMeta,
    DEFAULT_TIME_BUDGET,
};
pub use sparse::{CsrMatrix, NormMode, SparseGraph};
pub use stats::{compute_stats, GraphStats};
