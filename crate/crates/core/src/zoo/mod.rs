//! GNN layers and model assembly.

pub mod layers;
mod model;
mod spec;

pub use model::{build_model, count_params, GraphViews, Model, ModelInput, GAT_SLOPE};
pub use spec::{Activation, LayerKind, LayerSpec, ModelSpec, ELU_ALPHA, LEAKY_SLOPE};
