//! Graph-network architectures: the two physics-induced variants with a
//! parameter-free Newtonian node operator, and the learned-node baselines.

mod edge;
mod network;
mod operator;

pub use edge::{AnalyticForce, AnalyticPotential, BoundMlp, EdgeFunction};
pub use network::{
    extract_pairwise, ArchSpec, Forward, Model, ModelBinding, ModelCheckpoint, ModelKind,
    Pairwise, Prediction, MODEL_CHECKPOINT_VERSION,
};
pub use operator::{force_operator_tape, node_operator_force, potential_pair_forces};
