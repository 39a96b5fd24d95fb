//! Ground-truth trajectories for the analytic pairwise laws.

mod integrate;
pub mod io;
mod law;
mod trajectory;

pub use integrate::{
    sample_initial_system, simulate, simulate_substeps, DEFAULT_DT, DEFAULT_SUBSTEPS,
};
pub(crate) use integrate::{integrate, Schedule};
pub use law::{Body, ForceLaw, DEFAULT_SOFTENING};
pub use trajectory::{
    evaluate_configuration, EdgeLabels, EdgeList, Interaction, ParticleState, Trajectory,
    TrajectoryHeader,
};
