//! Learning-ready graphs built from trajectories.
//!
//! A [`GraphSnapshot`] holds one time step: node features, the directed edge
//! list, optional per-edge geometry and the acceleration targets. Snapshots
//! are cheap to build, so datasets keep the trajectory and construct them on
//! demand.

mod batch;
mod layout;
mod noise;
mod snapshot;
mod split;

pub use batch::Batch;
pub use layout::{FeatureLayout, LAYOUT_VERSION};
pub use noise::{corrupt_positions, finite_difference_kinematics, interior, noise_level};
pub use snapshot::{build_snapshot, snapshot_for_edges, DatasetManifest, GraphDataset, GraphSnapshot, Topology};
pub use split::{split_timesteps, SplitSpec, DEFAULT_RATIOS};
