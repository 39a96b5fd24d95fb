//! Physics-induced graph networks for learning pairwise particle
//! interactions from accelerations.
//!
//! An edge MLP predicts a message for every directed particle pair. A fixed
//! Newtonian node operator turns messages into accelerations: either by
//! summing them as forces and dividing by mass, or by treating them as pair
//! potentials and differentiating with respect to the receiver position.
//! Only accelerations are used as training targets; the messages can then be
//! read out as pairwise forces or potentials.

pub mod autodiff;
pub mod error;

pub use error::{Error, Result};
pub mod graph;
pub mod lj;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod train;
