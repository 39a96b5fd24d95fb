use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis};

use super::layout::FeatureLayout;
use super::snapshot::GraphSnapshot;
use crate::error::{Error, Result};

/// Several snapshots merged into one disconnected graph.
///
/// Node and edge indices are global; snapshot `b` owns nodes
/// `node_offsets[b]..node_offsets[b+1]` and the analogous edge range. The
/// weights turn plain sums into "mean over snapshots of the mean over nodes
/// (edges)".
#[derive(Clone, Debug)]
pub struct Batch {
    pub layout: FeatureLayout,
    pub steps: Vec<usize>,
    pub node_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
    /// `E x edge_width`
    pub edge_inputs: Array2<f64>,
    pub receivers: Arc<[usize]>,
    pub senders: Arc<[usize]>,
    pub reverse: Arc<[usize]>,
    /// `N x node_width`
    pub node_features: Array2<f64>,
    /// Particle index within its own snapshot, per node.
    pub particles: Arc<[usize]>,
    /// `N x 1`
    pub masses: Array2<f64>,
    /// `N x d`
    pub targets: Array2<f64>,
    /// `N x 1`, `1 / (B n_b)`
    pub node_weights: Array2<f64>,
    /// `E x 1`, `1 / (B E_b)`
    pub edge_weights: Array2<f64>,
}

impl Batch {
    pub fn new(snapshots: &[&GraphSnapshot]) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::data("cannot batch zero snapshots"))?;
        let layout = first.layout;
        if let Some(bad) = snapshots.iter().find(|s| s.layout != layout) {
            layout.check_compatible(&bad.layout)?;
        }
        let b = snapshots.len() as f64;
        let mut node_offsets = vec![0];
        let mut edge_offsets = vec![0];
        let (mut receivers, mut senders, mut reverse, mut particles) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut node_w, mut edge_w, mut masses) = (Vec::new(), Vec::new(), Vec::new());
        for snap in snapshots {
            let n0 = *node_offsets.last().unwrap();
            let e0 = *edge_offsets.last().unwrap();
            let (n, e) = (snap.n_nodes(), snap.n_edges());
            receivers.extend(snap.edges.receivers.iter().map(|r| r + n0));
            senders.extend(snap.edges.senders.iter().map(|s| s + n0));
            reverse.extend(snap.reverse.iter().map(|r| r + e0));
            particles.extend(0..n);
            masses.extend_from_slice(&snap.masses);
            node_w.extend(std::iter::repeat_n(1.0 / (b * n as f64), n));
            edge_w.extend(std::iter::repeat_n(1.0 / (b * e.max(1) as f64), e));
            node_offsets.push(n0 + n);
            edge_offsets.push(e0 + e);
        }
        let stack = |parts: Vec<Array2<f64>>| -> Array2<f64> {
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            concatenate(Axis(0), &views).unwrap()
        };
        let col = |v: Vec<f64>| Array2::from_shape_vec((v.len(), 1), v).unwrap();
        Ok(Self {
            layout,
            steps: snapshots.iter().map(|s| s.step).collect(),
            edge_inputs: stack(snapshots.iter().map(|s| s.edge_inputs()).collect()),
            node_features: stack(snapshots.iter().map(|s| s.node_features.clone()).collect()),
            targets: stack(snapshots.iter().map(|s| s.targets.clone()).collect()),
            node_offsets,
            edge_offsets,
            receivers: receivers.into(),
            senders: senders.into(),
            reverse: reverse.into(),
            particles: particles.into(),
            masses: col(masses),
            node_weights: col(node_w),
            edge_weights: col(edge_w),
        })
    }

    pub fn from_one(snapshot: &GraphSnapshot) -> Result<Self> {
        Self::new(&[snapshot])
    }

    pub fn n_nodes(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_inputs.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.steps.len()
    }

    /// Rows of a per-node array belonging to snapshot `b`.
    pub fn node_rows<'a>(&self, a: &'a Array2<f64>, b: usize) -> ndarray::ArrayView2<'a, f64> {
        a.slice(s![self.node_offsets[b]..self.node_offsets[b + 1], ..])
    }

    pub fn edge_rows<'a>(&self, a: &'a Array2<f64>, b: usize) -> ndarray::ArrayView2<'a, f64> {
        a.slice(s![self.edge_offsets[b]..self.edge_offsets[b + 1], ..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_snapshot, Topology};
    use crate::sim::{sample_initial_system, simulate, ForceLaw};

    #[test]
    fn offsets_and_weights() {
        let sys = sample_initial_system(3, 2, 0).unwrap();
        let traj = simulate(&sys, ForceLaw::charge(), 4, 0.01, 0).unwrap();
        let a = build_snapshot(&traj, 0, Topology::Full).unwrap();
        let b = build_snapshot(&traj, 2, Topology::Full).unwrap();
        let batch = Batch::new(&[&a, &b]).unwrap();
        assert_eq!(batch.n_nodes(), 6);
        assert_eq!(batch.n_edges(), 12);
        assert_eq!(batch.receivers[6], 3);
        assert_eq!(batch.reverse[batch.reverse[7]], 7);
        assert!((batch.node_weights.sum() - 1.0).abs() < 1e-15);
        assert!((batch.edge_weights.sum() - 1.0).abs() < 1e-15);
        assert_eq!(batch.node_rows(&batch.targets, 1), b.targets);
    }
}
