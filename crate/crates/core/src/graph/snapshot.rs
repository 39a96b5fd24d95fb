use std::path::PathBuf;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::layout::FeatureLayout;
use super::split::SplitSpec;
use crate::error::{Error, Result};
use crate::sim::{EdgeLabels, EdgeList, Trajectory};

/// Which particle pairs become edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    /// Every ordered pair `i != j`.
    Full,
    /// Pairs closer than `radius` under the trajectory's periodic box.
    Cutoff { radius: f64 },
}

impl Topology {
    /// Full graphs for open systems, the interaction cutoff for periodic ones.
    pub fn default_for(traj: &Trajectory) -> Self {
        match traj.interaction().cutoff() {
            Some(radius) => Topology::Cutoff { radius },
            None => Topology::Full,
        }
    }
}

/// One time step as a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSnapshot {
    pub step: usize,
    pub layout: FeatureLayout,
    pub edges: EdgeList,
    /// Index of the opposite-direction edge.
    pub reverse: Vec<usize>,
    /// `n x node_width`
    pub node_features: Array2<f64>,
    /// `E x d` displacement `r_sender - r_receiver` (minimum image when
    /// periodic).
    pub displacements: Array2<f64>,
    pub masses: Vec<f64>,
    /// `n x d`
    pub targets: Array2<f64>,
    /// Exact pair forces and potentials on the same edge list.
    pub truth: EdgeLabels,
}

impl GraphSnapshot {
    pub fn n_nodes(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// `E x edge_width` edge-network inputs.
    pub fn edge_inputs(&self) -> Array2<f64> {
        let w = self.layout.node_width();
        let mut out = Array2::zeros((self.n_edges(), self.layout.edge_width()));
        for (e, (&i, &j)) in self.edges.receivers.iter().zip(&self.edges.senders).enumerate() {
            out.slice_mut(s![e, 0..w]).assign(&self.node_features.row(i));
            out.slice_mut(s![e, w..2 * w]).assign(&self.node_features.row(j));
        }
        if let Some(cols) = self.layout.displacement_cols() {
            out.slice_mut(s![.., cols]).assign(&self.displacements);
        }
        out
    }

    /// Pair distances, one per edge.
    pub fn distances(&self) -> Vec<f64> {
        self.displacements
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .collect()
    }
}

/// Assemble the graph for step `t`.
pub fn build_snapshot(traj: &Trajectory, t: usize, topology: Topology) -> Result<GraphSnapshot> {
    if t >= traj.n_steps() {
        return Err(Error::data(format!(
            "step {t} outside trajectory of {} steps",
            traj.n_steps()
        )));
    }
    let interaction = traj.interaction();
    let box_length = interaction.box_length();
    let positions = traj.positions_at(t);
    let edges = match topology {
        Topology::Full => EdgeList::complete(traj.n_particles()),
        Topology::Cutoff { radius } => {
            let Some(l) = box_length else {
                return Err(Error::config("cutoff topology needs a periodic box"));
            };
            EdgeList::within_cutoff(positions, radius, Some(l))
        }
    };
    snapshot_for_edges(traj, t, edges)
}

/// Graph for step `t` on a caller-supplied, symmetric edge list. Ground
/// truth is evaluated for exactly these pairs, even beyond any cutoff.
pub fn snapshot_for_edges(traj: &Trajectory, t: usize, edges: EdgeList) -> Result<GraphSnapshot> {
    if t >= traj.n_steps() {
        return Err(Error::data(format!(
            "step {t} outside trajectory of {} steps",
            traj.n_steps()
        )));
    }
    let interaction = traj.interaction();
    let positions = traj.positions_at(t);
    let d = traj.dim();
    let layout = FeatureLayout::for_interaction(interaction, d);
    let n = traj.n_particles();

    let mut node_features = Array2::zeros((n, layout.node_width()));
    node_features.slice_mut(s![.., 0..d]).assign(&positions);
    node_features.slice_mut(s![.., d..2 * d]).assign(&traj.velocities_at(t));
    if layout.with_charge {
        for (i, &q) in traj.charges.iter().enumerate() {
            node_features[[i, 2 * d]] = q;
        }
    }
    let mc = layout.mass_col();
    for (i, &m) in traj.masses.iter().enumerate() {
        node_features[[i, mc]] = m;
    }

    let mut displacements = Array2::zeros((edges.len(), d));
    for (e, (&i, &j)) in edges.receivers.iter().zip(&edges.senders).enumerate() {
        let ri = positions.row(i);
        let rj = positions.row(j);
        let mut row = displacements.row_mut(e);
        interaction.displacement(
            ri.as_slice().unwrap(),
            rj.as_slice().unwrap(),
            row.as_slice_mut().unwrap(),
        );
    }

    let truth = truth_labels(traj, t, &edges)?;
    let reverse = edges.reverse_index()?;
    Ok(GraphSnapshot {
        step: t,
        layout,
        edges,
        reverse,
        node_features,
        displacements,
        masses: traj.masses.clone(),
        targets: traj.accelerations_at(t).to_owned(),
        truth,
    })
}

fn truth_labels(traj: &Trajectory, t: usize, edges: &EdgeList) -> Result<EdgeLabels> {
    let stored = traj.labels_at(t)?;
    if &stored.edges == edges {
        return Ok(stored.into_owned());
    }
    // Different edge set (e.g. a custom cutoff): evaluate pair by pair on the
    // positions the stored labels were computed from.
    let interaction = traj.interaction();
    let positions = traj.positions_at(t);
    let d = traj.dim();
    let mut forces = Array2::zeros((edges.len(), d));
    let mut potentials = Vec::with_capacity(edges.len());
    let mut disp = vec![0.0; d];
    for (e, (&i, &j)) in edges.receivers.iter().zip(&edges.senders).enumerate() {
        let ri = positions.row(i);
        let rj = positions.row(j);
        let (ri, rj) = (ri.as_slice().unwrap(), rj.as_slice().unwrap());
        interaction.displacement(ri, rj, &mut disp);
        let a = crate::sim::Body {
            position: ri,
            mass: traj.masses[i],
            charge: traj.charges[i],
        };
        let b = crate::sim::Body {
            position: rj,
            mass: traj.masses[j],
            charge: traj.charges[j],
        };
        let mut row = forces.row_mut(e);
        let p = interaction
            .evaluate(&disp, &a, &b, row.as_slice_mut().unwrap())
            .ok_or(Error::Singularity { i, j })?;
        potentials.push(p);
    }
    Ok(EdgeLabels {
        edges: edges.clone(),
        forces,
        potentials,
    })
}

/// A trajectory viewed as a sequence of graphs.
#[derive(Clone, Debug)]
pub struct GraphDataset {
    pub trajectory: Trajectory,
    pub topology: Topology,
    pub layout: FeatureLayout,
}

impl GraphDataset {
    pub fn new(trajectory: Trajectory, topology: Topology) -> Self {
        let layout = FeatureLayout::for_interaction(trajectory.interaction(), trajectory.dim());
        Self {
            trajectory,
            topology,
            layout,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.trajectory.n_steps()
    }

    pub fn snapshot(&self, t: usize) -> Result<GraphSnapshot> {
        build_snapshot(&self.trajectory, t, self.topology)
    }

    pub fn snapshots(&self, steps: &[usize]) -> Result<Vec<GraphSnapshot>> {
        steps.iter().map(|&t| self.snapshot(t)).collect()
    }
}

/// On-disk description of how a dataset was derived from a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: PathBuf,
    pub topology: Topology,
    pub layout: FeatureLayout,
    pub split: SplitSpec,
    /// Position-noise amplitude; 0 for clean data.
    pub beta: f64,
    pub noise_seed: u64,
}

impl DatasetManifest {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
