use std::borrow::Cow;

use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use super::law::{Body, ForceLaw};
use crate::error::{Error, Result};
use crate::lj::{minimum_image_into, LjParams};

/// The pair interaction that generated a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interaction {
    Analytic { law: ForceLaw },
    LennardJones { params: LjParams },
}

impl Interaction {
    pub fn name(&self) -> &'static str {
        match self {
            Interaction::Analytic { law } => law.name(),
            Interaction::LennardJones { .. } => "lj",
        }
    }

    pub fn box_length(&self) -> Option<f64> {
        match self {
            Interaction::Analytic { .. } => None,
            Interaction::LennardJones { params } => Some(params.box_length),
        }
    }

    pub fn cutoff(&self) -> Option<f64> {
        match self {
            Interaction::Analytic { .. } => None,
            Interaction::LennardJones { params } => Some(params.cutoff),
        }
    }

    /// `r_j - r_i`, under the minimum-image convention when periodic.
    pub fn displacement(&self, ri: &[f64], rj: &[f64], out: &mut [f64]) {
        match self.box_length() {
            Some(l) => minimum_image_into(ri, rj, l, out),
            None => {
                for ((o, a), b) in out.iter_mut().zip(ri).zip(rj) {
                    *o = b - a;
                }
            }
        }
    }

    /// Force on `a` from `b` into `out`; returns the pair potential.
    pub fn evaluate(&self, displacement: &[f64], a: &Body, b: &Body, out: &mut [f64]) -> Option<f64> {
        match self {
            Interaction::Analytic { law } => law.evaluate_displacement(displacement, a, b, out),
            Interaction::LennardJones { params } => {
                params.evaluate_displacement(displacement, out)
            }
        }
    }
}

/// Directed edge list; edge `e` carries the message from `senders[e]` to
/// `receivers[e]`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EdgeList {
    pub receivers: Vec<usize>,
    pub senders: Vec<usize>,
}

impl EdgeList {
    /// All ordered pairs `i != j`, receiver-major.
    pub fn complete(n: usize) -> Self {
        let mut receivers = Vec::with_capacity(n * n.saturating_sub(1));
        let mut senders = Vec::with_capacity(n * n.saturating_sub(1));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    receivers.push(i);
                    senders.push(j);
                }
            }
        }
        Self { receivers, senders }
    }

    /// Ordered pairs with (minimum-image) distance strictly below `cutoff`.
    pub fn within_cutoff(positions: ArrayView2<f64>, cutoff: f64, box_length: Option<f64>) -> Self {
        let n = positions.nrows();
        let d = positions.ncols();
        let mut disp = vec![0.0; d];
        let c2 = cutoff * cutoff;
        let mut edges = Self::default();
        for i in 0..n {
            let ri = positions.row(i);
            let ri = ri.as_slice().unwrap();
            for j in 0..n {
                if i == j {
                    continue;
                }
                let rj = positions.row(j);
                let rj = rj.as_slice().unwrap();
                match box_length {
                    Some(l) => minimum_image_into(ri, rj, l, &mut disp),
                    None => {
                        for k in 0..d {
                            disp[k] = rj[k] - ri[k];
                        }
                    }
                }
                if disp.iter().map(|x| x * x).sum::<f64>() < c2 {
                    edges.receivers.push(i);
                    edges.senders.push(j);
                }
            }
        }
        edges
    }

    pub fn len(&self) -> usize {
        self.receivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.receivers.is_empty()
    }

    /// Index of the opposite-direction edge for every edge.
    pub fn reverse_index(&self) -> Result<Vec<usize>> {
        use std::collections::HashMap;
        let lookup: HashMap<(usize, usize), usize> = self
            .receivers
            .iter()
            .zip(&self.senders)
            .enumerate()
            .map(|(e, (&r, &s))| ((r, s), e))
            .collect();
        self.receivers
            .iter()
            .zip(&self.senders)
            .map(|(&r, &s)| {
                lookup
                    .get(&(s, r))
                    .copied()
                    .ok_or_else(|| Error::data(format!("edge {s}->{r} has no reverse")))
            })
            .collect()
    }
}

/// Exact per-edge ground truth for one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeLabels {
    pub edges: EdgeList,
    /// `E x d`, row `e` is `F_ij` for edge `e = (i <- j)`.
    pub forces: Array2<f64>,
    pub potentials: Vec<f64>,
}

/// Pairwise labels and accelerations for one configuration.
///
/// Accelerations are `sum_j F_ij / m_i`, summed in edge order, which is the
/// same order the force node operator uses.
pub fn evaluate_configuration(
    interaction: &Interaction,
    positions: ArrayView2<f64>,
    masses: &[f64],
    charges: &[f64],
) -> Result<(EdgeLabels, Array2<f64>)> {
    let n = positions.nrows();
    let d = positions.ncols();
    let edges = match interaction {
        Interaction::Analytic { .. } => EdgeList::complete(n),
        Interaction::LennardJones { params } => {
            EdgeList::within_cutoff(positions, params.cutoff, Some(params.box_length))
        }
    };
    let e = edges.len();
    let mut forces = Array2::zeros((e, d));
    let mut potentials = Vec::with_capacity(e);
    let mut disp = vec![0.0; d];
    let mut net = Array2::<f64>::zeros((n, d));
    for (k, (&i, &j)) in edges.receivers.iter().zip(&edges.senders).enumerate() {
        let ri = positions.row(i);
        let rj = positions.row(j);
        let ri = ri.as_slice().unwrap();
        let rj = rj.as_slice().unwrap();
        interaction.displacement(ri, rj, &mut disp);
        let a = Body {
            position: ri,
            mass: masses[i],
            charge: charges[i],
        };
        let b = Body {
            position: rj,
            mass: masses[j],
            charge: charges[j],
        };
        let mut row = forces.row_mut(k);
        let p = interaction
            .evaluate(&disp, &a, &b, row.as_slice_mut().unwrap())
            .ok_or(Error::Singularity { i, j })?;
        potentials.push(p);
        let mut acc = net.row_mut(i);
        acc += &row;
    }
    for (mut row, &m) in net.rows_mut().into_iter().zip(masses) {
        row.mapv_inplace(|f| f / m);
    }
    Ok((
        EdgeLabels {
            edges,
            forces,
            potentials,
        },
        net,
    ))
}

/// Owned state of a single particle.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub mass: f64,
    pub charge: f64,
}

/// Metadata describing how a trajectory was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub interaction: Interaction,
    pub dim: usize,
    pub n_particles: usize,
    pub n_steps: usize,
    /// Time between recorded steps.
    pub dt: f64,
    /// Integrator steps per recorded interval.
    #[serde(default = "one")]
    pub substeps: usize,
    pub seed: u64,
    /// Length, time, mass units; `None` for dimensionless data.
    pub units: Option<[String; 3]>,
}

fn one() -> usize {
    1
}

/// Time-major record of a simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub masses: Vec<f64>,
    pub charges: Vec<f64>,
    /// `T x n x d`
    pub positions: Array3<f64>,
    pub velocities: Array3<f64>,
    /// Exact accelerations at each recorded step.
    pub accelerations: Array3<f64>,
    /// Per-step labels; `None` means they are recomputed on demand.
    pub labels: Option<Vec<EdgeLabels>>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.positions.shape()[0]
    }

    pub fn n_particles(&self) -> usize {
        self.positions.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.positions.shape()[2]
    }

    pub fn interaction(&self) -> &Interaction {
        &self.header.interaction
    }

    pub fn state(&self, t: usize, i: usize) -> ParticleState {
        ParticleState {
            position: self.positions.slice(ndarray::s![t, i, ..]).to_vec(),
            velocity: self.velocities.slice(ndarray::s![t, i, ..]).to_vec(),
            mass: self.masses[i],
            charge: self.charges[i],
        }
    }

    pub fn positions_at(&self, t: usize) -> ArrayView2<'_, f64> {
        self.positions.index_axis(ndarray::Axis(0), t)
    }

    pub fn velocities_at(&self, t: usize) -> ArrayView2<'_, f64> {
        self.velocities.index_axis(ndarray::Axis(0), t)
    }

    pub fn accelerations_at(&self, t: usize) -> ArrayView2<'_, f64> {
        self.accelerations.index_axis(ndarray::Axis(0), t)
    }

    /// Ground-truth labels at step `t`, stored or recomputed from positions.
    pub fn labels_at(&self, t: usize) -> Result<Cow<'_, EdgeLabels>> {
        if let Some(labels) = &self.labels {
            return Ok(Cow::Borrowed(&labels[t]));
        }
        let (labels, _) = evaluate_configuration(
            &self.header.interaction,
            self.positions_at(t),
            &self.masses,
            &self.charges,
        )?;
        Ok(Cow::Owned(labels))
    }

    /// Ensure labels are stored for every step.
    pub fn materialize_labels(&mut self) -> Result<()> {
        if self.labels.is_none() {
            let labels = (0..self.n_steps())
                .map(|t| self.labels_at(t).map(Cow::into_owned))
                .collect::<Result<Vec<_>>>()?;
            self.labels = Some(labels);
        }
        Ok(())
    }

    /// Total momentum at step `t`.
    pub fn momentum(&self, t: usize) -> Vec<f64> {
        let v = self.velocities_at(t);
        let mut p = vec![0.0; self.dim()];
        for (row, &m) in v.rows().into_iter().zip(&self.masses) {
            for (pk, vk) in p.iter_mut().zip(row) {
                *pk += m * vk;
            }
        }
        p
    }

    pub fn kinetic_energy(&self, t: usize) -> f64 {
        let v = self.velocities_at(t);
        v.rows()
            .into_iter()
            .zip(&self.masses)
            .map(|(row, &m)| 0.5 * m * row.dot(&row))
            .sum()
    }

    /// Kinetic energy plus every unordered pair potential counted once.
    pub fn total_energy(&self, t: usize) -> Result<f64> {
        let labels = self.labels_at(t)?;
        let pair: f64 = labels
            .edges
            .receivers
            .iter()
            .zip(&labels.edges.senders)
            .zip(&labels.potentials)
            .filter(|((i, j), _)| i < j)
            .map(|(_, p)| p)
            .sum();
        Ok(self.kinetic_energy(t) + pair)
    }

    /// Energy whose potential part matches the forces exactly. For the
    /// truncated Lennard-Jones system every pair inside the cutoff is shifted
    /// by `-V(r_c)`, which removes the jumps as pairs cross the cutoff;
    /// otherwise this is [`Trajectory::total_energy`].
    pub fn conserved_energy(&self, t: usize) -> Result<f64> {
        let e = self.total_energy(t)?;
        match self.header.interaction {
            Interaction::LennardJones { params } => {
                let labels = self.labels_at(t)?;
                let pairs = labels.edges.len() as f64 / 2.0;
                let rc = params.cutoff;
                let s6 = (params.sigma / rc).powi(6);
                let v_rc = 4.0 * params.epsilon * (s6 * s6 - s6);
                Ok(e - pairs * v_rc)
            }
            Interaction::Analytic { .. } => Ok(e),
        }
    }
}
