use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Interaction;

/// Bumped whenever the column order below changes.
pub const LAYOUT_VERSION: u32 = 1;

/// Column layout of node features and edge-network inputs.
///
/// Node features are `[r (d), v (d), q, m]`, with `q` dropped when
/// `with_charge` is false. An edge input is `[eta_receiver, eta_sender]`,
/// followed by the minimum-image displacement `r_sender - r_receiver` when
/// `with_displacement` is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub version: u32,
    pub dim: usize,
    pub with_charge: bool,
    pub with_displacement: bool,
}

impl FeatureLayout {
    pub fn analytic(dim: usize) -> Self {
        Self {
            version: LAYOUT_VERSION,
            dim,
            with_charge: true,
            with_displacement: false,
        }
    }

    /// Periodic systems: no charge, explicit displacement.
    pub fn periodic(dim: usize) -> Self {
        Self {
            version: LAYOUT_VERSION,
            dim,
            with_charge: false,
            with_displacement: true,
        }
    }

    pub fn for_interaction(interaction: &Interaction, dim: usize) -> Self {
        match interaction {
            Interaction::Analytic { .. } => Self::analytic(dim),
            Interaction::LennardJones { .. } => Self::periodic(dim),
        }
    }

    pub fn node_width(&self) -> usize {
        2 * self.dim + 1 + usize::from(self.with_charge)
    }

    pub fn edge_width(&self) -> usize {
        2 * self.node_width() + if self.with_displacement { self.dim } else { 0 }
    }

    pub fn mass_col(&self) -> usize {
        self.node_width() - 1
    }

    /// Columns of the receiver position inside an edge input.
    pub fn receiver_position_cols(&self) -> std::ops::Range<usize> {
        0..self.dim
    }

    pub fn sender_position_cols(&self) -> std::ops::Range<usize> {
        self.node_width()..self.node_width() + self.dim
    }

    pub fn displacement_cols(&self) -> Option<std::ops::Range<usize>> {
        let start = 2 * self.node_width();
        self.with_displacement.then(|| start..start + self.dim)
    }

    /// Human-readable name of every edge-input column.
    pub fn edge_columns(&self) -> Vec<String> {
        let axes = ["x", "y", "z"];
        let node = |prefix: &str| {
            let mut cols = Vec::new();
            for a in &axes[..self.dim] {
                cols.push(format!("{prefix}.r{a}"));
            }
            for a in &axes[..self.dim] {
                cols.push(format!("{prefix}.v{a}"));
            }
            if self.with_charge {
                cols.push(format!("{prefix}.q"));
            }
            cols.push(format!("{prefix}.m"));
            cols
        };
        let mut cols = node("recv");
        cols.extend(node("send"));
        if self.with_displacement {
            for a in &axes[..self.dim] {
                cols.push(format!("disp.{a}"));
            }
        }
        cols
    }

    pub fn check_compatible(&self, other: &FeatureLayout) -> Result<()> {
        if self != other {
            return Err(Error::data(format!(
                "feature layout mismatch: {self:?} vs {other:?}"
            )));
        }
        Ok(())
    }
}
