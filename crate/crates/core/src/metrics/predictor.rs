use ndarray::Array2;

use crate::autodiff::Tape;
use crate::error::Result;
use crate::graph::{Batch, GraphSnapshot};
use crate::model::{
    extract_pairwise, force_operator_tape, node_operator_force, potential_pair_forces,
    AnalyticForce, AnalyticPotential, EdgeFunction, Model, ModelKind,
};
use crate::sim::ForceLaw;

/// Everything the suites need from a model for one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// `None` when the predictor cannot produce accelerations for this
    /// system (GN+ on unseen particles).
    pub accelerations: Option<Array2<f64>>,
    /// `E x d` pair forces.
    pub forces: Array2<f64>,
    /// Pair potentials, when the predictor has them.
    pub potentials: Option<Vec<f64>>,
}

pub trait Predictor {
    fn name(&self) -> String;
    fn predict_step(&self, snapshot: &GraphSnapshot) -> Result<StepOutput>;
}

impl Predictor for Model {
    fn name(&self) -> String {
        self.kind.to_string()
    }

    fn predict_step(&self, snapshot: &GraphSnapshot) -> Result<StepOutput> {
        let batch = Batch::from_one(snapshot)?;
        if self.kind == ModelKind::GnPlus && self.check_batch(&batch).is_err() {
            let pw = extract_pairwise(self, snapshot)?;
            return Ok(StepOutput {
                accelerations: None,
                forces: pw.forces,
                potentials: pw.potentials,
            });
        }
        let p = self.predict_batch(&batch)?;
        Ok(StepOutput {
            accelerations: Some(p.accelerations),
            forces: p.pair_forces,
            potentials: p.pair_potentials,
        })
    }
}

/// The snapshot's own labels, passed through the force node operator.
pub struct GroundTruth;

impl Predictor for GroundTruth {
    fn name(&self) -> String {
        "ground-truth".into()
    }

    fn predict_step(&self, snapshot: &GraphSnapshot) -> Result<StepOutput> {
        let acc = node_operator_force(
            snapshot.truth.forces.view(),
            &snapshot.edges.receivers,
            &snapshot.masses,
        )?;
        Ok(StepOutput {
            accelerations: Some(acc),
            forces: snapshot.truth.forces.clone(),
            potentials: Some(snapshot.truth.potentials.clone()),
        })
    }
}

/// An analytic law in place of the edge network, behind either node
/// operator.
pub struct AnalyticOracle {
    pub law: ForceLaw,
    pub potential: bool,
}

impl Predictor for AnalyticOracle {
    fn name(&self) -> String {
        format!(
            "{}-oracle-{}",
            self.law,
            if self.potential { "potential" } else { "force" }
        )
    }

    fn predict_step(&self, snapshot: &GraphSnapshot) -> Result<StepOutput> {
        let layout = snapshot.layout;
        let batch = Batch::from_one(snapshot)?;
        let mut tape = Tape::new();
        let x = tape.leaf(batch.edge_inputs.clone());
        let (messages, forces) = if self.potential {
            let edge = AnalyticPotential {
                law: self.law,
                layout,
            };
            potential_pair_forces(&mut tape, &edge, x, &layout)?
        } else {
            let m = AnalyticForce {
                law: self.law,
                layout,
            }
            .messages(&mut tape, x)?;
            (m, m)
        };
        let acc = force_operator_tape(&mut tape, forces, &batch)?;
        Ok(StepOutput {
            accelerations: Some(tape.value(acc).clone()),
            forces: tape.value(forces).clone(),
            potentials: self
                .potential
                .then(|| tape.value(messages).iter().copied().collect()),
        })
    }
}
