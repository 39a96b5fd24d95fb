use ndarray::{Array2, ArrayView2};

use super::edge::EdgeFunction;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Batch, FeatureLayout};

/// Sum of incoming messages per receiver divided by the receiver's mass.
///
/// Rows are summed in edge order, the same order the simulator uses for its
/// accelerations.
pub fn node_operator_force(
    messages: ArrayView2<f64>,
    receivers: &[usize],
    masses: &[f64],
) -> Result<Array2<f64>> {
    if messages.nrows() != receivers.len() {
        return Err(Error::data("one receiver per message row required"));
    }
    if let Some(m) = masses.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::Invariant(format!("non-positive mass {m}")));
    }
    let mut out = Array2::zeros((masses.len(), messages.ncols()));
    for (row, &i) in messages.rows().into_iter().zip(receivers) {
        let mut dst = out.row_mut(i);
        dst += &row;
    }
    for (mut row, &m) in out.rows_mut().into_iter().zip(masses) {
        row.mapv_inplace(|f| f / m);
    }
    Ok(out)
}

/// Recorded version of [`node_operator_force`] over a batch.
pub fn force_operator_tape(tape: &mut Tape, messages: Var, batch: &Batch) -> Result<Var> {
    if batch.masses.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Invariant("non-positive mass in batch".into()));
    }
    let net = tape.scatter_rows(messages, batch.receivers.clone(), batch.n_nodes());
    let m = tape.leaf(batch.masses.clone());
    let m = tape.broadcast_cols(m, batch.layout.dim);
    Ok(tape.div(net, m))
}

/// Pair forces implied by scalar edge potentials: `F_ij = -dM_ij/dr_i`.
///
/// `r_i` enters an edge input through the receiver-position block and, for
/// periodic layouts, through the displacement `r_j - r_i`; both paths are
/// followed. Sender positions are held fixed, so outgoing messages do not
/// contribute to a node's own force.
pub fn potential_pair_forces(
    tape: &mut Tape,
    edge_fn: &dyn EdgeFunction,
    inputs: Var,
    layout: &FeatureLayout,
) -> Result<(Var, Var)> {
    if edge_fn.out_dim() != 1 {
        return Err(Error::config("potential messages must be scalar"));
    }
    let messages = edge_fn.messages(tape, inputs)?;
    let total = tape.sum(messages);
    let g = tape.grad(total, &[inputs])[0];
    let d = layout.dim;
    let mut dm = tape.slice_cols(g, layout.receiver_position_cols().start, d);
    if let Some(cols) = layout.displacement_cols() {
        let via_disp = tape.slice_cols(g, cols.start, d);
        dm = tape.sub(dm, via_disp);
    }
    let forces = tape.neg(dm);
    Ok((messages, forces))
}
