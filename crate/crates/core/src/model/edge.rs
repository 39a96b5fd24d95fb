use ndarray::Array2;

use crate::autodiff::{MlpBinding, MlpParams, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::FeatureLayout;
use crate::sim::{Body, ForceLaw};

/// Anything that maps edge inputs (`E x edge_width`) to messages
/// (`E x out_dim`) on a tape.
pub trait EdgeFunction {
    fn out_dim(&self) -> usize;
    fn messages(&self, tape: &mut Tape, inputs: Var) -> Result<Var>;
}

/// An MLP together with its parameter handles on one tape.
pub struct BoundMlp<'a> {
    pub params: &'a MlpParams,
    pub binding: &'a MlpBinding,
}

impl EdgeFunction for BoundMlp<'_> {
    fn out_dim(&self) -> usize {
        self.params.out_dim()
    }

    fn messages(&self, tape: &mut Tape, inputs: Var) -> Result<Var> {
        self.params.forward_tape(tape, self.binding, inputs)
    }
}

/// The exact pairwise force of an analytic law, used in place of a network.
/// Messages are constants with respect to the inputs.
pub struct AnalyticForce {
    pub law: ForceLaw,
    pub layout: FeatureLayout,
}

impl EdgeFunction for AnalyticForce {
    fn out_dim(&self) -> usize {
        self.layout.dim
    }

    fn messages(&self, tape: &mut Tape, inputs: Var) -> Result<Var> {
        let x = tape.value(inputs).clone();
        let d = self.layout.dim;
        let mut out = Array2::zeros((x.nrows(), d));
        for (e, row) in x.rows().into_iter().enumerate() {
            let (a, b, disp) = endpoints(&self.layout, row.as_slice().unwrap())?;
            let mut f = out.row_mut(e);
            self.law
                .evaluate_displacement(&disp, &a, &b, f.as_slice_mut().unwrap())
                .ok_or(Error::Singularity { i: 0, j: 1 })?;
        }
        Ok(tape.leaf(out))
    }
}

fn endpoints<'r>(layout: &FeatureLayout, row: &'r [f64]) -> Result<(Body<'r>, Body<'r>, Vec<f64>)> {
    if !layout.with_charge {
        return Err(Error::config("analytic laws need the charge column"));
    }
    let d = layout.dim;
    let w = layout.node_width();
    let a = Body {
        position: &row[0..d],
        charge: row[2 * d],
        mass: row[w - 1],
    };
    let b = Body {
        position: &row[w..w + d],
        charge: row[w + 2 * d],
        mass: row[2 * w - 1],
    };
    let disp = (0..d).map(|k| row[w + k] - row[k]).collect();
    Ok((a, b, disp))
}

/// The exact pair potential of an analytic law written with tape
/// operations, so that its input gradient comes from automatic
/// differentiation exactly as for a network.
pub struct AnalyticPotential {
    pub law: ForceLaw,
    pub layout: FeatureLayout,
}

impl EdgeFunction for AnalyticPotential {
    fn out_dim(&self) -> usize {
        1
    }

    fn messages(&self, tape: &mut Tape, inputs: Var) -> Result<Var> {
        let l = &self.layout;
        if !l.with_charge {
            return Err(Error::config("analytic laws need the charge column"));
        }
        let (d, w) = (l.dim, l.node_width());
        let ri = tape.slice_cols(inputs, 0, d);
        let rj = tape.slice_cols(inputs, w, d);
        let diff = tape.sub(rj, ri);
        let sq = tape.square(diff);
        let r2 = tape.sum_cols(sq);
        let r = tape.sqrt(r2);
        let qi = tape.slice_cols(inputs, 2 * d, 1);
        let qj = tape.slice_cols(inputs, w + 2 * d, 1);
        let mi = tape.slice_cols(inputs, w - 1, 1);
        let mj = tape.slice_cols(inputs, 2 * w - 1, 1);
        let half_square = |tape: &mut Tape, x: Var, k: f64| {
            let s = tape.square(x);
            tape.scale(s, 0.5 * k)
        };
        Ok(match self.law {
            ForceLaw::Spring { k, rest_length } => {
                let c = tape.constant_like(r, rest_length);
                let stretch = tape.sub(r, c);
                half_square(tape, stretch, k)
            }
            ForceLaw::Charge { c, softening } => {
                let delta = tape.constant_like(r, softening);
                let rs = tape.add(r, delta);
                let qq = tape.mul(qi, qj);
                let qq = tape.scale(qq, c);
                tape.div(qq, rs)
            }
            ForceLaw::Orbital { softening } => {
                let delta = tape.constant_like(r, softening);
                let rs = tape.add(r, delta);
                let log = tape.ln(rs);
                let mm = tape.mul(mi, mj);
                tape.mul(mm, log)
            }
            ForceLaw::Discontinuous { threshold } => {
                let mask = tape.value(r).mapv(|v| if v < threshold { 0.0 } else { 1.0 });
                let mask = tape.leaf(mask);
                let one = tape.constant_like(r, 1.0);
                let stretch = tape.sub(r, one);
                let p = half_square(tape, stretch, 1.0);
                tape.mul(p, mask)
            }
        })
    }
}
