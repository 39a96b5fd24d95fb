//! Reverse-mode tape over dense row-major matrices.
//!
//! Every node stores its forward value eagerly. Backward passes are
//! themselves recorded as ordinary tape operations, so the gradient returned
//! by [`Tape::grad`] is a regular [`Var`] that can be differentiated again.
//! That is what makes the parameter gradient of an input gradient (the
//! potential-variant training signal) available.
//!
//! Scalars are 1x1 matrices.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use super::activation::ActivationKind;

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    Leaf,
    /// `op(a) * op(b)` where `op` optionally transposes.
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Elementwise quotient.
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    /// Matrix plus a 1 x m row broadcast over rows.
    AddRow(Var, Var),
    /// n x m -> 1 x m
    SumRows(Var),
    /// 1 x m -> n x m
    BroadcastRows(Var, usize),
    /// n x m -> n x 1
    SumCols(Var),
    /// n x 1 -> n x m
    BroadcastCols(Var, usize),
    /// Sum of all entries, 1 x 1.
    Sum(Var),
    /// 1 x 1 -> rows x cols
    Fill(Var, usize, usize),
    /// `order`-th derivative of an activation, elementwise.
    Activation(Var, ActivationKind, u8),
    Abs(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    /// Columns `start..start+len`.
    SliceCols(Var, usize, usize),
    /// Embed into `total` zero columns starting at `start`.
    PadCols(Var, usize, usize),
    /// `out[e] = x[idx[e]]`
    GatherRows(Var, Arc<[usize]>),
    /// `out[idx[e]] += x[e]`, output has `n` rows.
    ScatterRows(Var, Arc<[usize]>, usize),
}

impl Op {
    fn parents(&self) -> impl Iterator<Item = Var> {
        let (a, b) = match *self {
            Op::Leaf => (None, None),
            Op::MatMul { a, b, .. }
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b) => (Some(a), Some(b)),
            Op::AddRow(a, b) => (Some(a), Some(b)),
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::SumRows(a)
            | Op::BroadcastRows(a, _)
            | Op::SumCols(a)
            | Op::BroadcastCols(a, _)
            | Op::Sum(a)
            | Op::Fill(a, _, _)
            | Op::Activation(a, _, _)
            | Op::Abs(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::SliceCols(a, _, _)
            | Op::PadCols(a, _, _)
            | Op::GatherRows(a, _)
            | Op::ScatterRows(a, _, _) => (Some(a), None),
        };
        a.into_iter().chain(b)
    }
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn compute<'a>(op: &Op, get: impl Fn(Var) -> &'a Array2<f64>) -> Array2<f64> {
    match op {
        Op::Leaf => unreachable!("leaves carry their own values"),
        Op::MatMul { a, b, ta, tb } => {
            let a = if *ta { get(*a).t() } else { get(*a).view() };
            let b = if *tb { get(*b).t() } else { get(*b).view() };
            a.dot(&b)
        }
        Op::Add(a, b) => get(*a) + get(*b),
        Op::Sub(a, b) => get(*a) - get(*b),
        Op::Mul(a, b) => get(*a) * get(*b),
        Op::Div(a, b) => get(*a) / get(*b),
        Op::Neg(a) => get(*a).mapv(|v| -v),
        Op::Scale(a, c) => get(*a) * *c,
        Op::AddRow(a, b) => get(*a) + get(*b),
        Op::SumRows(a) => get(*a).sum_axis(Axis(0)).insert_axis(Axis(0)),
        Op::BroadcastRows(a, n) => {
            let row = get(*a);
            row.broadcast((*n, row.ncols())).unwrap().to_owned()
        }
        Op::SumCols(a) => get(*a).sum_axis(Axis(1)).insert_axis(Axis(1)),
        Op::BroadcastCols(a, m) => {
            let col = get(*a);
            col.broadcast((col.nrows(), *m)).unwrap().to_owned()
        }
        Op::Sum(a) => Array2::from_elem((1, 1), get(*a).sum()),
        Op::Fill(a, r, c) => Array2::from_elem((*r, *c), get(*a)[[0, 0]]),
        Op::Activation(a, kind, order) => get(*a).mapv(|v| kind.derivative(v, *order)),
        Op::Abs(a) => get(*a).mapv(f64::abs),
        Op::Exp(a) => get(*a).mapv(f64::exp),
        Op::Ln(a) => get(*a).mapv(f64::ln),
        Op::Sqrt(a) => get(*a).mapv(f64::sqrt),
        Op::SliceCols(a, start, len) => get(*a).slice(s![.., *start..*start + *len]).to_owned(),
        Op::PadCols(a, start, total) => {
            let x = get(*a);
            let mut out = Array2::zeros((x.nrows(), *total));
            out.slice_mut(s![.., *start..*start + x.ncols()]).assign(x);
            out
        }
        Op::GatherRows(a, idx) => get(*a).select(Axis(0), idx),
        Op::ScatterRows(a, idx, n) => {
            let x = get(*a);
            let mut out = Array2::zeros((*n, x.ncols()));
            for (row, &target) in x.rows().into_iter().zip(idx.iter()) {
                let mut dst = out.row_mut(target);
                dst += &row;
            }
            out
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let x = self.value(v);
        assert_eq!(x.dim(), (1, 1), "expected a scalar node");
        x[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.leaf(Array2::from_elem((1, 1), x))
    }

    fn push(&mut self, op: Op) -> Var {
        let value = compute(&op, |v| &self.nodes[v.0].value);
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let inner_a = if ta { ar } else { ac };
        let inner_b = if tb { bc } else { br };
        assert_eq!(inner_a, inner_b, "matmul inner dimensions differ");
        self.push(Op::MatMul { a, b, ta, tb })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes differ");
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shapes differ");
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes differ");
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "div shapes differ");
        self.push(Op::Div(a, b))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.push(Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::Scale(a, c))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (_, m) = self.shape(x);
        assert_eq!(self.shape(row), (1, m), "row broadcast shape");
        self.push(Op::AddRow(x, row))
    }

    pub fn sum_rows(&mut self, x: Var) -> Var {
        self.push(Op::SumRows(x))
    }

    pub fn broadcast_rows(&mut self, row: Var, n: usize) -> Var {
        assert_eq!(self.shape(row).0, 1);
        self.push(Op::BroadcastRows(row, n))
    }

    pub fn sum_cols(&mut self, x: Var) -> Var {
        self.push(Op::SumCols(x))
    }

    pub fn broadcast_cols(&mut self, col: Var, m: usize) -> Var {
        assert_eq!(self.shape(col).1, 1);
        self.push(Op::BroadcastCols(col, m))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.push(Op::Sum(x))
    }

    pub fn fill(&mut self, scalar: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(self.shape(scalar), (1, 1));
        self.push(Op::Fill(scalar, rows, cols))
    }

    pub fn activation(&mut self, x: Var, kind: ActivationKind) -> Var {
        self.push(Op::Activation(x, kind, 0))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.push(Op::Abs(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.push(Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.push(Op::Ln(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.push(Op::Sqrt(x))
    }

    /// A constant of the same shape as `like`, every entry `c`.
    pub fn constant_like(&mut self, like: Var, c: f64) -> Var {
        let shape = self.shape(like);
        self.leaf(Array2::from_elem(shape, c))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.shape(x).1, "column slice out of range");
        self.push(Op::SliceCols(x, start, len))
    }

    pub fn pad_cols(&mut self, x: Var, start: usize, total: usize) -> Var {
        assert!(start + self.shape(x).1 <= total, "column pad out of range");
        self.push(Op::PadCols(x, start, total))
    }

    /// Horizontal concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(ra, rb, "concat row counts differ");
        let pa = self.pad_cols(a, 0, ca + cb);
        let pb = self.pad_cols(b, ca, ca + cb);
        self.add(pa, pb)
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Var {
        let n = self.shape(x).0;
        assert!(idx.iter().all(|&i| i < n), "gather index out of range");
        self.push(Op::GatherRows(x, idx))
    }

    pub fn scatter_rows(&mut self, x: Var, idx: Arc<[usize]>, n: usize) -> Var {
        assert_eq!(self.shape(x).0, idx.len(), "one target per row");
        assert!(idx.iter().all(|&i| i < n), "scatter index out of range");
        self.push(Op::ScatterRows(x, idx, n))
    }

    /// Reverse accumulation of `d output / d wrt` for a scalar `output`.
    ///
    /// The returned gradients are tape nodes with the same shapes as `wrt`,
    /// recorded so they can be differentiated again. Nodes of `wrt` that do
    /// not influence `output` get an all-zero leaf.
    ///
    /// # Panics
    /// If `output` is not 1 x 1.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(
            self.shape(output),
            (1, 1),
            "gradients are only defined for scalar outputs"
        );
        let n = output.0 + 1;

        // Only propagate along nodes that depend on something in `wrt`.
        let mut needed = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needed[w.0] = true;
            }
        }
        for i in 0..n {
            if !needed[i] {
                needed[i] = self.nodes[i].op.parents().any(|p| needed[p.0]);
            }
        }

        let mut adj: Vec<Option<Var>> = vec![None; n];
        if needed[output.0] {
            adj[output.0] = Some(self.scalar(1.0));
        }

        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            if !needed[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let give = |tape: &mut Tape, adj: &mut Vec<Option<Var>>, p: Var, c: Var| {
                adj[p.0] = Some(match adj[p.0] {
                    Some(prev) => tape.add(prev, c),
                    None => c,
                });
            };
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b, ta, tb } => {
                    if needed[a.0] {
                        let da = if ta {
                            self.matmul_t(b, g, tb, true)
                        } else {
                            self.matmul_t(g, b, false, !tb)
                        };
                        give(self, &mut adj, a, da);
                    }
                    if needed[b.0] {
                        let db = if tb {
                            self.matmul_t(g, a, true, ta)
                        } else {
                            self.matmul_t(a, g, !ta, false)
                        };
                        give(self, &mut adj, b, db);
                    }
                }
                Op::Add(a, b) => {
                    if needed[a.0] {
                        give(self, &mut adj, a, g);
                    }
                    if needed[b.0] {
                        give(self, &mut adj, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if needed[a.0] {
                        give(self, &mut adj, a, g);
                    }
                    if needed[b.0] {
                        let nb = self.neg(g);
                        give(self, &mut adj, b, nb);
                    }
                }
                Op::Mul(a, b) => {
                    if needed[a.0] {
                        let da = self.mul(g, b);
                        give(self, &mut adj, a, da);
                    }
                    if needed[b.0] {
                        let db = self.mul(g, a);
                        give(self, &mut adj, b, db);
                    }
                }
                Op::Div(a, b) => {
                    if needed[a.0] {
                        let da = self.div(g, b);
                        give(self, &mut adj, a, da);
                    }
                    if needed[b.0] {
                        // d(a/b)/db = -(a/b)/b
                        let q = self.mul(g, Var(i));
                        let q = self.div(q, b);
                        let db = self.neg(q);
                        give(self, &mut adj, b, db);
                    }
                }
                Op::Neg(a) => {
                    let da = self.neg(g);
                    give(self, &mut adj, a, da);
                }
                Op::Scale(a, c) => {
                    let da = self.scale(g, c);
                    give(self, &mut adj, a, da);
                }
                Op::AddRow(x, row) => {
                    if needed[x.0] {
                        give(self, &mut adj, x, g);
                    }
                    if needed[row.0] {
                        let dr = self.sum_rows(g);
                        give(self, &mut adj, row, dr);
                    }
                }
                Op::SumRows(x) => {
                    let rows = self.shape(x).0;
                    let dx = self.broadcast_rows(g, rows);
                    give(self, &mut adj, x, dx);
                }
                Op::BroadcastRows(row, _) => {
                    let dr = self.sum_rows(g);
                    give(self, &mut adj, row, dr);
                }
                Op::SumCols(x) => {
                    let cols = self.shape(x).1;
                    let dx = self.broadcast_cols(g, cols);
                    give(self, &mut adj, x, dx);
                }
                Op::BroadcastCols(col, _) => {
                    let dc = self.sum_cols(g);
                    give(self, &mut adj, col, dc);
                }
                Op::Sum(x) => {
                    let (r, c) = self.shape(x);
                    let dx = self.fill(g, r, c);
                    give(self, &mut adj, x, dx);
                }
                Op::Fill(s, _, _) => {
                    let ds = self.sum(g);
                    give(self, &mut adj, s, ds);
                }
                Op::Activation(x, kind, order) => {
                    let slope = self.push(Op::Activation(x, kind, order + 1));
                    let dx = self.mul(g, slope);
                    give(self, &mut adj, x, dx);
                }
                Op::Abs(x) => {
                    // Subgradient 0 at the kink; the sign is a constant.
                    let sign = self.value(x).mapv(|v| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    let sign = self.leaf(sign);
                    let dx = self.mul(g, sign);
                    give(self, &mut adj, x, dx);
                }
                Op::Exp(x) => {
                    let dx = self.mul(g, Var(i));
                    give(self, &mut adj, x, dx);
                }
                Op::Ln(x) => {
                    let dx = self.div(g, x);
                    give(self, &mut adj, x, dx);
                }
                Op::Sqrt(x) => {
                    let twice = self.scale(Var(i), 2.0);
                    let dx = self.div(g, twice);
                    give(self, &mut adj, x, dx);
                }
                Op::SliceCols(x, start, _) => {
                    let total = self.shape(x).1;
                    let dx = self.pad_cols(g, start, total);
                    give(self, &mut adj, x, dx);
                }
                Op::PadCols(x, start, _) => {
                    let len = self.shape(x).1;
                    let dx = self.slice_cols(g, start, len);
                    give(self, &mut adj, x, dx);
                }
                Op::GatherRows(x, idx) => {
                    let rows = self.shape(x).0;
                    let dx = self.scatter_rows(g, idx, rows);
                    give(self, &mut adj, x, dx);
                }
                Op::ScatterRows(x, idx, _) => {
                    let dx = self.gather_rows(g, idx);
                    give(self, &mut adj, x, dx);
                }
            }
        }

        wrt.iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(w);
                    self.leaf(Array2::zeros(shape))
                }
            })
            .collect()
    }

    /// Recompute every node from the leaves.
    pub fn replay(&self) -> Vec<Array2<f64>> {
        let mut values: Vec<Array2<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => compute(op, |p| &values[p.0]),
            };
            values.push(v);
        }
        values
    }

    /// Tape order is a topological order: parents precede children.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.op.parents().all(|p| p.0 < i))
    }
}
