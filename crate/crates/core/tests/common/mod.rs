//! Finite-difference checks shared by the autodiff and acceptance tests.

use ndarray::Array2;
use pignpi_core::autodiff::{grad_input, grad_params, ActivationKind, MlpParams, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SMOOTH: [ActivationKind; 5] = [
    ActivationKind::Silu,
    ActivationKind::Gelu,
    ActivationKind::Tanh,
    ActivationKind::Sigmoid,
    ActivationKind::Softplus,
];

/// Worst relative error `|a - b|_2 / |b|_2` seen for each derivative kind.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradErrors {
    pub params: f64,
    pub input: f64,
    pub mixed: f64,
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

/// A random scalar-output net with random biases.
pub fn random_net(rng: &mut ChaCha8Rng, in_dim: usize) -> MlpParams {
    let activation = SMOOTH[rng.random_range(0..SMOOTH.len())];
    let hidden = rng.random_range(1..=3);
    let width = rng.random_range(2..=6);
    let mut net = MlpParams::with_hidden(in_dim, hidden, width, 1, activation, rng).unwrap();
    for layer in &mut net.layers {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    net
}

fn total(net: &MlpParams, x: &Array2<f64>) -> f64 {
    net.forward(x).unwrap().sum()
}

/// Weighted sum of the input gradient, `sum c * d(sum f)/dx[:, sel]`, as a
/// plain value.
fn weighted_input_grad(net: &MlpParams, x: &Array2<f64>, sel: &[usize], c: &Array2<f64>) -> f64 {
    let mut tape = Tape::new();
    let b = net.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let g = grad_input(&mut tape, net, &b, xv, sel).unwrap();
    (tape.value(g) * c).sum()
}

fn shift(net: &mut MlpParams, flat: &[f64], k: usize, delta: f64) {
    let mut p = flat.to_vec();
    p[k] += delta;
    net.unflatten(&p).unwrap();
}

pub fn check_random_nets(n_nets: usize, seed: u64) -> GradErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = GradErrors::default();
    for _ in 0..n_nets {
        let in_dim = rng.random_range(2..=5);
        let rows = rng.random_range(1..=3);
        let mut net = random_net(&mut rng, in_dim);
        let x = Array2::from_shape_simple_fn((rows, in_dim), || rng.sample::<f64, _>(StandardNormal));
        let sel: Vec<usize> = (0..in_dim).filter(|_| rng.random_bool(0.7)).collect();
        let sel = if sel.is_empty() { vec![0] } else { sel };
        let c = Array2::from_shape_simple_fn((rows, sel.len()), || rng.sample::<f64, _>(StandardNormal));

        let mut tape = Tape::new();
        let b = net.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let out = net.forward_tape(&mut tape, &b, xv).unwrap();
        let s = tape.sum(out);
        let gp = grad_params(&mut tape, &b, s);
        let analytic_p: Vec<f64> = gp.iter().flat_map(|&g| tape.value(g).iter().copied().collect::<Vec<_>>()).collect();
        let gx = tape.grad(s, &[xv])[0];
        let analytic_x: Vec<f64> = tape.value(gx).iter().copied().collect();

        let mut tape = Tape::new();
        let b = net.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let g = grad_input(&mut tape, &net, &b, xv, &sel).unwrap();
        let cv = tape.leaf(c.clone());
        let weighted = tape.mul(g, cv);
        let l = tape.sum(weighted);
        let gm = tape.grad(l, &b.vars());
        let analytic_m: Vec<f64> = gm.iter().flat_map(|&g| tape.value(g).iter().copied().collect::<Vec<_>>()).collect();

        let flat = net.flatten();
        let (h1, h2) = (1e-6, 1e-5);
        let mut fd_p = Vec::with_capacity(flat.len());
        let mut fd_m = Vec::with_capacity(flat.len());
        for k in 0..flat.len() {
            shift(&mut net, &flat, k, h1);
            let fp = total(&net, &x);
            shift(&mut net, &flat, k, -h1);
            let fm = total(&net, &x);
            fd_p.push((fp - fm) / (2.0 * h1));
            shift(&mut net, &flat, k, h2);
            let mp = weighted_input_grad(&net, &x, &sel, &c);
            shift(&mut net, &flat, k, -h2);
            let mm = weighted_input_grad(&net, &x, &sel, &c);
            fd_m.push((mp - mm) / (2.0 * h2));
        }
        net.unflatten(&flat).unwrap();

        let mut fd_x = Vec::with_capacity(x.len());
        for i in 0..rows {
            for j in 0..in_dim {
                let mut xp = x.clone();
                xp[[i, j]] += h1;
                let mut xm = x.clone();
                xm[[i, j]] -= h1;
                fd_x.push((total(&net, &xp) - total(&net, &xm)) / (2.0 * h1));
            }
        }

        worst.params = worst.params.max(rel(&analytic_p, &fd_p));
        worst.input = worst.input.max(rel(&analytic_x, &fd_x));
        worst.mixed = worst.mixed.max(rel(&analytic_m, &fd_m));
    }
    worst
}
