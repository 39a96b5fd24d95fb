//! Tape derivatives against central finite differences.

mod common;

use ndarray::{array, Array2};
use pignpi_core::autodiff::{grad_input, ActivationKind, Layer, MlpParams, Tape};
use proptest::prelude::*;

#[test]
fn random_nets_match_finite_differences() {
    let worst = common::check_random_nets(40, 11);
    assert!(worst.params <= 1e-5, "{worst:?}");
    assert!(worst.input <= 1e-5, "{worst:?}");
    assert!(worst.mixed <= 1e-4, "{worst:?}");
}

#[test]
fn quadratic_input_gradient_is_exact() {
    // f(x) = w2 * tanh(w1 x) has f'(0) = w1 w2 and d f'(0) / d w1 = w2.
    let net = MlpParams::from_layers(
        vec![
            Layer {
                weight: array![[0.7]],
                bias: array![[0.0]],
            },
            Layer {
                weight: array![[-1.3]],
                bias: array![[0.2]],
            },
        ],
        ActivationKind::Tanh,
    )
    .unwrap();
    let mut tape = Tape::new();
    let b = net.bind(&mut tape);
    let x = tape.leaf(array![[0.0]]);
    let g = grad_input(&mut tape, &net, &b, x, &[0]).unwrap();
    assert!((tape.value(g)[[0, 0]] - 0.7 * -1.3).abs() < 1e-15);
    let gw = tape.grad(g, &[b.weights[0]])[0];
    assert!((tape.value(gw)[[0, 0]] + 1.3).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grad_of_sum_is_linear(scale in -3.0f64..3.0, seed in 0u64..1000) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let net = common::random_net(&mut rng, 3);
        let x = Array2::from_elem((2, 3), 0.3);
        let mut tape = Tape::new();
        let b = net.bind(&mut tape);
        let xv = tape.leaf(x);
        let out = net.forward_tape(&mut tape, &b, xv).unwrap();
        let s = tape.sum(out);
        let scaled = tape.scale(s, scale);
        let g1 = tape.grad(s, &[xv])[0];
        let g2 = tape.grad(scaled, &[xv])[0];
        let expect = tape.value(g1) * scale;
        for (a, e) in tape.value(g2).iter().zip(expect.iter()) {
            prop_assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }
}
