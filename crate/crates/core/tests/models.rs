//! Architecture contracts: node operators, baselines, pairwise read-out.

use ndarray::{s, Array2};
use pignpi_core::autodiff::{ActivationKind, Tape, Var};
use pignpi_core::graph::{build_snapshot, Batch, FeatureLayout, GraphSnapshot, Topology};
use pignpi_core::model::{
    extract_pairwise, node_operator_force, potential_pair_forces, AnalyticForce,
    AnalyticPotential, ArchSpec, EdgeFunction, Model, ModelKind,
};
use pignpi_core::sim::{sample_initial_system, simulate, ForceLaw, ParticleState, Trajectory};
use pignpi_core::Error;

fn traj(n: usize, law: ForceLaw, seed: u64) -> Trajectory {
    let sys = sample_initial_system(n, 2, seed).unwrap();
    simulate(&sys, law, 30, 0.01, seed).unwrap()
}

fn small_arch(activation: ActivationKind) -> ArchSpec {
    ArchSpec {
        hidden_layers: 2,
        hidden_width: 16,
        activation,
        zero_potential_output: false,
    }
}

fn snapshot(n: usize, seed: u64) -> GraphSnapshot {
    build_snapshot(&traj(n, ForceLaw::spring(), seed), 7, Topology::Full).unwrap()
}

#[test]
fn analytic_force_oracle_reproduces_simulator() {
    for law in ForceLaw::all_defaults() {
        let tr = traj(8, law, 5);
        let layout = FeatureLayout::analytic(2);
        for t in [0, 13, 29] {
            let snap = build_snapshot(&tr, t, Topology::Full).unwrap();
            let mut tape = Tape::new();
            let x = tape.leaf(snap.edge_inputs());
            let m = AnalyticForce { law, layout }.messages(&mut tape, x).unwrap();
            let acc = node_operator_force(tape.value(m).view(), &snap.edges.receivers, &snap.masses)
                .unwrap();
            let err = (&acc - &snap.targets).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
            assert!(err <= 1e-12, "{law}: {err:e}");
        }
    }
}

#[test]
fn analytic_potential_oracle_gives_pair_forces() {
    for law in ForceLaw::all_defaults() {
        let tr = traj(6, law, 8);
        let layout = FeatureLayout::analytic(2);
        let snap = build_snapshot(&tr, 11, Topology::Full).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(snap.edge_inputs());
        let (p, f) = potential_pair_forces(&mut tape, &AnalyticPotential { law, layout }, x, &layout)
            .unwrap();
        let df = (tape.value(f) - &snap.truth.forces).mapv(f64::abs);
        assert!(df.iter().all(|&v| v <= 1e-10), "{law}");
        for (a, b) in tape.value(p).iter().zip(&snap.truth.potentials) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{law}");
        }
    }
}

/// `M = k/2 |r_j - r_i|^2` written as a linear layer followed by a square.
struct QuadraticEdge {
    k: f64,
    w: Array2<f64>,
}

impl QuadraticEdge {
    fn new(layout: &FeatureLayout, k: f64) -> Self {
        let mut w = Array2::zeros((layout.edge_width(), layout.dim));
        let nw = layout.node_width();
        for a in 0..layout.dim {
            w[[a, a]] = -1.0;
            w[[nw + a, a]] = 1.0;
        }
        Self { k, w }
    }
}

impl EdgeFunction for QuadraticEdge {
    fn out_dim(&self) -> usize {
        1
    }

    fn messages(&self, tape: &mut Tape, inputs: Var) -> pignpi_core::Result<Var> {
        let w = tape.leaf(self.w.clone());
        let u = tape.matmul(inputs, w);
        let sq = tape.square(u);
        let s = tape.sum_cols(sq);
        Ok(tape.scale(s, 0.5 * self.k))
    }
}

#[test]
fn hand_built_quadratic_potential_gives_spring_forces() {
    let snap = snapshot(5, 2);
    let layout = snap.layout;
    let mut tape = Tape::new();
    let x = tape.leaf(snap.edge_inputs());
    let q = QuadraticEdge::new(&layout, 2.0);
    let (_, f) = potential_pair_forces(&mut tape, &q, x, &layout).unwrap();
    let zero_rest = ForceLaw::Spring {
        k: 2.0,
        rest_length: 1e-300,
    };
    let mut tape2 = Tape::new();
    let x2 = tape2.leaf(snap.edge_inputs());
    let expect = AnalyticForce {
        law: zero_rest,
        layout,
    }
    .messages(&mut tape2, x2)
    .unwrap();
    let diff = tape.value(f) - tape2.value(expect);
    assert!(diff.iter().all(|v| v.abs() <= 1e-12));
    let acc = node_operator_force(tape.value(f).view(), &snap.edges.receivers, &snap.masses).unwrap();
    for i in 0..5 {
        for k in 0..2 {
            let mut net = 0.0;
            for j in (0..5).filter(|&j| j != i) {
                net += 2.0 * (snap.node_features[[j, k]] - snap.node_features[[i, k]]);
            }
            assert!((acc[[i, k]] - net / snap.masses[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn potential_operator_matches_finite_differences() {
    let snap = snapshot(4, 9);
    for seed in 0..5 {
        let model = Model::new(
            ModelKind::PignpiPotential,
            snap.layout,
            small_arch(ActivationKind::Tanh),
            4,
            seed,
        )
        .unwrap();
        let acc = model.predict(&snap).unwrap().accelerations;
        let h = 1e-6;
        let x0 = snap.edge_inputs();
        // Sum of incoming messages to i as a function of r_i in the receiver block.
        let incoming = |i: usize, k: usize, delta: f64| -> f64 {
            let mut x = x0.clone();
            for (e, &r) in snap.edges.receivers.iter().enumerate() {
                if r == i {
                    x[[e, k]] += delta;
                }
            }
            let m = model.edge_net.forward(&x).unwrap();
            snap.edges
                .receivers
                .iter()
                .zip(m.iter())
                .filter(|(&r, _)| r == i)
                .map(|(_, v)| v)
                .sum()
        };
        for i in 0..4 {
            for k in 0..2 {
                let fd = -(incoming(i, k, h) - incoming(i, k, -h)) / (2.0 * h) / snap.masses[i];
                let rel = (acc[[i, k]] - fd).abs() / fd.abs().max(1e-3);
                assert!(rel <= 1e-5, "seed {seed} node {i}: {} vs {fd}", acc[[i, k]]);
            }
        }
    }
}

#[test]
fn relu_potential_is_rejected() {
    let layout = FeatureLayout::analytic(2);
    let err = Model::new(ModelKind::PignpiPotential, layout, small_arch(ActivationKind::Relu), 4, 0)
        .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    Model::new(ModelKind::PignpiForce, layout, small_arch(ActivationKind::Relu), 4, 0).unwrap();
}

#[test]
fn edge_message_basics() {
    let snap = snapshot(3, 1);
    let mut model = Model::new(
        ModelKind::PignpiForce,
        snap.layout,
        small_arch(ActivationKind::Silu),
        3,
        0,
    )
    .unwrap();
    let pw = extract_pairwise(&model, &snap).unwrap();
    assert_eq!(pw.forces.nrows(), 6);
    // Identical inputs give identical messages.
    let mut x = snap.edge_inputs();
    let row0 = x.row(0).to_owned();
    x.row_mut(1).assign(&row0);
    let m = model.evaluate_edges(&x).unwrap().forces;
    assert_eq!(m.row(0), m.row(1));
    // Zero network, zero messages.
    for p in model.params_mut() {
        p.fill(0.0);
    }
    assert!(extract_pairwise(&model, &snap).unwrap().forces.iter().all(|&v| v == 0.0));
}

#[test]
fn force_readout_sums_to_prediction_bitwise() {
    let snap = snapshot(6, 4);
    let model = Model::new(ModelKind::PignpiForce, snap.layout, small_arch(ActivationKind::Gelu), 6, 3)
        .unwrap();
    let pw = extract_pairwise(&model, &snap).unwrap();
    let acc = node_operator_force(pw.forces.view(), &snap.edges.receivers, &snap.masses).unwrap();
    assert_eq!(acc, model.predict(&snap).unwrap().accelerations);
}

#[test]
fn position_blind_potential_has_no_force() {
    let snap = snapshot(4, 6);
    let mut model = Model::new(
        ModelKind::PignpiPotential,
        snap.layout,
        small_arch(ActivationKind::Silu),
        4,
        1,
    )
    .unwrap();
    let w = &mut model.edge_net.layers[0].weight;
    for c in snap.layout.receiver_position_cols().chain(snap.layout.sender_position_cols()) {
        w.row_mut(c).fill(0.0);
    }
    let pred = model.predict(&snap).unwrap();
    assert!(pred.accelerations.iter().all(|&v| v == 0.0));
    assert!(pred.pair_forces.iter().all(|&v| v == 0.0));
    assert!(pred.pair_potentials.unwrap().iter().any(|&v| v != 0.0));
}

#[test]
fn baseline_node_network() {
    let snap = snapshot(5, 3);
    let mut model = Model::new(ModelKind::BaselineGn, snap.layout, small_arch(ActivationKind::Silu), 5, 2)
        .unwrap();
    let base = model.predict(&snap).unwrap().accelerations;

    // Permuting the edge order leaves the sum aggregation unchanged.
    let mut perm = snap.clone();
    let e = perm.n_edges();
    let order: Vec<usize> = (0..e).rev().collect();
    perm.edges.receivers = order.iter().map(|&k| snap.edges.receivers[k]).collect();
    perm.edges.senders = order.iter().map(|&k| snap.edges.senders[k]).collect();
    perm.displacements = snap.displacements.select(ndarray::Axis(0), &order);
    perm.reverse = perm.edges.reverse_index().unwrap();
    let permuted = model.predict(&perm).unwrap().accelerations;
    assert!((&permuted - &base).iter().all(|v| v.abs() <= 1e-12));

    // Two particles: node net of (eta_i, M_ij).
    let two = snapshot(2, 3);
    let pred = model.predict(&two).unwrap().accelerations;
    let m = extract_pairwise(&model, &two).unwrap().forces;
    for i in 0..2 {
        let mut input = Array2::zeros((1, two.layout.node_width() + 2));
        input
            .slice_mut(s![0, ..two.layout.node_width()])
            .assign(&two.node_features.row(i));
        let e = two.edges.receivers.iter().position(|&r| r == i).unwrap();
        input.slice_mut(s![0, two.layout.node_width()..]).assign(&m.row(e));
        let direct = model.node_net.as_ref().unwrap().forward(&input).unwrap();
        assert!((&direct.row(0) - &pred.row(i)).iter().all(|v| v.abs() <= 1e-14));
    }

    let node = model.node_net.as_mut().unwrap();
    for p in node.params_mut() {
        p.fill(0.0);
    }
    assert!(model.predict(&snap).unwrap().accelerations.iter().all(|&v| v == 0.0));
}

#[test]
fn gn_plus_scaling() {
    let snap = snapshot(4, 2);
    let mut model = Model::new(ModelKind::GnPlus, snap.layout, small_arch(ActivationKind::Silu), 4, 0)
        .unwrap();
    let msg = extract_pairwise(&model, &snap).unwrap().forces;
    let raw = node_operator_force(msg.view(), &snap.edges.receivers, &[1.0; 4]).unwrap();
    assert_eq!(model.predict(&snap).unwrap().accelerations, raw);
    model.node_scalars.as_mut().unwrap().fill(1.0);
    let scaled = model.predict(&snap).unwrap().accelerations;
    assert!((&scaled * 10.0 - &raw).iter().all(|v| v.abs() <= 1e-12 * (1.0 + raw.iter().fold(0.0f64, |a, b| a.max(b.abs())))));

    // A fresh twelve-particle system is refused.
    let big = snapshot(12, 2);
    assert!(matches!(model.predict(&big), Err(Error::Config(_))));
    assert_eq!(extract_pairwise(&model, &big).unwrap().forces.nrows(), 132);
}

#[test]
fn gn_plus_uniform_with_log_mass_is_force_operator() {
    let states: Vec<ParticleState> = sample_initial_system(5, 2, 7)
        .unwrap()
        .into_iter()
        .map(|p| ParticleState { mass: 2.5, ..p })
        .collect();
    let tr = simulate(&states, ForceLaw::charge(), 3, 0.01, 0).unwrap();
    let snap = build_snapshot(&tr, 1, Topology::Full).unwrap();
    let mut uni = Model::new(ModelKind::GnPlusUniform, snap.layout, small_arch(ActivationKind::Silu), 5, 4)
        .unwrap();
    uni.node_scalars.as_mut().unwrap().fill(2.5f64.log10());
    let mut force = Model::new(ModelKind::PignpiForce, snap.layout, small_arch(ActivationKind::Silu), 5, 4)
        .unwrap();
    force.edge_net = uni.edge_net.clone();
    let a = uni.predict(&snap).unwrap().accelerations;
    let b = force.predict(&snap).unwrap().accelerations;
    assert!((&a - &b).iter().all(|v| v.abs() <= 1e-13 * (1.0 + b.iter().fold(0.0f64, |x, y| x.max(y.abs())))));
}

#[test]
fn every_kind_is_permutation_equivariant() {
    let sys = sample_initial_system(5, 2, 12).unwrap();
    let perm = [3, 0, 4, 1, 2];
    let permuted: Vec<ParticleState> = perm.iter().map(|&p| sys[p].clone()).collect();
    let a = build_snapshot(&simulate(&sys, ForceLaw::spring(), 1, 0.01, 0).unwrap(), 0, Topology::Full)
        .unwrap();
    let b = build_snapshot(&simulate(&permuted, ForceLaw::spring(), 1, 0.01, 0).unwrap(), 0, Topology::Full)
        .unwrap();
    for kind in ModelKind::ALL {
        let mut model = Model::new(kind, a.layout, small_arch(ActivationKind::Silu), 5, 9).unwrap();
        if let Some(w) = &mut model.node_scalars {
            // Shared scalar keeps GN+ equivariant; per-particle ones are
            // relabelled with the particles.
            w.fill(0.3);
        }
        let pa = model.predict(&a).unwrap().accelerations;
        let pb = model.predict(&b).unwrap().accelerations;
        for (new, &old) in perm.iter().enumerate() {
            let d = &pb.row(new) - &pa.row(old);
            assert!(d.iter().all(|v| v.abs() <= 1e-12), "{kind}");
        }
    }
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let layout = FeatureLayout::analytic(3);
    for kind in ModelKind::ALL {
        let model = Model::new(kind, layout, small_arch(ActivationKind::Softplus), 6, 5).unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        model.save(&path, Some(5)).unwrap();
        assert_eq!(Model::load(&path).unwrap(), model);
    }
}

#[test]
fn batching_matches_single_snapshots() {
    let tr = traj(4, ForceLaw::orbital(), 3);
    let snaps: Vec<_> = [2, 9, 20]
        .iter()
        .map(|&t| build_snapshot(&tr, t, Topology::Full).unwrap())
        .collect();
    let model = Model::new(ModelKind::PignpiPotential, snaps[0].layout, small_arch(ActivationKind::Silu), 4, 0)
        .unwrap();
    let refs: Vec<&GraphSnapshot> = snaps.iter().collect();
    let batch = Batch::new(&refs).unwrap();
    let all = model.predict_batch(&batch).unwrap();
    for (b, snap) in snaps.iter().enumerate() {
        let one = model.predict(snap).unwrap();
        assert_eq!(batch.node_rows(&all.accelerations, b), one.accelerations);
    }
}

#[test]
fn periodic_potential_follows_both_position_paths() {
    use pignpi_core::lj::{simulate_lj, LjSpec};
    let spec = LjSpec {
        n_atoms: 27,
        box_length: 12.0,
        cutoff_sigmas: 1.7,
        n_steps: 3,
        ..LjSpec::default()
    };
    let tr = simulate_lj(&spec, 1).unwrap();
    let snap = build_snapshot(&tr, 2, Topology::default_for(&tr)).unwrap();
    let model = Model::new(ModelKind::PignpiPotential, snap.layout, small_arch(ActivationKind::Tanh), 27, 2)
        .unwrap();
    let pred = model.predict(&snap).unwrap();
    let x0 = snap.edge_inputs();
    let disp = snap.layout.displacement_cols().unwrap();
    let h = 1e-6;
    for e in [0, snap.n_edges() / 2, snap.n_edges() - 1] {
        for k in 0..3 {
            let shifted = |delta: f64| {
                let mut x = x0.row(e).to_owned().insert_axis(ndarray::Axis(0));
                x[[0, k]] += delta;
                x[[0, disp.start + k]] -= delta;
                model.edge_net.forward(&x).unwrap()[[0, 0]]
            };
            let fd = -(shifted(h) - shifted(-h)) / (2.0 * h);
            let got = pred.pair_forces[[e, k]];
            assert!((got - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "{got} vs {fd}");
        }
    }
}
