//! Acceleration-supervised training with Adam over minibatches of time
//! steps, with validation-based model selection.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Batch, GraphDataset, GraphSnapshot, SplitSpec};
use crate::model::{Model, ModelKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Time steps per minibatch.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Weight of the message-antisymmetry penalty; 0 disables it.
    #[serde(default)]
    pub alpha: f64,
    /// Rescale the gradient to at most this global norm.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// When set, the learning rate decays geometrically per epoch and
    /// reaches this value in the last epoch.
    #[serde(default)]
    pub final_learning_rate: Option<f64>,
}

impl TrainConfig {
    /// Learning rate 1e-3, 200 epochs, 32 steps per batch for force-type
    /// models and 8 for the potential variant.
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: if kind.is_potential() { 8 } else { 32 },
            max_epochs: 200,
            seed: 0,
            alpha: 0.0,
            grad_clip: None,
            final_learning_rate: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || self.batch_size == 0 || !(self.alpha >= 0.0) {
            return Err(Error::config(format!("invalid training configuration {self:?}")));
        }
        if let Some(lr) = self.final_learning_rate {
            if !(lr > 0.0 && self.learning_rate > 0.0) {
                return Err(Error::config("learning-rate decay needs positive rates"));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("gradient clip must be positive"));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.final_learning_rate {
            Some(last) if self.max_epochs > 1 => {
                let frac = epoch as f64 / (self.max_epochs - 1) as f64;
                self.learning_rate * (last / self.learning_rate).powf(frac)
            }
            _ => self.learning_rate,
        }
    }
}

/// Mean over nodes (rows) of the l1 distance, summed over components.
pub fn loss_acceleration(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::data(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Err(Error::data("empty prediction"));
    }
    let total: f64 = pred
        .rows()
        .into_iter()
        .zip(target.rows())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum();
    Ok(total / pred.nrows() as f64)
}

/// Acceleration loss plus `alpha / |E| * sum_e |M_e + M_reverse(e)|_1`.
pub fn loss_symmetry_regularized(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    messages: ArrayView2<f64>,
    reverse: &[usize],
    alpha: f64,
) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::config(format!("alpha must be non-negative, got {alpha}")));
    }
    let base = loss_acceleration(pred, target)?;
    if alpha == 0.0 {
        return Ok(base);
    }
    if messages.nrows() != reverse.len() || messages.nrows() == 0 {
        return Err(Error::data("one reverse index per message required"));
    }
    let penalty: f64 = reverse
        .iter()
        .enumerate()
        .map(|(e, &r)| {
            messages
                .row(e)
                .iter()
                .zip(messages.row(r))
                .map(|(a, b)| (a + b).abs())
                .sum::<f64>()
        })
        .sum();
    Ok(base + alpha * penalty / messages.nrows() as f64)
}

/// Recorded acceleration loss over a batch: mean over snapshots of the mean
/// over nodes.
pub fn loss_acceleration_tape(tape: &mut Tape, pred: Var, batch: &Batch) -> Var {
    let target = tape.leaf(batch.targets.clone());
    let diff = tape.sub(pred, target);
    let abs = tape.abs(diff);
    let per_node = tape.sum_cols(abs);
    let w = tape.leaf(batch.node_weights.clone());
    let weighted = tape.mul(per_node, w);
    tape.sum(weighted)
}

/// Recorded antisymmetry penalty: mean over snapshots of
/// `1/|E| sum_e |M_e + M_rev(e)|_1`.
pub fn symmetry_penalty_tape(tape: &mut Tape, messages: Var, batch: &Batch) -> Var {
    let rev = tape.gather_rows(messages, batch.reverse.clone());
    let sum = tape.add(messages, rev);
    let abs = tape.abs(sum);
    let per_edge = tape.sum_cols(abs);
    let w = tape.leaf(batch.edge_weights.clone());
    let weighted = tape.mul(per_edge, w);
    tape.sum(weighted)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &[Array2<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::data("one gradient per parameter required"));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.dim() != g.dim() || m.dim() != g.dim() {
                return Err(Error::data("parameter and gradient shapes differ"));
            }
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation loss.
    pub best_epoch: Option<usize>,
    pub seed: u64,
}

impl TrainHistory {
    pub fn best_valid_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].valid_loss)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,valid_loss,best")?;
        for r in &self.epochs {
            writeln!(
                w,
                "{},{:e},{:e},{}",
                r.epoch,
                r.train_loss,
                r.valid_loss,
                u8::from(Some(r.epoch) == self.best_epoch)
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

pub struct TrainOutcome {
    /// Parameters of the validation-best epoch (the initial model when no
    /// epoch ran).
    pub best: Model,
    pub last: Model,
    pub history: TrainHistory,
}

/// Loss value and gradient of every parameter for one batch.
pub fn loss_and_grad(model: &Model, batch: &Batch, alpha: f64) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut tape = Tape::new();
    let binding = model.bind(&mut tape);
    let fwd = model.forward_tape(&mut tape, &binding, batch)?;
    let mut loss = loss_acceleration_tape(&mut tape, fwd.accelerations, batch);
    if alpha > 0.0 {
        let pen = symmetry_penalty_tape(&mut tape, fwd.messages, batch);
        let pen = tape.scale(pen, alpha);
        loss = tape.add(loss, pen);
    }
    let grads = tape.grad(loss, &binding.vars());
    Ok((
        tape.scalar_value(loss),
        grads.into_iter().map(|g| tape.value(g).clone()).collect(),
    ))
}

/// Mean acceleration loss over `steps`, evaluated in chunks.
pub fn evaluate_loss(model: &Model, dataset: &GraphDataset, steps: &[usize]) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::data("no steps to evaluate"));
    }
    let mut total = 0.0;
    for chunk in steps.chunks(64) {
        let snaps = dataset.snapshots(chunk)?;
        let refs: Vec<&GraphSnapshot> = snaps.iter().collect();
        let batch = Batch::new(&refs)?;
        let pred = model.predict_batch(&batch)?;
        for b in 0..batch.n_snapshots() {
            total += loss_acceleration(
                batch.node_rows(&pred.accelerations, b),
                batch.node_rows(&batch.targets, b),
            )?;
        }
    }
    Ok(total / steps.len() as f64)
}

/// Optimize `model` on `split.train`, selecting the epoch with the lowest
/// validation acceleration loss.
pub fn train(
    model: Model,
    dataset: &GraphDataset,
    split: &SplitSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.layout.check_compatible(&dataset.layout)?;
    if split.train.is_empty() || split.valid.is_empty() {
        return Err(Error::data("training needs non-empty train and validation sets"));
    }
    let mut model = model;
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: None,
        seed: config.seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.learning_rate);
    let mut order = split.train.clone();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        adam.learning_rate = config.learning_rate_at(epoch);
        let mut epoch_loss = 0.0;
        let n_batches = order.len().div_ceil(config.batch_size);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let snaps = dataset.snapshots(chunk)?;
            let refs: Vec<&GraphSnapshot> = snaps.iter().collect();
            let batch = Batch::new(&refs)?;
            let (loss, mut grads) = loss_and_grad(&model, &batch, config.alpha)?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    param_norm: model.param_norm(),
                });
            }
            if let Some(clip) = config.grad_clip {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.iter())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > clip {
                    grads.iter_mut().for_each(|g| *g *= clip / norm);
                }
            }
            adam.step(model.params_mut(), &grads)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / order.len() as f64;
        let valid_loss = evaluate_loss(&model, dataset, &split.valid)?;
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: n_batches,
                param_norm: model.param_norm(),
            });
        }
        log::info!("epoch {epoch}: train {train_loss:.6e} valid {valid_loss:.6e}");
        if valid_loss < best_loss {
            best_loss = valid_loss;
            best = model.clone();
            history.best_epoch = Some(epoch);
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
        });
    }
    Ok(TrainOutcome {
        best,
        last: model,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn acceleration_loss_examples() {
        let z = Array2::<f64>::zeros((1, 2));
        assert_eq!(loss_acceleration(array![[1.0, 1.0]].view(), z.view()).unwrap(), 2.0);
        let p = array![[1.0, 1.0], [0.0, 0.0]];
        assert_eq!(loss_acceleration(p.view(), Array2::zeros((2, 2)).view()).unwrap(), 1.0);
        assert_eq!(loss_acceleration(p.view(), p.view()).unwrap(), 0.0);
        assert!(loss_acceleration(p.view(), z.view()).is_err());
    }

    #[test]
    fn symmetry_loss_examples() {
        let p = array![[0.5, 0.0]];
        let m = array![[1.0, 0.0], [1.0, 0.0]];
        // Both ordered pairs contribute |(2, 0)|_1 = 2; divided by |E| = 2.
        assert_eq!(
            loss_symmetry_regularized(p.view(), p.view(), m.view(), &[1, 0], 1.0).unwrap(),
            2.0
        );
        let anti = array![[1.0, -2.0], [-1.0, 2.0]];
        assert_eq!(
            loss_symmetry_regularized(p.view(), p.view(), anti.view(), &[1, 0], 5.0).unwrap(),
            0.0
        );
        let t = array![[0.0, 0.0]];
        assert_eq!(
            loss_symmetry_regularized(p.view(), t.view(), m.view(), &[1, 0], 0.0).unwrap(),
            loss_acceleration(p.view(), t.view()).unwrap()
        );
        assert!(loss_symmetry_regularized(p.view(), t.view(), m.view(), &[1, 0], -1.0).is_err());
    }

    #[test]
    fn adam_examples() {
        let mut p = array![[1.0, -2.0]];
        let mut adam = Adam::new(0.01);
        adam.step(vec![&mut p], &[Array2::zeros((1, 2))]).unwrap();
        assert_eq!(p, array![[1.0, -2.0]]);

        for scale in [1e-3, 1.0, 1e4] {
            let mut q = array![[0.0, 0.0]];
            let mut adam = Adam::new(0.01);
            adam.step(vec![&mut q], &[array![[scale, -scale]]]).unwrap();
            assert!((q[[0, 0]] + 0.01).abs() < 1e-7 && (q[[0, 1]] - 0.01).abs() < 1e-7);
        }

        // Decreases a quadratic from a non-stationary point.
        let mut x = array![[3.0]];
        let f = |x: f64| (x - 1.0).powi(2);
        let before = f(x[[0, 0]]);
        let mut adam = Adam::new(1e-3);
        let g = array![[2.0 * (x[[0, 0]] - 1.0)]];
        adam.step(vec![&mut x], &[g]).unwrap();
        assert!(f(x[[0, 0]]) < before);
    }
}
