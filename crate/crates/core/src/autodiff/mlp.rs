use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Fully connected layer; `weight` is `in x out` so that rows are samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    /// `1 x out`
    pub bias: Array2<f64>,
}

/// Parameters of a multilayer perceptron. Hidden layers use `activation`,
/// the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub activation: ActivationKind,
}

/// Tape handles of one [`MlpParams`] bound to a [`Tape`].
#[derive(Clone, Debug)]
pub struct MlpBinding {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl MlpBinding {
    /// Parameters in the same order as [`MlpParams::params`].
    pub fn vars(&self) -> Vec<Var> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(&w, &b)| [w, b])
            .collect()
    }
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases. `sizes` lists every layer width
    /// including input and output.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: ActivationKind,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).unwrap();
                Layer {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.sample(dist)),
                    bias: Array2::zeros((1, fan_out)),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    /// `hidden` layers of `width` units between `in_dim` and `out_dim`.
    pub fn with_hidden<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: usize,
        width: usize,
        out_dim: usize,
        activation: ActivationKind,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![in_dim];
        sizes.extend(std::iter::repeat_n(width, hidden));
        sizes.push(out_dim);
        Self::init(&sizes, activation, rng)
    }

    /// Every weight and bias set to zero.
    pub fn zeros(sizes: &[usize], activation: ActivationKind) -> Result<Self> {
        let mut rng = rand::rng();
        let mut p = Self::init(sizes, activation, &mut rng)?;
        for l in &mut p.layers {
            l.weight.fill(0.0);
        }
        Ok(p)
    }

    pub fn from_layers(layers: Vec<Layer>, activation: ActivationKind) -> Result<Self> {
        let p = Self { layers, activation };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("MLP without layers"));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.bias.dim() != (1, l.weight.ncols()) {
                return Err(Error::config(format!("layer {k}: bias shape mismatch")));
            }
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(Error::config(format!(
                    "layers {k} and {} do not chain",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.weight.ncols()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weight, bias, weight, bias, ...
    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Batched forward pass without recording; rows are samples.
    ///
    /// Uses the same arithmetic as [`MlpParams::forward_tape`], so results are
    /// bitwise identical.
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if k < last {
                let act = self.activation;
                z.mapv_inplace(|v| act.derivative(v, 0));
            }
            h = z;
        }
        Ok(h)
    }

    pub fn bind(&self, tape: &mut Tape) -> MlpBinding {
        let (weights, biases) = self
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .unzip();
        MlpBinding { weights, biases }
    }

    /// Recorded batched forward pass.
    pub fn forward_tape(&self, tape: &mut Tape, binding: &MlpBinding, input: Var) -> Result<Var> {
        self.check_input(tape.shape(input).1)?;
        let last = self.layers.len() - 1;
        let mut h = input;
        for k in 0..self.layers.len() {
            let z = tape.matmul(h, binding.weights[k]);
            let z = tape.add_row(z, binding.biases[k]);
            h = if k < last {
                tape.activation(z, self.activation)
            } else {
                z
            };
        }
        Ok(h)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.in_dim() {
            return Err(Error::config(format!(
                "MLP expects {} input features, got {cols}",
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Flat row-major parameter vector, in [`MlpParams::params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params()
            .into_iter()
            .flat_map(|a| a.iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Inverse of [`MlpParams::flatten`] for a net of the same shape.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::data(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            for (dst, src) in p.iter_mut().zip(&flat[offset..offset + n]) {
                *dst = *src;
            }
            offset += n;
        }
        Ok(())
    }

    pub fn param_norm(&self) -> f64 {
        self.params()
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Single-sample recorded forward pass; returns a `1 x out_dim` node.
pub fn mlp_forward(
    tape: &mut Tape,
    params: &MlpParams,
    binding: &MlpBinding,
    input: &[f64],
) -> Result<Var> {
    let x = tape.leaf(Array2::from_shape_vec((1, input.len()), input.to_vec()).unwrap());
    params.forward_tape(tape, binding, x)
}

/// Gradient of a scalar output with respect to every bound parameter.
pub fn grad_params(tape: &mut Tape, binding: &MlpBinding, output: Var) -> Vec<Var> {
    tape.grad(output, &binding.vars())
}

/// Derivative of a scalar-output network with respect to the selected
/// columns of `input`, one row per sample.
///
/// `input` is `rows x in_dim`; the result is `rows x selector.len()`, a
/// regular tape node that can be differentiated with respect to the
/// parameters. Rows are independent samples, so the per-row derivative is
/// obtained from the gradient of the summed output.
pub fn grad_input(
    tape: &mut Tape,
    params: &MlpParams,
    binding: &MlpBinding,
    input: Var,
    selector: &[usize],
) -> Result<Var> {
    if params.out_dim() != 1 {
        return Err(Error::config(
            "input gradients require a scalar-output network",
        ));
    }
    if params.activation == ActivationKind::Relu {
        return Err(Error::config(
            "ReLU has a piecewise-constant derivative and cannot be used for input gradients",
        ));
    }
    let cols = tape.shape(input).1;
    if let Some(&bad) = selector.iter().find(|&&c| c >= cols) {
        return Err(Error::config(format!("selector column {bad} out of range")));
    }
    let out = params.forward_tape(tape, binding, input)?;
    let total = tape.sum(out);
    let g = tape.grad(total, &[input])[0];
    let mut parts = selector.iter().map(|&c| tape.slice_cols(g, c, 1));
    let first = parts.next().ok_or_else(|| Error::config("empty selector"))?;
    let rest: Vec<Var> = parts.collect();
    Ok(rest.into_iter().fold(first, |acc, p| tape.concat_cols(acc, p)))
}

/// Serializable parameter container.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MlpCheckpoint {
    pub version: u32,
    pub sizes: Vec<usize>,
    pub activation: ActivationKind,
    /// Row-major weights then biases, layer by layer.
    pub params: Vec<f64>,
    pub seed: Option<u64>,
}

pub const MLP_CHECKPOINT_VERSION: u32 = 1;

impl MlpCheckpoint {
    pub fn from_params(params: &MlpParams, seed: Option<u64>) -> Self {
        Self {
            version: MLP_CHECKPOINT_VERSION,
            sizes: params.sizes(),
            activation: params.activation,
            params: params.flatten(),
            seed,
        }
    }

    pub fn to_params(&self) -> Result<MlpParams> {
        if self.version != MLP_CHECKPOINT_VERSION {
            return Err(Error::data(format!(
                "unsupported MLP checkpoint version {}",
                self.version
            )));
        }
        let mut p = MlpParams::zeros(&self.sizes, self.activation)?;
        p.unflatten(&self.params)?;
        Ok(p)
    }
}

/// Mean over rows; handy for reporting.
pub fn row_mean(a: &Array2<f64>) -> Array2<f64> {
    a.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0))
}
