use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::edge::{BoundMlp, EdgeFunction};
use super::operator::{force_operator_tape, potential_pair_forces};
use crate::autodiff::{ActivationKind, MlpBinding, MlpCheckpoint, MlpParams, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Batch, FeatureLayout, GraphSnapshot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Messages are pair forces; accelerations are their sum over mass.
    PignpiForce,
    /// Messages are pair potentials; accelerations are the negative
    /// receiver-position gradient of their sum over mass.
    PignpiPotential,
    /// Edge MLP plus node MLP on `[eta_i, sum_j M_ij]`.
    BaselineGn,
    /// Message sum divided by `10^{w_i}` with one learnable `w_i` per particle.
    GnPlus,
    /// As [`ModelKind::GnPlus`] with a single shared scalar.
    GnPlusUniform,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::PignpiForce,
        ModelKind::PignpiPotential,
        ModelKind::BaselineGn,
        ModelKind::GnPlus,
        ModelKind::GnPlusUniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::PignpiForce => "pignpi-force",
            ModelKind::PignpiPotential => "pignpi-potential",
            ModelKind::BaselineGn => "baseline-gn",
            ModelKind::GnPlus => "gn-plus",
            ModelKind::GnPlusUniform => "gn-plus-uniform",
        }
    }

    pub fn is_potential(&self) -> bool {
        *self == ModelKind::PignpiPotential
    }

    /// Output width of the edge network.
    pub fn message_dim(&self, dim: usize) -> usize {
        if self.is_potential() {
            1
        } else {
            dim
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .or(match key.as_str() {
                "force" | "pignpi" => Some(ModelKind::PignpiForce),
                "potential" => Some(ModelKind::PignpiPotential),
                "baseline" | "gn" => Some(ModelKind::BaselineGn),
                "gn+" => Some(ModelKind::GnPlus),
                _ => None,
            })
            .ok_or_else(|| Error::config(format!("unknown model kind `{s}`")))
    }
}

/// Hidden-layer shape shared by edge and node networks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: ActivationKind,
    /// Start the potential variant's output weights at zero. Parts of the
    /// potential that do not depend on positions get no gradient, so this
    /// keeps them from retaining their random initial values.
    #[serde(default)]
    pub zero_potential_output: bool,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            hidden_layers: 4,
            hidden_width: 300,
            activation: ActivationKind::Silu,
            zero_potential_output: true,
        }
    }
}

impl ArchSpec {
    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        s.push(output);
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub layout: FeatureLayout,
    pub edge_net: MlpParams,
    /// Baseline only.
    pub node_net: Option<MlpParams>,
    /// `k x 1` exponents `w`; GN+ variants only.
    pub node_scalars: Option<Array2<f64>>,
}

/// Tape handles for every learnable array of a [`Model`].
pub struct ModelBinding {
    pub edge: MlpBinding,
    pub node: Option<MlpBinding>,
    pub scalars: Option<Var>,
}

impl ModelBinding {
    /// Same order as [`Model::params`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.edge.vars();
        if let Some(n) = &self.node {
            v.extend(n.vars());
        }
        v.extend(self.scalars);
        v
    }
}

/// Recorded outputs of one forward pass.
pub struct Forward {
    /// `N x d`
    pub accelerations: Var,
    /// `E x message_dim`
    pub messages: Var,
    /// `E x d` pair forces as read out from the model.
    pub pair_forces: Var,
}

/// Plain-array outputs for one snapshot or batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub accelerations: Array2<f64>,
    pub pair_forces: Array2<f64>,
    /// Potential variant only, one per edge.
    pub pair_potentials: Option<Vec<f64>>,
}

/// Per-edge quantities read out of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Pairwise {
    pub forces: Array2<f64>,
    pub potentials: Option<Vec<f64>>,
}

impl Model {
    /// Fresh model with Glorot-initialized networks and zero GN+ scalars.
    /// `n_particles` sizes the per-particle scalars of [`ModelKind::GnPlus`].
    pub fn new(
        kind: ModelKind,
        layout: FeatureLayout,
        arch: ArchSpec,
        n_particles: usize,
        seed: u64,
    ) -> Result<Self> {
        if arch.hidden_width == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = layout.dim;
        let edge_net = MlpParams::init(
            &arch.sizes(layout.edge_width(), kind.message_dim(d)),
            arch.activation,
            &mut rng,
        )?;
        let mut edge_net = edge_net;
        if kind.is_potential() && arch.zero_potential_output {
            if let Some(last) = edge_net.layers.last_mut() {
                last.weight.fill(0.0);
            }
        }
        let node_net = match kind {
            ModelKind::BaselineGn => Some(MlpParams::init(
                &arch.sizes(layout.node_width() + d, d),
                arch.activation,
                &mut rng,
            )?),
            _ => None,
        };
        let node_scalars = match kind {
            ModelKind::GnPlus => Some(Array2::zeros((n_particles, 1))),
            ModelKind::GnPlusUniform => Some(Array2::zeros((1, 1))),
            _ => None,
        };
        let model = Self {
            kind,
            layout,
            edge_net,
            node_net,
            node_scalars,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.layout.dim;
        if self.edge_net.in_dim() != self.layout.edge_width()
            || self.edge_net.out_dim() != self.kind.message_dim(d)
        {
            return Err(Error::config(format!(
                "edge network {:?} does not fit {} with layout {:?}",
                self.edge_net.sizes(),
                self.kind,
                self.layout
            )));
        }
        if self.kind.is_potential() {
            match self.edge_net.activation {
                ActivationKind::Relu => {
                    return Err(Error::config(
                        "ReLU cannot be used for the potential variant: its input gradient is piecewise constant",
                    ))
                }
                ActivationKind::LeakyRelu => log::warn!(
                    "LeakyReLU gives a piecewise-constant force field in the potential variant"
                ),
                _ => {}
            }
        }
        let needs_node = self.kind == ModelKind::BaselineGn;
        match &self.node_net {
            Some(n) if needs_node => {
                if n.in_dim() != self.layout.node_width() + d || n.out_dim() != d {
                    return Err(Error::config("node network has the wrong shape"));
                }
            }
            None if !needs_node => {}
            _ => return Err(Error::config(format!("{} node network mismatch", self.kind))),
        }
        let scalars_ok = match (self.kind, &self.node_scalars) {
            (ModelKind::GnPlus, Some(w)) => w.ncols() == 1,
            (ModelKind::GnPlusUniform, Some(w)) => w.dim() == (1, 1),
            (ModelKind::GnPlus | ModelKind::GnPlusUniform, None) => false,
            (_, s) => s.is_none(),
        };
        if !scalars_ok {
            return Err(Error::config(format!("{} node scalars mismatch", self.kind)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut p = self.edge_net.params();
        if let Some(n) = &self.node_net {
            p.extend(n.params());
        }
        p.extend(self.node_scalars.as_ref());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p = self.edge_net.params_mut();
        if let Some(n) = &mut self.node_net {
            p.extend(n.params_mut());
        }
        p.extend(self.node_scalars.as_mut());
        p
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|a| a.len()).sum()
    }

    pub fn param_norm(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|a| a.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelBinding {
        ModelBinding {
            edge: self.edge_net.bind(tape),
            node: self.node_net.as_ref().map(|n| n.bind(tape)),
            scalars: self.node_scalars.as_ref().map(|w| tape.leaf(w.clone())),
        }
    }

    /// Whether the model can produce accelerations for `batch`. GN+ has one
    /// scalar per training particle and cannot handle unseen particles.
    pub fn check_batch(&self, batch: &Batch) -> Result<()> {
        self.layout.check_compatible(&batch.layout)?;
        if self.kind == ModelKind::GnPlus {
            let k = self.node_scalars.as_ref().map_or(0, |w| w.nrows());
            if batch.particles.iter().any(|&p| p >= k) {
                return Err(Error::config(format!(
                    "GN+ has scalars for {k} particles and cannot predict accelerations of other systems"
                )));
            }
        }
        Ok(())
    }

    /// Record the whole forward pass for `batch`.
    pub fn forward_tape(&self, tape: &mut Tape, binding: &ModelBinding, batch: &Batch) -> Result<Forward> {
        self.check_batch(batch)?;
        let inputs = tape.leaf(batch.edge_inputs.clone());
        let edge_fn = BoundMlp {
            params: &self.edge_net,
            binding: &binding.edge,
        };
        if self.kind.is_potential() {
            let (messages, pair_forces) =
                potential_pair_forces(tape, &edge_fn, inputs, &self.layout)?;
            let accelerations = force_operator_tape(tape, pair_forces, batch)?;
            return Ok(Forward {
                accelerations,
                messages,
                pair_forces,
            });
        }
        let messages = edge_fn.messages(tape, inputs)?;
        let accelerations = match self.kind {
            ModelKind::PignpiForce => force_operator_tape(tape, messages, batch)?,
            ModelKind::BaselineGn => {
                let node_net = self.node_net.as_ref().unwrap();
                let agg = tape.scatter_rows(messages, batch.receivers.clone(), batch.n_nodes());
                let eta = tape.leaf(batch.node_features.clone());
                let x = tape.concat_cols(eta, agg);
                node_net.forward_tape(tape, binding.node.as_ref().unwrap(), x)?
            }
            ModelKind::GnPlus | ModelKind::GnPlusUniform => {
                let agg = tape.scatter_rows(messages, batch.receivers.clone(), batch.n_nodes());
                let idx: Arc<[usize]> = if self.kind == ModelKind::GnPlus {
                    batch.particles.clone()
                } else {
                    vec![0; batch.n_nodes()].into()
                };
                let w = tape.gather_rows(binding.scalars.unwrap(), idx);
                let w = tape.scale(w, -std::f64::consts::LN_10);
                let factor = tape.exp(w);
                let factor = tape.broadcast_cols(factor, self.dim());
                tape.mul(agg, factor)
            }
            ModelKind::PignpiPotential => unreachable!(),
        };
        Ok(Forward {
            accelerations,
            messages,
            pair_forces: messages,
        })
    }

    pub fn predict_batch(&self, batch: &Batch) -> Result<Prediction> {
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let fwd = self.forward_tape(&mut tape, &binding, batch)?;
        Ok(Prediction {
            accelerations: tape.value(fwd.accelerations).clone(),
            pair_forces: tape.value(fwd.pair_forces).clone(),
            pair_potentials: self
                .kind
                .is_potential()
                .then(|| tape.value(fwd.messages).iter().copied().collect()),
        })
    }

    pub fn predict(&self, snapshot: &GraphSnapshot) -> Result<Prediction> {
        self.predict_batch(&Batch::from_one(snapshot)?)
    }

    /// Messages and pair forces for arbitrary edge inputs, without any node
    /// side. Works for every kind, including GN+ on unseen systems.
    pub fn evaluate_edges(&self, inputs: &Array2<f64>) -> Result<Pairwise> {
        if inputs.ncols() != self.layout.edge_width() {
            return Err(Error::config(format!(
                "edge inputs have {} columns, model expects {}",
                inputs.ncols(),
                self.layout.edge_width()
            )));
        }
        if !self.kind.is_potential() {
            return Ok(Pairwise {
                forces: self.edge_net.forward(inputs)?,
                potentials: None,
            });
        }
        let mut tape = Tape::new();
        let binding = self.edge_net.bind(&mut tape);
        let x = tape.leaf(inputs.clone());
        let edge_fn = BoundMlp {
            params: &self.edge_net,
            binding: &binding,
        };
        let (m, f) = potential_pair_forces(&mut tape, &edge_fn, x, &self.layout)?;
        Ok(Pairwise {
            forces: tape.value(f).clone(),
            potentials: Some(tape.value(m).iter().copied().collect()),
        })
    }

    pub fn to_checkpoint(&self, seed: Option<u64>) -> ModelCheckpoint {
        ModelCheckpoint {
            version: MODEL_CHECKPOINT_VERSION,
            kind: self.kind,
            layout: self.layout,
            edge_net: MlpCheckpoint::from_params(&self.edge_net, seed),
            node_net: self
                .node_net
                .as_ref()
                .map(|n| MlpCheckpoint::from_params(n, seed)),
            node_scalars: self
                .node_scalars
                .as_ref()
                .map(|w| w.iter().copied().collect()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: Option<u64>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint(seed))?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: ModelCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.to_model()
    }
}

/// Read out per-edge forces (and potentials for the potential variant).
pub fn extract_pairwise(model: &Model, snapshot: &GraphSnapshot) -> Result<Pairwise> {
    model.layout.check_compatible(&snapshot.layout)?;
    model.evaluate_edges(&snapshot.edge_inputs())
}

pub const MODEL_CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub layout: FeatureLayout,
    pub edge_net: MlpCheckpoint,
    pub node_net: Option<MlpCheckpoint>,
    pub node_scalars: Option<Vec<f64>>,
}

impl ModelCheckpoint {
    pub fn to_model(&self) -> Result<Model> {
        if self.version != MODEL_CHECKPOINT_VERSION {
            return Err(Error::data(format!(
                "unsupported model checkpoint version {}",
                self.version
            )));
        }
        if self.layout.version != crate::graph::LAYOUT_VERSION {
            return Err(Error::data(format!(
                "checkpoint uses feature layout version {}, this build uses {}",
                self.layout.version,
                crate::graph::LAYOUT_VERSION
            )));
        }
        let model = Model {
            kind: self.kind,
            layout: self.layout,
            edge_net: self.edge_net.to_params()?,
            node_net: self.node_net.as_ref().map(|n| n.to_params()).transpose()?,
            node_scalars: self
                .node_scalars
                .as_ref()
                .map(|w| Array2::from_shape_vec((w.len(), 1), w.clone()).unwrap()),
        };
        model.validate()?;
        Ok(model)
    }
}
