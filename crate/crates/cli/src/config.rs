use std::path::Path;

use anyhow::{Context, Result};
use pignpi_core::autodiff::ActivationKind;
use pignpi_core::lj::LjSpec;
use pignpi_core::model::{ArchSpec, ModelKind};
use pignpi_core::sim::ForceLaw;
use pignpi_core::train::TrainConfig;
use pignpi_core::Error;
use serde::{Deserialize, Serialize};

/// One declarative experiment. Every list is a sweep axis; a run cell is
/// one element of their product, repeated `repetitions` times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub generalization: Option<GeneralizationConfig>,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
}

fn default_repetitions() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// `spring`, `charge`, `orbital`, `discontinuous` or `lj`.
    pub law: String,
    #[serde(default = "two")]
    pub dim: usize,
    #[serde(default = "eight")]
    pub n_particles: usize,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Lennard-Jones only: number of independent runs and the one used
    /// for training.
    #[serde(default)]
    pub n_runs: Option<usize>,
    #[serde(default)]
    pub train_run: usize,
}

fn two() -> usize {
    2
}
fn eight() -> usize {
    8
}
fn default_steps() -> usize {
    10_000
}
fn default_dt() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Analytic(ForceLaw),
    Lj(LjSpec),
}

impl DatasetConfig {
    pub fn source(&self) -> Result<Source> {
        if self.law.eq_ignore_ascii_case("lj") {
            let mut spec = LjSpec {
                n_steps: self.n_steps,
                ..LjSpec::default()
            };
            if let Some(n) = self.n_runs {
                spec.n_runs = n;
            }
            if self.dim != 3 {
                return Err(Error::Config("the LJ system is three-dimensional".into()).into());
            }
            if self.train_run >= spec.n_runs {
                return Err(Error::Config(format!(
                    "train_run {} but only {} runs",
                    self.train_run, spec.n_runs
                ))
                .into());
            }
            spec.validate()?;
            Ok(Source::Lj(spec))
        } else {
            let law: ForceLaw = self.law.parse()?;
            if !(2..=3).contains(&self.dim) || self.n_particles < 2 || self.n_steps < 10 {
                return Err(Error::Config(format!("invalid dataset {self:?}")).into());
            }
            if !(self.dt > 0.0) {
                return Err(Error::Config("dt must be positive".into()).into());
            }
            Ok(Source::Analytic(law))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kinds: Vec<String>,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activations: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let arch = ArchSpec::default();
        Self {
            kinds: vec!["pignpi-force".into()],
            hidden_layers: arch.hidden_layers,
            hidden_width: arch.hidden_width,
            activations: vec!["silu".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub final_learning_rate: Option<f64>,
    /// Default depends on the model kind.
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub betas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizationConfig {
    #[serde(default = "twelve")]
    pub n_particles: usize,
    #[serde(default = "fifteen_hundred")]
    pub n_steps: usize,
    /// Defaults to the experiment seed plus one.
    pub seed: Option<u64>,
}

fn twelve() -> usize {
    12
}
fn fifteen_hundred() -> usize {
    1500
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    #[serde(default)]
    pub reference_step: usize,
}

/// A single point of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: ModelKind,
    pub activation: ActivationKind,
    pub alpha: f64,
    pub beta: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!(
            "{}_{}_a{}_b{}",
            self.kind,
            self.activation,
            self.alpha,
            self.beta
        )
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()).into());
        }
        self.dataset.source()?;
        self.cells()?;
        for kind in self.kinds()? {
            self.train_config(kind, 0.0, 0)?.validate()?;
        }
        if self.noise.betas.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::Config("noise amplitudes must be non-negative".into()).into());
        }
        if self.evaluate.reference_step >= self.dataset.n_steps {
            return Err(Error::Config("reference step outside the simulation".into()).into());
        }
        Ok(())
    }

    fn kinds(&self) -> Result<Vec<ModelKind>> {
        if self.model.kinds.is_empty() {
            return Err(Error::Config("no model kinds".into()).into());
        }
        Ok(self
            .model
            .kinds
            .iter()
            .map(|k| k.parse())
            .collect::<Result<_, Error>>()?)
    }

    /// Product of every sweep axis, in a fixed order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let kinds = self.kinds()?;
        let activations: Vec<ActivationKind> = if self.model.activations.is_empty() {
            vec![ActivationKind::Silu]
        } else {
            self.model
                .activations
                .iter()
                .map(|a| a.parse())
                .collect::<Result<_, Error>>()?
        };
        let alphas = if self.train.alphas.is_empty() { vec![0.0] } else { self.train.alphas.clone() };
        let betas = if self.noise.betas.is_empty() { vec![0.0] } else { self.noise.betas.clone() };
        let mut cells = Vec::new();
        for &kind in &kinds {
            for &activation in &activations {
                for &alpha in &alphas {
                    for &beta in &betas {
                        cells.push(Cell {
                            kind,
                            activation,
                            alpha,
                            beta,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn arch(&self, activation: ActivationKind) -> ArchSpec {
        ArchSpec {
            hidden_layers: self.model.hidden_layers,
            hidden_width: self.model.hidden_width,
            activation,
            zero_potential_output: true,
        }
    }

    pub fn train_config(&self, kind: ModelKind, alpha: f64, seed: u64) -> Result<TrainConfig> {
        let mut c = TrainConfig::for_kind(kind);
        let t = &self.train;
        if let Some(v) = t.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = t.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = t.max_epochs {
            c.max_epochs = v;
        }
        c.final_learning_rate = t.final_learning_rate;
        c.grad_clip = t.grad_clip;
        c.alpha = alpha;
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }
}

/// Independent stream per repetition.
pub fn repetition_seed(base: u64, repetition: usize) -> u64 {
    base.wrapping_add((repetition as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
