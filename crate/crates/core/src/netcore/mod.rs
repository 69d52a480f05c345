//! Dense tanh networks with the three gradient paths the training methods need:
//!
//! * reverse-mode gradients of a loss w.r.t. the weights,
//! * forward-mode gradients of the head quantity w.r.t. the θ inputs,
//! * exact weight gradients of losses that depend on those θ-gradients
//!   (reverse-over-forward through the dual forward pass).
//!
//! Inputs are `[x features, θ]`; θ always occupies the trailing slice. Every
//! input is standardized with a fixed affine map before the first layer, and
//! the θ-gradients are reported in raw (unstandardized) coordinates.

mod adam;
mod batch;
pub mod dual_tape;
mod heads;
mod mlp;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use batch::{ExampleLoss, ExampleSpec, HeadView, HeadTarget, LossTerms};
pub use dual_tape::MAX_DIRS;
pub use heads::MixtureParams;

use crate::simulator::seeded_rng;
use crate::{Error, Result};
use heads::HeadScratch;
use mlp::Workspace;

/// Output head of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// One linear output (a log-ratio or a classifier logit).
    Scalar,
    /// A linear output vector of length `dim ≤ MAX_DIRS` (score regression).
    Vector { dim: usize },
    /// Log-probabilities over `bins` discrete outcomes.
    Softmax { bins: usize },
    /// Diagonal Gaussian mixture density over a `dim`-dimensional target.
    GaussianMixture { components: usize, dim: usize },
}

/// Scales of mixture components are `softplus(raw) + SCALE_FLOOR`.
pub const SCALE_FLOOR: f64 = 1e-3;

impl Head {
    pub fn output_dim(&self) -> usize {
        match *self {
            Head::Scalar => 1,
            Head::Vector { dim } => dim,
            Head::Softmax { bins } => bins,
            Head::GaussianMixture { components, dim } => components * (1 + 2 * dim),
        }
    }

    /// Whether the head defines a scalar quantity with θ-gradients.
    pub fn has_quantity(&self) -> bool {
        !matches!(self, Head::Vector { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Number of observable features at the start of the input.
    pub x_dim: usize,
    /// Number of θ components at the end of the input.
    pub theta_dim: usize,
    /// Widths of the tanh hidden layers.
    pub hidden: Vec<usize>,
    pub head: Head,
}

/// Shape of one dense layer inside the flat weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the row-major `fan_out × fan_in` matrix.
    pub w_offset: usize,
    pub b_offset: usize,
}

impl NetworkSpec {
    pub fn input_dim(&self) -> usize {
        self.x_dim + self.theta_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_dim() == 0 {
            return bad("network needs at least one input".into());
        }
        if self.theta_dim > MAX_DIRS {
            return bad(format!("θ dimension {} exceeds {MAX_DIRS}", self.theta_dim));
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be at least 1".into());
        }
        match self.head {
            Head::Softmax { bins } if bins < 2 => bad("softmax head needs at least 2 bins".into()),
            Head::GaussianMixture { components, dim } if components == 0 || dim == 0 => {
                bad("mixture head needs components ≥ 1 and dim ≥ 1".into())
            }
            Head::Vector { dim } if dim == 0 || dim > MAX_DIRS => {
                bad(format!("vector head dimension must be in 1..={MAX_DIRS}"))
            }
            _ => Ok(()),
        }
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(&self.hidden);
        sizes.push(self.head.output_dim());
        let mut offset = 0;
        sizes
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    w_offset: offset,
                    b_offset: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                shape
            })
            .collect()
    }

    pub fn n_weights(&self) -> usize {
        self.layers().iter().map(|l| l.fan_in * l.fan_out + l.fan_out).sum()
    }
}

/// Fixed affine standardization `(v − shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Affine {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Per-column mean and standard deviation of `rows`; degenerate columns get scale 1.
    pub fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let rows: Vec<&[f64]> = rows.collect();
        for r in &rows {
            n += 1;
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        if n == 0 {
            return Affine::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for ((q, v), m) in sq.iter_mut().zip(r.iter()).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let scale = sq
            .iter()
            .map(|q| {
                let sd = (q / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Affine { shift: mean, scale }
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..v.len() {
            out[i] = (v[i] - self.shift[i]) / self.scale[i];
        }
    }

    /// `−Σ log scale`: log-Jacobian of the standardization.
    pub fn log_jacobian(&self) -> f64 {
        -self.scale.iter().map(|s| s.ln()).sum::<f64>()
    }
}

/// Network with its weights and standardization maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub weights: Vec<f64>,
    pub input_norm: Affine,
    /// Standardization of mixture-head targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_norm: Option<Affine>,
}

/// Decoded head output for one input.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadOutput {
    Scalar(f64),
    Vector(Vec<f64>),
    /// Log-probabilities over the bins.
    LogProbs(Vec<f64>),
    Mixture(MixtureParams),
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded_rng(seed, 3);
        let mut weights = vec![0.0; spec.n_weights()];
        for l in spec.layers() {
            let limit = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            for w in &mut weights[l.w_offset..l.w_offset + l.fan_in * l.fan_out] {
                *w = rng.random_range(-limit..limit);
            }
        }
        let target_norm = match spec.head {
            Head::GaussianMixture { dim, .. } => Some(Affine::identity(dim)),
            _ => None,
        };
        Ok(Network {
            input_norm: Affine::identity(spec.input_dim()),
            spec,
            weights,
            target_norm,
        })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let mut n = Network::init(spec, 0)?;
        n.weights.iter_mut().for_each(|w| *w = 0.0);
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.weights.len() != self.spec.n_weights() {
            return Err(Error::DimensionMismatch {
                what: "weights",
                expected: self.spec.n_weights(),
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights".into()));
        }
        let in_dim = self.spec.input_dim();
        if self.input_norm.shift.len() != in_dim || self.input_norm.scale.len() != in_dim {
            return Err(Error::DimensionMismatch {
                what: "input standardization",
                expected: in_dim,
                got: self.input_norm.shift.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        if x.len() != self.spec.x_dim {
            return Err(Error::DimensionMismatch {
                what: "x input",
                expected: self.spec.x_dim,
                got: x.len(),
            });
        }
        if theta.len() != self.spec.theta_dim {
            return Err(Error::DimensionMismatch {
                what: "θ input",
                expected: self.spec.theta_dim,
                got: theta.len(),
            });
        }
        if x.iter().chain(theta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    pub(crate) fn workspace(&self) -> (Workspace, HeadScratch) {
        (Workspace::new(&self.spec), HeadScratch::default())
    }

    /// Raw output-layer activations.
    pub fn raw_outputs(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x, theta)?;
        let (mut ws, _) = self.workspace();
        let input: Vec<f64> = x.iter().chain(theta).copied().collect();
        ws.forward(self, &input, 0);
        Ok(ws.outputs().to_vec())
    }

    /// Decoded head output at `(x, θ)`.
    pub fn forward(&self, x: &[f64], theta: &[f64]) -> Result<HeadOutput> {
        let o = self.raw_outputs(x, theta)?;
        Ok(match self.spec.head {
            Head::Scalar => HeadOutput::Scalar(o[0]),
            Head::Vector { .. } => HeadOutput::Vector(o),
            Head::Softmax { .. } => HeadOutput::LogProbs(heads::log_softmax(&o)),
            Head::GaussianMixture { components, dim } => {
                let norm = self.target_norm.clone().unwrap_or_else(|| Affine::identity(dim));
                HeadOutput::Mixture(MixtureParams::from_outputs(&o, components, dim, &norm))
            }
        })
    }

    /// Head quantity and its θ-gradient: the scalar output for scalar heads,
    /// `log p̂(target|θ)` for density heads.
    pub fn quantity_and_theta_gradient(
        &self,
        x: &[f64],
        theta: &[f64],
        target: HeadTarget<'_>,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_input(x, theta)?;
        if !self.spec.head.has_quantity() {
            return Err(Error::Unsupported("vector heads have no scalar quantity".into()));
        }
        let (mut ws, mut hs) = self.workspace();
        let input: Vec<f64> = x.iter().chain(theta).copied().collect();
        let dirs = self.spec.theta_dim;
        ws.forward(self, &input, dirs);
        let view = hs.eval(self, &ws, target, dirs)?;
        Ok((view.quantity, view.quantity_tangent[..dirs].to_vec()))
    }

    /// `∇θ` of the head quantity (see [`quantity_and_theta_gradient`](Self::quantity_and_theta_gradient)).
    pub fn theta_gradient(&self, x: &[f64], theta: &[f64], target: HeadTarget<'_>) -> Result<Vec<f64>> {
        self.quantity_and_theta_gradient(x, theta, target).map(|(_, g)| g)
    }

    /// Mean loss over `indices` of `loss` and its gradient w.r.t. the weights.
    pub fn grad_weights<L: ExampleLoss + ?Sized>(
        &self,
        loss: &L,
        indices: &[usize],
        exec: crate::parallel::Execution,
    ) -> Result<(f64, Vec<f64>)> {
        batch::loss_and_grad(self, loss, indices, exec)
    }

    /// Mean loss over `indices` without gradients.
    pub fn mean_loss<L: ExampleLoss + ?Sized>(
        &self,
        loss: &L,
        indices: &[usize],
        exec: crate::parallel::Execution,
    ) -> Result<f64> {
        batch::loss_only(self, loss, indices, exec)
    }

    /// Weight gradient of `‖target_score − ∇θ q(x, θ)‖²`.
    pub fn grad_weights_of_score_penalty(
        &self,
        x: &[f64],
        theta: &[f64],
        target: HeadTarget<'_>,
        target_score: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        self.check_input(x, theta)?;
        if target_score.len() != self.spec.theta_dim {
            return Err(Error::DimensionMismatch {
                what: "target score",
                expected: self.spec.theta_dim,
                got: target_score.len(),
            });
        }
        let penalty = batch::ScorePenalty {
            input: x.iter().chain(theta).copied().collect(),
            target,
            score: target_score.to_vec(),
        };
        batch::loss_and_grad(self, &penalty, &[0], crate::parallel::Execution::Sequential)
    }
}
