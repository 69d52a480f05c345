//! Minibatch Adam training with a held-out validation split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::TrainingSet;
use super::model::SurrogateModel;
use super::{Family, MethodKind};
use crate::netcore::{AdamConfig, AdamState, Affine, Head, Network, NetworkSpec};
use crate::parallel::Execution;
use crate::simulator::{seeded_rng, ObservableShape, TrainingPair};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Widths of the tanh hidden layers.
    pub hidden: Vec<usize>,
    /// Components of the mixture head used for vector observables.
    pub mixture_components: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Fraction of the records held out for early stopping.
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![10],
            mixture_components: 10,
            epochs: 100,
            batch_size: 128,
            adam: AdamConfig::default(),
            validation_fraction: 0.2,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.mixture_components == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        Ok(())
    }
}

/// Loss curves and bookkeeping of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub method: MethodKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub train_loss: Vec<f64>,
    /// Validation loss per epoch (training loss when there is no validation split).
    pub validation_loss: Vec<f64>,
    /// Epoch (0-based) whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Clamped log-ratio evaluations over the whole run.
    pub saturation_count: u64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: SurrogateModel,
    pub log: TrainingLog,
    /// Optimizer state at the kept epoch.
    pub optimizer: AdamState,
}

fn network_spec(kind: MethodKind, shape: ObservableShape, theta_dim: usize, cfg: &TrainConfig) -> NetworkSpec {
    let (x_dim, spec_theta, head) = match (kind.method.family(), shape) {
        (Family::Ratio, _) => (shape.feature_dim(), theta_dim, Head::Scalar),
        (Family::Density, ObservableShape::Bins { bins }) => (0, theta_dim, Head::Softmax { bins }),
        (Family::Density, ObservableShape::Vector { dim }) => (
            0,
            theta_dim,
            Head::GaussianMixture {
                components: cfg.mixture_components,
                dim,
            },
        ),
        (Family::Local, _) => (shape.feature_dim(), 0, Head::Vector { dim: theta_dim }),
    };
    NetworkSpec {
        x_dim,
        theta_dim: spec_theta,
        hidden: cfg.hidden.clone(),
        head,
    }
}

/// Train a surrogate for `kind` on `records`.
///
/// The records are shuffled once with `seed` and the trailing
/// `validation_fraction` is held out; the weights of the epoch with the lowest
/// validation loss are returned. Identical inputs give bit-identical weights
/// regardless of `exec`.
pub fn train(
    kind: MethodKind,
    records: &[TrainingPair],
    shape: ObservableShape,
    cfg: &TrainConfig,
    seed: u64,
    exec: Execution,
) -> Result<Trained> {
    cfg.validate()?;
    let set = TrainingSet::new(kind, records, shape)?;
    let n = set.len();
    let mut rng = seeded_rng(seed, 2);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut n_val = (n as f64 * cfg.validation_fraction).floor() as usize;
    if n_val >= n {
        n_val = 0;
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let spec = network_spec(kind, shape, set.theta_dim(), cfg);
    let mut net = Network::init(spec, seed)?;
    net.input_norm = Affine::fit(net.spec.input_dim(), train_idx.iter().map(|&i| set.input(i)));
    if set.has_points() {
        net.target_norm = Some(Affine::fit(shape.feature_dim(), train_idx.iter().map(|&i| set.point(i))));
    }

    let mut adam = AdamState::new(net.weights.len());
    let mut best = (f64::INFINITY, net.weights.clone(), adam.clone(), 0usize);
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let (loss, grad) = net.grad_weights(&set, batch, exec)?;
            epoch_loss += loss * batch.len() as f64;
            adam.step(&cfg.adam, &mut net.weights, &grad);
        }
        if net.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("weights after epoch {epoch}")));
        }
        train_curve.push(epoch_loss / train_idx.len() as f64);
        let val = if val_idx.is_empty() {
            net.mean_loss(&set, &train_idx, exec)?
        } else {
            net.mean_loss(&set, &val_idx, exec)?
        };
        val_curve.push(val);
        if val < best.0 {
            best = (val, net.weights.clone(), adam.clone(), epoch);
        } else if cfg.patience > 0 && epoch - best.3 >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    let (_, weights, optimizer, best_epoch) = best;
    net.weights = weights;
    let log = TrainingLog {
        method: kind,
        seed,
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
        train_loss: train_curve,
        validation_loss: val_curve,
        best_epoch,
        stopped_early,
        saturation_count: set.saturation_count(),
    };
    let model = SurrogateModel::new(kind, net, set.reference().cloned(), shape)?;
    Ok(Trained { model, log, optimizer })
}
