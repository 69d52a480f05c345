//! Experiment configuration documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::read_json;
use crate::galton::GaltonConfig;
use crate::lotka::{LvConfig, LvParams};
use crate::methods::{Family, Method, MethodKind, TrainConfig};
use crate::simulator::{Prior, Simulator, ThetaSampling};
use crate::{Error, ParamPoint, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulatorConfig {
    Galton(GaltonConfig),
    Lotka(LvConfig),
}

impl SimulatorConfig {
    pub fn as_simulator(&self) -> &dyn Simulator {
        match self {
            SimulatorConfig::Galton(g) => g,
            SimulatorConfig::Lotka(l) => l,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SimulatorConfig::Galton(_) => "galton",
            SimulatorConfig::Lotka(_) => "lotka",
        }
    }
}

/// Evaluation set, reference and calibration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Fixed numerator hypotheses; when empty, `n_theta0` points are drawn from the prior.
    #[serde(default)]
    pub theta0: Vec<ParamPoint>,
    #[serde(default)]
    pub n_theta0: usize,
    /// Galton bins `lo..=hi` used as evaluation observables.
    #[serde(default)]
    pub bins: Option<(u32, u32)>,
    /// Observables simulated at θ1 when `bins` is absent.
    #[serde(default)]
    pub n_x: usize,
    /// Members of the ensemble reference (used where no exact oracle exists).
    pub ensemble_members: usize,
    /// Training records for each ensemble member.
    pub ensemble_records: usize,
    /// Method of the ensemble members.
    pub ensemble_method: Method,
    /// Simulations per hypothesis when calibrating local models.
    pub calibration_sims: usize,
    /// Seed of the evaluation set, the reference data and the calibration runs.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub simulator: SimulatorConfig,
    pub methods: Vec<Method>,
    /// Score weight for RASCAL, CASCAL and SCANDAL; each method's default when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Prior over θ0 (ratio methods) or θ (density methods).
    pub prior: Prior,
    /// Denominator hypothesis.
    pub theta1: ParamPoint,
    /// Reference point of local methods.
    pub theta_ref: ParamPoint,
    #[serde(default)]
    pub training: TrainConfig,
    /// Training-set sizes of the sample-size ladder, strictly increasing.
    pub sizes: Vec<usize>,
    /// Seeds per ladder point.
    pub seeds: usize,
    pub base_seed: u64,
    pub evaluation: EvaluationConfig,
}

impl ExperimentConfig {
    /// The Galton board ladder: ten θ0 in `[−1, −0.4]`, θ1 = −0.6, evaluation on
    /// bins 5..15 at θ0 = −0.8.
    pub fn galton() -> Self {
        ExperimentConfig {
            simulator: SimulatorConfig::Galton(GaltonConfig::default()),
            methods: vec![
                Method::Carl,
                Method::Rolr,
                Method::Cascal,
                Method::Rascal,
                Method::Nde,
                Method::Scandal,
            ],
            alpha: None,
            prior: Prior::linear_grid(-1.0, -0.4, 10),
            theta1: ParamPoint::scalar(-0.6),
            theta_ref: ParamPoint::scalar(-0.7),
            training: TrainConfig {
                epochs: 1000,
                ..TrainConfig::default()
            },
            sizes: vec![1_000, 10_000, 100_000],
            seeds: 5,
            base_seed: 1,
            evaluation: EvaluationConfig {
                theta0: vec![ParamPoint::scalar(-0.8)],
                n_theta0: 0,
                bins: Some((5, 15)),
                n_x: 0,
                ensemble_members: 5,
                ensemble_records: 100_000,
                ensemble_method: Method::Scandal,
                calibration_sims: 100_000,
                seed: 7_000_000,
            },
        }
    }

    /// The Lotka-Volterra ladder: log-rates uniform in a ±0.01 box around the
    /// reference hypothesis, density methods, 5-member SCANDAL ensemble reference.
    pub fn lotka() -> Self {
        let reference: ParamPoint = LvParams::reference().into();
        ExperimentConfig {
            simulator: SimulatorConfig::Lotka(LvConfig::default()),
            methods: vec![Method::Nde, Method::Scandal],
            alpha: None,
            prior: Prior::box_around(&reference, 0.01),
            theta1: reference.clone(),
            theta_ref: reference,
            training: TrainConfig {
                hidden: vec![50, 50],
                ..TrainConfig::default()
            },
            sizes: vec![2_000],
            seeds: 5,
            base_seed: 1,
            evaluation: EvaluationConfig {
                theta0: Vec::new(),
                n_theta0: 100,
                bins: None,
                n_x: 500,
                ensemble_members: 5,
                ensemble_records: 20_000,
                ensemble_method: Method::Scandal,
                calibration_sims: 1_000,
                seed: 7_000_000,
            },
        }
    }

    pub fn preset(simulator: &str) -> Result<Self> {
        match simulator {
            "galton" => Ok(Self::galton()),
            "lotka" => Ok(Self::lotka()),
            other => Err(Error::Config(format!("unknown simulator {other:?}"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = read_json(path).map_err(|e| match e {
            Error::Corrupt { reason, .. } => Error::Config(format!("{}: {reason}", path.display())),
            e => e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.simulator.as_simulator().theta_dim();
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sample-size ladder must be strictly increasing".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("at least one seed per ladder point".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if let Some(a) = self.alpha {
            MethodKind::new(Method::Rascal, a)?;
        }
        self.training.validate()?;
        for (what, p) in [("theta1", &self.theta1), ("theta_ref", &self.theta_ref)] {
            if p.dim() != dim || !p.is_finite() {
                return Err(Error::Config(format!("{what} must be finite with dimension {dim}")));
            }
        }
        self.prior.validate()?;
        if self.prior.dim() != dim {
            return Err(Error::Config(format!("prior dimension {} != {dim}", self.prior.dim())));
        }
        let ev = &self.evaluation;
        if ev.theta0.is_empty() && ev.n_theta0 == 0 {
            return Err(Error::Config("evaluation needs theta0 points or n_theta0 > 0".into()));
        }
        if ev.theta0.iter().any(|p| p.dim() != dim) {
            return Err(Error::Config(format!("evaluation theta0 must have dimension {dim}")));
        }
        if ev.bins.is_none() && ev.n_x == 0 {
            return Err(Error::Config("evaluation needs bins or n_x > 0".into()));
        }
        if ev.bins.is_some() && !matches!(self.simulator, SimulatorConfig::Galton(_)) {
            return Err(Error::Config("evaluation bins only apply to the galton simulator".into()));
        }
        Ok(())
    }

    pub fn method_kind(&self, method: Method) -> Result<MethodKind> {
        match self.alpha {
            Some(a) => MethodKind::new(method, a),
            None => Ok(MethodKind::with_default_alpha(method)),
        }
    }

    /// θ sampling of the training data for `method`.
    pub fn sampling(&self, method: Method) -> ThetaSampling {
        match method.family() {
            Family::Ratio => ThetaSampling::Paired {
                theta0: self.prior.clone(),
                theta1: self.theta1.clone(),
            },
            Family::Density => ThetaSampling::Single {
                theta: self.prior.clone(),
                theta1: self.theta1.clone(),
            },
            Family::Local => ThetaSampling::Reference {
                theta_ref: self.theta_ref.clone(),
            },
        }
    }
}
