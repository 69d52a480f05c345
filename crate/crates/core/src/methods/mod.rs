//! Inference strategies: loss functions, training and log-ratio read-outs.
//!
//! | method  | estimates            | loss                 | θ sampling        |
//! |---------|----------------------|----------------------|-------------------|
//! | CARL    | r̂(x\|θ0, θ1)          | cross-entropy        | paired            |
//! | ROLR    | r̂(x\|θ0, θ1)          | ratio regression     | paired            |
//! | CASCAL  | r̂(x\|θ0, θ1)          | XE + α score penalty | paired            |
//! | RASCAL  | r̂(x\|θ0, θ1)          | ROLR + α score       | paired            |
//! | NDE     | p̂(x\|θ)               | neg. log-likelihood  | θ ~ prior         |
//! | SCANDAL | p̂(x\|θ)               | NLL + α score        | θ ~ prior         |
//! | SALLY   | t̂(x\|θ_ref)           | score regression     | θ = θ_ref         |
//! | SALLINO | t̂(x\|θ_ref)           | score regression     | θ = θ_ref         |
//!
//! Ratio models output `log r̂` directly. For the classifier methods this is
//! minus the logit of the decision function `ŝ`, so that `r̂ = (1 − ŝ)/ŝ`.

mod local;
mod losses;
mod model;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use local::{calibrate_local, Binning, Histogram, LocalCalibration, PairCalibration, BINS_PER_DIM, MIN_CALIBRATION_SIMS};
pub use losses::{loss_value, LossInput, TrainingSet, LOG_RATIO_CLAMP};
pub use model::{LogRatio, SurrogateModel};
pub use train::{train, TrainConfig, Trained, TrainingLog};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Carl,
    Nde,
    Rolr,
    Rascal,
    Cascal,
    Scandal,
    Sally,
    Sallino,
}

/// What a method's network estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ratio,
    Density,
    Local,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Carl,
        Method::Nde,
        Method::Rolr,
        Method::Rascal,
        Method::Cascal,
        Method::Scandal,
        Method::Sally,
        Method::Sallino,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Carl => "CARL",
            Method::Nde => "NDE",
            Method::Rolr => "ROLR",
            Method::Rascal => "RASCAL",
            Method::Cascal => "CASCAL",
            Method::Scandal => "SCANDAL",
            Method::Sally => "SALLY",
            Method::Sallino => "SALLINO",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Method::Carl | Method::Rolr | Method::Rascal | Method::Cascal => Family::Ratio,
            Method::Nde | Method::Scandal => Family::Density,
            Method::Sally | Method::Sallino => Family::Local,
        }
    }

    /// Weight of the score term when none is given.
    pub fn default_alpha(self) -> f64 {
        match self {
            Method::Rascal | Method::Cascal => 5.0,
            Method::Scandal => 1.0,
            _ => 0.0,
        }
    }

    /// Whether the loss has an α-weighted score term.
    pub fn has_score_term(self) -> bool {
        matches!(self, Method::Rascal | Method::Cascal | Method::Scandal)
    }

    /// The loss that α = 0 reduces this method to.
    pub fn base(self) -> Method {
        match self {
            Method::Rascal => Method::Rolr,
            Method::Cascal => Method::Carl,
            Method::Scandal => Method::Nde,
            m => m,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// A method together with its score-term weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodKind {
    pub method: Method,
    pub alpha: f64,
}

impl MethodKind {
    pub fn new(method: Method, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Config(format!("α must be finite and non-negative, got {alpha}")));
        }
        Ok(MethodKind {
            method,
            alpha: if method.has_score_term() { alpha } else { 0.0 },
        })
    }

    pub fn with_default_alpha(method: Method) -> Self {
        MethodKind {
            method,
            alpha: method.default_alpha(),
        }
    }

    /// Whether training evaluates θ-gradients of the network.
    pub fn uses_score_penalty(&self) -> bool {
        self.method.has_score_term() && self.alpha > 0.0
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.method.has_score_term() {
            write!(f, "{}(α={})", self.method, self.alpha)
        } else {
            write!(f, "{}", self.method)
        }
    }
}
