//! Trained surrogates and their log-ratio read-outs.

use serde::{Deserialize, Serialize};

use super::local::LocalCalibration;
use super::{Family, Method, MethodKind};
use crate::netcore::{HeadOutput, HeadTarget, Network};
use crate::simulator::{Observable, ObservableShape};
use crate::{Error, ParamPoint, Result};

/// Reference points closer than this are treated as equal.
const REFERENCE_TOL: f64 = 1e-12;

/// A log-ratio read-out with the histogram flag of local methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRatio {
    pub value: f64,
    /// A calibration histogram had no raw counts in the looked-up bin, so the
    /// value rests on the additive smoothing alone.
    pub empty_bin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub kind: MethodKind,
    pub network: Network,
    /// θ1 of ratio models, θ_ref of local models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ParamPoint>,
    pub shape: ObservableShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<LocalCalibration>,
}

fn same_point(a: &ParamPoint, b: &ParamPoint) -> bool {
    a.dim() == b.dim() && a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= REFERENCE_TOL)
}

impl SurrogateModel {
    pub fn new(
        kind: MethodKind,
        network: Network,
        reference: Option<ParamPoint>,
        shape: ObservableShape,
    ) -> Result<Self> {
        network.validate()?;
        let family = kind.method.family();
        if family != Family::Density && reference.is_none() {
            return Err(Error::Config(format!("{} models need a reference point", kind.method)));
        }
        Ok(SurrogateModel {
            kind,
            network,
            reference,
            shape,
            calibration: None,
        })
    }

    pub fn method(&self) -> Method {
        self.kind.method
    }

    pub fn theta_dim(&self) -> usize {
        match self.kind.method.family() {
            Family::Local => self.reference.as_ref().map_or(0, ParamPoint::dim),
            _ => self.network.spec.theta_dim,
        }
    }

    fn check_x(&self, x: &Observable) -> Result<()> {
        if self.shape.admits(x) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what: "observable",
                expected: self.shape.feature_dim(),
                got: x.feature_dim(),
            })
        }
    }

    fn check_theta(&self, theta: &ParamPoint) -> Result<()> {
        if theta.dim() != self.theta_dim() {
            return Err(Error::DimensionMismatch {
                what: "θ",
                expected: self.theta_dim(),
                got: theta.dim(),
            });
        }
        Ok(())
    }

    fn require_family(&self, family: Family, what: &str) -> Result<()> {
        if self.kind.method.family() == family {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{what} is not available for {} models", self.kind.method)))
        }
    }

    /// `log p̂(x|θ)` of density models.
    pub fn log_density(&self, x: &Observable, theta: &ParamPoint) -> Result<f64> {
        self.require_family(Family::Density, "a density")?;
        self.check_x(x)?;
        self.check_theta(theta)?;
        let out = self.network.forward(&[], theta.as_slice())?;
        Ok(density_at(&out, x))
    }

    /// Estimated score `t̂(x|θ_ref)` of local models.
    pub fn estimated_score(&self, x: &Observable) -> Result<Vec<f64>> {
        self.require_family(Family::Local, "a score estimate")?;
        self.check_x(x)?;
        match self.network.forward(&x.features(), &[])? {
            HeadOutput::Vector(v) => Ok(v),
            _ => unreachable!("local models have vector heads"),
        }
    }

    /// `∇θ log r̂(x|θ, θ1)` of ratio models or `∇θ log p̂(x|θ)` of density models.
    pub fn theta_score(&self, x: &Observable, theta: &ParamPoint) -> Result<Vec<f64>> {
        self.check_x(x)?;
        self.check_theta(theta)?;
        match self.kind.method.family() {
            Family::Ratio => self.network.theta_gradient(&x.features(), theta.as_slice(), HeadTarget::None),
            Family::Density => {
                let features = x.features();
                let target = match x {
                    Observable::Bin(b) => HeadTarget::Bin(*b as usize),
                    Observable::Summary(_) => HeadTarget::Point(&features),
                };
                self.network.theta_gradient(&[], theta.as_slice(), target)
            }
            Family::Local => self.estimated_score(x),
        }
    }

    pub fn log_ratio(&self, x: &Observable, theta0: &ParamPoint, theta1: &ParamPoint) -> Result<f64> {
        self.log_ratio_detail(x, theta0, theta1).map(|r| r.value)
    }

    /// `log r̂(x|θ0, θ1)` through the method's read-out path.
    pub fn log_ratio_detail(&self, x: &Observable, theta0: &ParamPoint, theta1: &ParamPoint) -> Result<LogRatio> {
        self.check_x(x)?;
        self.check_theta(theta0)?;
        self.check_theta(theta1)?;
        let value = match self.kind.method.family() {
            Family::Ratio => {
                self.check_reference(theta1)?;
                self.ratio_output(x, theta0)?
            }
            Family::Density => {
                if theta0 == theta1 {
                    0.0
                } else {
                    self.log_density(x, theta0)? - self.log_density(x, theta1)?
                }
            }
            Family::Local => {
                let cal = self.calibration.as_ref().and_then(|c| c.find(theta0, theta1)).ok_or_else(|| {
                    Error::NotCalibrated {
                        theta0: theta0.to_string(),
                        theta1: theta1.to_string(),
                    }
                })?;
                let t = self.estimated_score(x)?;
                return Ok(cal.log_ratio(&t));
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite("log-ratio read-out".into()));
        }
        Ok(LogRatio {
            value,
            empty_bin: false,
        })
    }

    fn check_reference(&self, theta1: &ParamPoint) -> Result<()> {
        let trained = self.reference.as_ref().expect("ratio models carry θ1");
        if same_point(trained, theta1) {
            Ok(())
        } else {
            Err(Error::ReferenceMismatch {
                trained: trained.to_string(),
                requested: theta1.to_string(),
            })
        }
    }

    fn ratio_output(&self, x: &Observable, theta0: &ParamPoint) -> Result<f64> {
        match self.network.forward(&x.features(), theta0.as_slice())? {
            HeadOutput::Scalar(s) => Ok(s),
            _ => unreachable!("ratio models have scalar heads"),
        }
    }

    /// `log r̂(x_j|θ0_i, θ1)` for every pair, row-major over `theta0s`.
    ///
    /// Density models run the network once per distinct θ; local models
    /// compute `t̂(x)` once per observable.
    pub fn log_ratio_grid(&self, xs: &[Observable], theta0s: &[ParamPoint], theta1: &ParamPoint) -> Result<Vec<f64>> {
        for x in xs {
            self.check_x(x)?;
        }
        for t in theta0s.iter().chain(std::iter::once(theta1)) {
            self.check_theta(t)?;
        }
        let mut out = Vec::with_capacity(xs.len() * theta0s.len());
        match self.kind.method.family() {
            Family::Ratio => {
                self.check_reference(theta1)?;
                for t0 in theta0s {
                    for x in xs {
                        out.push(self.ratio_output(x, t0)?);
                    }
                }
            }
            Family::Density => {
                let den_out = self.network.forward(&[], theta1.as_slice())?;
                let den: Vec<f64> = xs.iter().map(|x| density_at(&den_out, x)).collect();
                for t0 in theta0s {
                    if t0 == theta1 {
                        out.extend(std::iter::repeat_n(0.0, xs.len()));
                        continue;
                    }
                    let num_out = self.network.forward(&[], t0.as_slice())?;
                    out.extend(xs.iter().zip(&den).map(|(x, d)| density_at(&num_out, x) - d));
                }
            }
            Family::Local => {
                let scores = xs.iter().map(|x| self.estimated_score(x)).collect::<Result<Vec<_>>>()?;
                for t0 in theta0s {
                    let cal = self.calibration.as_ref().and_then(|c| c.find(t0, theta1)).ok_or_else(|| {
                        Error::NotCalibrated {
                            theta0: t0.to_string(),
                            theta1: theta1.to_string(),
                        }
                    })?;
                    out.extend(scores.iter().map(|t| cal.log_ratio(t).value));
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-ratio read-out".into()));
        }
        Ok(out)
    }
}

fn density_at(out: &HeadOutput, x: &Observable) -> f64 {
    match (out, x) {
        (HeadOutput::LogProbs(lp), Observable::Bin(b)) => lp[*b as usize],
        (HeadOutput::Mixture(m), Observable::Summary(v)) => m.log_density(v),
        _ => unreachable!("observable shape checked against the head"),
    }
}
