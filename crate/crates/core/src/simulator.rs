//! Common interface of the instrumented simulators and the θ-sampling plans
//! that turn them into training data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::parallel::{map_indices, Execution};
use crate::{Error, ParamPoint, Result};

/// Deterministic generator for a given seed and stream.
///
/// Stream 0 drives the simulators, stream 1 the θ draws of sampling plans and
/// stream 2 the training loop.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One simulator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observable {
    /// Galton board bin.
    Bin(u32),
    /// Real-valued summary vector (Lotka-Volterra).
    Summary(Vec<f64>),
}

impl Observable {
    pub fn feature_dim(&self) -> usize {
        match self {
            Observable::Bin(_) => 1,
            Observable::Summary(v) => v.len(),
        }
    }

    pub fn push_features(&self, out: &mut Vec<f64>) {
        match self {
            Observable::Bin(b) => out.push(*b as f64),
            Observable::Summary(v) => out.extend_from_slice(v),
        }
    }

    pub fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.feature_dim());
        self.push_features(&mut v);
        v
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Observable::Bin(_) => true,
            Observable::Summary(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

/// Kind and size of a simulator's observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableShape {
    /// Discrete outcomes `0..bins`.
    Bins { bins: usize },
    /// Real vectors of length `dim`.
    Vector { dim: usize },
}

impl ObservableShape {
    pub fn feature_dim(&self) -> usize {
        match *self {
            ObservableShape::Bins { .. } => 1,
            ObservableShape::Vector { dim } => dim,
        }
    }

    /// Whether `x` is a valid observable of this shape.
    pub fn admits(&self, x: &Observable) -> bool {
        match (*self, x) {
            (ObservableShape::Bins { bins }, Observable::Bin(b)) => (*b as usize) < bins,
            (ObservableShape::Vector { dim }, Observable::Summary(v)) => v.len() == dim,
            _ => false,
        }
    }
}

/// Quantities accumulated along one latent trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceAccumulators {
    /// `log p(x,z|θ0) − log p(x,z|θ1)`.
    pub log_joint_ratio: f64,
    /// `∇θ log p(x,z|θ)` at θ0.
    pub joint_score: Vec<f64>,
}

impl TraceAccumulators {
    pub fn zeros(dim: usize) -> Self {
        TraceAccumulators {
            log_joint_ratio: 0.0,
            joint_score: vec![0.0; dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.log_joint_ratio.is_finite() && self.joint_score.iter().all(|v| v.is_finite())
    }
}

/// A simulator that can report joint ratio and joint score along its trace.
pub trait Simulator: Sync {
    /// Short identifier stored in dataset headers.
    fn id(&self) -> &'static str;

    fn theta_dim(&self) -> usize;

    fn observable_shape(&self) -> ObservableShape;

    /// Stable digest of the simulator configuration.
    fn config_digest(&self) -> String;

    /// Run one trace generated under `theta_gen`; the ratio is accumulated at
    /// `(theta0, theta1)` and the score at `theta0`, along that same trace.
    fn simulate_augmented(
        &self,
        theta_gen: &ParamPoint,
        theta0: &ParamPoint,
        theta1: &ParamPoint,
        seed: u64,
    ) -> Result<(Observable, TraceAccumulators)>;
}

/// Prior over parameter points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Fixed { point: ParamPoint },
    /// Uniform over a finite list of points.
    Grid { points: Vec<ParamPoint> },
    /// Uniform over an axis-aligned box.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
}

impl Prior {
    /// `n` equally spaced scalar points on `[low, high]`.
    pub fn linear_grid(low: f64, high: f64, n: usize) -> Prior {
        let points = (0..n)
            .map(|i| {
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                ParamPoint::scalar(low + t * (high - low))
            })
            .collect();
        Prior::Grid { points }
    }

    /// Box of half-width `half_width` around `center`.
    pub fn box_around(center: &ParamPoint, half_width: f64) -> Prior {
        Prior::UniformBox {
            low: center.as_slice().iter().map(|c| c - half_width).collect(),
            high: center.as_slice().iter().map(|c| c + half_width).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::Fixed { point } => point.dim(),
            Prior::Grid { points } => points.first().map_or(0, |p| p.dim()),
            Prior::UniformBox { low, .. } => low.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Prior::Fixed { point } => point.is_finite(),
            Prior::Grid { points } => {
                !points.is_empty()
                    && points.iter().all(|p| p.is_finite() && p.dim() == points[0].dim())
            }
            Prior::UniformBox { low, high } => {
                low.len() == high.len()
                    && low.iter().zip(high).all(|(a, b)| a.is_finite() && b.is_finite() && a <= b)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid prior {self:?}")))
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> ParamPoint {
        match self {
            Prior::Fixed { point } => point.clone(),
            Prior::Grid { points } => points[rng.random_range(0..points.len())].clone(),
            Prior::UniformBox { low, high } => ParamPoint::new(
                low.iter()
                    .zip(high)
                    .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                    .collect(),
            ),
        }
    }
}

/// How parameter points are attached to samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSampling {
    /// Ratio training data: consecutive samples form a pair sharing θ0 ~ prior;
    /// the first is generated at θ0 (`y = 0`), the second at the fixed θ1 (`y = 1`).
    Paired { theta0: Prior, theta1: ParamPoint },
    /// Density training data: θ ~ prior, every sample generated at θ0 = θ (`y = 0`).
    /// The stored ratio is still taken against the fixed θ1.
    Single { theta: Prior, theta1: ParamPoint },
    /// Local-model training data: everything generated at θ_ref.
    Reference { theta_ref: ParamPoint },
}

impl ThetaSampling {
    pub fn theta_dim(&self) -> usize {
        match self {
            ThetaSampling::Paired { theta1, .. } | ThetaSampling::Single { theta1, .. } => {
                theta1.dim()
            }
            ThetaSampling::Reference { theta_ref } => theta_ref.dim(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let (prior, fixed) = match self {
            ThetaSampling::Paired { theta0, theta1 } => (Some(theta0), theta1),
            ThetaSampling::Single { theta, theta1 } => (Some(theta), theta1),
            ThetaSampling::Reference { theta_ref } => (None, theta_ref),
        };
        if !fixed.is_finite() || fixed.dim() != dim {
            return Err(Error::Config(format!(
                "reference point {fixed} must be finite with dimension {dim}"
            )));
        }
        if let Some(p) = prior {
            p.validate()?;
            if p.dim() != dim {
                return Err(Error::Config(format!("prior dimension {} != {dim}", p.dim())));
            }
        }
        Ok(())
    }

    /// Parameters `(y, theta_gen, theta0, theta1)` of sample `i`.
    pub fn assign(&self, base_seed: u64, i: usize) -> (u8, ParamPoint, ParamPoint, ParamPoint) {
        match self {
            ThetaSampling::Paired { theta0, theta1 } => {
                let pair = (i / 2) as u64;
                let mut rng = seeded_rng(base_seed.wrapping_add(2 * pair), 1);
                let t0 = theta0.sample(&mut rng);
                if i % 2 == 0 {
                    (0, t0.clone(), t0, theta1.clone())
                } else {
                    (1, theta1.clone(), t0, theta1.clone())
                }
            }
            ThetaSampling::Single { theta, theta1 } => {
                let mut rng = seeded_rng(base_seed.wrapping_add(i as u64), 1);
                let t = theta.sample(&mut rng);
                (0, t.clone(), t, theta1.clone())
            }
            ThetaSampling::Reference { theta_ref } => {
                (0, theta_ref.clone(), theta_ref.clone(), theta_ref.clone())
            }
        }
    }
}

/// One augmented training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub x: Observable,
    /// 0 when generated at θ0, 1 when generated at θ1.
    pub y: u8,
    pub theta0: ParamPoint,
    pub theta1: ParamPoint,
    pub theta_gen: ParamPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_joint_ratio: Option<f64>,
    /// Joint score at θ0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_score: Option<Vec<f64>>,
}

impl TrainingPair {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.theta0.is_finite()
            && self.theta1.is_finite()
            && self.theta_gen.is_finite()
            && self.log_joint_ratio.is_none_or(|r| r.is_finite())
            && self
                .joint_score
                .as_ref()
                .is_none_or(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Whether the stored joint score was evaluated at the generating point.
    pub fn score_at_generator(&self) -> bool {
        self.theta_gen == self.theta0
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub records: Vec<TrainingPair>,
    /// Samples rejected by the simulator (e.g. population explosions).
    pub n_invalid: usize,
}

/// Simulate `n` samples under `plan`. Sample `i` uses simulator seed
/// `base_seed + i`; invalid samples are dropped and counted.
pub fn generate<S: Simulator + ?Sized>(
    sim: &S,
    plan: &ThetaSampling,
    n: usize,
    base_seed: u64,
    augment: bool,
    exec: Execution,
) -> Result<Generated> {
    plan.validate(sim.theta_dim())?;
    let outcomes = map_indices(n, exec, |i| {
        let (y, gen, t0, t1) = plan.assign(base_seed, i);
        sim.simulate_augmented(&gen, &t0, &t1, base_seed.wrapping_add(i as u64))
            .map(|(x, acc)| TrainingPair {
                x,
                y,
                theta0: t0,
                theta1: t1,
                theta_gen: gen,
                log_joint_ratio: augment.then_some(acc.log_joint_ratio),
                joint_score: augment.then_some(acc.joint_score),
            })
    });
    let mut records = Vec::with_capacity(n);
    let mut n_invalid = 0;
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) if e.is_invalid_sample() => n_invalid += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Generated { records, n_invalid })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_grid_endpoints() {
        let Prior::Grid { points } = Prior::linear_grid(-1.0, -0.4, 10) else {
            unreachable!()
        };
        assert_eq!(points.len(), 10);
        assert_eq!(points[0][0], -1.0);
        assert!((points[9][0] + 0.4).abs() < 1e-15);
        assert!((points[3][0] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn paired_plan_shares_theta0() {
        let plan = ThetaSampling::Paired {
            theta0: Prior::linear_grid(-1.0, -0.4, 10),
            theta1: ParamPoint::scalar(-0.6),
        };
        for pair in 0..20 {
            let (y0, g0, a0, _) = plan.assign(7, 2 * pair);
            let (y1, g1, a1, b1) = plan.assign(7, 2 * pair + 1);
            assert_eq!((y0, y1), (0, 1));
            assert_eq!(a0, a1);
            assert_eq!(g0, a0);
            assert_eq!(g1, b1);
        }
    }

    #[test]
    fn box_prior_stays_inside() {
        let prior = Prior::box_around(&ParamPoint::new(vec![1.0, -2.0]), 0.01);
        let mut rng = seeded_rng(3, 1);
        for _ in 0..1000 {
            let p = prior.sample(&mut rng);
            assert!((p[0] - 1.0).abs() <= 0.01 && (p[1] + 2.0).abs() <= 0.01);
        }
    }

    #[test]
    fn observable_json_shapes() {
        assert_eq!(serde_json::to_string(&Observable::Bin(4)).unwrap(), "4");
        assert_eq!(
            serde_json::from_str::<Observable>("[1.5,2]").unwrap(),
            Observable::Summary(vec![1.5, 2.0])
        );
    }
}
