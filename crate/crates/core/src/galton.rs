//! Generalized Galton board.
//!
//! A ball falls through `n_rows` rows of nails. At each nail it bounces left
//! with probability
//!
//! ```text
//! p(z_h, z_v, θ) = (1 − f(z_v)) / 2 + f(z_v) · σ(5 θ (z_h − 1/2)),   f(z_v) = sin(π z_v)
//! ```
//!
//! where `(z_h, z_v)` is the nail position normalized to `[0, 1]²`. The
//! observable is the final bin, i.e. the number of rightward bounces.
//!
//! Geometry: after `k` right moves in `v` completed rows the ball sits at
//! lateral position `k − v/2`; the nail it hits next is at
//! `z_h = (k − v/2)/n_rows + 1/2`, `z_v = v/(n_rows − 1)`.
//!
//! Along a trace the simulator accumulates the joint log-ratio and the joint
//! score; [`GaltonConfig::exact_density`] propagates the bin distribution row
//! by row and gives the exact marginal likelihood that serves as ground truth.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::simulator::{seeded_rng, Observable, ObservableShape, Simulator, TraceAccumulators};
use crate::{Error, ParamPoint, Result};

pub const DEFAULT_ROWS: usize = 20;
pub const THETA_CURVATURE: f64 = 5.0;
/// Step probabilities must stay inside `[PROB_FLOOR, 1 − PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaltonConfig {
    pub n_rows: usize,
    pub theta_curvature: f64,
}

impl Default for GaltonConfig {
    fn default() -> Self {
        GaltonConfig {
            n_rows: DEFAULT_ROWS,
            theta_curvature: THETA_CURVATURE,
        }
    }
}

/// Final bin of a ball: number of rightward bounces, `0..=n_rows`.
pub type GaltonObservable = u32;

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn prob_left(z_h: f64, z_v: f64, theta: f64, curvature: f64) -> f64 {
    let f = (PI * z_v).sin();
    (1.0 - f) / 2.0 + f * sigmoid(curvature * theta * (z_h - 0.5))
}

fn prob_left_dtheta(z_h: f64, z_v: f64, theta: f64, curvature: f64) -> f64 {
    let f = (PI * z_v).sin();
    let c = curvature * (z_h - 0.5);
    let s = sigmoid(c * theta);
    f * s * (1.0 - s) * c
}

/// Probability of bouncing left at nail `(z_h, z_v)`.
pub fn nail_prob_left(z_h: f64, z_v: f64, theta: f64) -> f64 {
    prob_left(z_h, z_v, theta, THETA_CURVATURE)
}

/// `∂/∂θ` of [`nail_prob_left`].
pub fn nail_prob_left_dtheta(z_h: f64, z_v: f64, theta: f64) -> f64 {
    prob_left_dtheta(z_h, z_v, theta, THETA_CURVATURE)
}

/// One simulated trace with its move sequence (`true` = right).
#[derive(Debug, Clone)]
pub struct GaltonTrace {
    pub bin: GaltonObservable,
    pub accumulators: TraceAccumulators,
    pub moves: Vec<bool>,
}

impl GaltonConfig {
    pub fn new(n_rows: usize) -> Self {
        GaltonConfig {
            n_rows,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::Config("n_rows must be at least 1".into()));
        }
        if !self.theta_curvature.is_finite() {
            return Err(Error::Config("theta_curvature must be finite".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_rows + 1
    }

    /// Normalized position of the nail met in row `row` after `rights` right moves.
    pub fn nail_position(&self, row: usize, rights: usize) -> (f64, f64) {
        let n = self.n_rows as f64;
        let z_h = (rights as f64 - row as f64 / 2.0) / n + 0.5;
        // A single-row board has its only nail on the bottom edge, where f = 0.
        let z_v = if self.n_rows > 1 {
            row as f64 / (self.n_rows - 1) as f64
        } else {
            0.0
        };
        (z_h, z_v)
    }

    fn step_prob_left(&self, row: usize, rights: usize, theta: f64) -> f64 {
        let (z_h, z_v) = self.nail_position(row, rights);
        prob_left(z_h, z_v, theta, self.theta_curvature)
    }

    fn step_prob_left_dtheta(&self, row: usize, rights: usize, theta: f64) -> f64 {
        let (z_h, z_v) = self.nail_position(row, rights);
        prob_left_dtheta(z_h, z_v, theta, self.theta_curvature)
    }

    fn check_step(row: usize, p: f64) -> Result<()> {
        if (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p) {
            Ok(())
        } else {
            Err(Error::DegenerateStep { row, prob: p })
        }
    }

    /// Run one ball generated under `theta_gen`, accumulating the joint
    /// log-ratio at `(theta0, theta1)` and the joint score at `theta0`.
    pub fn simulate(
        &self,
        theta_gen: f64,
        theta0: f64,
        theta1: f64,
        rng_seed: u64,
    ) -> Result<(GaltonObservable, TraceAccumulators)> {
        let trace = self.simulate_trace(theta_gen, theta0, theta1, rng_seed)?;
        Ok((trace.bin, trace.accumulators))
    }

    /// Like [`simulate`](Self::simulate) but also returns the move sequence.
    pub fn simulate_trace(
        &self,
        theta_gen: f64,
        theta0: f64,
        theta1: f64,
        rng_seed: u64,
    ) -> Result<GaltonTrace> {
        self.validate()?;
        for (name, v) in [("theta_gen", theta_gen), ("theta0", theta0), ("theta1", theta1)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
        }
        let mut rng = seeded_rng(rng_seed, 0);
        let mut rights = 0usize;
        let mut log_ratio = 0.0;
        let mut score = 0.0;
        let mut moves = Vec::with_capacity(self.n_rows);
        for row in 0..self.n_rows {
            let p_gen = self.step_prob_left(row, rights, theta_gen);
            let p0 = self.step_prob_left(row, rights, theta0);
            let p1 = self.step_prob_left(row, rights, theta1);
            Self::check_step(row, p_gen)?;
            Self::check_step(row, p0)?;
            Self::check_step(row, p1)?;
            let dp0 = self.step_prob_left_dtheta(row, rights, theta0);
            let go_right = rng.random::<f64>() >= p_gen;
            if go_right {
                log_ratio += (1.0 - p0).ln() - (1.0 - p1).ln();
                score -= dp0 / (1.0 - p0);
                rights += 1;
            } else {
                log_ratio += p0.ln() - p1.ln();
                score += dp0 / p0;
            }
            moves.push(go_right);
        }
        let accumulators = TraceAccumulators {
            log_joint_ratio: log_ratio,
            joint_score: vec![score],
        };
        if !accumulators.is_finite() {
            return Err(Error::NonFinite("galton accumulators".into()));
        }
        Ok(GaltonTrace {
            bin: rights as GaltonObservable,
            accumulators,
            moves,
        })
    }

    /// `log p(x, z | θ)` of a fixed move sequence.
    pub fn trace_log_density(&self, moves: &[bool], theta: f64) -> f64 {
        let mut rights = 0;
        let mut total = 0.0;
        for (row, &right) in moves.iter().enumerate() {
            let p = self.step_prob_left(row, rights, theta);
            if right {
                total += (1.0 - p).ln();
                rights += 1;
            } else {
                total += p.ln();
            }
        }
        total
    }

    /// Exact `p(x|θ)` for every bin, by row-wise propagation of the
    /// distribution of right moves.
    pub fn exact_density(&self, theta: f64) -> Vec<f64> {
        let mut dist = vec![0.0; self.n_bins()];
        dist[0] = 1.0;
        let mut next = vec![0.0; self.n_bins()];
        for row in 0..self.n_rows {
            next.iter_mut().for_each(|v| *v = 0.0);
            for rights in 0..=row {
                let mass = dist[rights];
                if mass == 0.0 {
                    continue;
                }
                let p = self.step_prob_left(row, rights, theta);
                next[rights] += mass * p;
                next[rights + 1] += mass * (1.0 - p);
            }
            std::mem::swap(&mut dist, &mut next);
        }
        dist
    }

    /// Exact `log r(x|θ0,θ1)` for every bin.
    pub fn exact_log_ratio(&self, theta0: f64, theta1: f64) -> Result<Vec<f64>> {
        let p0 = self.exact_density(theta0);
        let p1 = self.exact_density(theta1);
        p0.iter()
            .zip(&p1)
            .enumerate()
            .map(|(bin, (&a, &b))| {
                if a <= 0.0 {
                    Err(Error::NonpositiveDensity { bin, prob: a })
                } else if b <= 0.0 {
                    Err(Error::NonpositiveDensity { bin, prob: b })
                } else {
                    Ok(a.ln() - b.ln())
                }
            })
            .collect()
    }

    /// `∂/∂θ log p(x|θ)` per bin by centered differences of the exact density.
    pub fn exact_score_fd(&self, theta: f64, h: f64) -> Vec<f64> {
        let plus = self.exact_density(theta + h);
        let minus = self.exact_density(theta - h);
        plus.iter()
            .zip(&minus)
            .map(|(a, b)| (a.ln() - b.ln()) / (2.0 * h))
            .collect()
    }
}

impl Simulator for GaltonConfig {
    fn id(&self) -> &'static str {
        "galton"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn observable_shape(&self) -> ObservableShape {
        ObservableShape::Bins { bins: self.n_bins() }
    }

    fn config_digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    fn simulate_augmented(
        &self,
        theta_gen: &ParamPoint,
        theta0: &ParamPoint,
        theta1: &ParamPoint,
        seed: u64,
    ) -> Result<(Observable, TraceAccumulators)> {
        for p in [theta_gen, theta0, theta1] {
            if p.dim() != 1 {
                return Err(Error::DimensionMismatch {
                    what: "galton θ",
                    expected: 1,
                    got: p.dim(),
                });
            }
        }
        let (bin, acc) = self.simulate(theta_gen[0], theta0[0], theta1[0], seed)?;
        Ok((Observable::Bin(bin), acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_nail_is_fair() {
        assert_eq!(nail_prob_left(0.5, 0.7, -0.8), 0.5);
        assert_eq!(nail_prob_left(0.3, 0.0, 1.0), 0.5);
        assert!((nail_prob_left(1.0, 0.5, -0.8) - 0.119_202_922_022_117_55).abs() < 1e-15);
    }

    #[test]
    fn dtheta_trivial_zeros() {
        for th in [-3.0, -0.8, 0.0, 2.5] {
            assert_eq!(nail_prob_left_dtheta(0.5, 0.3, th), 0.0);
            assert_eq!(nail_prob_left_dtheta(0.9, 0.0, th), 0.0);
        }
    }

    #[test]
    fn dtheta_matches_finite_difference() {
        let h = 1e-5;
        let fd = (nail_prob_left(1.0, 0.5, -0.8 + h) - nail_prob_left(1.0, 0.5, -0.8 - h)) / (2.0 * h);
        let an = nail_prob_left_dtheta(1.0, 0.5, -0.8);
        assert!(((fd - an) / an).abs() < 1e-6, "fd {fd} analytic {an}");
    }

    #[test]
    fn nail_positions_stay_in_unit_square() {
        let cfg = GaltonConfig::default();
        for row in 0..cfg.n_rows {
            for rights in 0..=row {
                let (h, v) = cfg.nail_position(row, rights);
                assert!((0.0..=1.0).contains(&h) && (0.0..=1.0).contains(&v));
            }
        }
        assert_eq!(cfg.nail_position(0, 0), (0.5, 0.0));
        assert_eq!(cfg.nail_position(19, 0).1, 1.0);
    }

    #[test]
    fn equal_thetas_give_zero_ratio() {
        let cfg = GaltonConfig::default();
        for seed in 0..50 {
            let (_, acc) = cfg.simulate(-0.8, -0.8, -0.8, seed).unwrap();
            assert_eq!(acc.log_joint_ratio, 0.0);
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let cfg = GaltonConfig::default();
        let a = cfg.simulate_trace(-0.7, -0.8, -0.6, 11).unwrap();
        let b = cfg.simulate_trace(-0.7, -0.8, -0.6, 11).unwrap();
        assert_eq!(a.moves, b.moves);
        assert_eq!(a.accumulators, b.accumulators);
        assert_eq!(a.bin as usize, a.moves.iter().filter(|m| **m).count());
    }

    #[test]
    fn rejects_non_finite_theta() {
        let cfg = GaltonConfig::default();
        assert!(matches!(
            cfg.simulate(f64::NAN, 0.0, 0.0, 1),
            Err(Error::NonFinite(_))
        ));
        assert!(cfg.simulate(0.0, f64::INFINITY, 0.0, 1).is_err());
    }

    #[test]
    fn fixed_trace_replay_reproduces_ratio() {
        let cfg = GaltonConfig::default();
        for seed in 0..200 {
            let t = cfg.simulate_trace(-0.9, -0.8, -0.6, seed).unwrap();
            let replay = cfg.trace_log_density(&t.moves, -0.8) - cfg.trace_log_density(&t.moves, -0.6);
            assert!((replay - t.accumulators.log_joint_ratio).abs() < 1e-13);
        }
    }

    #[test]
    fn density_at_zero_is_binomial() {
        let cfg = GaltonConfig::default();
        let p = cfg.exact_density(0.0);
        assert_eq!(p.len(), 21);
        assert!((p[10] - 184_756.0 / 1_048_576.0).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_ratio_antisymmetric_and_zero_on_diagonal() {
        let cfg = GaltonConfig::default();
        let ab = cfg.exact_log_ratio(-0.9, -0.5).unwrap();
        let ba = cfg.exact_log_ratio(-0.5, -0.9).unwrap();
        for (a, b) in ab.iter().zip(&ba) {
            assert_eq!(*a, -*b);
        }
        assert!(cfg.exact_log_ratio(-0.7, -0.7).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_row_board() {
        let cfg = GaltonConfig::new(1);
        assert_eq!(cfg.exact_density(3.0), vec![0.5, 0.5]);
        assert!(GaltonConfig::new(0).validate().is_err());
    }
}
