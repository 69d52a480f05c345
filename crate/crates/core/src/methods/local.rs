//! Histogram calibration of local score models.
//!
//! A local model maps `x` to the estimated score `t̂(x|θ_ref)`. Densities of
//! `t̂` (SALLY) or of its projection `ĥ = t̂·(θ0 − θ1)` (SALLINO) are estimated
//! by histogramming simulations at θ0 and at θ1, and the ratio of the two
//! histogram densities is the log-ratio read-out.

use serde::{Deserialize, Serialize};

use super::model::{LogRatio, SurrogateModel};
use super::{Family, Method};
use crate::parallel::{map_indices, Execution};
use crate::simulator::Simulator;
use crate::{Error, ParamPoint, Result};

pub const BINS_PER_DIM: usize = 20;

/// Fraction of calibration samples the bin range is fitted to.
const CENTRAL_MASS: f64 = 0.999;

pub const MIN_CALIBRATION_SIMS: usize = 1000;

/// Equal-width bins over an axis-aligned box; values outside fall into the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bins_per_dim: usize,
}

impl Binning {
    /// Per-dimension range of the central 99.9% of `samples` (each of length `dim`).
    pub fn fit(samples: &[Vec<f64>], dim: usize, bins_per_dim: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("calibration samples"));
        }
        let tail = (1.0 - CENTRAL_MASS) / 2.0;
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for d in 0..dim {
            let mut col: Vec<f64> = samples.iter().map(|s| s[d]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            let lo_i = ((n as f64) * tail).floor() as usize;
            let hi_i = (((n as f64) * (1.0 - tail)).ceil() as usize).clamp(1, n) - 1;
            let (mut lo, mut hi) = (col[lo_i.min(n - 1)], col[hi_i]);
            if hi - lo <= 1e-12 * lo.abs().max(1.0) {
                lo -= 0.5;
                hi += 0.5;
            }
            lower.push(lo);
            upper.push(hi);
        }
        Ok(Binning {
            lower,
            upper,
            bins_per_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn n_bins(&self) -> usize {
        self.bins_per_dim.pow(self.dim() as u32)
    }

    pub fn bin_volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / self.bins_per_dim as f64)
            .product()
    }

    /// Flat bin index of `v`, clamping out-of-range coordinates to edge bins.
    pub fn index(&self, v: &[f64]) -> usize {
        let mut idx = 0;
        for d in (0..self.dim()).rev() {
            let width = (self.upper[d] - self.lower[d]) / self.bins_per_dim as f64;
            let k = ((v[d] - self.lower[d]) / width).floor();
            let k = if k.is_nan() { 0.0 } else { k.clamp(0.0, (self.bins_per_dim - 1) as f64) };
            idx = idx * self.bins_per_dim + k as usize;
        }
        idx
    }
}

/// Smoothed histogram: `mass_b = (count_b/n + ε)/(1 + B·ε)` with `ε = 1/(n·B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn fit(binning: &Binning, samples: &[Vec<f64>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("histogram samples"));
        }
        let b = binning.n_bins();
        let mut counts = vec![0u64; b];
        for s in samples {
            counts[binning.index(s)] += 1;
        }
        let n = samples.len() as f64;
        let eps = 1.0 / (n * b as f64);
        let norm = 1.0 + b as f64 * eps;
        let masses = counts.iter().map(|&c| (c as f64 / n + eps) / norm).collect();
        Ok(Histogram { counts, masses })
    }

    /// Probability mass of the histogram (1 up to rounding).
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Calibration histograms for one `(θ0, θ1)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCalibration {
    pub theta0: ParamPoint,
    pub theta1: ParamPoint,
    /// `θ0 − θ1` for SALLINO projections; absent for SALLY.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Vec<f64>>,
    pub binning: Binning,
    pub numerator: Histogram,
    pub denominator: Histogram,
}

impl PairCalibration {
    fn statistic(&self, t: &[f64]) -> Vec<f64> {
        statistic(self.projection.as_deref(), t)
    }

    /// Log-ratio of the two histogram densities at `t̂(x)`.
    pub fn log_ratio(&self, t: &[f64]) -> LogRatio {
        let b = self.binning.index(&self.statistic(t));
        LogRatio {
            value: self.numerator.masses[b].ln() - self.denominator.masses[b].ln(),
            empty_bin: self.numerator.counts[b] == 0 || self.denominator.counts[b] == 0,
        }
    }
}

fn statistic(projection: Option<&[f64]>, t: &[f64]) -> Vec<f64> {
    match projection {
        Some(p) => vec![p.iter().zip(t).map(|(a, b)| a * b).sum()],
        None => t.to_vec(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalCalibration {
    pub pairs: Vec<PairCalibration>,
}

impl LocalCalibration {
    pub fn find(&self, theta0: &ParamPoint, theta1: &ParamPoint) -> Option<&PairCalibration> {
        self.pairs.iter().find(|p| &p.theta0 == theta0 && &p.theta1 == theta1)
    }
}

/// Calibrate a SALLY/SALLINO model for the pair `(θ0, θ1)` from `n_sims`
/// simulations at each point. Both sets use seeds `seed + i`, so identical
/// points yield identical histograms. Replaces an existing calibration of the pair.
pub fn calibrate_local<S: Simulator + ?Sized>(
    model: &mut SurrogateModel,
    sim: &S,
    theta0: &ParamPoint,
    theta1: &ParamPoint,
    n_sims: usize,
    seed: u64,
    exec: Execution,
) -> Result<()> {
    if model.method().family() != Family::Local {
        return Err(Error::Unsupported(format!("{} models are not calibrated", model.method())));
    }
    if n_sims < MIN_CALIBRATION_SIMS {
        return Err(Error::Config(format!(
            "calibration needs at least {MIN_CALIBRATION_SIMS} simulations, got {n_sims}"
        )));
    }
    let dim = model.theta_dim();
    for t in [theta0, theta1] {
        if t.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: "calibration θ",
                expected: dim,
                got: t.dim(),
            });
        }
    }
    let projection = (model.method() == Method::Sallino).then(|| theta0.sub(theta1));
    let run = |theta: &ParamPoint| -> Result<Vec<Vec<f64>>> {
        let stats = map_indices(n_sims, exec, |i| {
            let s = seed.wrapping_add(i as u64);
            match sim.simulate_augmented(theta, theta, theta, s) {
                Ok((x, _)) => model
                    .estimated_score(&x)
                    .map(|t| Some(statistic(projection.as_deref(), &t))),
                Err(e) if e.is_invalid_sample() => Ok(None),
                Err(e) => Err(e),
            }
        });
        let mut out = Vec::with_capacity(n_sims);
        for s in stats {
            if let Some(v) = s? {
                out.push(v);
            }
        }
        Ok(out)
    };
    let num = run(theta0)?;
    let den = if theta0 == theta1 { num.clone() } else { run(theta1)? };
    let stat_dim = if projection.is_some() { 1 } else { dim };
    let pooled: Vec<Vec<f64>> = num.iter().chain(&den).cloned().collect();
    let binning = Binning::fit(&pooled, stat_dim, BINS_PER_DIM)?;
    let pair = PairCalibration {
        theta0: theta0.clone(),
        theta1: theta1.clone(),
        projection,
        numerator: Histogram::fit(&binning, &num)?,
        denominator: Histogram::fit(&binning, &den)?,
        binning,
    };
    let cal = model.calibration.get_or_insert_with(LocalCalibration::default);
    cal.pairs.retain(|p| !(p.theta0 == *theta0 && p.theta1 == *theta1));
    cal.pairs.push(pair);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_clamps_to_edges() {
        let b = Binning {
            lower: vec![0.0],
            upper: vec![2.0],
            bins_per_dim: 4,
        };
        assert_eq!(b.index(&[-5.0]), 0);
        assert_eq!(b.index(&[0.6]), 1);
        assert_eq!(b.index(&[1.999]), 3);
        assert_eq!(b.index(&[2.0]), 3);
        assert_eq!(b.index(&[10.0]), 3);
        assert!((b.bin_volume() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn multi_dim_index_is_row_major_by_last_axis() {
        let b = Binning {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            bins_per_dim: 2,
        };
        assert_eq!(b.n_bins(), 4);
        assert_eq!(b.index(&[0.1, 0.1]), 0);
        assert_eq!(b.index(&[0.9, 0.1]), 1);
        assert_eq!(b.index(&[0.1, 0.9]), 2);
        assert_eq!(b.index(&[0.9, 0.9]), 3);
    }

    #[test]
    fn central_range_drops_extreme_tails() {
        let mut samples: Vec<Vec<f64>> = (0..10_000).map(|i| vec![i as f64 / 10_000.0]).collect();
        samples.push(vec![1e6]);
        let b = Binning::fit(&samples, 1, 20).unwrap();
        assert!(b.upper[0] < 1.0 && b.lower[0] < 0.001);
    }

    #[test]
    fn degenerate_samples_get_a_unit_range() {
        let samples = vec![vec![0.0]; 50];
        let b = Binning::fit(&samples, 1, 20).unwrap();
        assert_eq!((b.lower[0], b.upper[0]), (-0.5, 0.5));
    }

    #[test]
    fn histogram_is_normalized_and_smoothed() {
        let b = Binning {
            lower: vec![0.0],
            upper: vec![1.0],
            bins_per_dim: 20,
        };
        let samples: Vec<Vec<f64>> = (0..1000).map(|i| vec![(i % 7) as f64 / 20.0]).collect();
        let h = Histogram::fit(&b, &samples).unwrap();
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
        assert!(h.masses.iter().all(|&m| m > 0.0));
        assert_eq!(h.counts[19], 0);
    }
}
