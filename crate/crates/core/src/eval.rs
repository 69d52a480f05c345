//! Metrics against exact or ensemble references, augmentation diagnostics and
//! likelihood-ratio confidence regions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::galton::GaltonConfig;
use crate::methods::{train, MethodKind, SurrogateModel, TrainConfig};
use crate::parallel::{map_indices, Execution};
use crate::simulator::{Observable, ObservableShape, TrainingPair};
use crate::{Error, ParamPoint, Result};

/// Cross product of observables and numerator hypotheses against a fixed θ1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub xs: Vec<Observable>,
    pub theta0s: Vec<ParamPoint>,
    pub theta1: ParamPoint,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.xs.len() * self.theta0s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bins `lo..=hi` at a single `(θ0, θ1)`.
    pub fn galton_bins(lo: u32, hi: u32, theta0: f64, theta1: f64) -> Self {
        EvalSet {
            xs: (lo..=hi).map(Observable::Bin).collect(),
            theta0s: vec![ParamPoint::scalar(theta0)],
            theta1: ParamPoint::scalar(theta1),
        }
    }
}

/// Anything that yields `log r(x|θ0, θ1)` on an [`EvalSet`], row-major over `theta0s`.
pub trait LogRatioEstimator: Sync {
    fn log_ratio_grid(&self, set: &EvalSet) -> Result<Vec<f64>>;
}

impl LogRatioEstimator for SurrogateModel {
    fn log_ratio_grid(&self, set: &EvalSet) -> Result<Vec<f64>> {
        SurrogateModel::log_ratio_grid(self, &set.xs, &set.theta0s, &set.theta1)
    }
}

/// Exact Galton log-ratios from the dynamic-programming density.
#[derive(Debug, Clone, PartialEq)]
pub struct GaltonOracle(pub GaltonConfig);

impl LogRatioEstimator for GaltonOracle {
    fn log_ratio_grid(&self, set: &EvalSet) -> Result<Vec<f64>> {
        let scalar = |p: &ParamPoint| -> Result<f64> {
            if p.dim() != 1 {
                return Err(Error::DimensionMismatch {
                    what: "galton θ",
                    expected: 1,
                    got: p.dim(),
                });
            }
            Ok(p[0])
        };
        let theta1 = scalar(&set.theta1)?;
        let mut out = Vec::with_capacity(set.len());
        for t0 in &set.theta0s {
            let lr = self.0.exact_log_ratio(scalar(t0)?, theta1)?;
            for x in &set.xs {
                match x {
                    Observable::Bin(b) if (*b as usize) < lr.len() => out.push(lr[*b as usize]),
                    _ => {
                        return Err(Error::DimensionMismatch {
                            what: "galton bin",
                            expected: lr.len(),
                            got: x.features().first().map_or(0, |v| *v as usize),
                        })
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Predicts the same log-ratio everywhere (0 is the "no information" baseline).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRatio(pub f64);

impl LogRatioEstimator for ConstantRatio {
    fn log_ratio_grid(&self, set: &EvalSet) -> Result<Vec<f64>> {
        Ok(vec![self.0; set.len()])
    }
}

/// Median of `values`; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Pointwise median of member predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReference {
    pub members: Vec<SurrogateModel>,
}

pub const MIN_ENSEMBLE: usize = 3;

impl EnsembleReference {
    pub fn new(members: Vec<SurrogateModel>) -> Result<Self> {
        if members.len() < MIN_ENSEMBLE {
            return Err(Error::Config(format!(
                "an ensemble reference needs at least {MIN_ENSEMBLE} members, got {}",
                members.len()
            )));
        }
        Ok(EnsembleReference { members })
    }
}

/// Pointwise median of several prediction grids of equal length.
pub fn median_grid(grids: &[Vec<f64>]) -> Vec<f64> {
    let n = grids.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let column: Vec<f64> = grids.iter().map(|g| g[i]).collect();
            median(&column).expect("non-empty ensemble")
        })
        .collect()
}

impl LogRatioEstimator for EnsembleReference {
    fn log_ratio_grid(&self, set: &EvalSet) -> Result<Vec<f64>> {
        let grids = self
            .members
            .iter()
            .enumerate()
            .map(|(index, m)| {
                m.log_ratio_grid(&set.xs, &set.theta0s, &set.theta1)
                    .map_err(|e| Error::EnsembleMember {
                        index,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(median_grid(&grids))
    }
}

/// Train one ensemble member per seed on the same records.
pub fn build_ensemble_reference(
    kind: MethodKind,
    records: &[TrainingPair],
    shape: ObservableShape,
    cfg: &TrainConfig,
    seeds: &[u64],
    exec: Execution,
) -> Result<EnsembleReference> {
    if seeds.len() < MIN_ENSEMBLE {
        return Err(Error::Config(format!(
            "an ensemble reference needs at least {MIN_ENSEMBLE} members, got {}",
            seeds.len()
        )));
    }
    let members = seeds
        .iter()
        .enumerate()
        .map(|(index, &seed)| {
            train(kind, records, shape, cfg, seed, exec)
                .map(|t| t.model)
                .map_err(|e| Error::EnsembleMember {
                    index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleReference::new(members)
}

/// Mean squared difference between two prediction grids.
pub fn mse_between(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction grid",
            expected: reference.len(),
            got: estimate.len(),
        });
    }
    if estimate.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if let Some(i) = reference.iter().position(|v| !v.is_finite()) {
        return Err(Error::UndefinedReference(i));
    }
    if estimate.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log-ratio estimate".into()));
    }
    let sum: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / estimate.len() as f64)
}

/// Mean squared error of `estimate` against `reference` over `set`.
pub fn mse_log_ratio(
    estimate: &dyn LogRatioEstimator,
    reference: &dyn LogRatioEstimator,
    set: &EvalSet,
) -> Result<f64> {
    let truth = reference.log_ratio_grid(set)?;
    let est = estimate.log_ratio_grid(set)?;
    mse_between(&est, &truth)
}

/// One row of an MSE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEntry {
    pub method: String,
    pub n_train: usize,
    pub seed: u64,
    pub mse: f64,
}

/// Median and standard deviation over seeds at one training-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSummary {
    pub method: String,
    pub n_train: usize,
    pub n_seeds: usize,
    pub median: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub entries: Vec<MseEntry>,
}

impl MseReport {
    pub fn push(&mut self, method: impl Into<String>, n_train: usize, seed: u64, mse: f64) {
        self.entries.push(MseEntry {
            method: method.into(),
            n_train,
            seed,
            mse,
        });
    }

    /// Per-(method, size) summaries; methods in first-appearance order, sizes ascending.
    pub fn summaries(&self) -> Vec<MseSummary> {
        let mut methods: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !methods.contains(&e.method.as_str()) {
                methods.push(&e.method);
            }
        }
        let mut out = Vec::new();
        for m in methods {
            let mut sizes: Vec<usize> = self.entries.iter().filter(|e| e.method == m).map(|e| e.n_train).collect();
            sizes.sort_unstable();
            sizes.dedup();
            for n in sizes {
                let vals: Vec<f64> = self
                    .entries
                    .iter()
                    .filter(|e| e.method == m && e.n_train == n)
                    .map(|e| e.mse)
                    .collect();
                out.push(MseSummary {
                    method: m.to_string(),
                    n_train: n,
                    n_seeds: vals.len(),
                    median: median(&vals).expect("at least one entry"),
                    std: sample_std(&vals),
                });
            }
        }
        out
    }

    pub fn summary(&self, method: &str, n_train: usize) -> Option<MseSummary> {
        self.summaries().into_iter().find(|s| s.method == method && s.n_train == n_train)
    }

    /// `method,n_train,seed,mse` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,n_train,seed,mse\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{}\n", e.method, e.n_train, e.seed, e.mse));
        }
        s
    }
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Mean with its standard error and the z-score against an expected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCheck {
    pub n: usize,
    pub mean: f64,
    /// Absent for fewer than two samples.
    pub stderr: Option<f64>,
    pub z: Option<f64>,
}

impl MeanCheck {
    pub fn of(values: &[f64], expected: f64) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = (n >= 2).then(|| sample_std(values) / (n as f64).sqrt());
        let z = stderr.and_then(|se| (se > 0.0).then(|| (mean - expected) / se));
        Some(MeanCheck { n, mean, stderr, z })
    }

    /// `|z| ≤ k`; a zero standard error passes only on an exact match.
    pub fn within(&self, k: f64, expected: f64) -> bool {
        match self.z {
            Some(z) => z.abs() <= k,
            None => self.mean == expected,
        }
    }
}

/// Monte-Carlo checks of `E[t] = 0` at the generating point and `E[r] = 1` under θ1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDiagnostics {
    /// Per score component, over records whose score is evaluated at their generator.
    pub score: Vec<MeanCheck>,
    /// `exp(log_joint_ratio)` over records generated at θ1.
    pub ratio: Option<MeanCheck>,
}

pub fn score_diagnostics(records: &[TrainingPair]) -> Result<ScoreDiagnostics> {
    if records.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let scored: Vec<&Vec<f64>> = records
        .iter()
        .filter(|r| r.score_at_generator())
        .filter_map(|r| r.joint_score.as_ref())
        .collect();
    let dim = scored.first().map_or(0, |s| s.len());
    let score = (0..dim)
        .filter_map(|d| {
            let col: Vec<f64> = scored.iter().map(|s| s[d]).collect();
            MeanCheck::of(&col, 0.0)
        })
        .collect();
    let ratios: Vec<f64> = records
        .iter()
        .filter(|r| r.theta_gen == r.theta1)
        .filter_map(|r| r.log_joint_ratio.map(f64::exp))
        .collect();
    Ok(ScoreDiagnostics {
        score,
        ratio: MeanCheck::of(&ratios, 1.0),
    })
}

/// A confidence level stated as a Gaussian "n σ" equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaLevel(pub f64);

impl SigmaLevel {
    pub const STANDARD: [SigmaLevel; 3] = [SigmaLevel(1.0), SigmaLevel(2.0), SigmaLevel(3.0)];

    /// Coverage probability `erf(n/√2)` (0.6827, 0.9545, 0.9973 for 1, 2, 3).
    pub fn probability(self) -> f64 {
        statrs::function::erf::erf(self.0 / std::f64::consts::SQRT_2)
    }

    /// Threshold on `q = −2 log λ` in `dim` parameters: exactly `n²` for one
    /// parameter, the χ²_dim quantile at [`probability`](Self::probability) otherwise.
    pub fn threshold(self, dim: usize) -> f64 {
        if dim == 1 {
            self.0 * self.0
        } else {
            ChiSquared::new(dim as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(self.probability())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRegion {
    pub level: SigmaLevel,
    pub probability: f64,
    pub threshold: f64,
    /// Whether each grid point lies inside the region.
    pub inside: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    pub grid: Vec<ParamPoint>,
    /// `q(θ) = −2 Σ_i log r̂(x_i|θ, θ̂)`, zero at the grid optimum.
    pub q: Vec<f64>,
    /// Index of θ̂ in `grid`.
    pub best: usize,
    pub levels: Vec<LevelRegion>,
}

impl ConfidenceRegion {
    /// CSV rows `theta...,q,in_1sigma,...`.
    pub fn to_csv(&self) -> String {
        let dim = self.grid.first().map_or(0, ParamPoint::dim);
        let mut s = String::new();
        let cols: Vec<String> = (0..dim)
            .map(|d| format!("theta{d}"))
            .chain(std::iter::once("q".into()))
            .chain(self.levels.iter().map(|l| format!("in_{}sigma", l.level.0)))
            .collect();
        s.push_str(&cols.join(","));
        s.push('\n');
        for (i, p) in self.grid.iter().enumerate() {
            let mut row: Vec<String> = p.as_slice().iter().map(|v| v.to_string()).collect();
            row.push(self.q[i].to_string());
            row.extend(self.levels.iter().map(|l| (l.inside[i] as u8).to_string()));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Likelihood-ratio scan of `observed` over `grid`, using `theta_ref` as the
/// common denominator hypothesis.
pub fn confidence_region(
    estimator: &dyn LogRatioEstimator,
    observed: &[Observable],
    grid: &[ParamPoint],
    theta_ref: &ParamPoint,
    levels: &[SigmaLevel],
) -> Result<ConfidenceRegion> {
    if grid.len() < 2 {
        return Err(Error::GridTooCoarse);
    }
    if observed.is_empty() {
        return Err(Error::Empty("observed set"));
    }
    let set = EvalSet {
        xs: observed.to_vec(),
        theta0s: grid.to_vec(),
        theta1: theta_ref.clone(),
    };
    let lr = estimator.log_ratio_grid(&set)?;
    let n = observed.len();
    let sums: Vec<f64> = (0..grid.len()).map(|i| lr[i * n..(i + 1) * n].iter().sum()).collect();
    let (best, max) = sums
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let q: Vec<f64> = sums.iter().map(|s| -2.0 * (s - max)).collect();
    let dim = grid[0].dim();
    let levels = levels
        .iter()
        .map(|&level| {
            let threshold = level.threshold(dim);
            LevelRegion {
                level,
                probability: level.probability(),
                threshold,
                inside: q.iter().map(|&v| v <= threshold).collect(),
            }
        })
        .collect();
    Ok(ConfidenceRegion {
        grid: grid.to_vec(),
        q,
        best,
        levels,
    })
}

/// Evaluate many independent estimators on the same set.
pub fn evaluate_many(
    models: &[SurrogateModel],
    reference: &[f64],
    set: &EvalSet,
    exec: Execution,
) -> Result<Vec<f64>> {
    map_indices(models.len(), exec, |i| {
        let est = models[i].log_ratio_grid(&set.xs, &set.theta0s, &set.theta1)?;
        mse_between(&est, reference)
    })
    .into_iter()
    .collect()
}
