//! Stochastic Lotka-Volterra predator-prey model.
//!
//! Four events with mass-action rates, parameterized by log rates `θ`:
//!
//! | event              | rate               | effect   |
//! |--------------------|--------------------|----------|
//! | predator birth     | `exp(θ₁)·X·Y`      | `X += 1` |
//! | predator death     | `exp(θ₂)·X`        | `X −= 1` |
//! | prey birth         | `exp(θ₃)·Y`        | `Y += 1` |
//! | prey consumption   | `exp(θ₄)·X·Y`      | `Y −= 1` |
//!
//! Trajectories are simulated exactly with Gillespie's direct method. Each
//! event contributes `log λ_j − λ_tot·τ` to the trace log-density, so the joint
//! score is `Σ (δ_jk − λ_k τ)` and the joint log-ratio is
//! `Σ [log λ_j(θ0) − log λ_j(θ1) − (λ_tot(θ0) − λ_tot(θ1)) τ]`. The interval
//! between the last event and the horizon adds the survival (censoring) term.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::simulator::{seeded_rng, Observable, ObservableShape, Simulator, TraceAccumulators};
use crate::{Error, ParamPoint, Result};

pub const N_EVENTS: usize = 4;
pub const N_SUMMARIES: usize = 9;

/// Log rates of the reference hypothesis.
pub const REFERENCE_LOG_RATES: [f64; 4] = [-4.61, -0.69, 0.00, -4.61];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LvParams {
    pub log_rates: [f64; 4],
}

impl LvParams {
    pub fn new(log_rates: [f64; 4]) -> Self {
        LvParams { log_rates }
    }

    pub fn reference() -> Self {
        LvParams::new(REFERENCE_LOG_RATES)
    }

    fn rate_constants(&self) -> [f64; 4] {
        self.log_rates.map(f64::exp)
    }
}

impl TryFrom<&ParamPoint> for LvParams {
    type Error = Error;

    fn try_from(p: &ParamPoint) -> Result<Self> {
        let s = p.as_slice();
        if s.len() != N_EVENTS {
            return Err(Error::DimensionMismatch {
                what: "lotka-volterra θ",
                expected: N_EVENTS,
                got: s.len(),
            });
        }
        if !p.is_finite() {
            return Err(Error::NonFinite("lotka-volterra θ".into()));
        }
        Ok(LvParams::new([s[0], s[1], s[2], s[3]]))
    }
}

impl From<LvParams> for ParamPoint {
    fn from(p: LvParams) -> Self {
        ParamPoint::new(p.log_rates.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvState {
    pub predators: u64,
    pub prey: u64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvConfig {
    pub initial_predators: u64,
    pub initial_prey: u64,
    pub horizon: f64,
    pub record_dt: f64,
    pub population_cap: u64,
}

impl Default for LvConfig {
    fn default() -> Self {
        LvConfig {
            initial_predators: 50,
            initial_prey: 100,
            horizon: 30.0,
            record_dt: 0.2,
            population_cap: 100_000,
        }
    }
}

/// Event rates in the order predator birth, predator death, prey birth, prey consumption.
pub fn rates(state: &LvState, params: &LvParams) -> [f64; 4] {
    rates_from_constants(state.predators, state.prey, &params.rate_constants())
}

fn rates_from_constants(x: u64, y: u64, k: &[f64; 4]) -> [f64; 4] {
    let (x, y) = (x as f64, y as f64);
    [k[0] * x * y, k[1] * x, k[2] * y, k[3] * x * y]
}

/// One fired event: its index and the waiting time before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvEvent {
    pub kind: u8,
    pub wait: f64,
}

/// Full record of one Gillespie run.
#[derive(Debug, Clone)]
pub struct LvRun {
    /// Snapshots every `record_dt`, starting at `t = 0`.
    pub series: Vec<LvState>,
    pub accumulators: TraceAccumulators,
    pub events: Vec<LvEvent>,
    /// Time between the last event and the horizon.
    pub censored_wait: f64,
}

impl LvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.record_dt > 0.0 && self.record_dt.is_finite()) {
            return Err(Error::Config("record_dt must be positive".into()));
        }
        if self.initial_predators > self.population_cap || self.initial_prey > self.population_cap {
            return Err(Error::Config("initial populations exceed the cap".into()));
        }
        Ok(())
    }

    fn n_snapshots(&self) -> usize {
        (self.horizon / self.record_dt + 1e-9).floor() as usize + 1
    }

    /// Run one trajectory under `params_gen`, accumulating the joint score at
    /// `theta0` and the joint log-ratio at `(theta0, theta1)`.
    pub fn simulate(
        &self,
        params_gen: &LvParams,
        theta0: &LvParams,
        theta1: &LvParams,
        rng_seed: u64,
    ) -> Result<(Vec<LvState>, TraceAccumulators)> {
        let run = self.simulate_recorded(params_gen, theta0, theta1, rng_seed)?;
        Ok((run.series, run.accumulators))
    }

    pub fn simulate_recorded(
        &self,
        params_gen: &LvParams,
        theta0: &LvParams,
        theta1: &LvParams,
        rng_seed: u64,
    ) -> Result<LvRun> {
        self.validate()?;
        for p in [params_gen, theta0, theta1] {
            if p.log_rates.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("lotka-volterra θ".into()));
            }
        }
        let k_gen = params_gen.rate_constants();
        let k0 = theta0.rate_constants();
        let k1 = theta1.rate_constants();
        let log_k_diff: [f64; 4] =
            std::array::from_fn(|j| theta0.log_rates[j] - theta1.log_rates[j]);

        let n_snap = self.n_snapshots();
        let mut series = Vec::with_capacity(n_snap);
        let mut events = Vec::new();
        let mut rng = seeded_rng(rng_seed, 0);
        let (mut x, mut y) = (self.initial_predators, self.initial_prey);
        let mut t = 0.0;
        let mut score = [0.0; 4];
        let mut log_ratio = 0.0;
        let snapshot_time = |k: usize| k as f64 * self.record_dt;

        let censored_wait = loop {
            let lam_gen = rates_from_constants(x, y, &k_gen);
            let total_gen: f64 = lam_gen.iter().sum();
            if total_gen <= 0.0 {
                // Extinct: every rate is zero under any θ, nothing more accrues.
                break self.horizon - t;
            }
            let lam0 = rates_from_constants(x, y, &k0);
            let lam1 = rates_from_constants(x, y, &k1);
            let total0: f64 = lam0.iter().sum();
            let total1: f64 = lam1.iter().sum();

            let u: f64 = 1.0 - rng.random::<f64>();
            let wait = -u.ln() / total_gen;
            let t_next = t + wait;
            if t_next > self.horizon {
                let tail = self.horizon - t;
                for (s, l) in score.iter_mut().zip(&lam0) {
                    *s -= l * tail;
                }
                log_ratio -= (total0 - total1) * tail;
                break tail;
            }
            while series.len() < n_snap && snapshot_time(series.len()) < t_next {
                series.push(LvState {
                    predators: x,
                    prey: y,
                    time: snapshot_time(series.len()),
                });
            }

            let target = rng.random::<f64>() * total_gen;
            let mut acc = 0.0;
            let mut kind = N_EVENTS - 1;
            for (j, l) in lam_gen.iter().enumerate() {
                acc += l;
                if target < acc {
                    kind = j;
                    break;
                }
            }
            // Floating-point slack could land on a zero-rate event.
            while lam_gen[kind] <= 0.0 {
                kind -= 1;
            }

            for (j, s) in score.iter_mut().enumerate() {
                *s += if j == kind { 1.0 } else { 0.0 } - lam0[j] * wait;
            }
            log_ratio += log_k_diff[kind] - (total0 - total1) * wait;

            match kind {
                0 => x += 1,
                1 => x -= 1,
                2 => y += 1,
                _ => y -= 1,
            }
            t = t_next;
            events.push(LvEvent {
                kind: kind as u8,
                wait,
            });
            if x > self.population_cap || y > self.population_cap {
                return Err(Error::Explosion {
                    cap: self.population_cap,
                    time: t,
                });
            }
        };
        while series.len() < n_snap {
            series.push(LvState {
                predators: x,
                prey: y,
                time: snapshot_time(series.len()),
            });
        }

        let accumulators = TraceAccumulators {
            log_joint_ratio: log_ratio,
            joint_score: score.to_vec(),
        };
        if !accumulators.is_finite() {
            return Err(Error::NonFinite("lotka-volterra accumulators".into()));
        }
        Ok(LvRun {
            series,
            accumulators,
            events,
            censored_wait,
        })
    }

    /// `log p(z|θ)` of a recorded event sequence, replayed from the initial state.
    pub fn replay_log_density(&self, events: &[LvEvent], censored_wait: f64, theta: &LvParams) -> f64 {
        let k = theta.rate_constants();
        let (mut x, mut y) = (self.initial_predators, self.initial_prey);
        let mut total = 0.0;
        for ev in events {
            let lam = rates_from_constants(x, y, &k);
            let lam_tot: f64 = lam.iter().sum();
            total += lam[ev.kind as usize].ln() - lam_tot * ev.wait;
            match ev.kind {
                0 => x += 1,
                1 => x -= 1,
                2 => y += 1,
                _ => y -= 1,
            }
        }
        let lam_tot: f64 = rates_from_constants(x, y, &k).iter().sum();
        total - lam_tot * censored_wait
    }
}

/// Nine summary statistics of a recorded trajectory: the mean and
/// `log(variance + 1)` of both populations, the lag-1 and lag-2
/// autocorrelations of both normalized series, and their cross-correlation.
///
/// Snapshots repeating the time of their predecessor replace it. A series
/// with zero variance has all its correlation statistics set to 0.
pub fn summarize(series: &[LvState]) -> Result<[f64; N_SUMMARIES]> {
    if series.is_empty() {
        return Err(Error::Empty("lotka-volterra series"));
    }
    let mut xs: Vec<f64> = Vec::with_capacity(series.len());
    let mut ys: Vec<f64> = Vec::with_capacity(series.len());
    let mut last_time = f64::NAN;
    for s in series {
        if s.time == last_time {
            *xs.last_mut().unwrap() = s.predators as f64;
            *ys.last_mut().unwrap() = s.prey as f64;
        } else {
            xs.push(s.predators as f64);
            ys.push(s.prey as f64);
            last_time = s.time;
        }
    }

    let (mean_x, var_x) = mean_var(&xs);
    let (mean_y, var_y) = mean_var(&ys);
    let nx = normalized(&xs, mean_x, var_x);
    let ny = normalized(&ys, mean_y, var_y);
    let n = xs.len() as f64;
    let lagged = |a: &[f64], b: &[f64], lag: usize| -> f64 {
        if lag >= a.len() {
            return 0.0;
        }
        a[..a.len() - lag].iter().zip(&b[lag..]).map(|(u, v)| u * v).sum::<f64>() / n
    };
    Ok([
        mean_x,
        mean_y,
        (var_x + 1.0).ln(),
        (var_y + 1.0).ln(),
        lagged(&nx, &nx, 1),
        lagged(&nx, &nx, 2),
        lagged(&ny, &ny, 1),
        lagged(&ny, &ny, 2),
        lagged(&nx, &ny, 0),
    ])
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn normalized(v: &[f64], mean: f64, var: f64) -> Vec<f64> {
    if var > 0.0 {
        let sd = var.sqrt();
        v.iter().map(|a| (a - mean) / sd).collect()
    } else {
        vec![0.0; v.len()]
    }
}

impl Simulator for LvConfig {
    fn id(&self) -> &'static str {
        "lotka"
    }

    fn theta_dim(&self) -> usize {
        N_EVENTS
    }

    fn observable_shape(&self) -> ObservableShape {
        ObservableShape::Vector { dim: N_SUMMARIES }
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
        let gen = LvParams::try_from(theta_gen)?;
        let t0 = LvParams::try_from(theta0)?;
        let t1 = LvParams::try_from(theta1)?;
        let (series, acc) = self.simulate(&gen, &t0, &t1, seed)?;
        let stats = summarize(&series)?;
        if stats.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lotka-volterra summaries".into()));
        }
        Ok((Observable::Summary(stats.to_vec()), acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: u64, y: u64) -> LvState {
        LvState {
            predators: x,
            prey: y,
            time: 0.0,
        }
    }

    #[test]
    fn empty_system_has_zero_rates() {
        assert_eq!(rates(&state(0, 0), &LvParams::reference()), [0.0; 4]);
    }

    #[test]
    fn reference_rates() {
        let r = rates(&state(50, 100), &LvParams::reference());
        let expected = [49.757, 25.079, 100.0, 49.757];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 5e-3, "{r:?}");
        }
    }

    #[test]
    fn rates_linear_in_predators() {
        let p = LvParams::new([-1.0, 0.3, 0.2, -2.0]);
        let a = rates(&state(7, 13), &p);
        let b = rates(&state(14, 13), &p);
        assert_eq!(b[0], 2.0 * a[0]);
        assert_eq!(b[1], 2.0 * a[1]);
        assert_eq!(b[2], a[2]);
        assert_eq!(b[3], 2.0 * a[3]);
    }

    #[test]
    fn snapshot_grid() {
        let cfg = LvConfig::default();
        let p = LvParams::reference();
        let (series, _) = cfg.simulate(&p, &p, &p, 3).unwrap();
        assert_eq!(series.len(), 151);
        assert_eq!(series[0].predators, 50);
        assert_eq!(series[0].prey, 100);
        assert!((series[150].time - 30.0).abs() < 1e-12);
    }

    #[test]
    fn equal_parameters_zero_ratio() {
        let cfg = LvConfig::default();
        let p = LvParams::reference();
        for seed in 0..5 {
            if let Ok((_, acc)) = cfg.simulate(&p, &p, &p, seed) {
                assert_eq!(acc.log_joint_ratio, 0.0);
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce() {
        let cfg = LvConfig::default();
        let p = LvParams::reference();
        let a = cfg.simulate_recorded(&p, &p, &p, 9).unwrap();
        let b = cfg.simulate_recorded(&p, &p, &p, 9).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn extinction_persists_without_accumulation() {
        let cfg = LvConfig {
            initial_predators: 0,
            initial_prey: 0,
            ..Default::default()
        };
        let p = LvParams::reference();
        let q = LvParams::new([-4.6, -0.7, 0.01, -4.6]);
        let run = cfg.simulate_recorded(&p, &q, &p, 1).unwrap();
        assert!(run.events.is_empty());
        assert_eq!(run.accumulators, TraceAccumulators::zeros(4));
        assert!(run.series.iter().all(|s| s.predators == 0 && s.prey == 0));
    }

    #[test]
    fn prey_without_predators_explodes() {
        let cfg = LvConfig {
            initial_predators: 0,
            population_cap: 2_000,
            ..Default::default()
        };
        let p = LvParams::reference();
        assert!(matches!(
            cfg.simulate(&p, &p, &p, 1),
            Err(Error::Explosion { cap: 2_000, .. })
        ));
    }

    #[test]
    fn invalid_config() {
        let p = LvParams::reference();
        let cfg = LvConfig {
            horizon: 0.0,
            ..Default::default()
        };
        assert!(cfg.simulate(&p, &p, &p, 0).is_err());
        let cfg = LvConfig {
            record_dt: -1.0,
            ..Default::default()
        };
        assert!(cfg.simulate(&p, &p, &p, 0).is_err());
    }

    #[test]
    fn constant_series_summary() {
        let s: Vec<LvState> = (0..20)
            .map(|i| LvState {
                predators: 100,
                prey: 100,
                time: i as f64,
            })
            .collect();
        let stats = summarize(&s).unwrap();
        assert_eq!(stats[0], 100.0);
        assert_eq!(stats[1], 100.0);
        assert_eq!(stats[2], 0.0);
        assert_eq!(stats[3], 0.0);
        assert!(stats[4..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identical_series_cross_correlation_is_one() {
        let s: Vec<LvState> = (0..50)
            .map(|i| {
                let v = 100 + (i * 37 % 11) as u64;
                LvState {
                    predators: v,
                    prey: v,
                    time: i as f64,
                }
            })
            .collect();
        let stats = summarize(&s).unwrap();
        assert!((stats[8] - 1.0).abs() < 1e-12);
        assert_eq!(stats[4], stats[6]);
    }

    #[test]
    fn empty_series_rejected() {
        assert!(matches!(summarize(&[]), Err(Error::Empty(_))));
    }
}
