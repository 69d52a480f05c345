//! The commands behind the `goldmine` binary: simulate, train, evaluate,
//! oracle tables and the full sample-size ladder.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SimulatorConfig};
use crate::data::{write_bytes, write_json, write_training_log, Checkpoint, CheckpointMeta, Dataset};
use crate::eval::{
    confidence_region, mse_between, EnsembleReference, EvalSet, GaltonOracle, LogRatioEstimator, MseReport,
    MseSummary, SigmaLevel,
};
use crate::methods::{calibrate_local, train, Family, Method, MethodKind, SurrogateModel};
use crate::parallel::{map_indices, Execution};
use crate::simulator::{generate, seeded_rng, Observable, Prior, ThetaSampling};
use crate::{Error, ParamPoint, Result};

/// Seed offsets separating the independent random streams of an experiment.
const REFERENCE_DATA_OFFSET: u64 = 1 << 48;
const CALIBRATION_OFFSET: u64 = 2 << 48;
const OBSERVED_OFFSET: u64 = 3 << 48;

/// Simulate `n` records with the θ sampling `method` trains on.
pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    method: Method,
    n: usize,
    seed: u64,
    out: &Path,
    exec: Execution,
) -> Result<Dataset> {
    cfg.validate()?;
    let sim = cfg.simulator.as_simulator();
    let dataset = Dataset::simulate(sim, &cfg.sampling(method), n, seed, true, exec)?;
    dataset.write(out)?;
    Ok(dataset)
}

/// Train `kind` on the dataset at `dataset_path`; writes the checkpoint and its log sidecar.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    kind: MethodKind,
    dataset_path: &Path,
    seed: u64,
    out: &Path,
    exec: Execution,
) -> Result<Checkpoint> {
    cfg.validate()?;
    let dataset = Dataset::read(dataset_path)?;
    let sim = cfg.simulator.as_simulator();
    dataset.check_simulator(sim)?;
    let trained = train(kind, &dataset.records, sim.observable_shape(), &cfg.training, seed, exec)?;
    let checkpoint = Checkpoint::new(
        CheckpointMeta {
            method: kind,
            seed,
            simulator: sim.id().into(),
            dataset_digest: dataset.digest().into(),
            n_records: dataset.records.len(),
        },
        trained.model,
        trained.optimizer,
    );
    checkpoint.write(out)?;
    write_training_log(out, &trained.log)?;
    Ok(checkpoint)
}

/// The evaluation set of `cfg`: fixed bins or observables simulated at θ1,
/// crossed with fixed or prior-drawn θ0.
pub fn evaluation_set(cfg: &ExperimentConfig, exec: Execution) -> Result<EvalSet> {
    let ev = &cfg.evaluation;
    let theta0s = if ev.theta0.is_empty() {
        let mut rng = seeded_rng(ev.seed, 1);
        (0..ev.n_theta0).map(|_| cfg.prior.sample(&mut rng)).collect()
    } else {
        ev.theta0.clone()
    };
    let xs = match ev.bins {
        Some((lo, hi)) => (lo..=hi).map(Observable::Bin).collect(),
        None => simulate_observed(cfg, &cfg.theta1, ev.n_x, ev.seed, exec)?,
    };
    Ok(EvalSet {
        xs,
        theta0s,
        theta1: cfg.theta1.clone(),
    })
}

fn simulate_observed(
    cfg: &ExperimentConfig,
    theta: &ParamPoint,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Observable>> {
    let plan = ThetaSampling::Single {
        theta: Prior::Fixed { point: theta.clone() },
        theta1: theta.clone(),
    };
    let sim = cfg.simulator.as_simulator();
    Ok(generate(sim, &plan, n, seed, false, exec)?
        .records
        .into_iter()
        .map(|r| r.x)
        .collect())
}

/// Ground truth against which surrogates are scored.
pub enum Reference {
    Oracle(GaltonOracle),
    Model(Box<SurrogateModel>),
    Ensemble(EnsembleReference),
}

impl Reference {
    pub fn describe(&self) -> String {
        match self {
            Reference::Oracle(_) => "exact galton density".into(),
            Reference::Model(m) => format!("single {} model", m.method()),
            Reference::Ensemble(e) => format!("median of {} {} models", e.members.len(), e.members[0].method()),
        }
    }
}

impl LogRatioEstimator for Reference {
    fn log_ratio_grid(&self, set: &EvalSet) -> Result<Vec<f64>> {
        match self {
            Reference::Oracle(o) => o.log_ratio_grid(set),
            Reference::Model(m) => m.as_ref().log_ratio_grid(&set.xs, &set.theta0s, &set.theta1),
            Reference::Ensemble(e) => e.log_ratio_grid(set),
        }
    }
}

/// The exact oracle where one exists, otherwise an ensemble trained on
/// `evaluation.ensemble_records` fresh records.
pub fn default_reference(cfg: &ExperimentConfig, exec: Execution) -> Result<Reference> {
    if let SimulatorConfig::Galton(g) = &cfg.simulator {
        return Ok(Reference::Oracle(GaltonOracle(g.clone())));
    }
    let ev = &cfg.evaluation;
    let method = ev.ensemble_method;
    if method.family() == Family::Local {
        return Err(Error::Config("local models cannot serve as ensemble references".into()));
    }
    let sim = cfg.simulator.as_simulator();
    let data = generate(
        sim,
        &cfg.sampling(method),
        ev.ensemble_records,
        ev.seed.wrapping_add(REFERENCE_DATA_OFFSET),
        true,
        exec,
    )?;
    let seeds: Vec<u64> = (0..ev.ensemble_members as u64).map(|k| ev.seed.wrapping_add(k)).collect();
    let kind = cfg.method_kind(method)?;
    crate::eval::build_ensemble_reference(kind, &data.records, sim.observable_shape(), &cfg.training, &seeds, exec)
        .map(Reference::Ensemble)
}

/// Reference assembled from checkpoints: one model is used as is, three or more
/// form a median ensemble.
pub fn reference_from_checkpoints(paths: &[PathBuf]) -> Result<Reference> {
    let models = paths
        .iter()
        .map(|p| Checkpoint::read(p).map(|c| c.model))
        .collect::<Result<Vec<_>>>()?;
    match models.len() {
        0 => Err(Error::Empty("reference checkpoints")),
        1 => Ok(Reference::Model(Box::new(models.into_iter().next().expect("one model")))),
        _ => EnsembleReference::new(models).map(Reference::Ensemble),
    }
}

/// Calibrate a local model for every `(θ0, θ1)` of the evaluation set; other models pass through.
pub fn prepare_for_evaluation(
    cfg: &ExperimentConfig,
    model: &mut SurrogateModel,
    theta0s: &[ParamPoint],
    theta1: &ParamPoint,
    exec: Execution,
) -> Result<()> {
    if model.method().family() != Family::Local {
        return Ok(());
    }
    let sim = cfg.simulator.as_simulator();
    let seed = cfg.evaluation.seed.wrapping_add(CALIBRATION_OFFSET);
    for t0 in theta0s {
        if model.calibration.as_ref().and_then(|c| c.find(t0, theta1)).is_none() {
            calibrate_local(model, sim, t0, theta1, cfg.evaluation.calibration_sims, seed, exec)?;
        }
    }
    Ok(())
}

/// Settings of an optional likelihood-ratio scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionRequest {
    pub grid: Vec<ParamPoint>,
    pub theta_true: ParamPoint,
    pub n_observed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub simulator: String,
    pub reference: String,
    pub n_eval_points: usize,
    /// MSE of the constant predictor `log r̂ = 0`.
    pub zero_predictor_mse: f64,
    pub report: MseReport,
    pub summaries: Vec<MseSummary>,
}

fn write_report(out_dir: &Path, report: &EvaluationReport) -> Result<()> {
    write_bytes(&out_dir.join("report.csv"), report.report.to_csv().as_bytes())?;
    write_json(&out_dir.join("report.json"), report)
}

/// Score checkpoints against `reference` (the default reference when empty).
/// Writes `report.csv` and `report.json` into `out_dir`, plus
/// `region_<k>.csv` per checkpoint when a scan is requested.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    checkpoints: &[PathBuf],
    reference: &[PathBuf],
    region: Option<&RegionRequest>,
    out_dir: &Path,
    exec: Execution,
) -> Result<EvaluationReport> {
    cfg.validate()?;
    if checkpoints.is_empty() {
        return Err(Error::Empty("checkpoints"));
    }
    let mut loaded = checkpoints.iter().map(|p| Checkpoint::read(p)).collect::<Result<Vec<_>>>()?;
    let reference = if reference.is_empty() {
        default_reference(cfg, exec)?
    } else {
        reference_from_checkpoints(reference)?
    };
    let set = evaluation_set(cfg, exec)?;
    let truth = reference.log_ratio_grid(&set)?;
    let zero_predictor_mse = mse_between(&vec![0.0; truth.len()], &truth)?;
    let mut report = MseReport::default();
    let observed = match region {
        Some(r) => Some(simulate_observed(
            cfg,
            &r.theta_true,
            r.n_observed,
            cfg.evaluation.seed.wrapping_add(OBSERVED_OFFSET),
            exec,
        )?),
        None => None,
    };
    for (k, ck) in loaded.iter_mut().enumerate() {
        prepare_for_evaluation(cfg, &mut ck.model, &set.theta0s, &set.theta1, exec)?;
        let est = ck.model.log_ratio_grid(&set.xs, &set.theta0s, &set.theta1)?;
        report.push(ck.meta.method.method.name(), ck.meta.n_records, ck.meta.seed, mse_between(&est, &truth)?);
        if let (Some(r), Some(obs)) = (region, &observed) {
            prepare_for_evaluation(cfg, &mut ck.model, &r.grid, &cfg.theta1, exec)?;
            let scan = confidence_region(&ck.model, obs, &r.grid, &cfg.theta1, &SigmaLevel::STANDARD)?;
            write_bytes(&out_dir.join(format!("region_{k}.csv")), scan.to_csv().as_bytes())?;
        }
    }
    let result = EvaluationReport {
        simulator: cfg.simulator.name().into(),
        reference: reference.describe(),
        n_eval_points: set.len(),
        zero_predictor_mse,
        summaries: report.summaries(),
        report,
    };
    write_report(out_dir, &result)?;
    Ok(result)
}

/// Per-bin exact densities and log-ratio as CSV (`bin,p_theta0,p_theta1,log_r`).
pub fn cmd_oracle(cfg: &ExperimentConfig, theta0: f64, theta1: f64) -> Result<String> {
    let SimulatorConfig::Galton(g) = &cfg.simulator else {
        return Err(Error::Unsupported(format!(
            "no exact likelihood for {}: its density integrates over all latent event histories",
            cfg.simulator.name()
        )));
    };
    let p0 = g.exact_density(theta0);
    let p1 = g.exact_density(theta1);
    let lr = g.exact_log_ratio(theta0, theta1)?;
    let mut s = String::from("bin,p_theta0,p_theta1,log_r\n");
    for b in 0..lr.len() {
        s.push_str(&format!("{b},{},{},{}\n", p0[b], p1[b], lr[b]));
    }
    Ok(s)
}

/// One (method, size, seed) cell of the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub method: Method,
    pub size_index: usize,
    pub n_train: usize,
    pub seed_index: usize,
}

impl Cell {
    /// Base seed of the cell's training data, shared by all methods of a family
    /// at the same size and seed index.
    pub fn data_seed(&self, base_seed: u64) -> u64 {
        base_seed
            .wrapping_add((self.size_index as u64) << 40)
            .wrapping_add((self.seed_index as u64) << 32)
    }

    pub fn train_seed(&self, base_seed: u64) -> u64 {
        base_seed.wrapping_add(self.seed_index as u64)
    }
}

pub fn ladder_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (size_index, &n_train) in cfg.sizes.iter().enumerate() {
        for seed_index in 0..cfg.seeds {
            for &method in &cfg.methods {
                cells.push(Cell {
                    method,
                    size_index,
                    n_train,
                    seed_index,
                });
            }
        }
    }
    cells
}

/// Simulate, train, calibrate and score one cell; cell-internal work is sequential.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell, set: &EvalSet, truth: &[f64]) -> Result<(f64, SurrogateModel)> {
    let exec = Execution::Sequential;
    let sim = cfg.simulator.as_simulator();
    let kind = cfg.method_kind(cell.method)?;
    let data = generate(sim, &cfg.sampling(cell.method), cell.n_train, cell.data_seed(cfg.base_seed), true, exec)?;
    let trained = train(
        kind,
        &data.records,
        sim.observable_shape(),
        &cfg.training,
        cell.train_seed(cfg.base_seed),
        exec,
    )?;
    let mut model = trained.model;
    prepare_for_evaluation(cfg, &mut model, &set.theta0s, &set.theta1, exec)?;
    let est = model.log_ratio_grid(&set.xs, &set.theta0s, &set.theta1)?;
    Ok((mse_between(&est, truth)?, model))
}

/// Run the full ladder of `cfg` and write `report.csv` and `report.json` into `out_dir`.
pub fn cmd_figure2(cfg: &ExperimentConfig, out_dir: &Path, exec: Execution) -> Result<EvaluationReport> {
    cfg.validate()?;
    let reference = default_reference(cfg, exec)?;
    let set = evaluation_set(cfg, exec)?;
    let truth = reference.log_ratio_grid(&set)?;
    let zero_predictor_mse = mse_between(&vec![0.0; truth.len()], &truth)?;
    let cells = ladder_cells(cfg);
    let results = map_indices(cells.len(), exec, |i| run_cell(cfg, cells[i], &set, &truth).map(|(mse, _)| mse));
    let mut report = MseReport::default();
    for (cell, mse) in cells.iter().zip(results) {
        report.push(cell.method.name(), cell.n_train, cell.train_seed(cfg.base_seed), mse?);
    }
    let result = EvaluationReport {
        simulator: cfg.simulator.name().into(),
        reference: reference.describe(),
        n_eval_points: set.len(),
        zero_predictor_mse,
        summaries: report.summaries(),
        report,
    };
    write_report(out_dir, &result)?;
    Ok(result)
}
