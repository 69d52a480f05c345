use std::time::Instant;

use goldmine::config::ExperimentConfig;
use goldmine::data::{log_sidecar_path, Checkpoint, Dataset};
use goldmine::eval::score_diagnostics;
use goldmine::methods::{calibrate_local, train, Method, MethodKind, TrainConfig};
use goldmine::parallel::Execution;
use goldmine::pipeline::{cmd_evaluate, cmd_simulate, cmd_train};
use goldmine::simulator::Observable;
use goldmine::{Error, ParamPoint};

const EXEC: Execution = Execution::Parallel;

fn quick_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::galton();
    cfg.training = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    cfg
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config();
    let a = dir.path().join("a.ndjson");
    let b = dir.path().join("b.ndjson");
    cmd_simulate(&cfg, Method::Rascal, 500, 3, &a, EXEC).unwrap();
    cmd_simulate(&cfg, Method::Rascal, 500, 3, &b, Execution::Sequential).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let ca = dir.path().join("ca.json");
    let cb = dir.path().join("cb.json");
    let kind = cfg.method_kind(Method::Rascal).unwrap();
    cmd_train(&cfg, kind, &a, 4, &ca, EXEC).unwrap();
    cmd_train(&cfg, kind, &b, 4, &cb, Execution::Sequential).unwrap();
    assert_eq!(std::fs::read(&ca).unwrap(), std::fs::read(&cb).unwrap());
    assert!(log_sidecar_path(&ca).exists());
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config();
    let data = dir.path().join("d.ndjson");
    cmd_simulate(&cfg, Method::Scandal, 400, 1, &data, EXEC).unwrap();
    let path = dir.path().join("m.json");
    let kind = cfg.method_kind(Method::Scandal).unwrap();
    let written = cmd_train(&cfg, kind, &data, 2, &path, EXEC).unwrap();
    let read = Checkpoint::read(&path).unwrap();
    assert_eq!(read, written);
    let xs: Vec<Observable> = (0..21).map(Observable::Bin).collect();
    let thetas: Vec<ParamPoint> = [-1.0, -0.8, -0.5].map(ParamPoint::scalar).to_vec();
    let a = written.model.log_ratio_grid(&xs, &thetas, &cfg.theta1).unwrap();
    let b = read.model.log_ratio_grid(&xs, &thetas, &cfg.theta1).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(read.weights_digest(), written.weights_digest());
}

#[test]
fn checkpoint_against_itself_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config();
    let data = dir.path().join("d.ndjson");
    cmd_simulate(&cfg, Method::Carl, 400, 1, &data, EXEC).unwrap();
    let ck = dir.path().join("m.json");
    cmd_train(&cfg, cfg.method_kind(Method::Carl).unwrap(), &data, 2, &ck, EXEC).unwrap();
    let out = dir.path().join("report");
    let report = cmd_evaluate(&cfg, &[ck.clone()], &[ck], None, &out, EXEC).unwrap();
    assert_eq!(report.report.entries[0].mse, 0.0);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "method,n_train,seed,mse");
    assert!(out.join("report.json").exists());
}

#[test]
fn missing_checkpoint_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_evaluate(
        &quick_config(),
        &[dir.path().join("nope.json")],
        &[],
        None,
        dir.path(),
        EXEC,
    )
    .unwrap_err();
    assert!(matches!(err, Error::NotFound(_)));
    assert_eq!(err.exit_code(), 5);
}

#[test]
fn unaugmented_data_cannot_train_rolr() {
    let cfg = quick_config();
    let sim = cfg.simulator.as_simulator();
    let d = Dataset::simulate(sim, &cfg.sampling(Method::Rolr), 50, 0, false, EXEC).unwrap();
    let err = train(
        MethodKind::with_default_alpha(Method::Rolr),
        &d.records,
        sim.observable_shape(),
        &cfg.training,
        0,
        EXEC,
    )
    .unwrap_err();
    assert!(matches!(err, Error::MissingAugmentation { .. }));
    // CARL needs no augmentation.
    train(
        MethodKind::with_default_alpha(Method::Carl),
        &d.records,
        sim.observable_shape(),
        &cfg.training,
        0,
        EXEC,
    )
    .unwrap();
}

#[test]
fn augmentation_identities_hold_on_galton_data() {
    let cfg = quick_config();
    let sim = cfg.simulator.as_simulator();
    let d = Dataset::simulate(sim, &cfg.sampling(Method::Rascal), 100_000, 11, true, EXEC).unwrap();
    let diag = score_diagnostics(&d.records).unwrap();
    assert!(diag.score[0].within(3.0, 0.0), "{:?}", diag.score[0]);
    let ratio = diag.ratio.unwrap();
    assert!(ratio.within(3.0, 1.0), "{ratio:?}");
}

#[test]
fn ratio_models_refuse_other_denominators() {
    let cfg = quick_config();
    let sim = cfg.simulator.as_simulator();
    let d = Dataset::simulate(sim, &cfg.sampling(Method::Carl), 200, 0, true, EXEC).unwrap();
    let t = train(
        MethodKind::with_default_alpha(Method::Carl),
        &d.records,
        sim.observable_shape(),
        &cfg.training,
        0,
        EXEC,
    )
    .unwrap();
    let x = Observable::Bin(10);
    let t0 = ParamPoint::scalar(-0.8);
    assert!(t.model.log_ratio(&x, &t0, &ParamPoint::scalar(-0.6)).is_ok());
    assert!(matches!(
        t.model.log_ratio(&x, &t0, &ParamPoint::scalar(-0.5)),
        Err(Error::ReferenceMismatch { .. })
    ));
}

#[test]
fn local_models_need_calibration() {
    let cfg = quick_config();
    let sim = cfg.simulator.as_simulator();
    let d = Dataset::simulate(sim, &cfg.sampling(Method::Sally), 2_000, 0, true, EXEC).unwrap();
    let mut model = train(
        MethodKind::with_default_alpha(Method::Sally),
        &d.records,
        sim.observable_shape(),
        &cfg.training,
        0,
        EXEC,
    )
    .unwrap()
    .model;
    let (t0, t1) = (ParamPoint::scalar(-0.8), ParamPoint::scalar(-0.6));
    let x = Observable::Bin(10);
    assert!(matches!(model.log_ratio(&x, &t0, &t1), Err(Error::NotCalibrated { .. })));
    assert!(calibrate_local(&mut model, sim, &t0, &t1, 999, 0, EXEC).is_err());
    calibrate_local(&mut model, sim, &t0, &t1, 5_000, 0, EXEC).unwrap();
    assert!(model.log_ratio(&x, &t0, &t1).unwrap().is_finite());
    calibrate_local(&mut model, sim, &t1, &t1, 5_000, 0, EXEC).unwrap();
    let same = model.log_ratio_detail(&x, &t1, &t1).unwrap();
    assert_eq!(same.value, 0.0);
}

#[test]
fn scandal_on_a_thousand_samples_is_quick() {
    let cfg = ExperimentConfig::galton();
    let sim = cfg.simulator.as_simulator();
    let d = Dataset::simulate(sim, &cfg.sampling(Method::Scandal), 1_000, 0, true, EXEC).unwrap();
    let start = Instant::now();
    let t = TrainConfig {
        epochs: 100,
        ..TrainConfig::default()
    };
    train(
        MethodKind::with_default_alpha(Method::Scandal),
        &d.records,
        sim.observable_shape(),
        &t,
        0,
        EXEC,
    )
    .unwrap();
    assert!(start.elapsed().as_secs() < 60);
}
