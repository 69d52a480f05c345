//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Set `ACCEPTANCE_ONLY=3,7` to
//! run a subset and `ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use goldmine::config::ExperimentConfig;
use goldmine::data::{Checkpoint, CheckpointMeta, Dataset};
use goldmine::eval::{confidence_region, EvalSet, GaltonOracle, LogRatioEstimator, MeanCheck, SigmaLevel};
use goldmine::galton::GaltonConfig;
use goldmine::lotka::{LvConfig, LvParams, N_EVENTS};
use goldmine::methods::{calibrate_local, train, Method, MethodKind, SurrogateModel};
use goldmine::netcore::{
    Affine, ExampleLoss, ExampleSpec, Head, HeadTarget, HeadView, LossTerms, Network, NetworkSpec,
};
use goldmine::parallel::{map_indices, Execution};
use goldmine::pipeline::{cmd_figure2, EvaluationReport};
use goldmine::simulator::{generate, seeded_rng, Observable, Prior, Simulator};
use goldmine::ParamPoint;
use rand::Rng;

const EXEC: Execution = Execution::Parallel;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn within_budget(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn c1_galton_augmentation() -> Outcome {
    let start = Instant::now();
    let g = GaltonConfig::default();
    let mut rng = seeded_rng(101, 9);
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let theta = rng.random_range(-1.0..-0.4);
        let trace = g.simulate_trace(theta, theta, -0.6, seed).unwrap();
        let h = 1e-4;
        let fd = (g.trace_log_density(&trace.moves, theta + h) - g.trace_log_density(&trace.moves, theta - h)) / (2.0 * h);
        worst = worst.max(rel_err(trace.accumulators.joint_score[0], fd));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-5 && within_budget(elapsed, 10),
        format!("100 traces, max rel. err {worst:.2e} (≤ 1e-5), {elapsed:.1?} (≤ 10 s)"),
    )
}

fn c2_lotka_augmentation() -> Outcome {
    let start = Instant::now();
    let cfg = LvConfig::default();
    let reference = LvParams::reference();
    let prior = Prior::box_around(&reference.into(), 0.01);
    let mut rng = seeded_rng(202, 1);
    let mut worst: f64 = 0.0;
    let mut worst_coarse: f64 = 0.0;
    let mut over = 0;
    let mut traces = 0;
    for seed in 0..60 {
        let theta0 = LvParams::try_from(&prior.sample(&mut rng)).unwrap();
        let Ok(run) = cfg.simulate_recorded(&theta0, &theta0, &reference, seed) else {
            continue;
        };
        for k in 0..N_EVENTS {
            let fd = |h: f64| {
                let (mut up, mut down) = (theta0, theta0);
                up.log_rates[k] += h;
                down.log_rates[k] -= h;
                (cfg.replay_log_density(&run.events, run.censored_wait, &up)
                    - cfg.replay_log_density(&run.events, run.censored_wait, &down))
                    / (2.0 * h)
            };
            let score = run.accumulators.joint_score[k];
            let err = rel_err(score, fd(1e-4));
            worst = worst.max(err);
            worst_coarse = worst_coarse.max(rel_err(score, fd(1e-3)));
            if err > 1e-5 {
                over += 1;
            }
        }
        traces += 1;
    }
    // Ratio identity: samples at θ1, ratio against θ0 drawn from the box.
    let theta1: ParamPoint = reference.into();
    let draws = map_indices(10_500, EXEC, |i| {
        let theta0 = prior.sample(&mut seeded_rng(300_000 + i as u64, 1));
        cfg.simulate_augmented(&theta1, &theta0, &theta1, 300_000 + i as u64)
            .ok()
            .map(|(_, acc)| acc.log_joint_ratio.exp())
    });
    let valid: Vec<f64> = draws.into_iter().flatten().take(10_000).collect();
    let check = MeanCheck::of(&valid, 1.0).unwrap();
    let ratio_ok = valid.len() == 10_000 && check.within(3.0, 1.0);
    let elapsed = start.elapsed();
    outcome(
        traces >= 50 && worst <= 1e-5 && ratio_ok && within_budget(elapsed, 120),
        format!(
            "{traces} traces, max rel. err {worst:.2e} at h=1e-4 ({over} of {} components above 1e-5; {worst_coarse:.2e} at h=1e-3); E[r] = {:.4} ± {:.4} over {} samples (z = {:.2}); {elapsed:.1?} (≤ 2 min)",
            traces * N_EVENTS,
            check.mean,
            check.stderr.unwrap_or(f64::NAN),
            valid.len(),
            check.z.unwrap_or(f64::NAN)
        ),
    )
}

fn binomial_20(k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (20 - i) as f64 / (i + 1) as f64;
    }
    c / 1_048_576.0
}

fn c3_oracle_validity() -> Outcome {
    let g = GaltonConfig::default();
    let mut worst_sum: f64 = 0.0;
    for i in 0..=20 {
        let theta = -1.5 + 0.15 * i as f64;
        worst_sum = worst_sum.max((g.exact_density(theta).iter().sum::<f64>() - 1.0).abs());
    }
    let mut worst_hist: f64 = 0.0;
    for theta in [-0.8, -0.6] {
        let p = g.exact_density(theta);
        let bins = map_indices(100_000, EXEC, |i| g.simulate(theta, theta, theta, 50_000 + i as u64).unwrap().0);
        let mut counts = vec![0usize; p.len()];
        for b in bins {
            counts[b as usize] += 1;
        }
        for (c, q) in counts.iter().zip(&p) {
            worst_hist = worst_hist.max((*c as f64 / 100_000.0 - q).abs());
        }
    }
    let fair = g.exact_density(0.0);
    let binom_dev = (0..=20).map(|k| (fair[k] - binomial_20(k)).abs()).fold(0.0, f64::max);
    outcome(
        worst_sum <= 1e-12 && worst_hist <= 0.01 && binom_dev == 0.0,
        format!(
            "|Σp − 1| ≤ {worst_sum:.1e}; histogram max dev {worst_hist:.4} (≤ 0.01); θ=0 vs Binomial(20,½) max dev {binom_dev:e}"
        ),
    )
}

fn c4_conditional_expectation() -> Outcome {
    let g = GaltonConfig::default();
    let exact = g.exact_log_ratio(-0.8, -0.6).unwrap();
    let draws = map_indices(100_000, EXEC, |i| {
        let (x, acc) = g.simulate(-0.6, -0.8, -0.6, 900_000 + i as u64).unwrap();
        (x as usize, acc.log_joint_ratio.exp())
    });
    let mut sums = vec![(0.0, 0usize); exact.len()];
    for (b, r) in draws {
        sums[b].0 += r;
        sums[b].1 += 1;
    }
    let mut worst: f64 = 0.0;
    for b in 5..=15 {
        let mean = sums[b].0 / sums[b].1 as f64;
        worst = worst.max((mean / exact[b].exp() - 1.0).abs());
    }
    outcome(
        worst <= 0.02,
        format!("bins 5..15, max relative deviation {:.2}% (≤ 2%)", 100.0 * worst),
    )
}

enum Target {
    None,
    Bin(usize),
    Point(Vec<f64>),
}

impl Target {
    fn view(&self) -> HeadTarget<'_> {
        match self {
            Target::None => HeadTarget::None,
            Target::Bin(b) => HeadTarget::Bin(*b),
            Target::Point(p) => HeadTarget::Point(p),
        }
    }
}

/// `0.7 q + 0.3 q² + Σ (q̇_r − s_r)²`, exercising value and tangent adjoints.
struct Probe {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Target>,
    scores: Vec<Vec<f64>>,
    dirs: usize,
}

impl ExampleLoss for Probe {
    fn example(&self, i: usize) -> ExampleSpec<'_> {
        ExampleSpec {
            input: &self.inputs[i],
            target: self.targets[i].view(),
            dirs: self.dirs,
        }
    }

    fn loss(&self, i: usize, v: &HeadView) -> LossTerms {
        let mut t = LossTerms {
            loss: 0.7 * v.quantity + 0.3 * v.quantity * v.quantity,
            q_adj: 0.7 + 0.6 * v.quantity,
            ..LossTerms::default()
        };
        for r in 0..self.dirs {
            let e = v.quantity_tangent[r] - self.scores[i][r];
            t.loss += e * e;
            t.qdot_adj[r] = 2.0 * e;
        }
        t
    }
}

fn random_network(head: Head, seed: u64) -> Network {
    let spec = NetworkSpec {
        x_dim: 2,
        theta_dim: 2,
        hidden: vec![6, 5],
        head,
    };
    let mut net = Network::init(spec, seed).unwrap();
    let mut rng = seeded_rng(seed, 40);
    for w in net.weights.iter_mut() {
        if *w == 0.0 {
            *w = rng.random_range(-0.5..0.5);
        }
    }
    let d = net.spec.input_dim();
    net.input_norm = Affine {
        shift: (0..d).map(|_| rng.random_range(-0.5..0.5)).collect(),
        scale: (0..d).map(|_| rng.random_range(0.5..2.0)).collect(),
    };
    net
}

fn probe(net: &Network, n: usize, dirs: usize, seed: u64) -> Probe {
    let mut rng = seeded_rng(seed, 41);
    let mut p = Probe {
        inputs: vec![],
        targets: vec![],
        scores: vec![],
        dirs,
    };
    for _ in 0..n {
        p.inputs.push((0..net.spec.input_dim()).map(|_| rng.random_range(-1.5..1.5)).collect());
        p.targets.push(match net.spec.head {
            Head::Softmax { bins } => Target::Bin(rng.random_range(0..bins)),
            Head::GaussianMixture { dim, .. } => Target::Point((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()),
            _ => Target::None,
        });
        p.scores.push((0..net.spec.theta_dim).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    p
}

fn c5_gradient_engine() -> Outcome {
    let start = Instant::now();
    let heads = [
        ("scalar", Head::Scalar),
        ("softmax", Head::Softmax { bins: 5 }),
        ("mixture", Head::GaussianMixture { components: 3, dim: 2 }),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (k, (name, head)) in heads.into_iter().enumerate() {
        let net = random_network(head, 10 + k as u64);
        let loss = probe(&net, 6, 2, 20 + k as u64);
        let idx: Vec<usize> = (0..loss.inputs.len()).collect();

        let (_, g) = net.grad_weights(&loss, &idx, Execution::Sequential).unwrap();
        let mut w_err: f64 = 0.0;
        let h = 1e-5;
        for i in 0..net.weights.len() {
            let mut plus = net.clone();
            plus.weights[i] += h;
            let mut minus = net.clone();
            minus.weights[i] -= h;
            let fd = (plus.mean_loss(&loss, &idx, Execution::Sequential).unwrap()
                - minus.mean_loss(&loss, &idx, Execution::Sequential).unwrap())
                / (2.0 * h);
            w_err = w_err.max(rel_err(g[i], fd));
        }

        let mut t_err: f64 = 0.0;
        for (input, target) in loss.inputs.iter().zip(&loss.targets) {
            let (x, theta) = input.split_at(2);
            let grad = net.theta_gradient(x, theta, target.view()).unwrap();
            for r in 0..2 {
                let mut up = theta.to_vec();
                up[r] += h;
                let mut down = theta.to_vec();
                down[r] -= h;
                let q = |t: &[f64]| net.quantity_and_theta_gradient(x, t, target.view()).unwrap().0;
                t_err = t_err.max(rel_err(grad[r], (q(&up) - q(&down)) / (2.0 * h)));
            }
        }

        let mut p_err: f64 = 0.0;
        let hp = 1e-4;
        for (j, (input, target)) in loss.inputs.iter().zip(&loss.targets).enumerate().take(3) {
            let (x, theta) = input.split_at(2);
            let score = &loss.scores[j];
            let (_, g) = net.grad_weights_of_score_penalty(x, theta, target.view(), score).unwrap();
            for i in 0..net.weights.len() {
                let mut plus = net.clone();
                plus.weights[i] += hp;
                let mut minus = net.clone();
                minus.weights[i] -= hp;
                let fd = (plus.grad_weights_of_score_penalty(x, theta, target.view(), score).unwrap().0
                    - minus.grad_weights_of_score_penalty(x, theta, target.view(), score).unwrap().0)
                    / (2.0 * hp);
                p_err = p_err.max(rel_err(g[i], fd));
            }
        }
        pass &= w_err <= 1e-4 && t_err <= 1e-5 && p_err <= 1e-3;
        details.push(format!("{name}: w {w_err:.1e} θ {t_err:.1e} pen {p_err:.1e}"));
    }
    let elapsed = start.elapsed();
    pass &= within_budget(elapsed, 30);
    outcome(
        pass,
        format!("{} (≤ 1e-4/1e-5/1e-3), {elapsed:.1?} (≤ 30 s)", details.join("; ")),
    )
}

fn summary_medians(report: &EvaluationReport, n: usize) -> BTreeMap<String, f64> {
    report
        .summaries
        .iter()
        .filter(|s| s.n_train == n)
        .map(|s| (s.method.clone(), s.median))
        .collect()
}

fn c6_galton_ladder() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::galton();
    cfg.sizes = vec![1_000, 100_000];
    cfg.seeds = 5;
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_figure2(&cfg, dir.path(), EXEC).unwrap();
    let small = summary_medians(&report, 1_000);
    let large = summary_medians(&report, 100_000);
    let zero = report.zero_predictor_mse;
    let rascal_ok = small["RASCAL"] <= 0.75 * small["CARL"];
    let scandal_ok = small["SCANDAL"] <= 0.75 * small["NDE"];
    let failing: Vec<String> = large
        .iter()
        .filter(|(_, &m)| m > 0.1 * zero)
        .map(|(k, m)| format!("{k} {:.3}×", m / zero))
        .collect();
    let elapsed = start.elapsed();
    let fmt = |m: &BTreeMap<String, f64>| {
        m.iter().map(|(k, v)| format!("{k} {:.3}", v / zero)).collect::<Vec<_>>().join(", ")
    };
    outcome(
        rascal_ok && scandal_ok && failing.is_empty() && within_budget(elapsed, 1800),
        format!(
            "median MSE / zero-predictor MSE ({zero:.5}) at n=1e3: {}; at n=1e5: {}; RASCAL<0.75·CARL {rascal_ok}, SCANDAL<0.75·NDE {scandal_ok}; above 0.1 at 1e5: [{}]; {elapsed:.0?} (≤ 30 min)",
            fmt(&small),
            fmt(&large),
            failing.join(", ")
        ),
    )
}

fn c7_reductions() -> Outcome {
    let cfg = ExperimentConfig::galton();
    let sim = cfg.simulator.as_simulator();
    let mut training = cfg.training.clone();
    training.epochs = 50;
    let mut details = Vec::new();
    let mut pass = true;
    for m in [Method::Rascal, Method::Cascal, Method::Scandal] {
        let data = generate(sim, &cfg.sampling(m), 2_000, 77, true, EXEC).unwrap();
        let a = train(MethodKind::new(m, 0.0).unwrap(), &data.records, sim.observable_shape(), &training, 5, EXEC).unwrap();
        let b = train(
            MethodKind::with_default_alpha(m.base()),
            &data.records,
            sim.observable_shape(),
            &training,
            5,
            EXEC,
        )
        .unwrap();
        let same = a.model.network == b.model.network && a.optimizer == b.optimizer;
        let with_alpha = train(MethodKind::with_default_alpha(m), &data.records, sim.observable_shape(), &training, 5, EXEC).unwrap();
        let differs = with_alpha.model.network.weights != b.model.network.weights;
        pass &= same && differs;
        details.push(format!("{m}(α=0) ≡ {}: {same}", m.base()));
    }
    outcome(pass, details.join("; "))
}

fn c8_local_methods() -> Outcome {
    let cfg = ExperimentConfig::galton();
    let sim = cfg.simulator.as_simulator();
    let galton = GaltonConfig::default();
    let data = generate(sim, &cfg.sampling(Method::Sally), 10_000, 88, true, EXEC).unwrap();
    let truth_score = galton.exact_score_fd(-0.7, 1e-5);
    let exact = galton.exact_log_ratio(-0.8, -0.6).unwrap();
    let (t0, t1) = (ParamPoint::scalar(-0.8), ParamPoint::scalar(-0.6));
    let mut pass = true;
    let mut details = Vec::new();
    for m in [Method::Sally, Method::Sallino] {
        let mut model = train(MethodKind::with_default_alpha(m), &data.records, sim.observable_shape(), &cfg.training, 8, EXEC)
            .unwrap()
            .model;
        if m == Method::Sally {
            let worst = (5..=15)
                .map(|b| (model.estimated_score(&Observable::Bin(b)).unwrap()[0] - truth_score[b as usize]).powi(2))
                .fold(0.0, f64::max);
            pass &= worst <= 0.05;
            details.push(format!("SALLY score sq. err max over bins 5..15 {worst:.4} (≤ 0.05)"));
        }
        calibrate_local(&mut model, sim, &t0, &t1, cfg.evaluation.calibration_sims, 99, EXEC).unwrap();
        let worst = (5..=15u32)
            .map(|b| (model.log_ratio(&Observable::Bin(b), &t0, &t1).unwrap() - exact[b as usize]).abs())
            .fold(0.0, f64::max);
        pass &= worst <= 0.1;
        details.push(format!("{m} log r max abs err {worst:.4} (≤ 0.1)"));
    }
    outcome(pass, details.join("; "))
}

fn c9_coverage() -> Outcome {
    let start = Instant::now();
    let g = GaltonConfig::default();
    let oracle = GaltonOracle(g.clone());
    let grid: Vec<ParamPoint> = (0..=160).map(|i| ParamPoint::scalar(-1.2 + 0.005 * i as f64)).collect();
    let truth_idx = 80;
    let theta_ref = ParamPoint::scalar(-0.6);
    // Precompute the oracle table once; every repetition reuses it.
    let table = oracle
        .log_ratio_grid(&EvalSet {
            xs: (0..=20).map(Observable::Bin).collect(),
            theta0s: grid.clone(),
            theta1: theta_ref.clone(),
        })
        .unwrap();
    struct Table<'a>(&'a [f64]);
    impl LogRatioEstimator for Table<'_> {
        fn log_ratio_grid(&self, set: &EvalSet) -> goldmine::Result<Vec<f64>> {
            let mut out = Vec::with_capacity(set.len());
            for i in 0..set.theta0s.len() {
                for x in &set.xs {
                    let Observable::Bin(b) = x else { unreachable!() };
                    out.push(self.0[i * 21 + *b as usize]);
                }
            }
            Ok(out)
        }
    }
    let covered = (0..200u64)
        .filter(|rep| {
            let obs: Vec<Observable> = (0..100u64)
                .map(|j| Observable::Bin(g.simulate(-0.8, -0.8, -0.8, 10_000_000 + rep * 1000 + j).unwrap().0))
                .collect();
            let region = confidence_region(&Table(&table), &obs, &grid, &theta_ref, &[SigmaLevel(1.0)]).unwrap();
            region.levels[0].inside[truth_idx]
        })
        .count();
    let p = SigmaLevel(1.0).probability();
    let band = 3.0 * (p * (1.0 - p) / 200.0).sqrt();
    let rate = covered as f64 / 200.0;
    let elapsed = start.elapsed();
    outcome(
        (rate - p).abs() <= band && within_budget(elapsed, 300),
        format!(
            "1σ interval covered θ=−0.8 in {covered}/200 = {:.1}% (target {:.2}% ± {:.1}%), {elapsed:.1?} (≤ 5 min)",
            100.0 * rate,
            100.0 * p,
            100.0 * band
        ),
    )
}

fn c10_lotka_ladder() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::lotka();
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_figure2(&cfg, dir.path(), EXEC).unwrap();
    let m = summary_medians(&report, 2_000);
    let (scandal, nde) = (m["SCANDAL"], m["NDE"]);
    let elapsed = start.elapsed();
    outcome(
        scandal <= 0.8 * nde && within_budget(elapsed, 3600),
        format!(
            "median MSE vs {} over {} points: SCANDAL {scandal:.4}, NDE {nde:.4} (need SCANDAL ≤ 0.8·NDE); {elapsed:.0?} (≤ 60 min)",
            report.reference, report.n_eval_points
        ),
    )
}

fn checkpoint_bytes(model: SurrogateModel, optimizer: goldmine::netcore::AdamState, digest: &str) -> Vec<u8> {
    let ck = Checkpoint::new(
        CheckpointMeta {
            method: model.kind,
            seed: 3,
            simulator: "galton".into(),
            dataset_digest: digest.into(),
            n_records: 0,
        },
        model,
        optimizer,
    );
    serde_json::to_vec(&ck).unwrap()
}

fn c11_determinism() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for cfg in [ExperimentConfig::galton(), ExperimentConfig::lotka()] {
        let sim = cfg.simulator.as_simulator();
        let method = if sim.id() == "galton" { Method::Rascal } else { Method::Scandal };
        let plan = cfg.sampling(method);
        let a = Dataset::simulate(sim, &plan, 300, 42, true, Execution::Parallel).unwrap();
        let b = Dataset::simulate(sim, &plan, 300, 42, true, Execution::Sequential).unwrap();
        let bytes = a.to_bytes().unwrap();
        let same_data = bytes == b.to_bytes().unwrap();
        let back = Dataset::from_bytes(&bytes, Path::new("mem")).unwrap();
        let data_round_trip = back == a && back.to_bytes().unwrap() == bytes;

        let mut training = cfg.training.clone();
        training.epochs = 5;
        training.hidden = vec![8];
        let kind = MethodKind::with_default_alpha(method);
        let t1 = train(kind, &a.records, sim.observable_shape(), &training, 3, Execution::Parallel).unwrap();
        let t2 = train(kind, &back.records, sim.observable_shape(), &training, 3, Execution::Sequential).unwrap();
        let probe_theta = a.records[0].theta0.clone();
        let probe_xs: Vec<Observable> = a.records.iter().take(20).map(|r| r.x.clone()).collect();
        let before = t1.model.log_ratio_grid(&probe_xs, &[probe_theta.clone()], &cfg.theta1).unwrap();
        let ck1 = checkpoint_bytes(t1.model, t1.optimizer, a.digest());
        let ck2 = checkpoint_bytes(t2.model, t2.optimizer, a.digest());
        let same_ck = ck1 == ck2;
        let restored: Checkpoint = serde_json::from_slice(&ck1).unwrap();
        let after = restored.model.log_ratio_grid(&probe_xs, &[probe_theta], &cfg.theta1).unwrap();
        let preds_exact = before.iter().zip(&after).all(|(x, y)| x.to_bits() == y.to_bits());
        let ck_round_trip = serde_json::to_vec(&restored).unwrap() == ck1;
        pass &= same_data && data_round_trip && same_ck && preds_exact && ck_round_trip;
        details.push(format!(
            "{}: datasets identical {same_data}, dataset round-trip {data_round_trip}, checkpoints identical {same_ck}, checkpoint round-trip {ck_round_trip}, predictions bit-exact {preds_exact}",
            sim.id()
        ));
    }
    outcome(pass, details.join("; "))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 11] = [
    (1, "galton augmentation", c1_galton_augmentation),
    (2, "lotka-volterra augmentation", c2_lotka_augmentation),
    (3, "oracle validity", c3_oracle_validity),
    (4, "conditional expectation", c4_conditional_expectation),
    (5, "gradient engine", c5_gradient_engine),
    (6, "galton sample-size ladder", c6_galton_ladder),
    (7, "α = 0 reductions", c7_reductions),
    (8, "local methods", c8_local_methods),
    (9, "confidence-region coverage", c9_coverage),
    (10, "lotka-volterra ordering", c10_lotka_ladder),
    (11, "determinism and round-trips", c11_determinism),
];

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (id, name, check) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{verdict}] {name}: {} ({:.1?})", o.detail, start.elapsed());
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}

