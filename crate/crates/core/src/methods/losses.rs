//! Per-example losses and the adapter from dataset records to network inputs.

use std::sync::atomic::{AtomicU64, Ordering};

use super::{Family, Method, MethodKind};
use crate::netcore::{ExampleLoss, ExampleSpec, HeadTarget, HeadView, LossTerms};
use crate::simulator::{Observable, ObservableShape, TrainingPair};
use crate::{Error, ParamPoint, Result};

/// Bound on `|log r̂|` inside the ratio-regression loss.
pub const LOG_RATIO_CLAMP: f64 = 30.0;

fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else if v < -30.0 {
        v.exp()
    } else {
        v.exp().ln_1p()
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Augmented fields of one example as seen by a loss.
#[derive(Debug, Clone, Copy)]
pub struct LossInput<'a> {
    pub y: u8,
    pub log_joint_ratio: f64,
    pub joint_score: &'a [f64],
    /// Whether the score term applies to this example.
    pub penalize: bool,
}

/// Loss of one example and its adjoints w.r.t. the head quantities, plus
/// whether the ratio clamp was active.
pub fn loss_value(kind: &MethodKind, ex: &LossInput<'_>, view: &HeadView) -> (LossTerms, bool) {
    let mut t = LossTerms::default();
    let mut saturated = false;
    match kind.method.base() {
        Method::Carl => {
            let s = view.quantity;
            let y = ex.y as f64;
            t.loss = softplus(-s) + y * s;
            t.q_adj = y - sigmoid(-s);
        }
        Method::Rolr => {
            let s = view.quantity;
            saturated = s.abs() > LOG_RATIO_CLAMP;
            let s = s.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP);
            let grad_scale = if saturated { 0.0 } else { 1.0 };
            if ex.y == 1 {
                let r = ex.log_joint_ratio.exp();
                let rh = s.exp();
                t.loss = (r - rh) * (r - rh);
                t.q_adj = -2.0 * (r - rh) * rh * grad_scale;
            } else {
                let inv_r = (-ex.log_joint_ratio).exp();
                let inv_rh = (-s).exp();
                t.loss = (inv_r - inv_rh) * (inv_r - inv_rh);
                t.q_adj = 2.0 * (inv_r - inv_rh) * inv_rh * grad_scale;
            }
        }
        Method::Nde => {
            t.loss = -view.quantity;
            t.q_adj = -1.0;
        }
        Method::Sally | Method::Sallino => {
            for (d, &score) in ex.joint_score.iter().enumerate() {
                let e = view.vector[d] - score;
                t.loss += e * e;
                t.vec_adj[d] = 2.0 * e;
            }
        }
        Method::Rascal | Method::Cascal | Method::Scandal => unreachable!("base() strips score terms"),
    }
    if ex.penalize && kind.uses_score_penalty() {
        for (r, &score) in ex.joint_score.iter().enumerate() {
            let e = view.quantity_tangent[r] - score;
            t.loss += kind.alpha * e * e;
            t.qdot_adj[r] = 2.0 * kind.alpha * e;
        }
    }
    (t, saturated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetKind {
    None,
    Bin,
    Point,
}

/// Records of a dataset laid out as network inputs and loss targets for one method.
#[derive(Debug)]
pub struct TrainingSet {
    kind: MethodKind,
    input_dim: usize,
    inputs: Vec<f64>,
    target_kind: TargetKind,
    bins: Vec<usize>,
    point_dim: usize,
    points: Vec<f64>,
    y: Vec<u8>,
    log_r: Vec<f64>,
    theta_dim: usize,
    scores: Vec<f64>,
    penalize: Vec<bool>,
    /// Fixed θ1 of ratio methods, θ_ref of local methods.
    reference: Option<ParamPoint>,
    saturated: AtomicU64,
}

impl TrainingSet {
    pub fn new(kind: MethodKind, records: &[TrainingPair], shape: ObservableShape) -> Result<Self> {
        let name = kind.method.name();
        let first = records.first().ok_or(Error::Empty("training records"))?;
        let theta_dim = first.theta0.dim();
        let family = kind.method.family();
        let incompatible = |reason: String| Error::IncompatibleData { method: name, reason };

        for (i, r) in records.iter().enumerate() {
            if !shape.admits(&r.x) {
                return Err(incompatible(format!("record {i} has an observable outside {shape:?}")));
            }
            if r.theta0.dim() != theta_dim || r.theta1.dim() != theta_dim || r.theta_gen.dim() != theta_dim {
                return Err(incompatible(format!("record {i} has inconsistent θ dimensions")));
            }
            if !r.is_finite() {
                return Err(Error::NonFinite(format!("record {i}")));
            }
        }

        let needs_ratio = kind.method.base() == Method::Rolr;
        let needs_score = family == Family::Local || kind.uses_score_penalty();
        if needs_ratio && records.iter().any(|r| r.log_joint_ratio.is_none()) {
            return Err(Error::MissingAugmentation {
                method: name,
                field: "log_joint_ratio",
            });
        }
        if needs_score && records.iter().any(|r| r.joint_score.is_none()) {
            return Err(Error::MissingAugmentation {
                method: name,
                field: "joint_score",
            });
        }
        if needs_score && records.iter().any(|r| r.joint_score.as_ref().is_some_and(|s| s.len() != theta_dim)) {
            return Err(incompatible("joint score dimension differs from θ".into()));
        }

        let reference = match family {
            Family::Ratio => {
                let theta1 = &first.theta1;
                if records.iter().any(|r| &r.theta1 != theta1) {
                    return Err(incompatible("ratio models need a single fixed θ1".into()));
                }
                if !records.iter().any(|r| r.y == 0) || !records.iter().any(|r| r.y == 1) {
                    return Err(incompatible("needs samples from both hypotheses (y = 0 and y = 1)".into()));
                }
                if records.iter().any(|r| {
                    let gen_ok = if r.y == 0 { r.theta_gen == r.theta0 } else { r.theta_gen == r.theta1 };
                    !gen_ok
                }) {
                    return Err(incompatible("y = 0 must be generated at θ0 and y = 1 at θ1".into()));
                }
                Some(theta1.clone())
            }
            Family::Local => {
                let theta_ref = &first.theta_gen;
                if records.iter().any(|r| &r.theta_gen != theta_ref || &r.theta0 != theta_ref) {
                    return Err(incompatible("local methods need every sample generated at θ_ref".into()));
                }
                Some(theta_ref.clone())
            }
            Family::Density => {
                if kind.uses_score_penalty() && !records.iter().any(TrainingPair::score_at_generator) {
                    return Err(incompatible("no record carries the joint score at its generating θ".into()));
                }
                None
            }
        };

        let target_kind = match (family, shape) {
            (Family::Density, ObservableShape::Bins { .. }) => TargetKind::Bin,
            (Family::Density, ObservableShape::Vector { .. }) => TargetKind::Point,
            _ => TargetKind::None,
        };
        let input_dim = match family {
            Family::Ratio => shape.feature_dim() + theta_dim,
            Family::Density => theta_dim,
            Family::Local => shape.feature_dim(),
        };

        let n = records.len();
        let mut set = TrainingSet {
            kind,
            input_dim,
            inputs: Vec::with_capacity(n * input_dim),
            target_kind,
            bins: Vec::new(),
            point_dim: if target_kind == TargetKind::Point { shape.feature_dim() } else { 0 },
            points: Vec::new(),
            y: Vec::with_capacity(n),
            log_r: Vec::with_capacity(n),
            theta_dim,
            scores: Vec::with_capacity(n * theta_dim),
            penalize: Vec::with_capacity(n),
            reference,
            saturated: AtomicU64::new(0),
        };
        for r in records {
            match family {
                Family::Ratio => {
                    r.x.push_features(&mut set.inputs);
                    set.inputs.extend_from_slice(r.theta0.as_slice());
                }
                Family::Density => set.inputs.extend_from_slice(r.theta_gen.as_slice()),
                Family::Local => r.x.push_features(&mut set.inputs),
            }
            match (target_kind, &r.x) {
                (TargetKind::Bin, Observable::Bin(b)) => set.bins.push(*b as usize),
                (TargetKind::Point, x) => x.push_features(&mut set.points),
                _ => {}
            }
            set.y.push(r.y);
            set.log_r.push(r.log_joint_ratio.unwrap_or(0.0));
            match &r.joint_score {
                Some(s) if s.len() == theta_dim => set.scores.extend_from_slice(s),
                _ => set.scores.extend(std::iter::repeat_n(0.0, theta_dim)),
            }
            let penalize = match family {
                Family::Ratio => r.y == 0,
                Family::Density => r.score_at_generator(),
                Family::Local => false,
            };
            set.penalize.push(penalize && kind.uses_score_penalty() && r.joint_score.is_some());
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn kind(&self) -> MethodKind {
        self.kind
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn reference(&self) -> Option<&ParamPoint> {
        self.reference.as_ref()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Mixture-head target of example `i` (empty for other heads).
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.point_dim..(i + 1) * self.point_dim]
    }

    pub fn has_points(&self) -> bool {
        self.target_kind == TargetKind::Point
    }

    /// Number of clamped ratio evaluations since construction.
    pub fn saturation_count(&self) -> u64 {
        self.saturated.load(Ordering::Relaxed)
    }

    fn loss_input(&self, i: usize) -> LossInput<'_> {
        LossInput {
            y: self.y[i],
            log_joint_ratio: self.log_r[i],
            joint_score: &self.scores[i * self.theta_dim..(i + 1) * self.theta_dim],
            penalize: self.penalize[i],
        }
    }
}

impl ExampleLoss for TrainingSet {
    fn example(&self, i: usize) -> ExampleSpec<'_> {
        let target = match self.target_kind {
            TargetKind::None => HeadTarget::None,
            TargetKind::Bin => HeadTarget::Bin(self.bins[i]),
            TargetKind::Point => HeadTarget::Point(self.point(i)),
        };
        ExampleSpec {
            input: self.input(i),
            target,
            dirs: if self.penalize[i] { self.theta_dim } else { 0 },
        }
    }

    fn loss(&self, i: usize, view: &HeadView) -> LossTerms {
        let (terms, saturated) = loss_value(&self.kind, &self.loss_input(i), view);
        if saturated {
            self.saturated.fetch_add(1, Ordering::Relaxed);
        }
        terms
    }
}
