//! Per-example loss interface and deterministic batch reduction.

use super::heads::HeadScratch;
use super::mlp::Workspace;
use super::{Network, MAX_DIRS};
use crate::parallel::{map_indices, Execution};
use crate::{Error, Result};

/// Examples per work unit. Fixed so that the summation order, and hence
/// every bit of the result, is independent of the thread count.
const CHUNK: usize = 16;

/// What the head is evaluated against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadTarget<'a> {
    /// Scalar and vector heads need no target.
    None,
    /// Softmax heads: the observed bin.
    Bin(usize),
    /// Mixture heads: the observed feature vector.
    Point(&'a [f64]),
}

/// Head quantities exposed to a loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeadView {
    /// Scalar output, or the log-density of the target for density heads.
    pub quantity: f64,
    /// θ-gradient of `quantity` (first `dirs` entries).
    pub quantity_tangent: [f64; MAX_DIRS],
    /// Output of a vector head.
    pub vector: [f64; MAX_DIRS],
    pub dirs: usize,
}

/// A loss value with its adjoints w.r.t. the [`HeadView`] entries.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    pub q_adj: f64,
    pub qdot_adj: [f64; MAX_DIRS],
    pub vec_adj: [f64; MAX_DIRS],
}

pub struct ExampleSpec<'a> {
    /// Raw network input `[x, θ]`.
    pub input: &'a [f64],
    pub target: HeadTarget<'a>,
    /// Number of θ directions the loss needs gradients along (0 skips the
    /// tangent pass entirely).
    pub dirs: usize,
}

/// A loss that decomposes into a sum over indexed examples.
pub trait ExampleLoss: Sync {
    fn example(&self, i: usize) -> ExampleSpec<'_>;
    fn loss(&self, i: usize, view: &HeadView) -> LossTerms;
}

/// Mean loss over `indices` and its weight gradient.
pub(crate) fn loss_and_grad<L: ExampleLoss + ?Sized>(
    net: &Network,
    loss: &L,
    indices: &[usize],
    exec: Execution,
) -> Result<(f64, Vec<f64>)> {
    if indices.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let n_w = net.weights.len();
    let n_chunks = indices.len().div_ceil(CHUNK);
    let partials = map_indices(n_chunks, exec, |c| {
        let chunk = &indices[c * CHUNK..((c + 1) * CHUNK).min(indices.len())];
        let mut ws = Workspace::new(&net.spec);
        let mut hs = HeadScratch::default();
        let mut grad = vec![0.0; n_w];
        let mut total = 0.0;
        for &i in chunk {
            let ex = loss.example(i);
            ws.forward(net, ex.input, ex.dirs);
            let view = hs.eval(net, &ws, ex.target, ex.dirs)?;
            let terms = loss.loss(i, &view);
            if !terms.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss of example {i}")));
            }
            total += terms.loss;
            let (oa, ota) = hs.backward(net, &ws, &terms);
            ws.backward(net, oa, ota, &mut grad);
        }
        Ok((total, grad))
    });
    let mut total = 0.0;
    let mut grad = vec![0.0; n_w];
    for part in partials {
        let (t, g) = part?;
        total += t;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let inv = 1.0 / indices.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("weight gradient".into()));
    }
    Ok((total * inv, grad))
}

/// Mean loss over `indices` without gradients.
pub(crate) fn loss_only<L: ExampleLoss + ?Sized>(
    net: &Network,
    loss: &L,
    indices: &[usize],
    exec: Execution,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let n_chunks = indices.len().div_ceil(CHUNK);
    let partials = map_indices(n_chunks, exec, |c| {
        let chunk = &indices[c * CHUNK..((c + 1) * CHUNK).min(indices.len())];
        let mut ws = Workspace::new(&net.spec);
        let mut hs = HeadScratch::default();
        let mut total = 0.0;
        for &i in chunk {
            let ex = loss.example(i);
            ws.forward(net, ex.input, ex.dirs);
            let view = hs.eval(net, &ws, ex.target, ex.dirs)?;
            total += loss.loss(i, &view).loss;
        }
        Ok::<f64, Error>(total)
    });
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    let mean = total / indices.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(mean)
}

/// `‖score − ∇θ q‖²` for a single input.
pub(crate) struct ScorePenalty<'a> {
    pub input: Vec<f64>,
    pub target: HeadTarget<'a>,
    pub score: Vec<f64>,
}

impl ExampleLoss for ScorePenalty<'_> {
    fn example(&self, _: usize) -> ExampleSpec<'_> {
        ExampleSpec {
            input: &self.input,
            target: self.target,
            dirs: self.score.len(),
        }
    }

    fn loss(&self, _: usize, view: &HeadView) -> LossTerms {
        let mut terms = LossTerms::default();
        for (r, t) in self.score.iter().enumerate() {
            let diff = view.quantity_tangent[r] - t;
            terms.loss += diff * diff;
            terms.qdot_adj[r] = 2.0 * diff;
        }
        terms
    }
}
