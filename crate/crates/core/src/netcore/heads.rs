//! Head read-outs on top of the raw network outputs, with their tangents
//! and the reverse sweep back to output adjoints.

use rand::Rng;
use rand_distr::StandardNormal;

use super::batch::{HeadTarget, HeadView, LossTerms};
use super::dual_tape::{DualTape, Var};
use super::mlp::Workspace;
use super::{Affine, Head, Network, MAX_DIRS, SCALE_FLOOR};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) fn log_softmax(o: &[f64]) -> Vec<f64> {
    let lse = logsumexp(o);
    o.iter().map(|v| v - lse).collect()
}

fn logsumexp(o: &[f64]) -> f64 {
    let m = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + o.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

/// Diagonal Gaussian mixture in raw target coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub components: usize,
    pub dim: usize,
    pub log_weights: Vec<f64>,
    /// Row-major `components × dim`.
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl MixtureParams {
    pub(crate) fn from_outputs(o: &[f64], components: usize, dim: usize, norm: &Affine) -> Self {
        let log_weights = log_softmax(&o[..components]);
        let mu = &o[components..components + components * dim];
        let raw = &o[components + components * dim..];
        let mut means = Vec::with_capacity(components * dim);
        let mut scales = Vec::with_capacity(components * dim);
        for c in 0..components {
            for d in 0..dim {
                let i = c * dim + d;
                means.push(norm.shift[d] + norm.scale[d] * mu[i]);
                scales.push(norm.scale[d] * (softplus(raw[i]) + SCALE_FLOOR));
            }
        }
        MixtureParams {
            components,
            dim,
            log_weights,
            means,
            scales,
        }
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let comps: Vec<f64> = (0..self.components)
            .map(|c| {
                let mut s = self.log_weights[c];
                for d in 0..self.dim {
                    let i = c * self.dim + d;
                    let z = (y[d] - self.means[i]) / self.scales[i];
                    s -= 0.5 * z * z + self.scales[i].ln() + 0.5 * LN_2PI;
                }
                s
            })
            .collect();
        logsumexp(&comps)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components - 1;
        for c in 0..self.components {
            acc += self.log_weights[c].exp();
            if u < acc {
                chosen = c;
                break;
            }
        }
        (0..self.dim)
            .map(|d| {
                let i = chosen * self.dim + d;
                self.means[i] + self.scales[i] * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }
}

#[derive(Debug, Default, Clone)]
pub(crate) struct HeadScratch {
    tape: DualTape,
    out_vars: Vec<Var>,
    q_var: Option<Var>,
    probs: Vec<f64>,
    bin: usize,
    n_out: usize,
    dirs: usize,
    out_adj: Vec<f64>,
    out_tan_adj: Vec<f64>,
}

impl HeadScratch {
    /// Evaluate the head on the outputs currently held in `ws`.
    pub fn eval(&mut self, net: &Network, ws: &Workspace, target: HeadTarget<'_>, dirs: usize) -> Result<HeadView> {
        let o = ws.outputs();
        self.n_out = o.len();
        self.dirs = dirs;
        let mut view = HeadView::default();
        match net.spec.head {
            Head::Scalar => {
                view.quantity = o[0];
                for r in 0..dirs {
                    view.quantity_tangent[r] = ws.output_tangent(0, r);
                }
            }
            Head::Vector { dim } => {
                view.vector[..dim].copy_from_slice(&o[..dim]);
            }
            Head::Softmax { bins } => {
                let HeadTarget::Bin(k) = target else {
                    return Err(Error::Unsupported("softmax head needs a bin target".into()));
                };
                if k >= bins {
                    return Err(Error::DimensionMismatch {
                        what: "bin index",
                        expected: bins,
                        got: k,
                    });
                }
                let lse = logsumexp(o);
                self.probs.clear();
                self.probs.extend(o.iter().map(|v| (v - lse).exp()));
                self.bin = k;
                view.quantity = o[k] - lse;
                for r in 0..dirs {
                    let m: f64 = (0..bins).map(|j| self.probs[j] * ws.output_tangent(j, r)).sum();
                    view.quantity_tangent[r] = ws.output_tangent(k, r) - m;
                }
            }
            Head::GaussianMixture { components, dim } => {
                let HeadTarget::Point(y) = target else {
                    return Err(Error::Unsupported("mixture head needs a point target".into()));
                };
                if y.len() != dim {
                    return Err(Error::DimensionMismatch {
                        what: "mixture target",
                        expected: dim,
                        got: y.len(),
                    });
                }
                let norm = net.target_norm.as_ref();
                let q = self.build_mixture(ws, components, dim, y, norm, dirs);
                view.quantity = self.tape.value(q);
                view.quantity_tangent[..dirs].copy_from_slice(self.tape.tangent(q));
                self.q_var = Some(q);
            }
        }
        view.dirs = dirs;
        Ok(view)
    }

    fn build_mixture(
        &mut self,
        ws: &Workspace,
        components: usize,
        dim: usize,
        y: &[f64],
        norm: Option<&Affine>,
        dirs: usize,
    ) -> Var {
        let tape = &mut self.tape;
        tape.reset(dirs);
        self.out_vars.clear();
        let o = ws.outputs();
        let mut tan = [0.0; MAX_DIRS];
        for (j, &v) in o.iter().enumerate() {
            for (r, t) in tan.iter_mut().enumerate().take(dirs) {
                *t = ws.output_tangent(j, r);
            }
            self.out_vars.push(tape.input(v, &tan[..dirs]));
        }
        let logits = &self.out_vars[..components];
        let lse = tape.logsumexp(logits);
        let mut comps = Vec::with_capacity(components);
        for c in 0..components {
            let mut terms = Vec::with_capacity(dim + 1);
            terms.push(tape.sub(self.out_vars[c], lse));
            for d in 0..dim {
                let i = c * dim + d;
                let mu = self.out_vars[components + i];
                let raw = self.out_vars[components + components * dim + i];
                let u = match norm {
                    Some(n) => (y[d] - n.shift[d]) / n.scale[d],
                    None => y[d],
                };
                let sp = tape.softplus(raw);
                let sigma = tape.add_const(sp, SCALE_FLOOR);
                let neg_mu = tape.mul_const(mu, -1.0);
                let diff = tape.add_const(neg_mu, u);
                let inv = tape.recip(sigma);
                let z = tape.mul(diff, inv);
                let z2 = tape.square(z);
                let half = tape.mul_const(z2, -0.5);
                let log_sigma = tape.ln(sigma);
                terms.push(tape.sub(half, log_sigma));
            }
            comps.push(tape.sum(&terms));
        }
        let mix = tape.logsumexp(&comps);
        let constant = -0.5 * dim as f64 * LN_2PI + norm.map_or(0.0, Affine::log_jacobian);
        tape.add_const(mix, constant)
    }

    /// Output adjoints for the loss adjoints in `terms`, laid out as
    /// expected by [`Workspace::backward`].
    pub fn backward(&mut self, net: &Network, ws: &Workspace, terms: &LossTerms) -> (&[f64], &[f64]) {
        let n = self.n_out;
        let dirs = self.dirs;
        self.out_adj.clear();
        self.out_adj.resize(n, 0.0);
        self.out_tan_adj.clear();
        self.out_tan_adj.resize(n * dirs, 0.0);
        match net.spec.head {
            Head::Scalar => {
                self.out_adj[0] = terms.q_adj;
                for r in 0..dirs {
                    self.out_tan_adj[r * n] = terms.qdot_adj[r];
                }
            }
            Head::Vector { dim } => {
                self.out_adj[..dim].copy_from_slice(&terms.vec_adj[..dim]);
            }
            Head::Softmax { .. } => {
                let k = self.bin;
                let p = &self.probs;
                let mut m = [0.0; MAX_DIRS];
                for (r, mr) in m.iter_mut().enumerate().take(dirs) {
                    *mr = (0..n).map(|j| p[j] * ws.output_tangent(j, r)).sum();
                }
                for j in 0..n {
                    let delta = if j == k { 1.0 } else { 0.0 };
                    let mut a = terms.q_adj * (delta - p[j]);
                    for r in 0..dirs {
                        a -= terms.qdot_adj[r] * p[j] * (ws.output_tangent(j, r) - m[r]);
                        self.out_tan_adj[r * n + j] = terms.qdot_adj[r] * (delta - p[j]);
                    }
                    self.out_adj[j] = a;
                }
            }
            Head::GaussianMixture { .. } => {
                let q = self.q_var.expect("mixture head evaluated before backward");
                self.tape.backward(q, terms.q_adj, &terms.qdot_adj[..dirs]);
                for (j, &v) in self.out_vars.iter().enumerate() {
                    self.out_adj[j] = self.tape.adjoint(v);
                    let ta = self.tape.tangent_adjoint(v);
                    for r in 0..dirs {
                        self.out_tan_adj[r * n + j] = ta[r];
                    }
                }
            }
        }
        (&self.out_adj, &self.out_tan_adj)
    }
}
