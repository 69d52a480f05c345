//! Dense tanh layers with forward-mode θ tangents and the matching
//! reverse sweep.

use super::{LayerShape, Network, NetworkSpec};

/// Per-example buffers for one forward/backward pass.
///
/// Tangent buffers are laid out direction-major: entry `r * width + j` is
/// the derivative of unit `j` along θ direction `r`.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    layers: Vec<LayerShape>,
    /// `acts[0]` is the standardized input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Tangents of `acts`.
    tans: Vec<Vec<f64>>,
    /// Tangents of the pre-activations of each layer (index `l - 1`).
    pre_tans: Vec<Vec<f64>>,
    dirs: usize,
    x_dim: usize,
    adj: Vec<f64>,
    tan_adj: Vec<f64>,
    next_adj: Vec<f64>,
    next_tan_adj: Vec<f64>,
}

impl Workspace {
    pub fn new(spec: &NetworkSpec) -> Self {
        let layers = spec.layers();
        let mut widths = vec![spec.input_dim()];
        widths.extend(layers.iter().map(|l| l.fan_out));
        let max_w = *widths.iter().max().unwrap_or(&1);
        let md = super::MAX_DIRS;
        Workspace {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            tans: widths.iter().map(|&w| vec![0.0; w * md]).collect(),
            pre_tans: layers.iter().map(|l| vec![0.0; l.fan_out * md]).collect(),
            layers,
            dirs: 0,
            x_dim: spec.x_dim,
            adj: vec![0.0; max_w],
            tan_adj: vec![0.0; max_w * md],
            next_adj: vec![0.0; max_w],
            next_tan_adj: vec![0.0; max_w * md],
        }
    }

    /// Forward pass on a raw input, propagating `dirs` tangents along the
    /// leading θ components.
    pub fn forward(&mut self, net: &Network, raw_input: &[f64], dirs: usize) {
        debug_assert!(dirs <= net.spec.theta_dim);
        self.dirs = dirs;
        let norm = &net.input_norm;
        net.input_norm.apply_into(raw_input, &mut self.acts[0]);
        if dirs > 0 {
            let w0 = self.acts[0].len();
            let t0 = &mut self.tans[0][..dirs * w0];
            t0.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..dirs {
                let j = self.x_dim + r;
                t0[r * w0 + j] = 1.0 / norm.scale[j];
            }
        }
        let n_layers = self.layers.len();
        for (l, shape) in self.layers.iter().enumerate() {
            let w = &net.weights[shape.w_offset..shape.w_offset + shape.fan_in * shape.fan_out];
            let b = &net.weights[shape.b_offset..shape.b_offset + shape.fan_out];
            let (prev, rest) = self.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            for i in 0..shape.fan_out {
                let row = &w[i * shape.fan_in..(i + 1) * shape.fan_in];
                out[i] = b[i] + dot(row, input);
            }
            let last = l + 1 == n_layers;
            if dirs > 0 {
                let (tprev, trest) = self.tans.split_at_mut(l + 1);
                let tin = &tprev[l];
                let pre = &mut self.pre_tans[l];
                for r in 0..dirs {
                    let tin_r = &tin[r * shape.fan_in..(r + 1) * shape.fan_in];
                    for i in 0..shape.fan_out {
                        let row = &w[i * shape.fan_in..(i + 1) * shape.fan_in];
                        pre[r * shape.fan_out + i] = dot(row, tin_r);
                    }
                }
                let tout = &mut trest[0];
                if last {
                    tout[..dirs * shape.fan_out].copy_from_slice(&pre[..dirs * shape.fan_out]);
                } else {
                    for i in 0..shape.fan_out {
                        out[i] = out[i].tanh();
                        let s = 1.0 - out[i] * out[i];
                        for r in 0..dirs {
                            tout[r * shape.fan_out + i] = s * pre[r * shape.fan_out + i];
                        }
                    }
                }
            } else if !last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    pub fn outputs(&self) -> &[f64] {
        self.acts.last().expect("network has an output layer")
    }

    /// Tangent of output `j` along direction `r`.
    pub fn output_tangent(&self, j: usize, r: usize) -> f64 {
        let w = self.outputs().len();
        self.tans.last().expect("network has an output layer")[r * w + j]
    }

    /// Reverse sweep. `out_adj[j]` is the adjoint of output `j`;
    /// `out_tan_adj[r * n_out + j]` the adjoint of its tangent along `r`.
    /// Accumulates the weight gradient into `grad`.
    pub fn backward(&mut self, net: &Network, out_adj: &[f64], out_tan_adj: &[f64], grad: &mut [f64]) {
        let dirs = self.dirs;
        let n_out = out_adj.len();
        self.adj[..n_out].copy_from_slice(out_adj);
        if dirs > 0 {
            self.tan_adj[..dirs * n_out].copy_from_slice(&out_tan_adj[..dirs * n_out]);
        }
        let n_layers = self.layers.len();
        for l in (0..n_layers).rev() {
            let shape = self.layers[l];
            let (fi, fo) = (shape.fan_in, shape.fan_out);
            let last = l + 1 == n_layers;
            // Convert adjoints of the layer output into adjoints of the pre-activation.
            if !last {
                let h = &self.acts[l + 1];
                let pre = &self.pre_tans[l];
                for i in 0..fo {
                    let s = 1.0 - h[i] * h[i];
                    let mut zbar = s * self.adj[i];
                    for r in 0..dirs {
                        let ta = self.tan_adj[r * fo + i];
                        zbar += ta * pre[r * fo + i] * (-2.0 * h[i] * s);
                        self.tan_adj[r * fo + i] = s * ta;
                    }
                    self.adj[i] = zbar;
                }
            }
            let input = &self.acts[l];
            let tin = &self.tans[l];
            {
                let (gw, gb) = grad[shape.w_offset..shape.b_offset + fo].split_at_mut(fi * fo);
                for i in 0..fo {
                    let zbar = self.adj[i];
                    gb[i] += zbar;
                    let grow = &mut gw[i * fi..(i + 1) * fi];
                    if zbar != 0.0 {
                        for k in 0..fi {
                            grow[k] += zbar * input[k];
                        }
                    }
                    for r in 0..dirs {
                        let zt = self.tan_adj[r * fo + i];
                        if zt != 0.0 {
                            let tin_r = &tin[r * fi..(r + 1) * fi];
                            for k in 0..fi {
                                grow[k] += zt * tin_r[k];
                            }
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &net.weights[shape.w_offset..shape.w_offset + fi * fo];
            self.next_adj[..fi].iter_mut().for_each(|v| *v = 0.0);
            if dirs > 0 {
                self.next_tan_adj[..dirs * fi].iter_mut().for_each(|v| *v = 0.0);
            }
            for i in 0..fo {
                let row = &w[i * fi..(i + 1) * fi];
                let zbar = self.adj[i];
                for k in 0..fi {
                    self.next_adj[k] += row[k] * zbar;
                }
                for r in 0..dirs {
                    let zt = self.tan_adj[r * fo + i];
                    let dst = &mut self.next_tan_adj[r * fi..(r + 1) * fi];
                    for k in 0..fi {
                        dst[k] += row[k] * zt;
                    }
                }
            }
            std::mem::swap(&mut self.adj, &mut self.next_adj);
            std::mem::swap(&mut self.tan_adj, &mut self.next_tan_adj);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
