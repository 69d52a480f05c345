//! Scalar tape over forward-mode dual numbers.
//!
//! Every node carries a value and up to [`MAX_DIRS`] directional derivatives.
//! Each operation records its first and second local partials, so a single
//! reverse sweep yields adjoints of both the values and the tangents of all
//! inputs (reverse-over-forward). Used for network heads whose second
//! derivatives would be tedious to write out by hand.

pub const MAX_DIRS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

#[derive(Debug, Clone, Copy)]
struct Node {
    val: f64,
    tan: [f64; MAX_DIRS],
    parents: [u32; 2],
    arity: u8,
    /// First partials w.r.t. the parents.
    d: [f64; 2],
    /// Second partials: `[xx, xy, yy]`.
    h: [f64; 3],
}

#[derive(Debug, Default, Clone)]
pub struct DualTape {
    dirs: usize,
    nodes: Vec<Node>,
    adj: Vec<f64>,
    tan_adj: Vec<[f64; MAX_DIRS]>,
}

impl DualTape {
    pub fn new(dirs: usize) -> Self {
        let mut t = DualTape::default();
        t.reset(dirs);
        t
    }

    /// Clear all nodes, keeping allocations.
    pub fn reset(&mut self, dirs: usize) {
        assert!(dirs <= MAX_DIRS, "at most {MAX_DIRS} tangent directions");
        self.dirs = dirs;
        self.nodes.clear();
    }

    pub fn dirs(&self) -> usize {
        self.dirs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var((self.nodes.len() - 1) as u32)
    }

    pub fn input(&mut self, val: f64, tan: &[f64]) -> Var {
        let mut t = [0.0; MAX_DIRS];
        t[..self.dirs].copy_from_slice(&tan[..self.dirs]);
        self.push(Node {
            val,
            tan: t,
            parents: [0; 2],
            arity: 0,
            d: [0.0; 2],
            h: [0.0; 3],
        })
    }

    pub fn constant(&mut self, val: f64) -> Var {
        self.input(val, &[0.0; MAX_DIRS])
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0 as usize].val
    }

    pub fn tangent(&self, v: Var) -> &[f64] {
        &self.nodes[v.0 as usize].tan[..self.dirs]
    }

    fn unary(&mut self, a: Var, val: f64, d: f64, h: f64) -> Var {
        let pa = &self.nodes[a.0 as usize];
        let mut tan = [0.0; MAX_DIRS];
        for (t, ta) in tan.iter_mut().zip(&pa.tan).take(self.dirs) {
            *t = d * ta;
        }
        self.push(Node {
            val,
            tan,
            parents: [a.0, 0],
            arity: 1,
            d: [d, 0.0],
            h: [h, 0.0, 0.0],
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn binary(&mut self, a: Var, b: Var, val: f64, dx: f64, dy: f64, hxx: f64, hxy: f64, hyy: f64) -> Var {
        let ta = self.nodes[a.0 as usize].tan;
        let tb = self.nodes[b.0 as usize].tan;
        let mut tan = [0.0; MAX_DIRS];
        for r in 0..self.dirs {
            tan[r] = dx * ta[r] + dy * tb[r];
        }
        self.push(Node {
            val,
            tan,
            parents: [a.0, b.0],
            arity: 2,
            d: [dx, dy],
            h: [hxx, hxy, hyy],
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.binary(a, b, v, 1.0, 1.0, 0.0, 0.0, 0.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.binary(a, b, v, 1.0, -1.0, 0.0, 0.0, 0.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.binary(a, b, x * y, y, x, 0.0, 1.0, 0.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.unary(a, v, 1.0, 0.0)
    }

    pub fn mul_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.unary(a, v, c, 0.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        self.unary(a, e, e, e)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x * x, 2.0 * x, 2.0)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let r = 1.0 / x;
        self.unary(a, r, -r * r, 2.0 * r * r * r)
    }

    /// `ln(1 + e^x)`.
    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s = 1.0 / (1.0 + (-x).exp());
        let v = if x > 30.0 { x } else { x.exp().ln_1p() };
        self.unary(a, v, s, s * (1.0 - s))
    }

    pub fn sum(&mut self, vars: &[Var]) -> Var {
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        acc
    }

    /// `log Σ exp(v)`, shifted by the (constant) maximum for stability.
    pub fn logsumexp(&mut self, vars: &[Var]) -> Var {
        let m = vars
            .iter()
            .map(|&v| self.value(v))
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<Var> = vars
            .iter()
            .map(|&v| {
                let s = self.add_const(v, -m);
                self.exp(s)
            })
            .collect();
        let total = self.sum(&exps);
        let l = self.ln(total);
        self.add_const(l, m)
    }

    /// Reverse sweep seeded with the adjoint of `out`'s value and tangents.
    pub fn backward(&mut self, out: Var, adj: f64, tan_adj: &[f64]) {
        let n = self.nodes.len();
        self.adj.clear();
        self.adj.resize(n, 0.0);
        self.tan_adj.clear();
        self.tan_adj.resize(n, [0.0; MAX_DIRS]);
        let o = out.0 as usize;
        self.adj[o] = adj;
        self.tan_adj[o][..self.dirs].copy_from_slice(&tan_adj[..self.dirs]);
        let dirs = self.dirs;
        for i in (0..=o).rev() {
            let node = self.nodes[i];
            if node.arity == 0 {
                continue;
            }
            let va = self.adj[i];
            let ta = self.tan_adj[i];
            let a = node.parents[0] as usize;
            let tan_a = self.nodes[a].tan;
            if node.arity == 1 {
                let mut second = 0.0;
                for r in 0..dirs {
                    second += tan_a[r] * ta[r];
                }
                self.adj[a] += node.d[0] * va + node.h[0] * second;
                for r in 0..dirs {
                    self.tan_adj[a][r] += node.d[0] * ta[r];
                }
            } else {
                let b = node.parents[1] as usize;
                let tan_b = self.nodes[b].tan;
                let [hxx, hxy, hyy] = node.h;
                let (mut sa, mut sb) = (0.0, 0.0);
                for r in 0..dirs {
                    sa += ta[r] * (hxx * tan_a[r] + hxy * tan_b[r]);
                    sb += ta[r] * (hxy * tan_a[r] + hyy * tan_b[r]);
                }
                self.adj[a] += node.d[0] * va + sa;
                self.adj[b] += node.d[1] * va + sb;
                for r in 0..dirs {
                    self.tan_adj[a][r] += node.d[0] * ta[r];
                    self.tan_adj[b][r] += node.d[1] * ta[r];
                }
            }
        }
    }

    pub fn adjoint(&self, v: Var) -> f64 {
        self.adj[v.0 as usize]
    }

    pub fn tangent_adjoint(&self, v: Var) -> &[f64] {
        &self.tan_adj[v.0 as usize][..self.dirs]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // f(x, y) = ln(x) * y^2 + softplus(x*y); tangents seeded with a fixed matrix.
    fn build(tape: &mut DualTape, x: f64, y: f64, tx: &[f64], ty: &[f64]) -> (Var, Var, Var) {
        let a = tape.input(x, tx);
        let b = tape.input(y, ty);
        let l = tape.ln(a);
        let y2 = tape.square(b);
        let p = tape.mul(l, y2);
        let xy = tape.mul(a, b);
        let s = tape.softplus(xy);
        let r = tape.recip(b);
        let e = tape.exp(r);
        let f1 = tape.add(p, s);
        let f = tape.sub(f1, e);
        (a, b, f)
    }

    fn tangent_dot(x: f64, y: f64, tx: &[f64], ty: &[f64], w: &[f64]) -> f64 {
        let mut tape = DualTape::new(2);
        let (_, _, f) = build(&mut tape, x, y, tx, ty);
        tape.tangent(f).iter().zip(w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn tangents_match_finite_differences() {
        let (x, y) = (1.3, -0.7);
        let mut tape = DualTape::new(2);
        let (_, _, f) = build(&mut tape, x, y, &[1.0, 0.0], &[0.0, 1.0]);
        let h = 1e-6;
        let val = |x: f64, y: f64| {
            let mut t = DualTape::new(0);
            let (_, _, f) = build(&mut t, x, y, &[], &[]);
            t.value(f)
        };
        let dx = (val(x + h, y) - val(x - h, y)) / (2.0 * h);
        let dy = (val(x, y + h) - val(x, y - h)) / (2.0 * h);
        assert!((tape.tangent(f)[0] - dx).abs() < 1e-8);
        assert!((tape.tangent(f)[1] - dy).abs() < 1e-8);
    }

    #[test]
    fn reverse_over_forward_matches_finite_differences() {
        let (x, y) = (0.9, 1.4);
        let tx = [0.3, -1.1];
        let ty = [0.8, 0.25];
        let seed_val = 0.6;
        let seed_tan = [1.5, -0.4];
        // Objective: seed_val * f + seed_tan · ḟ
        let objective = |x: f64, y: f64, tx: &[f64], ty: &[f64]| {
            let mut t = DualTape::new(2);
            let (_, _, f) = build(&mut t, x, y, tx, ty);
            seed_val * t.value(f) + tangent_dot(x, y, tx, ty, &seed_tan)
        };
        let mut tape = DualTape::new(2);
        let (a, b, f) = build(&mut tape, x, y, &tx, &ty);
        tape.backward(f, seed_val, &seed_tan);
        let h = 1e-6;
        let fd_x = (objective(x + h, y, &tx, &ty) - objective(x - h, y, &tx, &ty)) / (2.0 * h);
        let fd_y = (objective(x, y + h, &tx, &ty) - objective(x, y - h, &tx, &ty)) / (2.0 * h);
        assert!((tape.adjoint(a) - fd_x).abs() < 1e-7, "{} vs {fd_x}", tape.adjoint(a));
        assert!((tape.adjoint(b) - fd_y).abs() < 1e-7);
        for r in 0..2 {
            let mut txp = tx;
            let mut txm = tx;
            txp[r] += h;
            txm[r] -= h;
            let fd = (objective(x, y, &txp, &ty) - objective(x, y, &txm, &ty)) / (2.0 * h);
            assert!((tape.tangent_adjoint(a)[r] - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn logsumexp_is_stable() {
        let mut tape = DualTape::new(1);
        let a = tape.input(1000.0, &[1.0]);
        let b = tape.input(1000.0, &[0.0]);
        let l = tape.logsumexp(&[a, b]);
        assert!((tape.value(l) - (1000.0 + 2f64.ln())).abs() < 1e-9);
        assert!((tape.tangent(l)[0] - 0.5).abs() < 1e-15);
    }
}
