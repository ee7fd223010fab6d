//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use kickoff_core::nn::{Mlp, OutputActivation};
use ndarray::Array2;

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Row-major dense matrix.
#[derive(Clone)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

struct Layer {
    din: usize,
    dout: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

/// `a * W + b` with plain loops.
fn affine(a: &Mat, layer: &Layer, relu_input: bool) -> Mat {
    let mut out = vec![0.0; a.rows * layer.dout];
    for r in 0..a.rows {
        let z = &mut out[r * layer.dout..(r + 1) * layer.dout];
        z.copy_from_slice(&layer.b);
        for (i, &ai) in a.row(r).iter().enumerate() {
            let ai = if relu_input { relu(ai) } else { ai };
            if ai == 0.0 {
                continue;
            }
            let w = &layer.w[i * layer.dout..(i + 1) * layer.dout];
            for (zk, wk) in z.iter_mut().zip(w) {
                *zk += ai * wk;
            }
        }
    }
    Mat {
        rows: a.rows,
        cols: layer.dout,
        data: out,
    }
}

struct Oracle<'a> {
    net: &'a Mlp,
    layers: Vec<Layer>,
    /// Pre-activations of every layer at the unperturbed parameters.
    zs: Vec<Mat>,
    x: Mat,
    g: &'a Array2<f64>,
}

impl Oracle<'_> {
    fn out(&self, z: f64) -> f64 {
        match self.net.spec.output_activation {
            OutputActivation::Identity => z,
            OutputActivation::Tanh => z.tanh(),
        }
    }

    /// Objective after adding `dz` to column `j` of layer `l`'s
    /// pre-activations, minus the unperturbed objective where that is cheap.
    /// Also reports whether any ReLU changed side.
    #[allow(clippy::needless_range_loop)]
    fn probe(&self, l: usize, j: usize, dz: &[f64]) -> (f64, bool) {
        let last = self.layers.len() - 1;
        let zl = &self.zs[l];
        if l == last {
            let mut diff = 0.0;
            for r in 0..zl.rows {
                let z0 = zl.data[r * zl.cols + j];
                diff += (self.out(z0 + dz[r]) - self.out(z0)) * self.g[[r, j]];
            }
            return (diff, false);
        }
        let mut crossed = false;
        let next = &self.layers[l + 1];
        let mut z = self.zs[l + 1].clone();
        for r in 0..zl.rows {
            let z0 = zl.data[r * zl.cols + j];
            crossed |= (z0 > 0.0) != (z0 + dz[r] > 0.0);
            let da = relu(z0 + dz[r]) - relu(z0);
            if da != 0.0 {
                let row = &mut z.data[r * z.cols..(r + 1) * z.cols];
                for (zk, wk) in row.iter_mut().zip(&next.w[j * next.dout..(j + 1) * next.dout]) {
                    *zk += da * wk;
                }
            }
        }
        for k in l + 1..last {
            crossed |= z
                .data
                .iter()
                .zip(&self.zs[k].data)
                .any(|(a, b)| (*a > 0.0) != (*b > 0.0));
            z = affine(&z, &self.layers[k + 1], true);
        }
        let mut total = 0.0;
        for r in 0..z.rows {
            for (c, v) in z.row(r).iter().enumerate() {
                total += self.out(*v) * self.g[[r, c]];
            }
        }
        (total, crossed)
    }

    fn central(&self, l: usize, j: usize, direction: &[f64], h: f64) -> (f64, bool) {
        let plus: Vec<f64> = direction.iter().map(|v| h * v).collect();
        let minus: Vec<f64> = direction.iter().map(|v| -h * v).collect();
        let (p, c1) = self.probe(l, j, &plus);
        let (m, c2) = self.probe(l, j, &minus);
        ((p - m) / (2.0 * h), c1 || c2)
    }
}

/// Result of the finite-difference oracle for one parameter.
#[derive(Clone, Copy, Debug)]
pub struct FdEntry {
    pub value: f64,
    /// Step actually used: the requested one, or a smaller one when the
    /// requested probe interval straddled a ReLU kink.
    pub step: f64,
}

/// Central finite-difference gradient of `sum(net(x) * g)` with respect to
/// every parameter, flattened in `ParameterSet::blocks` order.
///
/// Perturbing one parameter of layer `l` only moves column `j` of that
/// layer's pre-activations and the next layer's by a rank-one term, so each
/// probe restarts the forward pass from there. When the interval `[-h, h]`
/// crosses a ReLU kink the difference quotient does not estimate the
/// derivative; the step is then shrunk by 10x until it no longer does.
pub fn finite_difference_gradient(net: &Mlp, x: &Array2<f64>, g: &Array2<f64>, h: f64) -> Vec<FdEntry> {
    let layers: Vec<Layer> = net
        .params
        .layers
        .iter()
        .map(|l| {
            let (din, dout) = l.weight.dim();
            Layer {
                din,
                dout,
                w: l.weight.iter().copied().collect(),
                b: l.bias.iter().copied().collect(),
            }
        })
        .collect();
    let xm = Mat {
        rows: x.nrows(),
        cols: x.ncols(),
        data: x.iter().copied().collect(),
    };
    let mut zs = Vec::new();
    let mut a = xm.clone();
    for (l, layer) in layers.iter().enumerate() {
        let z = affine(&a, layer, l > 0);
        a = z.clone();
        zs.push(z);
    }
    let o = Oracle {
        net,
        layers,
        zs,
        x: xm,
        g,
    };
    let rows = x.nrows();
    let estimate = |l: usize, j: usize, dir: &[f64]| {
        let mut step = h;
        for _ in 0..4 {
            let (v, crossed) = o.central(l, j, dir, step);
            if !crossed {
                return FdEntry { value: v, step };
            }
            step /= 10.0;
        }
        FdEntry {
            value: o.central(l, j, dir, step).0,
            step,
        }
    };
    let mut out = Vec::with_capacity(net.spec.param_count());
    for l in 0..o.layers.len() {
        let (din, dout) = (o.layers[l].din, o.layers[l].dout);
        let input: Vec<Vec<f64>> = (0..din)
            .map(|i| {
                (0..rows)
                    .map(|r| {
                        if l == 0 {
                            o.x.data[r * din + i]
                        } else {
                            relu(o.zs[l - 1].data[r * din + i])
                        }
                    })
                    .collect()
            })
            .collect();
        for dir in &input {
            for j in 0..dout {
                out.push(estimate(l, j, dir));
            }
        }
        let ones = vec![1.0; rows];
        for j in 0..dout {
            out.push(estimate(l, j, &ones));
        }
    }
    out
}

/// Generalized advantages by the direct double sum
/// `A_t = sum_l (gamma lambda)^l (prod of live masks) delta_{t+l}`.
pub fn gae_double_sum(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let next_v = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let live = if dones[t] { 0.0 } else { 1.0 };
            rewards[t] + gamma * next_v(t) * live - values[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                total += weight * delta[k];
                if dones[k] {
                    break;
                }
                weight *= gamma * lambda;
            }
            total
        })
        .collect()
}

/// Sort, drop floor(n/4) from each end, average the rest left to right.
pub fn iqm_sort_trim_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len() / 4;
    let kept = &v[k..v.len() - k];
    let mut s = 0.0;
    for x in kept {
        s += x;
    }
    s / kept.len() as f64
}

/// Forward-mode dual number: value and derivative along one direction.
#[derive(Clone, Copy, Debug)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn c(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    pub fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
    pub fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
    pub fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
    pub fn scale(self, k: f64) -> Dual {
        Dual {
            v: self.v * k,
            d: self.d * k,
        }
    }
    pub fn exp(self) -> Dual {
        let e = self.v.exp();
        Dual { v: e, d: self.d * e }
    }
    pub fn ln(self) -> Dual {
        Dual {
            v: self.v.ln(),
            d: self.d / self.v,
        }
    }
    pub fn relu(self) -> Dual {
        if self.v > 0.0 {
            self
        } else {
            Dual::c(0.0)
        }
    }
    pub fn clamp(self, lo: f64, hi: f64) -> Dual {
        if self.v < lo {
            Dual::c(lo)
        } else if self.v > hi {
            Dual::c(hi)
        } else {
            self
        }
    }
    pub fn min(self, o: Dual) -> Dual {
        if self.v <= o.v {
            self
        } else {
            o
        }
    }
}
