//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and enough state
//! to run its backward rule. Inputs always precede outputs on the tape, so a
//! single reverse sweep visits each node once in a valid order.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::conv::{conv2d, conv2d_backward, ConvSpec};
use crate::error::{dim_err, Error, Result};
use crate::linalg::gemm;
use crate::pooling::{pool_forward, route_gradient, PoolSpec};
use crate::tensor::Tensor;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    Relu(Var),
    Pool { x: Var, spec: PoolSpec, argmax: Vec<u32>, argmin: Vec<u32> },
    Gap(Var),
    Concat(Vec<Var>),
    Reshape(Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    SoftmaxXent { logits: Var, labels: Vec<usize>, probs: Tensor },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool },
    Sum(Var),
    Mse(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Batch statistics observed by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.index).and_then(Option::take)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Usage("variable was not recorded on this tape".into()));
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    /// Records a constant or parameter. Gradients flow to it only when
    /// `tensor.requires_grad()` is set.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node { value: tensor, op: Op::Leaf, requires_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.index].value
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        for v in [Some(x), Some(w), b].into_iter().flatten() {
            self.check(v)?;
        }
        let out = conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), spec)?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(out, Op::Conv { x, w, b, spec: *spec }, &inputs))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = self.value(x).map(|v| if v < 0.0 { 0.0 } else { v });
        Ok(self.push(out, Op::Relu(x), &[x]))
    }

    pub fn pool(&mut self, x: Var, spec: &PoolSpec) -> Result<Var> {
        self.check(x)?;
        let fwd = pool_forward(self.value(x), spec)?;
        Ok(self.push(fwd.output, Op::Pool { x, spec: *spec, argmax: fwd.argmax, argmin: fwd.argmin }, &[x]))
    }

    pub fn global_average_pool(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = global_average_pool(self.value(x))?;
        Ok(self.push(out, Op::Gap(x), &[x]))
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        for &v in xs {
            self.check(v)?;
        }
        let values: Vec<&Tensor> = xs.iter().map(|&v| self.value(v)).collect();
        let out = concat_channels(&values)?;
        Ok(self.push(out, Op::Concat(xs.to_vec()), xs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let out = self.value(x).reshape(shape)?.with_requires_grad(false);
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Dense layer: `x` viewed as `(N, features)`, `w` is `(out, features)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        for v in [Some(x), Some(w), b].into_iter().flatten() {
            self.check(v)?;
        }
        let out = linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(out, Op::Linear { x, w, b }, &inputs))
    }

    /// Mean cross-entropy of softmax(`logits`) against `labels`. Returns the
    /// scalar loss and the row-wise probabilities.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<(Var, Tensor)> {
        self.check(logits)?;
        let (probs, loss) = softmax_cross_entropy(self.value(logits), labels)?;
        let var = self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent { logits, labels: labels.to_vec(), probs: probs.clone() },
            &[logits],
        );
        Ok((var, probs))
    }

    /// Per-channel normalization of an NCHW tensor followed by `gamma * . + beta`.
    ///
    /// With `running = None` the batch's own statistics are used (training)
    /// and returned; otherwise the supplied `(mean, var)` are treated as
    /// constants (inference).
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[f64], &[f64])>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        for v in [x, gamma, beta] {
            self.check(v)?;
        }
        let xv = self.value(x);
        if xv.rank() != 4 {
            return Err(dim_err!("batch norm expects NCHW input, got {:?}", xv.shape()));
        }
        let [n, c, h, w] = xv.nchw();
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(dim_err!("batch norm affine parameters must have {c} entries"));
        }
        let plane = h * w;
        let count = (n * plane) as f64;
        let (mean, var, stats) = match running {
            Some((m, v)) => {
                if m.len() != c || v.len() != c {
                    return Err(dim_err!("running statistics must have {c} entries"));
                }
                (m.to_vec(), v.to_vec(), None)
            }
            None => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for b in 0..n {
                        s += xv.plane(b, ch).iter().sum::<f64>();
                    }
                    mean[ch] = s / count;
                    let mut sq = 0.0;
                    for b in 0..n {
                        sq += xv.plane(b, ch).iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
                    }
                    var[ch] = sq / count;
                }
                (mean.clone(), var.clone(), Some(BatchStats { mean, var }))
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xv.numel()];
        let mut out = vec![0.0; xv.numel()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * plane;
                for (i, &v) in xv.plane(b, ch).iter().enumerate() {
                    let nv = (v - mean[ch]) * inv_std[ch];
                    xhat[off + i] = nv;
                    out[off + i] = g[ch] * nv + bt[ch];
                }
            }
        }
        let shape = xv.shape().to_vec();
        let var_out = self.push(
            Tensor::from_parts(shape, out),
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: stats.is_some() },
            &[x, gamma, beta],
        );
        Ok((var_out, stats))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = Tensor::scalar(self.value(x).sum());
        Ok(self.push(out, Op::Sum(x), &[x]))
    }

    /// `mean((x - y)^2)`.
    pub fn mse(&mut self, x: Var, y: Var) -> Result<Var> {
        self.check(x)?;
        self.check(y)?;
        let d = self.value(x).zip_map(self.value(y), |a, b| (a - b).powi(2))?;
        Ok(self.push(Tensor::scalar(d.mean()), Op::Mse(x, y), &[x, y]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        self.check(x)?;
        let out = self.value(x).map(|v| v * k);
        Ok(self.push(out, Op::Scale(x, k), &[x]))
    }

    /// Backpropagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let value = self.value(loss);
        if value.numel() != 1 {
            return Err(Error::Usage(format!("backward needs a scalar loss, got shape {:?}", value.shape())));
        }
        self.backward_with(loss, Tensor::new(value.shape(), vec![1.0])?)
    }

    /// Backpropagates an explicit upstream gradient `seed` from `output`.
    pub fn backward_with(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        self.check(output)?;
        if seed.shape() != self.value(output).shape() {
            return Err(dim_err!(
                "seed gradient shape {:?} does not match output {:?}",
                seed.shape(),
                self.value(output).shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.index] = Some(seed);
        for idx in (0..=output.index).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.apply_rule(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn apply_rule(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, spec } => {
                let (dx, dw, db) = conv2d_backward(g, self.value(*x), self.value(*w), spec, self.wants(*x))?;
                if let Some(dx) = dx {
                    accumulate(&mut grads[x.index], dx);
                }
                if self.wants(*w) {
                    accumulate(&mut grads[w.index], dw);
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let shape = self.value(*b).shape().to_vec();
                        accumulate(&mut grads[b.index], Tensor::from_parts(shape, db.into_data()));
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let d = g.zip_map(xv, |gv, v| if v > 0.0 || v.is_nan() { gv } else { 0.0 })?;
                accumulate(&mut grads[x.index], d);
            }
            Op::Pool { x, spec, argmax, argmin } => {
                let fwd =
                    crate::pooling::PoolForward { output: g.clone(), argmax: argmax.clone(), argmin: argmin.clone() };
                let d = route_gradient(g, self.value(*x).shape(), spec, &fwd);
                accumulate(&mut grads[x.index], d);
            }
            Op::Gap(x) => {
                let xv = self.value(*x);
                let [n, c, h, w] = xv.nchw();
                let plane = h * w;
                let mut d = vec![0.0; xv.numel()];
                for nc in 0..n * c {
                    let share = g.data()[nc] / plane as f64;
                    d[nc * plane..(nc + 1) * plane].fill(share);
                }
                accumulate(&mut grads[x.index], Tensor::from_parts(xv.shape().to_vec(), d));
            }
            Op::Concat(xs) => {
                let mut start = 0;
                for v in xs {
                    let c = self.value(*v).nchw()[1];
                    if self.wants(*v) {
                        let part = g.slice_channels(start, start + c)?;
                        let shape = self.value(*v).shape().to_vec();
                        accumulate(&mut grads[v.index], part.reshape(&shape)?);
                    }
                    start += c;
                }
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(&mut grads[x.index], g.reshape(&shape)?.with_requires_grad(false));
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let [outs, feats] = matrix_dims(wv)?;
                let n = xv.numel() / feats;
                if self.wants(*x) {
                    let mut dx = vec![0.0; n * feats];
                    gemm(n, outs, feats, 1.0, g.data(), false, wv.data(), false, 0.0, &mut dx);
                    accumulate(&mut grads[x.index], Tensor::from_parts(xv.shape().to_vec(), dx));
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; outs * feats];
                    gemm(outs, n, feats, 1.0, g.data(), true, xv.data(), false, 0.0, &mut dw);
                    accumulate(&mut grads[w.index], Tensor::from_parts(wv.shape().to_vec(), dw));
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let mut db = vec![0.0; outs];
                        for row in g.data().chunks(outs) {
                            db.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                        }
                        let shape = self.value(*b).shape().to_vec();
                        accumulate(&mut grads[b.index], Tensor::from_parts(shape, db));
                    }
                }
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let scale = g.data()[0] / labels.len() as f64;
                let classes = probs.numel() / labels.len();
                let mut d = probs.data().to_vec();
                for (row, &label) in labels.iter().enumerate() {
                    d[row * classes + label] -= 1.0;
                }
                d.iter_mut().for_each(|v| *v *= scale);
                let shape = self.value(*logits).shape().to_vec();
                accumulate(&mut grads[logits.index], Tensor::from_parts(shape, d));
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let xv = self.value(*x);
                let [n, c, h, w] = xv.nchw();
                let plane = h * w;
                let count = (n * plane) as f64;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * plane;
                        let gs = &g.data()[off..off + plane];
                        for (gv, xh) in gs.iter().zip(&xhat[off..off + plane]) {
                            dgamma[ch] += gv * xh;
                            dbeta[ch] += gv;
                        }
                    }
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; xv.numel()];
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * plane;
                            let k = gam[ch] * inv_std[ch];
                            for i in off..off + plane {
                                dx[i] = if *batch_stats {
                                    k * (g.data()[i] - dbeta[ch] / count - xhat[i] * dgamma[ch] / count)
                                } else {
                                    k * g.data()[i]
                                };
                            }
                        }
                    }
                    accumulate(&mut grads[x.index], Tensor::from_parts(xv.shape().to_vec(), dx));
                }
                if self.wants(*gamma) {
                    let shape = self.value(*gamma).shape().to_vec();
                    accumulate(&mut grads[gamma.index], Tensor::from_parts(shape, dgamma));
                }
                if self.wants(*beta) {
                    let shape = self.value(*beta).shape().to_vec();
                    accumulate(&mut grads[beta.index], Tensor::from_parts(shape, dbeta));
                }
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                accumulate(&mut grads[x.index], Tensor::full(xv.shape(), g.data()[0]));
            }
            Op::Mse(x, y) => {
                let (xv, yv) = (self.value(*x), self.value(*y));
                let k = 2.0 * g.data()[0] / xv.numel() as f64;
                if self.wants(*x) {
                    accumulate(&mut grads[x.index], xv.zip_map(yv, |a, b| k * (a - b))?);
                }
                if self.wants(*y) {
                    accumulate(&mut grads[y.index], xv.zip_map(yv, |a, b| k * (b - a))?);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        accumulate(&mut grads[v.index], g.clone());
                    }
                }
            }
            Op::Scale(x, k) => {
                accumulate(&mut grads[x.index], g.map(|v| v * k));
            }
        }
        Ok(())
    }
}

fn matrix_dims(w: &Tensor) -> Result<[usize; 2]> {
    if w.rank() != 2 {
        return Err(dim_err!("dense weight must be rank 2, got {:?}", w.shape()));
    }
    Ok([w.shape()[0], w.shape()[1]])
}

/// Spatial mean per channel: `(N, C, H, W) -> (N, C, 1, 1)`.
pub fn global_average_pool(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(dim_err!("global average pooling expects NCHW, got {:?}", x.shape()));
    }
    let [n, c, h, w] = x.nchw();
    let plane = (h * w) as f64;
    let data = x.data().chunks(h * w).map(|p| p.iter().sum::<f64>() / plane).collect();
    Ok(Tensor::from_parts(vec![n, c, 1, 1], data))
}

/// Channel-wise concatenation in argument order.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs.first().ok_or_else(|| dim_err!("concat needs at least one input"))?;
    let [n, _, h, w] = first.nchw();
    for t in xs {
        let [tn, _, th, tw] = t.nchw();
        if (tn, th, tw) != (n, h, w) {
            return Err(dim_err!("concat inputs disagree on (N,H,W): {:?} vs {:?}", first.shape(), t.shape()));
        }
    }
    let plane = h * w;
    let total_c: usize = xs.iter().map(|t| t.nchw()[1]).sum();
    let mut data = Vec::with_capacity(n * total_c * plane);
    for b in 0..n {
        for t in xs {
            let c = t.nchw()[1];
            data.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
        }
    }
    Ok(Tensor::from_parts(vec![n, total_c, h, w], data))
}

/// `x` viewed as `(N, features)` times `w^T` plus `b`; result is `(N, out)`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let [outs, feats] = matrix_dims(w)?;
    let n = if x.rank() == 1 { 1 } else { x.shape()[0] };
    if n * feats != x.numel() {
        return Err(dim_err!("dense layer expects {feats} features per row, input shape {:?}", x.shape()));
    }
    let mut out = vec![0.0; n * outs];
    if let Some(b) = b {
        if b.numel() != outs {
            return Err(dim_err!("dense bias has {} entries for {outs} outputs", b.numel()));
        }
        for row in out.chunks_mut(outs) {
            row.copy_from_slice(b.data());
        }
    }
    gemm(n, feats, outs, 1.0, x.data(), false, w.data(), true, 1.0, &mut out);
    Ok(Tensor::from_parts(vec![n, outs], out))
}

/// Row-wise softmax probabilities and the mean negative log-likelihood.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(Tensor, f64)> {
    if logits.rank() != 2 {
        return Err(dim_err!("logits must be (N, classes), got {:?}", logits.shape()));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(dim_err!("{} labels for {n} rows", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Validation(format!("label {bad} out of range for {k} classes")));
    }
    let mut probs = vec![0.0; n * k];
    let mut loss = 0.0;
    for (row, (&label, src)) in labels.iter().zip(logits.data().chunks(k)).enumerate() {
        let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = src.iter().map(|v| (v - m).exp()).sum();
        let log_z = m + z.ln();
        for (j, &v) in src.iter().enumerate() {
            probs[row * k + j] = (v - log_z).exp();
        }
        loss += log_z - src[label];
    }
    Ok((Tensor::from_parts(vec![n, k], probs), loss / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[2, 3], vec![1., -2., 3., 0.5, 7., -1.]).unwrap().with_requires_grad(true));
        let s = tape.sum(x).unwrap();
        let grads = tape.backward(s).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mse_gradient_closed_form() {
        let mut tape = Tape::new();
        let xs = vec![0.3, -1.2, 2.0, 0.0];
        let ys = vec![1.0, 1.0, -1.0, 0.5];
        let x = tape.leaf(Tensor::new(&[4], xs.clone()).unwrap().with_requires_grad(true));
        let y = tape.leaf(Tensor::new(&[4], ys.clone()).unwrap());
        let loss = tape.mse(x, y).unwrap();
        let g = tape.backward(loss).unwrap();
        for ((gv, a), b) in g.get(x).unwrap().data().iter().zip(&xs).zip(&ys) {
            assert!((gv - 2.0 * (a - b) / 4.0).abs() < 1e-15);
        }
        assert!(g.get(y).is_none());
    }

    #[test]
    fn foreign_variables_are_usage_errors() {
        let mut a = Tape::new();
        let b = Tape::new();
        let x = a.leaf(Tensor::scalar(1.0));
        assert!(matches!(b.backward(x), Err(Error::Usage(_))));
        let v = a.leaf(Tensor::zeros(&[3]));
        assert!(matches!(a.backward(v), Err(Error::Usage(_))));
    }

    #[test]
    fn uniform_softmax_on_zero_logits() {
        let (p, loss) = softmax_cross_entropy(&Tensor::zeros(&[1, 4]), &[2]).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1, 4]), &[4]).is_err());
    }

    #[test]
    fn gap_and_concat_values() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(global_average_pool(&x).unwrap().data(), &[2.5]);
        let a = Tensor::zeros(&[1, 16, 1, 1]);
        let b = Tensor::zeros(&[1, 1, 1, 1]);
        assert_eq!(concat_channels(&[&a, &b]).unwrap().shape(), &[1, 17, 1, 1]);
        let c = Tensor::zeros(&[1, 1, 2, 1]);
        assert!(concat_channels(&[&a, &c]).is_err());
    }
}
