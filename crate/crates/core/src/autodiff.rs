//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Tape`]; nodes are stored in
//! creation order, which is a topological order, so the backward sweep is a
//! plain reverse iteration and its accumulation order is fixed for a fixed
//! graph.

use std::sync::Arc;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{self, ConvGeometry, Padding};
use crate::error::{Error, Result};
use crate::tensor::{quantize, Tensor};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    #[default]
    Max,
    Mean,
}

enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    SigmoidBce {
        logits: Var,
        targets: Vec<f64>,
    },
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv1d {
        x: Var,
        w: Var,
        geom: ConvGeometry,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    BasisExpand {
        x: Var,
        basis: Arc<Tensor>,
    },
    Stack(Vec<Var>),
    ScaleWindow {
        x: Var,
        start: usize,
        weights: Vec<f64>,
    },
    ReduceAxis {
        x: Var,
        axis: usize,
        kind: Reduce,
        argmax: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Running statistics of a batch-normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub updates: u64,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            updates: 0,
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            op,
            "shape",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}

fn check_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::dim(op, "rank", rank, format!("{:?}", t.shape())));
    }
    Ok(())
}

/// Splits a shape around `axis` into (outer, len, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn grad_flag(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn push(&mut self, mut value: Tensor, op: Op, inputs: &[Var]) -> Var {
        quantize(value.data_mut());
        if cfg!(debug_assertions)
            && !value.all_finite()
            && inputs.iter().all(|v| self.nodes[v.0].value.all_finite())
        {
            panic!("non-finite output from finite inputs (node {})", self.nodes.len());
        }
        let requires_grad = self.grad_flag(inputs);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same_shape("add", ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape(), data)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same_shape("mul", ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scaled(c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v < 0.0 { 0.0 } else { v });
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(out, Op::Mean(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Max pooling over the last axis (floor output length).
    pub fn max_pool1d(&mut self, a: Var, window: usize, stride: usize) -> Result<Var> {
        let t = self.value(a);
        if window == 0 || stride == 0 {
            return Err(Error::contract("max_pool1d window and stride must be >= 1"));
        }
        let rank = t.rank();
        if rank == 0 {
            return Err(Error::dim("max_pool1d", "rank", ">= 1", 0));
        }
        let len = t.dim(rank - 1);
        if window > len {
            return Err(Error::dim("max_pool1d", "time", format!(">= {window}"), len));
        }
        let t_out = (len - window) / stride + 1;
        let rows = t.len() / len;
        let mut data = Vec::with_capacity(rows * t_out);
        let mut argmax = Vec::with_capacity(rows * t_out);
        for r in 0..rows {
            let row = &t.data()[r * len..(r + 1) * len];
            for o in 0..t_out {
                let start = o * stride;
                let mut best = start;
                for i in start + 1..start + window {
                    if row[i] > row[best] || row[i].is_nan() {
                        best = i;
                    }
                }
                data.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        let mut shape = t.shape().to_vec();
        shape[rank - 1] = t_out;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::MaxPool { x: a, argmax }, &[a]))
    }

    /// Mean softmax cross-entropy of `[batch, classes]` logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        check_rank("softmax_cross_entropy", t, 2)?;
        let (b, k) = (t.dim(0), t.dim(1));
        if labels.len() != b {
            return Err(Error::dim("softmax_cross_entropy", "batch", b, labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::dim("softmax_cross_entropy", "label", format!("< {k}"), bad));
        }
        let mut probs = vec![0.0; b * k];
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = &t.data()[i * k..(i + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for j in 0..k {
                probs[i * k + j] = (row[j] - lse).exp();
            }
            loss += lse - row[label];
        }
        let out = Tensor::scalar(loss / b as f64);
        Ok(self.push(
            out,
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Mean elementwise sigmoid binary cross-entropy; `targets` in `[0, 1]`.
    pub fn sigmoid_bce(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        let t = self.value(logits);
        check_same_shape("sigmoid_bce", t, targets)?;
        let loss: f64 = t
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let out = Tensor::scalar(loss / t.len() as f64);
        Ok(self.push(
            out,
            Op::SigmoidBce {
                logits,
                targets: targets.data().to_vec(),
            },
            &[logits],
        ))
    }

    /// Dense layer: `x [batch, in]`, `w [out, in]`, `b [out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        check_rank("affine", tx, 2)?;
        check_rank("affine", tw, 2)?;
        let (n, din) = (tx.dim(0), tx.dim(1));
        let dout = tw.dim(0);
        if tw.dim(1) != din {
            return Err(Error::dim("affine", "in_features", din, tw.dim(1)));
        }
        if tb.shape() != [dout] {
            return Err(Error::dim("affine", "bias", dout, format!("{:?}", tb.shape())));
        }
        let mut data = vec![0.0; n * dout];
        for i in 0..n {
            let xr = &tx.data()[i * din..(i + 1) * din];
            for o in 0..dout {
                let wr = &tw.data()[o * din..(o + 1) * din];
                data[i * dout + o] =
                    tb.data()[o] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let out = Tensor::new(&[n, dout], data)?;
        Ok(self.push(out, Op::Affine { x, w, b }, &[x, w, b]))
    }

    /// Cross-correlation `x [batch, cin, time]` with `w [cout, cin, k]`.
    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        check_rank("conv1d", tx, 3)?;
        check_rank("conv1d", tw, 3)?;
        let (b, cin, t) = (tx.dim(0), tx.dim(1), tx.dim(2));
        let (cout, wc, k) = (tw.dim(0), tw.dim(1), tw.dim(2));
        if wc != cin {
            return Err(Error::dim("conv1d", "cin", cin, wc));
        }
        let geom = ConvGeometry::new(t, k, stride, padding)?;
        let data = conv::conv1d_forward(tx.data(), tw.data(), b, cin, cout, &geom);
        let out = Tensor::new(&[b, cout, geom.t_out()], data)?;
        Ok(self.push(out, Op::Conv1d { x, w, geom }, &[x, w]))
    }

    /// Per-channel normalization over the batch axis and every trailing axis.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BatchNormStats,
        train: bool,
    ) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() < 2 {
            return Err(Error::dim("batch_norm", "rank", ">= 2", tx.rank()));
        }
        let (b, c) = (tx.dim(0), tx.dim(1));
        let r: usize = tx.shape()[2..].iter().product();
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.shape() != [c] || tb.shape() != [c] || stats.mean.len() != c {
            return Err(Error::dim("batch_norm", "channels", c, format!("{:?}", tg.shape())));
        }
        let m = b * r;
        let idx = |bi: usize, ci: usize, ri: usize| (bi * c + ci) * r + ri;
        let mut inv_std = vec![0.0; c];
        let mut xhat = vec![0.0; tx.len()];
        let mut out = vec![0.0; tx.len()];
        if train && m < 2 {
            return Err(Error::contract("batch_norm in train mode needs batch*spatial > 1"));
        }
        if !train && stats.updates == 0 {
            warn!("batch_norm evaluated before any train step; using initial statistics");
        }
        for ci in 0..c {
            let (mu, var) = if train {
                let mut s = 0.0;
                for bi in 0..b {
                    s += tx.data()[idx(bi, ci, 0)..idx(bi, ci, 0) + r].iter().sum::<f64>();
                }
                let mu = s / m as f64;
                let mut v = 0.0;
                for bi in 0..b {
                    v += tx.data()[idx(bi, ci, 0)..idx(bi, ci, 0) + r]
                        .iter()
                        .map(|x| (x - mu) * (x - mu))
                        .sum::<f64>();
                }
                let var = v / m as f64;
                let unbiased = v / (m - 1) as f64;
                stats.mean[ci] = (1.0 - stats.momentum) * stats.mean[ci] + stats.momentum * mu;
                stats.var[ci] = (1.0 - stats.momentum) * stats.var[ci] + stats.momentum * unbiased;
                (mu, var)
            } else {
                (stats.mean[ci], stats.var[ci])
            };
            let is = 1.0 / (var + stats.eps).sqrt();
            inv_std[ci] = is;
            let (g, be) = (tg.data()[ci], tb.data()[ci]);
            for bi in 0..b {
                for ri in 0..r {
                    let i = idx(bi, ci, ri);
                    let h = (tx.data()[i] - mu) * is;
                    xhat[i] = h;
                    out[i] = g * h + be;
                }
            }
        }
        if train {
            stats.updates += 1;
        }
        let out = Tensor::new(tx.shape(), out)?;
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        ))
    }

    /// Contracts the last axis of `x [..., k]` with a constant `basis [k, w]`.
    pub fn basis_expand(&mut self, x: Var, basis: Arc<Tensor>) -> Result<Var> {
        let tx = self.value(x);
        check_rank("basis_expand", &basis, 2)?;
        let (k, w) = (basis.dim(0), basis.dim(1));
        let rank = tx.rank();
        if rank == 0 || tx.dim(rank - 1) != k {
            return Err(Error::dim("basis_expand", "last", k, format!("{:?}", tx.shape())));
        }
        let rows = tx.len() / k;
        let mut data = vec![0.0; rows * w];
        for r in 0..rows {
            let xr = &tx.data()[r * k..(r + 1) * k];
            let out = &mut data[r * w..(r + 1) * w];
            for (ki, &c) in xr.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for (o, &bv) in out.iter_mut().zip(&basis.data()[ki * w..(ki + 1) * w]) {
                    *o += c * bv;
                }
            }
        }
        let mut shape = tx.shape().to_vec();
        shape[rank - 1] = w;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::BasisExpand { x, basis }, &[x]))
    }

    /// Stacks equally shaped `[b, c, t]` tensors into `[b, c, n, t]`.
    pub fn stack_scales(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .value(*parts.first().ok_or_else(|| Error::contract("stack of zero tensors"))?)
            .clone();
        check_rank("stack_scales", &first, 3)?;
        let (b, c, t) = (first.dim(0), first.dim(1), first.dim(2));
        let n = parts.len();
        let mut data = vec![0.0; b * c * n * t];
        for (j, p) in parts.iter().enumerate() {
            let tp = self.value(*p);
            check_same_shape("stack_scales", &first, tp)?;
            for bc in 0..b * c {
                data[(bc * n + j) * t..(bc * n + j + 1) * t]
                    .copy_from_slice(&tp.data()[bc * t..(bc + 1) * t]);
            }
        }
        let out = Tensor::new(&[b, c, n, t], data)?;
        Ok(self.push(out, Op::Stack(parts.to_vec()), parts))
    }

    /// Gathers scales `start..start+weights.len()` of `x [b, c, s, t]` into
    /// channels: `out[b, c*len + j, t] = weights[j] * x[b, c, start+j, t]`,
    /// zero where `start + j` runs past the scale axis.
    pub fn scale_window(&mut self, x: Var, start: usize, weights: &[f64]) -> Result<Var> {
        let tx = self.value(x);
        check_rank("scale_window", tx, 4)?;
        let (b, c, s, t) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
        let len = weights.len();
        if start >= s {
            return Err(Error::dim("scale_window", "scale", format!("> {start}"), s));
        }
        let mut data = vec![0.0; b * c * len * t];
        for bc in 0..b * c {
            for (j, &wj) in weights.iter().enumerate() {
                let si = start + j;
                if si >= s {
                    continue;
                }
                let src = &tx.data()[(bc * s + si) * t..(bc * s + si + 1) * t];
                let dst = &mut data[(bc * len + j) * t..(bc * len + j + 1) * t];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d = wj * v;
                }
            }
        }
        let out = Tensor::new(&[b, c * len, t], data)?;
        Ok(self.push(
            out,
            Op::ScaleWindow {
                x,
                start,
                weights: weights.to_vec(),
            },
            &[x],
        ))
    }

    /// Max or mean over one axis, which is removed.
    pub fn reduce_axis(&mut self, x: Var, axis: usize, kind: Reduce) -> Result<Var> {
        let tx = self.value(x);
        if axis >= tx.rank() {
            return Err(Error::dim("reduce_axis", "axis", format!("< {}", tx.rank()), axis));
        }
        let (outer, n, inner) = split_axis(tx.shape(), axis);
        if n == 0 {
            return Err(Error::dim("reduce_axis", "length", ">= 1", 0));
        }
        let mut data = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        if kind == Reduce::Max {
            argmax = vec![0; outer * inner];
        }
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                match kind {
                    Reduce::Max => {
                        let mut best = 0;
                        for j in 1..n {
                            if tx.data()[at(j)] > tx.data()[at(best)] || tx.data()[at(j)].is_nan() {
                                best = j;
                            }
                        }
                        data[o * inner + i] = tx.data()[at(best)];
                        argmax[o * inner + i] = at(best);
                    }
                    Reduce::Mean => {
                        let s: f64 = (0..n).map(|j| tx.data()[at(j)]).sum();
                        data[o * inner + i] = s / n as f64;
                    }
                }
            }
        }
        let mut shape = tx.shape().to_vec();
        shape.remove(axis);
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(
            out,
            Op::ReduceAxis {
                x,
                axis,
                kind,
                argmax,
            },
            &[x],
        ))
    }

    /// Inverted dropout with keep-probability `1 - p`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::contract(format!("dropout rate {p} outside [0, 1)")));
        }
        let tx = self.value(x);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..tx.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(tx.shape(), data)?;
        Ok(self.push(out, Op::Dropout { x, mask }, &[x]))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.rank() != 0 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(*a, zip_map(g, tb, |x, y| x * y));
                acc(*b, zip_map(g, ta, |x, y| x * y));
            }
            Op::Scale(a, c) => acc(*a, g.scaled(*c)),
            Op::Relu(a) => {
                let ta = self.value(*a);
                acc(*a, zip_map(g, ta, |x, v| if v > 0.0 { x } else { 0.0 }));
            }
            Op::Sum(a) => {
                let ta = self.value(*a);
                acc(*a, Tensor::full(ta.shape(), gd[0]));
            }
            Op::Mean(a) => {
                let ta = self.value(*a);
                acc(*a, Tensor::full(ta.shape(), gd[0] / ta.len() as f64));
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                acc(*a, g.clone().reshape(&shape).expect("reshape grad"));
            }
            Op::MaxPool { x, argmax } | Op::ReduceAxis { x, argmax, kind: Reduce::Max, .. } => {
                let mut gx = Tensor::zeros(self.value(*x).shape());
                for (&i, &v) in argmax.iter().zip(gd) {
                    gx.data_mut()[i] += v;
                }
                acc(*x, gx);
            }
            Op::ReduceAxis {
                x,
                axis,
                kind: Reduce::Mean,
                ..
            } => {
                let tx = self.value(*x);
                let (outer, n, inner) = split_axis(tx.shape(), *axis);
                let mut gx = Tensor::zeros(tx.shape());
                let inv = 1.0 / n as f64;
                for o in 0..outer {
                    for j in 0..n {
                        for i in 0..inner {
                            gx.data_mut()[(o * n + j) * inner + i] = gd[o * inner + i] * inv;
                        }
                    }
                }
                acc(*x, gx);
            }
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
            } => {
                let b = labels.len();
                let k = probs.len() / b;
                let scale = gd[0] / b as f64;
                let mut gx = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    gx[i * k + l] -= 1.0;
                }
                for v in &mut gx {
                    *v *= scale;
                }
                let shape = self.value(*logits).shape().to_vec();
                acc(*logits, Tensor::new(&shape, gx).expect("xent grad"));
            }
            Op::SigmoidBce { logits, targets } => {
                let tz = self.value(*logits);
                let scale = gd[0] / tz.len() as f64;
                let gx = tz
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &y)| (sigmoid(z) - y) * scale)
                    .collect();
                acc(*logits, Tensor::new(tz.shape(), gx).expect("bce grad"));
            }
            Op::Affine { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (n, din) = (tx.dim(0), tx.dim(1));
                let dout = tw.dim(0);
                let mut gx = vec![0.0; n * din];
                let mut gw = vec![0.0; dout * din];
                let mut gb = vec![0.0; dout];
                for i in 0..n {
                    for o in 0..dout {
                        let go = gd[i * dout + o];
                        gb[o] += go;
                        for d in 0..din {
                            gx[i * din + d] += go * tw.data()[o * din + d];
                            gw[o * din + d] += go * tx.data()[i * din + d];
                        }
                    }
                }
                acc(*x, Tensor::new(tx.shape(), gx).expect("affine grad"));
                acc(*w, Tensor::new(tw.shape(), gw).expect("affine grad"));
                acc(*b, Tensor::new(&[dout], gb).expect("affine grad"));
            }
            Op::Conv1d { x, w, geom } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (gx, gw) = conv::conv1d_backward(
                    gd,
                    tx.data(),
                    tw.data(),
                    tx.dim(0),
                    tx.dim(1),
                    tw.dim(0),
                    geom,
                );
                acc(*x, Tensor::new(tx.shape(), gx).expect("conv grad"));
                acc(*w, Tensor::new(tw.shape(), gw).expect("conv grad"));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let tx = self.value(*x);
                let tg = self.value(*gamma);
                let (b, c) = (tx.dim(0), tx.dim(1));
                let r = tx.len() / (b * c);
                let m = (b * r) as f64;
                let mut gx = vec![0.0; tx.len()];
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                for ci in 0..c {
                    let mut sg = 0.0;
                    let mut sgx = 0.0;
                    for bi in 0..b {
                        for ri in 0..r {
                            let i = (bi * c + ci) * r + ri;
                            sg += gd[i];
                            sgx += gd[i] * xhat[i];
                        }
                    }
                    ggamma[ci] = sgx;
                    gbeta[ci] = sg;
                    let k = tg.data()[ci] * inv_std[ci];
                    for bi in 0..b {
                        for ri in 0..r {
                            let i = (bi * c + ci) * r + ri;
                            gx[i] = if *train {
                                k * (gd[i] - sg / m - xhat[i] * sgx / m)
                            } else {
                                k * gd[i]
                            };
                        }
                    }
                }
                acc(*x, Tensor::new(tx.shape(), gx).expect("bn grad"));
                acc(*gamma, Tensor::new(&[c], ggamma).expect("bn grad"));
                acc(*beta, Tensor::new(&[c], gbeta).expect("bn grad"));
            }
            Op::BasisExpand { x, basis } => {
                let tx = self.value(*x);
                let (k, w) = (basis.dim(0), basis.dim(1));
                let rows = tx.len() / k;
                let mut gx = vec![0.0; tx.len()];
                for r in 0..rows {
                    let gr = &gd[r * w..(r + 1) * w];
                    for ki in 0..k {
                        gx[r * k + ki] = gr
                            .iter()
                            .zip(&basis.data()[ki * w..(ki + 1) * w])
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                }
                acc(*x, Tensor::new(tx.shape(), gx).expect("basis grad"));
            }
            Op::Stack(parts) => {
                let shape = g.shape();
                let (b, c, n, t) = (shape[0], shape[1], shape[2], shape[3]);
                for (j, p) in parts.iter().enumerate() {
                    let mut gp = vec![0.0; b * c * t];
                    for bc in 0..b * c {
                        gp[bc * t..(bc + 1) * t]
                            .copy_from_slice(&gd[(bc * n + j) * t..(bc * n + j + 1) * t]);
                    }
                    acc(*p, Tensor::new(&[b, c, t], gp).expect("stack grad"));
                }
            }
            Op::ScaleWindow { x, start, weights } => {
                let tx = self.value(*x);
                let (b, c, s, t) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
                let len = weights.len();
                let mut gx = Tensor::zeros(tx.shape());
                for bc in 0..b * c {
                    for (j, &wj) in weights.iter().enumerate() {
                        let si = start + j;
                        if si >= s {
                            continue;
                        }
                        let src = &gd[(bc * len + j) * t..(bc * len + j + 1) * t];
                        let dst = &mut gx.data_mut()[(bc * s + si) * t..(bc * s + si + 1) * t];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d += wj * v;
                        }
                    }
                }
                acc(*x, gx);
            }
            Op::Dropout { x, mask } => {
                let gx = gd.iter().zip(mask).map(|(a, m)| a * m).collect();
                acc(*x, Tensor::new(g.shape(), gx).expect("dropout grad"));
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Central finite-difference check of `f` at `x`: returns the max relative
/// error between the analytic gradient and the numerical one.
///
/// The relative error of each entry is `|a - n| / max(|a|, |n|, 1e-3)`; the
/// floor keeps entries whose true gradient is ~0 from dominating through
/// rounding noise.
pub fn gradient_check(
    x: &Tensor,
    eps: f64,
    mut f: impl FnMut(&mut Tape, Var) -> Result<Var>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.param(x.clone());
    let loss = f(&mut tape, v)?;
    let grads = tape.backward(loss)?;
    let analytic = grads
        .get(v)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    let mut eval = |t: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.param(t);
        let l = f(&mut tape, v)?;
        Ok(tape.value(l).item())
    };
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let num = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        let denom = a.abs().max(num.abs()).max(1e-3);
        worst = worst.max((a - num).abs() / denom);
    }
    Ok(worst)
}
