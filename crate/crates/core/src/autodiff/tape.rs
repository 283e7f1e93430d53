use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{self, ConvGeometry};
use super::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry },
    Deconv2d { input: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry },
    Linear { input: Var, weight: Var, bias: Option<Var> },
    Relu(Var),
    Concat(Var, Var),
    CoordConv(Var),
    Reshape(Var),
    BroadcastSpatial(Var),
    Add(Var, Var),
    Sum(Var),
    WeightedAbsDiff { pred: Var, target: Vec<T>, weights: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation for one backward pass. Nodes are stored in
/// creation order, which is a topological order of the graph.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, detail: alloc::string::String) -> Error {
    Error::Shape { op, detail }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Trainable leaf; receives a gradient.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, true)
    }

    /// Constant leaf.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn check_bias(&self, op: &'static str, bias: Option<Var>, len: usize) -> Result<()> {
        if let Some(b) = bias {
            if self.shape(b) != [len] {
                return Err(shape_err(op, format!("bias shape {:?}, expected [{len}]", self.shape(b))));
            }
        }
        Ok(())
    }

    fn add_channel_bias(&self, out: &mut [T], bias: Option<Var>, channels: usize, plane: usize) {
        if let Some(b) = bias {
            let b = &self.value(b).data;
            for (chunk_idx, chunk) in out.chunks_mut(plane).enumerate() {
                let bv = b[chunk_idx % channels];
                for v in chunk {
                    *v = *v + bv;
                }
            }
        }
    }

    /// Cross-correlation of `input [N,C,H,W]` with `kernel [K,C,k,k]`,
    /// zero padding `pad`, plus optional per-channel `bias [K]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (is, ks) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if is.len() != 4 || ks.len() != 4 || ks[1] != is[1] || ks[2] != ks[3] {
            return Err(shape_err("conv2d", format!("input {is:?}, kernel {ks:?}")));
        }
        let geom = ConvGeometry::conv(is[1], is[2], is[3], ks[2], stride, pad)
            .ok_or_else(|| shape_err("conv2d", format!("kernel {ks:?} stride {stride} does not fit {is:?}")))?;
        self.check_bias("conv2d", bias, ks[0])?;
        let mut out = conv::conv_forward(&self.value(input).data, is[0], &geom, &self.value(kernel).data, ks[0]);
        self.add_channel_bias(&mut out, bias, ks[0], geom.oh * geom.ow);
        let value = Tensor { shape: vec![is[0], ks[0], geom.oh, geom.ow], data: out };
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.push("conv2d", value, Op::Conv2d { input, kernel, bias, geom }, &inputs)
    }

    /// Transposed convolution, the adjoint of [`Tape::conv2d`] in its input:
    /// `input [N,K,H,W]`, `kernel [K,C,k,k]`, `bias [C]`.
    pub fn deconv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (is, ks) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if is.len() != 4 || ks.len() != 4 || ks[0] != is[1] || ks[2] != ks[3] {
            return Err(shape_err("deconv2d", format!("input {is:?}, kernel {ks:?}")));
        }
        let geom = ConvGeometry::transposed(ks[1], is[2], is[3], ks[2], stride, pad)
            .ok_or_else(|| shape_err("deconv2d", format!("kernel {ks:?} stride {stride} incompatible with {is:?}")))?;
        self.check_bias("deconv2d", bias, ks[1])?;
        let mut out = conv::deconv_forward(&self.value(input).data, is[0], &geom, &self.value(kernel).data, ks[0]);
        self.add_channel_bias(&mut out, bias, ks[1], geom.h * geom.w);
        let value = Tensor { shape: vec![is[0], ks[1], geom.h, geom.w], data: out };
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.push("deconv2d", value, Op::Deconv2d { input, kernel, bias, geom }, &inputs)
    }

    /// `input [N,in] · weightᵀ [in,out] + bias [out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (is, ws) = (self.shape(input).to_vec(), self.shape(weight).to_vec());
        if is.len() != 2 || ws.len() != 2 || ws[1] != is[1] {
            return Err(shape_err("linear", format!("input {is:?}, weight {ws:?}")));
        }
        self.check_bias("linear", bias, ws[0])?;
        let (n, fin, fout) = (is[0], is[1], ws[0]);
        let mut out = vec![T::zero(); n * fout];
        T::gemm(false, true, n, fout, fin, T::one(), &self.value(input).data, &self.value(weight).data, T::zero(), &mut out);
        if let Some(b) = bias {
            let b = &self.value(b).data;
            for row in out.chunks_mut(fout) {
                for (v, bv) in row.iter_mut().zip(b) {
                    *v = *v + *bv;
                }
            }
        }
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push("linear", Tensor { shape: vec![n, fout], data: out }, Op::Linear { input, weight, bias }, &inputs)
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let value = Tensor { shape: x.shape.clone(), data: x.data.iter().map(|v| relu(*v)).collect() };
        self.push("relu", value, Op::Relu(input), &[input])
    }

    /// Concatenation along dimension 1; all other dimensions must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(shape_err("concat", format!("{sa:?} and {sb:?}")));
        }
        let inner: usize = sa[2..].iter().product();
        let (ca, cb) = (sa[1] * inner, sb[1] * inner);
        let (da, db) = (&self.value(a).data, &self.value(b).data);
        let mut data = Vec::with_capacity(da.len() + db.len());
        for i in 0..sa[0] {
            data.extend_from_slice(&da[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&db[i * cb..(i + 1) * cb]);
        }
        let mut shape = sa.clone();
        shape[1] += sb[1];
        self.push("concat", Tensor { shape, data }, Op::Concat(a, b), &[a, b])
    }

    /// Appends column and row coordinate channels, each scaled to `[-1, 1]`.
    pub fn coordconv(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() != 4 {
            return Err(shape_err("coordconv", format!("expected [N,C,H,W], got {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let coord = |i: usize, len: usize| if len > 1 { T::of(-1.0 + 2.0 * i as f64 / (len - 1) as f64) } else { T::zero() };
        let plane = h * w;
        let x = &self.value(input).data;
        let mut data = Vec::with_capacity(n * (c + 2) * plane);
        for b in 0..n {
            data.extend_from_slice(&x[b * c * plane..(b + 1) * c * plane]);
            data.extend((0..plane).map(|p| coord(p % w, w)));
            data.extend((0..plane).map(|p| coord(p / w, h)));
        }
        self.push("coordconv", Tensor { shape: vec![n, c + 2, h, w], data }, Op::CoordConv(input), &[input])
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(input), &[input])
    }

    /// `[N,C]` to `[N,C,H,W]`, each value repeated over the image plane.
    pub fn broadcast_spatial(&mut self, input: Var, h: usize, w: usize) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() != 2 {
            return Err(shape_err("broadcast_spatial", format!("expected [N,C], got {s:?}")));
        }
        let x = &self.value(input).data;
        let mut data = Vec::with_capacity(x.len() * h * w);
        for v in x {
            data.extend(core::iter::repeat(*v).take(h * w));
        }
        self.push("broadcast_spatial", Tensor { shape: vec![s[0], s[1], h, w], data }, Op::BroadcastSpatial(input), &[input])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", format!("{:?} and {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| *x + *y).collect();
        let shape = self.shape(a).to_vec();
        self.push("add", Tensor { shape, data }, Op::Add(a, b), &[a, b])
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).data.iter().fold(T::zero(), |acc, v| acc + *v);
        self.push("sum", Tensor::scalar(s), Op::Sum(input), &[input])
    }

    /// Scalar `Σ wᵢ |predᵢ − targetᵢ|`. The subgradient at zero is zero.
    pub fn weighted_abs_diff(&mut self, pred: Var, target: Vec<T>, weights: Vec<T>) -> Result<Var> {
        let p = self.value(pred);
        if target.len() != p.len() || weights.len() != p.len() {
            return Err(shape_err(
                "weighted_abs_diff",
                format!("prediction has {} values, target {}, weights {}", p.len(), target.len(), weights.len()),
            ));
        }
        let s = p
            .data
            .iter()
            .zip(&target)
            .zip(&weights)
            .fold(T::zero(), |acc, ((a, b), w)| acc + *w * (*a - *b).abs());
        self.push("weighted_abs_diff", Tensor::scalar(s), Op::WeightedAbsDiff { pred, target, weights }, &[pred])
    }

    /// Reverse-mode gradients of a scalar `loss` for every node that
    /// depends on a trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(format!("{ls:?}")));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut acc = |v: Var, delta: Vec<T>| match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&delta).for_each(|(e, d)| *e = *e + *d),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, bias, geom } => {
                let n = self.shape(*input)[0];
                let k_out = self.shape(*kernel)[0];
                let (di, dk) = conv::conv_backward(
                    &self.value(*input).data,
                    n,
                    geom,
                    &self.value(*kernel).data,
                    k_out,
                    g,
                    self.wants(*input),
                    self.wants(*kernel),
                );
                if let Some(di) = di {
                    acc(*input, di);
                }
                if let Some(dk) = dk {
                    acc(*kernel, dk);
                }
                if let Some(b) = bias.filter(|b| self.wants(*b)) {
                    acc(b, channel_sums(g, k_out, geom.oh * geom.ow));
                }
            }
            Op::Deconv2d { input, kernel, bias, geom } => {
                let n = self.shape(*input)[0];
                let k_in = self.shape(*kernel)[0];
                let (di, dk) = conv::deconv_backward(
                    &self.value(*input).data,
                    n,
                    geom,
                    &self.value(*kernel).data,
                    k_in,
                    g,
                    self.wants(*input),
                    self.wants(*kernel),
                );
                if let Some(di) = di {
                    acc(*input, di);
                }
                if let Some(dk) = dk {
                    acc(*kernel, dk);
                }
                if let Some(b) = bias.filter(|b| self.wants(*b)) {
                    acc(b, channel_sums(g, geom.c, geom.h * geom.w));
                }
            }
            Op::Linear { input, weight, bias } => {
                let (n, fin) = (self.shape(*input)[0], self.shape(*input)[1]);
                let fout = self.shape(*weight)[0];
                if self.wants(*input) {
                    let mut d = vec![T::zero(); n * fin];
                    T::gemm(false, false, n, fin, fout, T::one(), g, &self.value(*weight).data, T::zero(), &mut d);
                    acc(*input, d);
                }
                if self.wants(*weight) {
                    let mut d = vec![T::zero(); fout * fin];
                    T::gemm(true, false, fout, fin, n, T::one(), g, &self.value(*input).data, T::zero(), &mut d);
                    acc(*weight, d);
                }
                if let Some(b) = bias.filter(|b| self.wants(*b)) {
                    let mut d = vec![T::zero(); fout];
                    for row in g.chunks(fout) {
                        d.iter_mut().zip(row).for_each(|(a, r)| *a = *a + *r);
                    }
                    acc(b, d);
                }
            }
            Op::Relu(x) => {
                let d = self.value(*x).data.iter().zip(g).map(|(v, gv)| if *v > T::zero() { *gv } else { T::zero() }).collect();
                acc(*x, d);
            }
            Op::Concat(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let inner: usize = sa[2..].iter().product();
                let (ca, cb) = (sa[1] * inner, sb[1] * inner);
                let (mut da, mut db) = (Vec::with_capacity(sa[0] * ca), Vec::with_capacity(sa[0] * cb));
                for row in g.chunks(ca + cb) {
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                if self.wants(*a) {
                    acc(*a, da);
                }
                if self.wants(*b) {
                    acc(*b, db);
                }
            }
            Op::CoordConv(x) => {
                let s = self.shape(*x);
                let (c, plane) = (s[1], s[2] * s[3]);
                let mut d = Vec::with_capacity(self.value(*x).len());
                for row in g.chunks((c + 2) * plane) {
                    d.extend_from_slice(&row[..c * plane]);
                }
                acc(*x, d);
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::BroadcastSpatial(x) => {
                let plane = node.value.shape[2] * node.value.shape[3];
                acc(*x, g.chunks(plane).map(|c| c.iter().fold(T::zero(), |a, v| a + *v)).collect());
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.to_vec());
                }
                if self.wants(*b) {
                    acc(*b, g.to_vec());
                }
            }
            Op::Sum(x) => acc(*x, vec![g[0]; self.value(*x).len()]),
            Op::WeightedAbsDiff { pred, target, weights } => {
                let d = self
                    .value(*pred)
                    .data
                    .iter()
                    .zip(target)
                    .zip(weights)
                    .map(|((p, t), w)| {
                        let diff = *p - *t;
                        let sign = if diff > T::zero() {
                            T::one()
                        } else if diff < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        g[0] * *w * sign
                    })
                    .collect();
                acc(*pred, d);
            }
        }
    }
}

/// Keeps NaN so the finiteness check downstream still sees it.
fn relu<T: Real>(v: T) -> T {
    if v < T::zero() {
        T::zero()
    } else {
        v
    }
}

fn channel_sums<T: Real>(g: &[T], channels: usize, plane: usize) -> Vec<T> {
    let mut d = vec![T::zero(); channels];
    for (i, chunk) in g.chunks(plane).enumerate() {
        d[i % channels] = chunk.iter().fold(d[i % channels], |a, v| a + *v);
    }
    d
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `v`, or `None` if `v` does not influence the loss
    /// through any trainable path.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
