//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so creation order is already a
//! topological order; [`Graph::backward`] replays it in reverse. Gradients
//! are kept only for leaves (constants and parameters).

use std::collections::HashMap;

use super::conv::{ConvSpec, Unroll};
use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest probability fed to a logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

enum Op<T> {
    Leaf,
    Param,
    Conv2d { input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec },
    ConvTranspose2d { input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec },
    Activation { input: Var, kind: Activation },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Concat { inputs: Vec<Var>, sizes: Vec<usize> },
    Slice { input: Var, start: usize, len: usize },
    Linear { input: Var, weight: Var, bias: Option<Var> },
    GlobalAvgPool(Var),
    PairSoftmax(Var),
    HeadCrossEntropy { probs: Var, target: Vec<bool>, alpha: T },
    RowMin { input: Var, argmin: Vec<usize> },
    Mean(Var),
    ObstacleNll { probs: Var, occupied: Vec<bool>, counts: Vec<usize> },
    PointDistance { input: Var, target: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// One computation record. Single-threaded; build one per worker.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims4(shape: &[usize], what: &str) -> Result<(usize, usize, usize, usize)> {
    match shape {
        [n, c, h, w] => Ok((*n, *c, *h, *w)),
        _ => Err(Error::Dimension(format!("{what} expects NCHW input, got {shape:?}"))),
    }
}

/// `(outer, axis, inner)` split of a shape around axis 1.
fn split_axis1(shape: &[usize]) -> (usize, usize, usize) {
    let outer = shape.first().copied().unwrap_or(1);
    let axis = shape.get(1).copied().unwrap_or(1);
    let inner = shape.iter().skip(2).product();
    (outer, axis, inner)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds a parameter as a leaf; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let (n, c, h, w) = dims4(self.value(input).shape(), "conv2d")?;
        if c != spec.in_channels {
            return Err(Error::Dimension(format!("conv2d expects {} input channels, got {c}", spec.in_channels)));
        }
        let k = spec.kernel;
        let wshape = [spec.out_channels, spec.in_channels, k, k];
        if self.value(weight).shape() != wshape {
            return Err(Error::Dimension(format!(
                "conv2d weight shape {:?}, expected {wshape:?}",
                self.value(weight).shape()
            )));
        }
        self.check_bias(bias, spec.out_channels)?;
        let (ho, wo) = (spec.conv_output(h)?, spec.conv_output(w)?);
        let unroll = Unroll {
            channels: c,
            in_h: h,
            in_w: w,
            out_h: ho,
            out_w: wo,
            kernel: k,
            stride: spec.stride,
            dilation: spec.dilation,
            padding: spec.padding,
        };
        let cout = spec.out_channels;
        let mut out = vec![T::zero(); n * cout * ho * wo];
        let mut cols = vec![T::zero(); unroll.rows() * unroll.cols()];
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        for b in 0..n {
            unroll.im2col(&x[b * c * h * w..(b + 1) * c * h * w], &mut cols);
            let dst = &mut out[b * cout * ho * wo..(b + 1) * cout * ho * wo];
            T::gemm(cout, unroll.rows(), unroll.cols(), wt, false, &cols, false, dst, false);
        }
        if let Some(bias) = bias {
            add_channel_bias(&mut out, self.value(bias).data(), n, cout, ho * wo);
        }
        let value = Tensor::new(vec![n, cout, ho, wo], out)?;
        Ok(self.push(value, Op::Conv2d { input, weight, bias, spec }))
    }

    /// Transposed convolution: the adjoint of [`Graph::conv2d`] for a
    /// weight of shape `[in_channels, out_channels, k, k]`.
    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let (n, c, h, w) = dims4(self.value(input).shape(), "conv_transpose2d")?;
        if c != spec.in_channels {
            return Err(Error::Dimension(format!(
                "conv_transpose2d expects {} input channels, got {c}",
                spec.in_channels
            )));
        }
        let k = spec.kernel;
        let wshape = [spec.in_channels, spec.out_channels, k, k];
        if self.value(weight).shape() != wshape {
            return Err(Error::Dimension(format!(
                "conv_transpose2d weight shape {:?}, expected {wshape:?}",
                self.value(weight).shape()
            )));
        }
        self.check_bias(bias, spec.out_channels)?;
        let (ho, wo) = (spec.transpose_output(h)?, spec.transpose_output(w)?);
        let cout = spec.out_channels;
        let unroll = transpose_unroll(&spec, h, w, ho, wo);
        let mut out = vec![T::zero(); n * cout * ho * wo];
        let mut cols = vec![T::zero(); unroll.rows() * unroll.cols()];
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        for b in 0..n {
            // cols[(cout·k·k) × (h·w)] = Wᵀ · x_b
            T::gemm(unroll.rows(), c, h * w, wt, true, &x[b * c * h * w..(b + 1) * c * h * w], false, &mut cols, false);
            unroll.col2im(&cols, &mut out[b * cout * ho * wo..(b + 1) * cout * ho * wo]);
        }
        if let Some(bias) = bias {
            add_channel_bias(&mut out, self.value(bias).data(), n, cout, ho * wo);
        }
        let value = Tensor::new(vec![n, cout, ho, wo], out)?;
        Ok(self.push(value, Op::ConvTranspose2d { input, weight, bias, spec }))
    }

    fn check_bias(&self, bias: Option<Var>, channels: usize) -> Result<()> {
        if let Some(b) = bias {
            if self.value(b).len() != channels {
                return Err(Error::Dimension(format!(
                    "bias has {} entries, expected {channels}",
                    self.value(b).len()
                )));
            }
        }
        Ok(())
    }

    fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let x = self.value(input);
        let data = x
            .data()
            .iter()
            .map(|&v| match kind {
                Activation::Relu => v.max(T::zero()),
                Activation::Sigmoid => sigmoid(v),
                Activation::Tanh => v.tanh(),
            })
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Activation { input, kind })
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Tanh)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| *p + *q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| *p * *q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let x = self.value(a);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| *v * factor).collect())
            .expect("same shape");
        self.push(value, Op::Scale(a, factor))
    }

    /// Concatenates along axis 1; all other axes must agree.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::Dimension("concat of nothing".into()))?;
        let base = self.value(*first).shape().to_vec();
        if base.len() < 2 {
            return Err(Error::Dimension("concat needs rank ≥ 2".into()));
        }
        let mut sizes = Vec::with_capacity(inputs.len());
        for v in inputs {
            let s = self.value(*v).shape();
            if s.len() != base.len() || s[0] != base[0] || s[2..] != base[2..] {
                return Err(Error::Dimension(format!("concat: {s:?} incompatible with {base:?}")));
            }
            sizes.push(s[1]);
        }
        let (outer, _, inner) = split_axis1(&base);
        let total: usize = sizes.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &c) in inputs.iter().zip(&sizes) {
                data.extend_from_slice(&self.value(*v).data()[o * c * inner..(o + 1) * c * inner]);
            }
        }
        let mut shape = base;
        shape[1] = total;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat { inputs: inputs.to_vec(), sizes }))
    }

    /// Takes `len` entries of axis 1 starting at `start`.
    pub fn slice(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.value(input).shape().to_vec();
        let (outer, axis, inner) = split_axis1(&shape);
        if shape.len() < 2 || start + len > axis {
            return Err(Error::Dimension(format!("slice {start}..{} of axis 1 in {shape:?}", start + len)));
        }
        let x = self.value(input).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&x[(o * axis + start) * inner..(o * axis + start + len) * inner]);
        }
        let mut out_shape = shape;
        out_shape[1] = len;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::Slice { input, start, len }))
    }

    /// `x[N,in] · Wᵀ + b` with `W` shaped `[out, in]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (n, fin) = match self.value(input).shape() {
            [n, f] => (*n, *f),
            s => return Err(Error::Dimension(format!("linear expects [N, in], got {s:?}"))),
        };
        let fout = match self.value(weight).shape() {
            [o, i] if *i == fin => *o,
            s => return Err(Error::Dimension(format!("linear weight {s:?} does not take {fin} inputs"))),
        };
        self.check_bias(bias, fout)?;
        let mut out = vec![T::zero(); n * fout];
        T::gemm(n, fin, fout, self.value(input).data(), false, self.value(weight).data(), true, &mut out, false);
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for row in out.chunks_mut(fout) {
                row.iter_mut().zip(bd).for_each(|(o, b)| *o += *b);
            }
        }
        let value = Tensor::new(vec![n, fout], out)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }))
    }

    /// `[N, C, H, W] → [N, C]` spatial mean.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (n, c, h, w) = dims4(self.value(input).shape(), "global_avg_pool")?;
        let area = T::lit((h * w) as f64);
        let data = self.value(input).data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() / area).collect();
        let value = Tensor::new(vec![n, c], data)?;
        Ok(self.push(value, Op::GlobalAvgPool(input)))
    }

    /// Softmax over consecutive channel pairs `(2j, 2j+1)` of an NCHW tensor.
    pub fn pair_softmax(&mut self, input: Var) -> Result<Var> {
        let (n, c, h, w) = dims4(self.value(input).shape(), "pair_softmax")?;
        if c % 2 != 0 {
            return Err(Error::Dimension(format!("pair_softmax needs an even channel count, got {c}")));
        }
        let plane = h * w;
        let x = self.value(input).data();
        let mut out = vec![T::zero(); x.len()];
        for pair in 0..n * c / 2 {
            let base = pair * 2 * plane;
            for p in 0..plane {
                let (a, b) = (x[base + p], x[base + plane + p]);
                let m = a.max(b);
                let (ea, eb) = ((a - m).exp(), (b - m).exp());
                let z = ea + eb;
                out[base + p] = ea / z;
                out[base + plane + p] = eb / z;
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(value, Op::PairSoftmax(input)))
    }

    /// Weighted two-class cross-entropy of every head against one target per
    /// sample. `probs` is `[N, 2k, H, W]` (channel `2j` traversable, `2j+1`
    /// not), `target` holds `N·H·W` traversable flags. Output is `[N, k]`,
    /// each entry a per-pixel mean.
    pub fn head_cross_entropy(&mut self, probs: Var, target: &[bool], alpha: T) -> Result<Var> {
        let (n, c, h, w) = dims4(self.value(probs).shape(), "head_cross_entropy")?;
        if c % 2 != 0 || target.len() != n * h * w {
            return Err(Error::Dimension(format!(
                "head_cross_entropy: probs {:?} vs {} target cells",
                self.value(probs).shape(),
                target.len()
            )));
        }
        let (k, plane) = (c / 2, h * w);
        let lo = T::lit(PROB_CLAMP);
        let hi = T::one() - lo;
        let x = self.value(probs).data();
        let mut out = vec![T::zero(); n * k];
        for s in 0..n {
            let tgt = &target[s * plane..(s + 1) * plane];
            for j in 0..k {
                let base = (s * c + 2 * j) * plane;
                let mut acc = T::zero();
                for (p, &t) in tgt.iter().enumerate() {
                    acc += if t {
                        -alpha * x[base + p].max(lo).min(hi).ln()
                    } else {
                        -(T::one() - alpha) * x[base + plane + p].max(lo).min(hi).ln()
                    };
                }
                out[s * k + j] = acc / T::lit(plane as f64);
            }
        }
        let value = Tensor::new(vec![n, k], out)?;
        Ok(self.push(value, Op::HeadCrossEntropy { probs, target: target.to_vec(), alpha }))
    }

    /// Row-wise minimum of `[N, k]`; ties go to the lowest index and only the
    /// winning entry receives gradient.
    pub fn row_min(&mut self, input: Var) -> Result<Var> {
        let (n, k) = match self.value(input).shape() {
            [n, k] if *k > 0 => (*n, *k),
            s => return Err(Error::Dimension(format!("row_min expects [N, k>0], got {s:?}"))),
        };
        let x = self.value(input).data();
        let mut argmin = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        for row in x.chunks(k) {
            let mut best = 0;
            for j in 1..k {
                if row[j] < row[best] {
                    best = j;
                }
            }
            argmin.push(best);
            out.push(row[best]);
        }
        let value = Tensor::new(vec![n], out)?;
        Ok(self.push(value, Op::RowMin { input, argmin }))
    }

    /// Winning column per row of a [`Graph::row_min`] node.
    pub fn argmin_of(&self, v: Var) -> Option<&[usize]> {
        match &self.nodes[v.0].op {
            Op::RowMin { argmin, .. } => Some(argmin),
            _ => None,
        }
    }

    /// Mean of all entries, as a one-element tensor.
    pub fn mean(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let m = x.data().iter().copied().sum::<T>() / T::lit(x.len().max(1) as f64);
        self.push(Tensor::scalar(m), Op::Mean(input))
    }

    /// Negative log-likelihood of the non-traversable channel at occupied
    /// cells, averaged over heads and occupied cells per sample and then over
    /// the batch. Samples without occupied cells contribute zero.
    pub fn obstacle_nll(&mut self, probs: Var, occupied: &[bool]) -> Result<Var> {
        let (n, c, h, w) = dims4(self.value(probs).shape(), "obstacle_nll")?;
        if c % 2 != 0 || occupied.len() != n * h * w {
            return Err(Error::Dimension("obstacle_nll: occupancy mask does not match probabilities".into()));
        }
        let (k, plane) = (c / 2, h * w);
        let lo = T::lit(PROB_CLAMP);
        let hi = T::one() - lo;
        let x = self.value(probs).data();
        let counts: Vec<usize> = occupied.chunks(plane).map(|m| m.iter().filter(|o| **o).count()).collect();
        let mut total = T::zero();
        for s in 0..n {
            if counts[s] == 0 {
                continue;
            }
            let mask = &occupied[s * plane..(s + 1) * plane];
            let mut acc = T::zero();
            for j in 0..k {
                let base = (s * c + 2 * j + 1) * plane;
                for (p, _) in mask.iter().enumerate().filter(|(_, o)| **o) {
                    acc -= x[base + p].max(lo).min(hi).ln();
                }
            }
            total += acc / T::lit((k * counts[s]) as f64);
        }
        let value = Tensor::scalar(total / T::lit(n.max(1) as f64));
        Ok(self.push(value, Op::ObstacleNll { probs, occupied: occupied.to_vec(), counts }))
    }

    /// Per-row Euclidean distance between `[N, d]` and a fixed target.
    pub fn point_distance(&mut self, input: Var, target: &[T]) -> Result<Var> {
        let (n, d) = match self.value(input).shape() {
            [n, d] => (*n, *d),
            s => return Err(Error::Dimension(format!("point_distance expects [N, d], got {s:?}"))),
        };
        if target.len() != n * d {
            return Err(Error::Dimension("point_distance target size mismatch".into()));
        }
        let x = self.value(input).data();
        let out = x
            .chunks(d)
            .zip(target.chunks(d))
            .map(|(p, q)| p.iter().zip(q).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>().sqrt())
            .collect();
        let value = Tensor::new(vec![n], out)?;
        Ok(self.push(value, Op::PointDistance { input, target: target.to_vec() }))
    }

    /// Reverse sweep from a one-element `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param => {
                    grads[i] = Some(g);
                }
                op => self.backward_op(op, &node.value, &g, &mut grads),
            }
        }
        Ok(Gradients { grads })
    }

    fn backward_op(&self, op: &Op<T>, out: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match op {
            Op::Leaf | Op::Param => {}
            Op::Conv2d { input, weight, bias, spec } => {
                let (n, c, h, w) = dims4(self.value(*input).shape(), "").unwrap();
                let (ho, wo) = (out.shape()[2], out.shape()[3]);
                let cout = spec.out_channels;
                let unroll = Unroll {
                    channels: c,
                    in_h: h,
                    in_w: w,
                    out_h: ho,
                    out_w: wo,
                    kernel: spec.kernel,
                    stride: spec.stride,
                    dilation: spec.dilation,
                    padding: spec.padding,
                };
                let x = self.value(*input).data();
                let wt = self.value(*weight).data();
                let mut cols = vec![T::zero(); unroll.rows() * unroll.cols()];
                let mut dcols = vec![T::zero(); unroll.rows() * unroll.cols()];
                let mut dw = vec![T::zero(); wt.len()];
                let mut dx = vec![T::zero(); x.len()];
                for b in 0..n {
                    let gb = &g[b * cout * ho * wo..(b + 1) * cout * ho * wo];
                    unroll.im2col(&x[b * c * h * w..(b + 1) * c * h * w], &mut cols);
                    T::gemm(cout, unroll.cols(), unroll.rows(), gb, false, &cols, true, &mut dw, true);
                    T::gemm(unroll.rows(), cout, unroll.cols(), wt, true, gb, false, &mut dcols, false);
                    unroll.col2im(&dcols, &mut dx[b * c * h * w..(b + 1) * c * h * w]);
                }
                accumulate(grads, *input, &dx);
                accumulate(grads, *weight, &dw);
                if let Some(bias) = bias {
                    accumulate(grads, *bias, &channel_sums(g, n, cout, ho * wo));
                }
            }
            Op::ConvTranspose2d { input, weight, bias, spec } => {
                let (n, c, h, w) = dims4(self.value(*input).shape(), "").unwrap();
                let (ho, wo) = (out.shape()[2], out.shape()[3]);
                let cout = spec.out_channels;
                let unroll = transpose_unroll(spec, h, w, ho, wo);
                let x = self.value(*input).data();
                let wt = self.value(*weight).data();
                let mut cols = vec![T::zero(); unroll.rows() * unroll.cols()];
                let mut dw = vec![T::zero(); wt.len()];
                let mut dx = vec![T::zero(); x.len()];
                for b in 0..n {
                    unroll.im2col(&g[b * cout * ho * wo..(b + 1) * cout * ho * wo], &mut cols);
                    T::gemm(c, unroll.rows(), h * w, wt, false, &cols, false, &mut dx[b * c * h * w..(b + 1) * c * h * w], false);
                    T::gemm(c, h * w, unroll.rows(), &x[b * c * h * w..(b + 1) * c * h * w], false, &cols, true, &mut dw, true);
                }
                accumulate(grads, *input, &dx);
                accumulate(grads, *weight, &dw);
                if let Some(bias) = bias {
                    accumulate(grads, *bias, &channel_sums(g, n, cout, ho * wo));
                }
            }
            Op::Activation { input, kind } => {
                let y = out.data();
                let d: Vec<T> = match kind {
                    Activation::Relu => {
                        g.iter().zip(y).map(|(g, y)| if *y > T::zero() { *g } else { T::zero() }).collect()
                    }
                    Activation::Sigmoid => g.iter().zip(y).map(|(g, y)| *g * *y * (T::one() - *y)).collect(),
                    Activation::Tanh => g.iter().zip(y).map(|(g, y)| *g * (T::one() - *y * *y)).collect(),
                };
                accumulate(grads, *input, &d);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g);
                accumulate(grads, *b, g);
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                let da: Vec<T> = g.iter().zip(y).map(|(g, y)| *g * *y).collect();
                let db: Vec<T> = g.iter().zip(x).map(|(g, x)| *g * *x).collect();
                accumulate(grads, *a, &da);
                accumulate(grads, *b, &db);
            }
            Op::Scale(a, factor) => {
                let d: Vec<T> = g.iter().map(|g| *g * *factor).collect();
                accumulate(grads, *a, &d);
            }
            Op::Concat { inputs, sizes } => {
                let (outer, total, inner) = split_axis1(out.shape());
                let mut offset = 0;
                for (v, &c) in inputs.iter().zip(sizes) {
                    let mut d = Vec::with_capacity(outer * c * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        d.extend_from_slice(&g[start..start + c * inner]);
                    }
                    accumulate(grads, *v, &d);
                    offset += c;
                }
            }
            Op::Slice { input, start, len } => {
                let (outer, axis, inner) = split_axis1(self.value(*input).shape());
                let mut d = vec![T::zero(); outer * axis * inner];
                for o in 0..outer {
                    let dst = (o * axis + start) * inner;
                    d[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                accumulate(grads, *input, &d);
            }
            Op::Linear { input, weight, bias } => {
                let (n, fin) = (self.value(*input).shape()[0], self.value(*input).shape()[1]);
                let fout = self.value(*weight).shape()[0];
                let mut dx = vec![T::zero(); n * fin];
                T::gemm(n, fout, fin, g, false, self.value(*weight).data(), false, &mut dx, false);
                let mut dw = vec![T::zero(); fout * fin];
                T::gemm(fout, n, fin, g, true, self.value(*input).data(), false, &mut dw, false);
                accumulate(grads, *input, &dx);
                accumulate(grads, *weight, &dw);
                if let Some(b) = bias {
                    let mut db = vec![T::zero(); fout];
                    for row in g.chunks(fout) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += *g);
                    }
                    accumulate(grads, *b, &db);
                }
            }
            Op::GlobalAvgPool(input) => {
                let shape = self.value(*input).shape();
                let plane = shape[2] * shape[3];
                let inv = T::one() / T::lit(plane as f64);
                let d: Vec<T> = g.iter().flat_map(|g| std::iter::repeat_n(*g * inv, plane)).collect();
                accumulate(grads, *input, &d);
            }
            Op::PairSoftmax(input) => {
                let shape = out.shape();
                let plane = shape[2] * shape[3];
                let y = out.data();
                let mut d = vec![T::zero(); y.len()];
                for pair in 0..shape[0] * shape[1] / 2 {
                    let base = pair * 2 * plane;
                    for p in 0..plane {
                        let (ia, ib) = (base + p, base + plane + p);
                        let dot = g[ia] * y[ia] + g[ib] * y[ib];
                        d[ia] = y[ia] * (g[ia] - dot);
                        d[ib] = y[ib] * (g[ib] - dot);
                    }
                }
                accumulate(grads, *input, &d);
            }
            Op::HeadCrossEntropy { probs, target, alpha } => {
                let shape = self.value(*probs).shape();
                let (c, plane) = (shape[1], shape[2] * shape[3]);
                let k = c / 2;
                let x = self.value(*probs).data();
                let lo = T::lit(PROB_CLAMP);
                let hi = T::one() - lo;
                let inv = T::one() / T::lit(plane as f64);
                let mut d = vec![T::zero(); x.len()];
                for s in 0..shape[0] {
                    let tgt = &target[s * plane..(s + 1) * plane];
                    for j in 0..k {
                        let gj = g[s * k + j];
                        if gj == T::zero() {
                            continue;
                        }
                        let base = (s * c + 2 * j) * plane;
                        for (p, &t) in tgt.iter().enumerate() {
                            let (idx, weight) =
                                if t { (base + p, *alpha) } else { (base + plane + p, T::one() - *alpha) };
                            let v = x[idx];
                            if v > lo && v < hi {
                                d[idx] = -gj * weight * inv / v;
                            }
                        }
                    }
                }
                accumulate(grads, *probs, &d);
            }
            Op::RowMin { input, argmin } => {
                let k = self.value(*input).shape()[1];
                let mut d = vec![T::zero(); argmin.len() * k];
                for (row, &j) in argmin.iter().enumerate() {
                    d[row * k + j] = g[row];
                }
                accumulate(grads, *input, &d);
            }
            Op::Mean(input) => {
                let len = self.value(*input).len();
                let v = g[0] / T::lit(len.max(1) as f64);
                accumulate(grads, *input, &vec![v; len]);
            }
            Op::ObstacleNll { probs, occupied, counts } => {
                let shape = self.value(*probs).shape();
                let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
                let k = c / 2;
                let x = self.value(*probs).data();
                let lo = T::lit(PROB_CLAMP);
                let hi = T::one() - lo;
                let mut d = vec![T::zero(); x.len()];
                for s in 0..n {
                    if counts[s] == 0 {
                        continue;
                    }
                    let scale = g[0] / T::lit((n * k * counts[s]) as f64);
                    let mask = &occupied[s * plane..(s + 1) * plane];
                    for j in 0..k {
                        let base = (s * c + 2 * j + 1) * plane;
                        for (p, _) in mask.iter().enumerate().filter(|(_, o)| **o) {
                            let v = x[base + p];
                            if v > lo && v < hi {
                                d[base + p] = -scale / v;
                            }
                        }
                    }
                }
                accumulate(grads, *probs, &d);
            }
            Op::PointDistance { input, target } => {
                let x = self.value(*input).data();
                let dim = self.value(*input).shape()[1];
                let dist = out.data();
                let mut d = vec![T::zero(); x.len()];
                for (row, (&dd, &gg)) in dist.iter().zip(g).enumerate() {
                    if dd > T::zero() {
                        for a in 0..dim {
                            let i = row * dim + a;
                            d[i] = gg * (x[i] - target[i]) / dd;
                        }
                    }
                }
                accumulate(grads, *input, &d);
            }
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn transpose_unroll(spec: &ConvSpec, h: usize, w: usize, ho: usize, wo: usize) -> Unroll {
    Unroll {
        channels: spec.out_channels,
        in_h: ho,
        in_w: wo,
        out_h: h,
        out_w: w,
        kernel: spec.kernel,
        stride: spec.stride,
        dilation: spec.dilation,
        padding: spec.padding,
    }
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], n: usize, channels: usize, plane: usize) {
    for b in 0..n {
        for (c, bv) in bias.iter().enumerate().take(channels) {
            let start = (b * channels + c) * plane;
            out[start..start + plane].iter_mut().for_each(|v| *v += *bv);
        }
    }
}

fn channel_sums<T: Scalar>(g: &[T], n: usize, channels: usize, plane: usize) -> Vec<T> {
    let mut db = vec![T::zero(); channels];
    for b in 0..n {
        for (c, d) in db.iter_mut().enumerate() {
            let start = (b * channels + c) * plane;
            *d += g[start..start + plane].iter().copied().sum::<T>();
        }
    }
    db
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, d: &[T]) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(d).for_each(|(e, d)| *e += *d),
        slot @ None => *slot = Some(d.to_vec()),
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf; `None` when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every parameter bound into `graph`, aligned with `store`.
    pub fn params(&self, graph: &Graph<T>, store: &ParamStore<T>) -> ParamGrads<T> {
        let mut out = ParamGrads::empty(store.len());
        for (id, var) in &graph.params {
            if let Some(g) = self.wrt(*var) {
                out.set(*id, Tensor::new(store.get(*id).shape().to_vec(), g.to_vec()).expect("param shape"));
            }
        }
        out
    }
}
