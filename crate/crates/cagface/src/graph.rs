//! Reverse-mode differentiation over the op set the network needs.
//!
//! A [`Tape`] records eagerly-executed ops in topological order; [`Tape::backward`]
//! walks the record in reverse, accumulating gradients additively so skip
//! connections (diamond graphs) sum their per-path contributions.

use crate::conv::{conv2d, conv2d_backward, ConvParams};
use crate::error::{Error, Result};
use crate::loss::{huber_deriv, huber_loss, huber_value};
use crate::ops;
use crate::rearrange::{depth_to_space, space_to_depth};
use crate::scalar::Scalar;
use crate::tensor::{check_same_shape, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

/// One conv layer's parameters, gradient buffers, and trainability flag.
#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub name: String,
    pub conv: ConvParams<T>,
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn add_conv(&mut self, name: impl Into<String>, conv: ConvParams<T>) -> ParamId {
        let grad_w = vec![T::zero(); conv.weights.len()];
        let grad_b = vec![T::zero(); conv.bias.len()];
        self.entries.push(ParamEntry {
            name: name.into(),
            conv,
            grad_w,
            grad_b,
            trainable: true,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut ParamEntry<T> {
        &mut self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut ParamEntry<T>)> {
        self.entries
            .iter_mut()
            .enumerate()
            .map(|(i, e)| (ParamId(i), e))
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad_w.fill(T::zero());
            e.grad_b.fill(T::zero());
        }
    }

    pub fn total_scalar_count(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.conv.weights.len() + e.conv.bias.len())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    conv: ConvParams {
                        kh: e.conv.kh,
                        kw: e.conv.kw,
                        c_in: e.conv.c_in,
                        c_out: e.conv.c_out,
                        weights: e.conv.weights.iter().map(|v| U::of_f64(v.as_f64())).collect(),
                        bias: e.conv.bias.iter().map(|v| U::of_f64(v.as_f64())).collect(),
                    },
                    grad_w: vec![U::zero(); e.conv.weights.len()],
                    grad_b: vec![U::zero(); e.conv.bias.len()],
                    trainable: e.trainable,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv { x: NodeId, p: ParamId },
    Relu { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Concat { a: NodeId, b: NodeId },
    SpaceToDepth { x: NodeId, r: usize },
    DepthToSpace { x: NodeId, r: usize },
    HuberMean { pred: NodeId, target: NodeId, delta: f64 },
    SumAll { x: NodeId },
    WeightedSum { terms: Vec<(NodeId, f64)> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
}

/// Tape of eagerly executed ops; node ids are topologically ordered.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn conv2d(&mut self, params: &ParamSet<T>, p: ParamId, x: NodeId) -> Result<NodeId> {
        let out = conv2d(self.value(x), &params.entry(p).conv)?;
        Ok(self.push(out, Op::Conv { x, p }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::mul_elementwise(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    pub fn space_to_depth(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let out = space_to_depth(self.value(x), r)?;
        Ok(self.push(out, Op::SpaceToDepth { x, r }))
    }

    pub fn depth_to_space(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let out = depth_to_space(self.value(x), r)?;
        Ok(self.push(out, Op::DepthToSpace { x, r }))
    }

    pub fn huber_mean(&mut self, pred: NodeId, target: NodeId, delta: f64) -> Result<NodeId> {
        let loss = huber_loss(self.value(pred), self.value(target), T::of_f64(delta))?;
        let value = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![loss])?;
        Ok(self.push(value, Op::HuberMean { pred, target, delta }))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let mut acc = T::zero();
        for &v in self.value(x).data() {
            acc += v;
        }
        let value = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![acc]).unwrap();
        self.push(value, Op::SumAll { x })
    }

    /// Scalar combination sum_i w_i * terms_i; every term must be scalar.
    pub fn weighted_sum(&mut self, terms: Vec<(NodeId, f64)>) -> Result<NodeId> {
        let mut acc = T::zero();
        for &(id, w) in &terms {
            acc += self.value(id).scalar_value()? * T::of_f64(w);
        }
        let value = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![acc])?;
        Ok(self.push(value, Op::WeightedSum { terms }))
    }

    /// Reverse sweep from a scalar loss node. Parameter gradients accumulate
    /// into `params`' grad buffers (on top of whatever is there already);
    /// node gradients are returned for inspection.
    pub fn backward(&self, loss: NodeId, params: &mut ParamSet<T>) -> Result<NodeGrads<T>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(Shape::new(1, 1, 1, 1), T::one()));

        for i in (0..self.nodes.len()).rev() {
            let Some(gy) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(gy);
                    continue;
                }
                Op::Conv { x, p } => {
                    let entry = params.entry(*p);
                    let (gx, gw, gb) = conv2d_backward(self.value(*x), &entry.conv, &gy)?;
                    let entry = params.entry_mut(*p);
                    for (a, b) in entry.grad_w.iter_mut().zip(&gw) {
                        *a += *b;
                    }
                    for (a, b) in entry.grad_b.iter_mut().zip(&gb) {
                        *a += *b;
                    }
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::Relu { x } => {
                    let xin = self.value(*x);
                    let data = xin
                        .data()
                        .iter()
                        .zip(gy.data())
                        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                        .collect();
                    accumulate(&mut grads[x.0], Tensor::from_vec(xin.shape(), data)?)?;
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[a.0], gy.clone())?;
                    accumulate(&mut grads[b.0], gy)?;
                }
                Op::Mul { a, b } => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = {
                        // gy * b, with b possibly single-channel broadcast
                        ops::mul_elementwise(&gy, vb)?
                    };
                    accumulate(&mut grads[a.0], ga)?;
                    let gb = if va.shape() == vb.shape() {
                        ops::mul_elementwise(&gy, va)?
                    } else {
                        // sum over broadcast channels
                        let s = va.shape();
                        let mut out = Tensor::zeros(vb.shape());
                        for bn in 0..s.n {
                            for c in 0..s.c {
                                for y in 0..s.h {
                                    for x in 0..s.w {
                                        let v = out.at(bn, 0, y, x)
                                            + gy.at(bn, c, y, x) * va.at(bn, c, y, x);
                                        out.set(bn, 0, y, x, v);
                                    }
                                }
                            }
                        }
                        out
                    };
                    accumulate(&mut grads[b.0], gb)?;
                }
                Op::Concat { a, b } => {
                    let ca = self.value(*a).shape().c;
                    let total = gy.shape().c;
                    accumulate(&mut grads[a.0], gy.slice_channels(0, ca)?)?;
                    accumulate(&mut grads[b.0], gy.slice_channels(ca, total)?)?;
                }
                Op::SpaceToDepth { x, r } => {
                    accumulate(&mut grads[x.0], depth_to_space(&gy, *r)?)?;
                }
                Op::DepthToSpace { x, r } => {
                    accumulate(&mut grads[x.0], space_to_depth(&gy, *r)?)?;
                }
                Op::HuberMean { pred, target, delta } => {
                    let up = gy.scalar_value()?;
                    let (vp, vt) = (self.value(*pred), self.value(*target));
                    check_same_shape(vp, vt)?;
                    let n = T::of_f64(vp.shape().len() as f64);
                    let delta = T::of_f64(*delta);
                    let scale = up / n;
                    let mut gp = Vec::with_capacity(vp.shape().len());
                    let mut gt = Vec::with_capacity(vp.shape().len());
                    for (&p, &t) in vp.data().iter().zip(vt.data()) {
                        let dd = huber_deriv(t - p, delta);
                        gp.push(-dd * scale);
                        gt.push(dd * scale);
                    }
                    accumulate(&mut grads[pred.0], Tensor::from_vec(vp.shape(), gp)?)?;
                    accumulate(&mut grads[target.0], Tensor::from_vec(vt.shape(), gt)?)?;
                }
                Op::SumAll { x } => {
                    let up = gy.scalar_value()?;
                    let xin = self.value(*x);
                    accumulate(&mut grads[x.0], Tensor::filled(xin.shape(), up))?;
                }
                Op::WeightedSum { terms } => {
                    let up = gy.scalar_value()?;
                    for &(id, w) in terms {
                        let g = Tensor::filled(Shape::new(1, 1, 1, 1), up * T::of_f64(w));
                        accumulate(&mut grads[id.0], g)?;
                    }
                }
            }
        }
        Ok(NodeGrads { grads })
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        None => *slot = Some(g),
        Some(existing) => {
            check_same_shape(existing, &g)?;
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
    }
    Ok(())
}

/// Per-node gradients produced by one backward sweep.
pub struct NodeGrads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> NodeGrads<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Re-evaluation of huber_value used by tape tests.
pub fn huber_scalar<T: Scalar>(d: T, delta: T) -> T {
    huber_value(d, delta)
}
