//! Recording tape and the differentiable operations built on it.

use crate::error::{shape_err, NumericsError, Result};
use crate::float::{gemm, Float, MatRef};
use crate::kernels::{self, ConvGeometry};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`]. Only meaningful for the tape that
/// produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, geom: ConvGeometry },
    MaxPool2 { input: Var, argmax: Vec<u32> },
    AvgPool2 { input: Var },
    UpsampleNearest2 { input: Var },
    Relu { input: Var },
    LeakyRelu { input: Var, slope: T },
    Tanh { input: Var },
    Concat { inputs: Vec<Var> },
    Add { a: Var, b: Var },
    Scale { input: Var, factor: T },
    AddScalar { input: Var },
    GlobalAvgPool { input: Var },
    Linear { input: Var, weight: Var, bias: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    FrobeniusSq { pred: Var, target: Var },
    L1 { pred: Var, target: Var },
    MseConst { input: Var, target: T },
    Sum { input: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Ordered record of operations. Nodes are appended in evaluation order, so
/// every node's inputs precede it and a reverse sweep is a valid
/// topological traversal.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn finite<T: Float>(op: &'static str, t: Tensor<T>) -> Result<Tensor<T>> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(NumericsError::NonFinite { op })
    }
}

fn same_shape<T: Float>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Leaves with `requires_grad` receive gradients
    /// from [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        let value = finite("leaf", value)?;
        Ok(self.push(value, Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// A gradient-free copy of `v`'s value.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        let value = finite(op_name, value)?;
        let rg = self.any_grad(inputs);
        Ok(self.push(value, op, rg))
    }

    /// Cross-correlation (no kernel flip) with symmetric zero padding.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeometry::new(self.value(input), self.value(weight), self.value(bias), stride, pad)?;
        let out = kernels::conv2d_forward(&geom, self.value(input), self.value(weight), self.value(bias));
        self.record("conv2d", out, Op::Conv2d { input, weight, bias, geom }, &[input, weight, bias])
    }

    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let (out, argmax) = kernels::max_pool2_forward(self.value(input))?;
        self.record("max_pool2", out, Op::MaxPool2 { input, argmax }, &[input])
    }

    pub fn avg_pool2(&mut self, input: Var) -> Result<Var> {
        let out = kernels::avg_pool2_forward(self.value(input))?;
        self.record("avg_pool2", out, Op::AvgPool2 { input }, &[input])
    }

    pub fn upsample_nearest2(&mut self, input: Var) -> Result<Var> {
        let out = kernels::upsample_nearest2_forward(self.value(input))?;
        self.record("upsample_nearest2", out, Op::UpsampleNearest2 { input }, &[input])
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let out = self.value(input).map(|v| if v > T::zero() { v } else { T::zero() });
        self.record("relu", out, Op::Relu { input }, &[input])
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Result<Var> {
        let slope = T::from_f64_lossy(slope);
        let out = self.value(input).map(|v| if v > T::zero() { v } else { v * slope });
        self.record("leaky_relu", out, Op::LeakyRelu { input, slope }, &[input])
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        let out = self.value(input).map(|v| v.tanh());
        self.record("tanh", out, Op::Tanh { input }, &[input])
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
        let out = kernels::concat_channels_forward(&values)?;
        self.record("concat_channels", out, Op::Concat { inputs: inputs.to_vec() }, inputs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.record("add", out, Op::Add { a, b }, &[a, b])
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let factor = T::from_f64_lossy(factor);
        let out = self.value(input).map(|v| v * factor);
        self.record("scale", out, Op::Scale { input, factor }, &[input])
    }

    pub fn add_scalar(&mut self, input: Var, offset: f64) -> Result<Var> {
        let offset = T::from_f64_lossy(offset);
        let out = self.value(input).map(|v| v + offset);
        self.record("add_scalar", out, Op::AddScalar { input }, &[input])
    }

    /// `[N, C, H, W] -> [N, C]`, mean over each spatial plane.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4("global_avg_pool")?;
        let hw = h * w;
        let inv = T::one() / T::from_usize(hw).unwrap();
        let data: Vec<T> = self
            .value(input)
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        let out = Tensor::new(vec![n, c], data)?;
        self.record("global_avg_pool", out, Op::GlobalAvgPool { input }, &[input])
    }

    /// `x[N, F] * W[O, F]^T + b[O]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let wt = self.value(weight);
        let b = self.value(bias);
        let (n, f) = match x.shape() {
            [n, f] => (*n, *f),
            s => return Err(shape_err("linear", format!("input must be 2-D, got {s:?}"))),
        };
        let o = match wt.shape() {
            [o, wf] if *wf == f => *o,
            s => return Err(shape_err("linear", format!("weight {s:?} does not match {f} features"))),
        };
        if b.shape() != [o] {
            return Err(shape_err("linear", format!("bias {:?} vs {o} outputs", b.shape())));
        }
        let mut out = Vec::with_capacity(n * o);
        for _ in 0..n {
            out.extend_from_slice(b.data());
        }
        gemm(MatRef::new(x.data(), n, f), MatRef::new(wt.data(), o, f).t(), T::one(), &mut out);
        let out = Tensor::new(vec![n, o], out)?;
        self.record("linear", out, Op::Linear { input, weight, bias }, &[input, weight, bias])
    }

    /// Mean softmax cross-entropy of `logits[N, C]` against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (n, c) = match x.shape() {
            [n, c] => (*n, *c),
            s => return Err(shape_err("softmax_cross_entropy", format!("logits must be 2-D, got {s:?}"))),
        };
        if labels.len() != n || labels.iter().any(|&l| l >= c) {
            return Err(shape_err("softmax_cross_entropy", format!("{} labels for {n}x{c} logits", labels.len())));
        }
        let mut probs = Vec::with_capacity(n * c);
        let mut loss = T::zero();
        for (row, &label) in x.data().chunks(c).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
            let total: T = exps.iter().copied().sum();
            loss += total.ln() - (row[label] - max);
            probs.extend(exps.into_iter().map(|e| e / total));
        }
        let out = Tensor::scalar(loss / T::from_usize(n).unwrap());
        self.record(
            "softmax_cross_entropy",
            out,
            Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs },
            &[logits],
        )
    }

    /// Squared Frobenius norm of `pred - target`, divided by the batch size.
    pub fn frobenius_sq_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        same_shape("frobenius_sq_loss", p, t)?;
        let n = batch_of(p);
        let s: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let out = Tensor::scalar(s / T::from_usize(n).unwrap());
        self.record("frobenius_sq_loss", out, Op::FrobeniusSq { pred, target }, &[pred, target])
    }

    /// Mean absolute difference over all elements.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        same_shape("l1_loss", p, t)?;
        let s: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
        let out = Tensor::scalar(s / T::from_usize(p.len().max(1)).unwrap());
        self.record("l1_loss", out, Op::L1 { pred, target }, &[pred, target])
    }

    /// Mean squared difference between every element and a constant target.
    pub fn mse_to_const(&mut self, input: Var, target: f64) -> Result<Var> {
        let target = T::from_f64_lossy(target);
        let x = self.value(input);
        let s: T = x.data().iter().map(|&a| (a - target) * (a - target)).sum();
        let out = Tensor::scalar(s / T::from_usize(x.len().max(1)).unwrap());
        self.record("mse_to_const", out, Op::MseConst { input, target }, &[input])
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(input).sum());
        self.record("sum", out, Op::Sum { input }, &[input])
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate (`+=`)
    /// across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(NumericsError::NotScalar(loss_value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::ones(loss_value.shape().to_vec()));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match node.grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (var, contrib) in self.local_grads(i, &g) {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match adj[var.0].as_mut() {
                    Some(acc) => acc.add_assign(&contrib),
                    None => adj[var.0] = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient contributions of node `i` to its inputs given its adjoint `g`.
    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, geom } => {
                let want = [self.rg(*input), self.rg(*weight), self.rg(*bias)];
                let [dx, dw, db] =
                    kernels::conv2d_backward(geom, self.value(*input), self.value(*weight), g, want);
                for (v, d) in [(*input, dx), (*weight, dw), (*bias, db)] {
                    if let Some(d) = d {
                        out.push((v, d));
                    }
                }
            }
            Op::MaxPool2 { input, argmax } => {
                let mut dx = Tensor::zeros(self.value(*input).shape().to_vec());
                let d = dx.data_mut();
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    d[src as usize] += gv;
                }
                out.push((*input, dx));
            }
            Op::AvgPool2 { input } => {
                out.push((*input, kernels::avg_pool2_backward(self.value(*input).shape(), g)));
            }
            Op::UpsampleNearest2 { input } => {
                out.push((*input, kernels::upsample_nearest2_backward(self.value(*input).shape(), g)));
            }
            Op::Relu { input } => {
                out.push((*input, zip_map(g, y, |gv, yv| if yv > T::zero() { gv } else { T::zero() })));
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input);
                out.push((*input, zip_map(g, x, |gv, xv| if xv > T::zero() { gv } else { gv * *slope })));
            }
            Op::Tanh { input } => {
                out.push((*input, zip_map(g, y, |gv, yv| gv * (T::one() - yv * yv))));
            }
            Op::Concat { inputs } => {
                let shapes: Vec<Vec<usize>> = inputs.iter().map(|v| self.value(*v).shape().to_vec()).collect();
                for (v, d) in inputs.iter().zip(kernels::concat_channels_backward(&shapes, g)) {
                    out.push((*v, d));
                }
            }
            Op::Add { a, b } => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Scale { input, factor } => {
                out.push((*input, g.map(|v| v * *factor)));
            }
            Op::AddScalar { input } => {
                out.push((*input, g.clone()));
            }
            Op::GlobalAvgPool { input } => {
                let shape = self.value(*input).shape().to_vec();
                let hw = shape[2] * shape[3];
                let inv = T::one() / T::from_usize(hw).unwrap();
                let mut d = Vec::with_capacity(g.len() * hw);
                for &gv in g.data() {
                    d.extend(std::iter::repeat_n(gv * inv, hw));
                }
                out.push((*input, Tensor::new(shape, d).expect("gap grad")));
            }
            Op::Linear { input, weight, bias } => {
                let x = self.value(*input);
                let wt = self.value(*weight);
                let (n, f) = (x.shape()[0], x.shape()[1]);
                let o = wt.shape()[0];
                if self.rg(*input) {
                    let mut dx = vec![T::zero(); n * f];
                    gemm(MatRef::new(g.data(), n, o), MatRef::new(wt.data(), o, f), T::zero(), &mut dx);
                    out.push((*input, Tensor::new(vec![n, f], dx).expect("linear dx")));
                }
                if self.rg(*weight) {
                    let mut dw = vec![T::zero(); o * f];
                    gemm(MatRef::new(g.data(), n, o).t(), MatRef::new(x.data(), n, f), T::zero(), &mut dw);
                    out.push((*weight, Tensor::new(vec![o, f], dw).expect("linear dw")));
                }
                if self.rg(*bias) {
                    let mut db = vec![T::zero(); o];
                    for row in g.data().chunks(o) {
                        for (acc, &v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    out.push((*bias, Tensor::new(vec![o], db).expect("linear db")));
                }
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let c = probs.len() / labels.len();
                let scale = g.item() / T::from_usize(labels.len()).unwrap();
                let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &label) in labels.iter().enumerate() {
                    d[row * c + label] -= scale;
                }
                out.push((*logits, Tensor::new(self.value(*logits).shape().to_vec(), d).expect("ce grad")));
            }
            Op::FrobeniusSq { pred, target } => {
                let (p, t) = (self.value(*pred), self.value(*target));
                let k = T::from_f64_lossy(2.0) * g.item() / T::from_usize(batch_of(p)).unwrap();
                let d = zip_map(p, t, |a, b| (a - b) * k);
                if self.rg(*target) {
                    out.push((*target, d.map(|v| -v)));
                }
                out.push((*pred, d));
            }
            Op::L1 { pred, target } => {
                let (p, t) = (self.value(*pred), self.value(*target));
                let k = g.item() / T::from_usize(p.len().max(1)).unwrap();
                let d = zip_map(p, t, |a, b| sign(a - b) * k);
                if self.rg(*target) {
                    out.push((*target, d.map(|v| -v)));
                }
                out.push((*pred, d));
            }
            Op::MseConst { input, target } => {
                let x = self.value(*input);
                let k = T::from_f64_lossy(2.0) * g.item() / T::from_usize(x.len().max(1)).unwrap();
                out.push((*input, x.map(|a| (a - *target) * k)));
            }
            Op::Sum { input } => {
                out.push((*input, Tensor::full(self.value(*input).shape().to_vec(), g.item())));
            }
        }
        out
    }
}

/// Batch size of a 4-D `[N, C, H, W]` tensor; anything else counts as one sample.
fn batch_of<T: Float>(t: &Tensor<T>) -> usize {
    if t.shape().len() == 4 {
        t.shape()[0].max(1)
    } else {
        1
    }
}

fn sign<T: Float>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn zip_map<T: Float>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map shape")
}
