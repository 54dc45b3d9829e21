use super::kernels::{self, ConvGeom};
use super::tensor::{Element, Tensor};
use super::{AutogradError, Pass};

/// Index of a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable operations. Row-wise ops (softmax family, cross-entropy,
/// KL) act along the last axis.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// `[m,k] × [k,n] → [m,n]`
    MatMul,
    /// Elementwise sum. The right operand may be broadcast when it has a
    /// single element or its shape is a trailing suffix of the left shape.
    Add,
    /// Elementwise product, same broadcast rule as [`OpKind::Add`].
    Mul,
    /// Inputs `x [N,C,H,W]`, `w [O,C,K,K]`, `b [O]`.
    Conv2d { stride: usize, padding: usize },
    /// Non-overlapping `size × size` max pooling on `[N,C,H,W]`.
    MaxPool2d { size: usize },
    /// `[N,C,H,W] → [N,C]`
    GlobalAvgPool,
    Reshape { shape: Vec<usize> },
    Relu,
    Sigmoid,
    /// Squared error summed over non-batch axes, averaged over the batch
    /// (axis 0 for rank ≥ 2, a single sample otherwise).
    Mse,
    Scale { factor: f64 },
    Mean,
    Sum,
    /// `log σ(x / T)`
    LogSoftmax { temperature: f64 },
    /// `σ(x / T)`
    Softmax { temperature: f64 },
    /// Inputs are log-probabilities `(reference, model)`; returns the
    /// batch-mean of `Σ p_ref (log p_ref − log p_model)`.
    KlDiv,
    /// Mean negative log-likelihood of `labels` under `σ(logits)`.
    CrossEntropy { labels: Vec<usize> },
    /// `[B,n] → [B,n+1]` with a trailing zero logit, turning one-logit
    /// outputs into a two-way distribution.
    PadZeroLogit,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::MaxPool2d { .. } => "maxpool2d",
            OpKind::GlobalAvgPool => "global_avg_pool",
            OpKind::Reshape { .. } => "reshape",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Mse => "mse",
            OpKind::Scale { .. } => "scale",
            OpKind::Mean => "mean",
            OpKind::Sum => "sum",
            OpKind::LogSoftmax { .. } => "log_softmax",
            OpKind::Softmax { .. } => "softmax",
            OpKind::KlDiv => "kl_div",
            OpKind::CrossEntropy { .. } => "cross_entropy",
            OpKind::PadZeroLogit => "pad_zero_logit",
        }
    }

    fn arity(&self) -> usize {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Mul | OpKind::Mse | OpKind::KlDiv => 2,
            OpKind::Conv2d { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Constant,
    Parameter,
    Op(OpKind),
}

impl NodeKind {
    fn name(&self) -> &'static str {
        match self {
            NodeKind::Constant => "constant",
            NodeKind::Parameter => "parameter",
            NodeKind::Op(op) => op.name(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    kind: NodeKind,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Append-only tape of evaluated operations.
#[derive(Debug, Clone)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every parameter leaf.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.by_node.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.by_node.get_mut(id.0).and_then(Option::take)
    }
}

fn temperature_ok(op: &'static str, t: f64) -> Result<(), AutogradError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(AutogradError::InvalidTemperature { op, value: t })
    }
}

/// Broadcast period of `rhs` against `lhs`, if the shapes are compatible.
fn broadcast_period(lhs: &[usize], rhs: &[usize]) -> Option<usize> {
    let rn: usize = rhs.iter().product();
    if rn == 1 {
        return Some(1);
    }
    if rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs {
        return Some(rn);
    }
    None
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().expect("non-empty shape")
}

fn mse_batch(shape: &[usize]) -> usize {
    if shape.len() >= 2 {
        shape[0]
    } else {
        1
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(NodeKind::Constant, Vec::new(), value, false)
    }

    /// Trainable leaf.
    pub fn parameter(&mut self, value: Tensor<T>) -> NodeId {
        self.push(NodeKind::Parameter, Vec::new(), value, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].kind.name()
    }

    pub fn is_parameter(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].kind, NodeKind::Parameter)
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, kind: NodeKind, inputs: Vec<NodeId>, value: Tensor<T>, rg: bool) -> NodeId {
        self.nodes.push(Node {
            kind,
            inputs,
            value,
            requires_grad: rg,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Evaluates `kind` on `inputs` and appends the result.
    pub fn forward_op(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId, AutogradError> {
        let op = kind.name();
        if inputs.len() != kind.arity() {
            return Err(AutogradError::Arity {
                op,
                expected: kind.arity(),
                got: inputs.len(),
            });
        }
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(AutogradError::UnknownNode(bad.0));
        }
        let value = {
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
            eval(&kind, &vals)?
        };
        if !value.is_finite() {
            return Err(AutogradError::NonFinite {
                pass: Pass::Forward,
                node: self.nodes.len(),
                op,
            });
        }
        let rg = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        Ok(self.push(NodeKind::Op(kind), inputs.to_vec(), value, rg))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Add, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Mul, &[a, b])
    }
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Conv2d { stride, padding }, &[x, w, b])
    }
    pub fn maxpool2d(&mut self, x: NodeId, size: usize) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::MaxPool2d { size }, &[x])
    }
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::GlobalAvgPool, &[x])
    }
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, AutogradError> {
        self.forward_op(
            OpKind::Reshape {
                shape: shape.to_vec(),
            },
            &[x],
        )
    }
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Relu, &[x])
    }
    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Sigmoid, &[x])
    }
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Mse, &[pred, target])
    }
    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Scale { factor }, &[x])
    }
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Mean, &[x])
    }
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Sum, &[x])
    }
    pub fn log_softmax(&mut self, x: NodeId, temperature: f64) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::LogSoftmax { temperature }, &[x])
    }
    pub fn softmax(&mut self, x: NodeId, temperature: f64) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::Softmax { temperature }, &[x])
    }
    pub fn kl_div(&mut self, reference_logp: NodeId, model_logp: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::KlDiv, &[reference_logp, model_logp])
    }
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId, AutogradError> {
        self.forward_op(
            OpKind::CrossEntropy {
                labels: labels.to_vec(),
            },
            &[logits],
        )
    }
    pub fn pad_zero_logit(&mut self, x: NodeId) -> Result<NodeId, AutogradError> {
        self.forward_op(OpKind::PadZeroLogit, &[x])
    }

    /// Reverse pass from a scalar `loss`. Every parameter leaf gets an entry;
    /// parameters the loss does not depend on get exact zeros.
    /// Gradient of `id` as a dense tensor; leaves the loss does not reach
    /// get exact zeros.
    pub fn gradient(&self, grads: &Gradients<T>, id: NodeId) -> Tensor<T> {
        grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.value(id).shape()))
    }

    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>, AutogradError> {
        let Some(loss_node) = self.nodes.get(loss.0) else {
            return Err(AutogradError::UnknownNode(loss.0));
        };
        if loss_node.value.numel() != 1 {
            return Err(AutogradError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        let mut out: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];

        for j in (0..=loss.0).rev() {
            let node = &self.nodes[j];
            let Some(g) = grads[j].take() else { continue };
            if !node.requires_grad {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(AutogradError::NonFinite {
                    pass: Pass::Backward,
                    node: j,
                    op: node.kind.name(),
                });
            }
            match &node.kind {
                NodeKind::Constant => {}
                NodeKind::Parameter => {
                    out[j] = Some(Tensor::from_parts(node.value.shape().to_vec(), g));
                }
                NodeKind::Op(op) => {
                    let vals: Vec<&Tensor<T>> =
                        node.inputs.iter().map(|id| &self.nodes[id.0].value).collect();
                    let wants: Vec<bool> = node
                        .inputs
                        .iter()
                        .map(|id| self.nodes[id.0].requires_grad)
                        .collect();
                    let input_grads = grad(op, &vals, &node.value, &g, &wants);
                    for ((id, want), ig) in node.inputs.iter().zip(wants).zip(input_grads) {
                        if !want {
                            continue;
                        }
                        let Some(ig) = ig else { continue };
                        match &mut grads[id.0] {
                            Some(acc) => {
                                for (a, v) in acc.iter_mut().zip(ig) {
                                    *a = *a + v;
                                }
                            }
                            slot @ None => *slot = Some(ig),
                        }
                    }
                }
            }
        }

        for (j, node) in self.nodes.iter().enumerate() {
            if matches!(node.kind, NodeKind::Parameter) && out[j].is_none() {
                out[j] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { by_node: out })
    }
}

fn eval<T: Element>(kind: &OpKind, x: &[&Tensor<T>]) -> Result<Tensor<T>, AutogradError> {
    let op = kind.name();
    match kind {
        OpKind::MatMul => {
            let (a, b) = (x[0], x[1]);
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(AutogradError::ShapeMismatch {
                    op,
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = vec![T::zero(); m * n];
            kernels::matmul_nn(a.data(), b.data(), &mut out, m, k, n);
            Ok(Tensor::from_parts(vec![m, n], out))
        }
        OpKind::Add | OpKind::Mul => {
            let (a, b) = (x[0], x[1]);
            let period = broadcast_period(a.shape(), b.shape()).ok_or_else(|| {
                AutogradError::ShapeMismatch {
                    op,
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                }
            })?;
            let bd = b.data();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if matches!(kind, OpKind::Add) {
                        v + bd[i % period]
                    } else {
                        v * bd[i % period]
                    }
                })
                .collect();
            Ok(Tensor::from_parts(a.shape().to_vec(), data))
        }
        OpKind::Conv2d { stride, padding } => {
            let (xs, ws, bs) = (x[0].shape(), x[1].shape(), x[2].shape());
            if !(1..=2).contains(stride) {
                return Err(AutogradError::Unsupported {
                    op,
                    detail: format!("stride {stride} not in 1..=2"),
                });
            }
            if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] {
                return Err(AutogradError::ShapeMismatch {
                    op,
                    lhs: xs.to_vec(),
                    rhs: ws.to_vec(),
                });
            }
            if ws[2] != ws[3] {
                return Err(AutogradError::Unsupported {
                    op,
                    detail: format!("kernel {}x{} is not square", ws[2], ws[3]),
                });
            }
            if bs != [ws[0]] {
                return Err(AutogradError::ShapeMismatch {
                    op,
                    lhs: ws.to_vec(),
                    rhs: bs.to_vec(),
                });
            }
            let geom = conv_geom(xs, ws, *stride, *padding);
            if xs[2] + 2 * padding < ws[2] || xs[3] + 2 * padding < ws[3] {
                return Err(AutogradError::ShapeMismatch {
                    op,
                    lhs: xs.to_vec(),
                    rhs: ws.to_vec(),
                });
            }
            let (n, o) = (xs[0], ws[0]);
            let (ho, wo) = (geom.out_height(), geom.out_width());
            let plane = ho * wo;
            let img_len = xs[1] * xs[2] * xs[3];
            let mut cols = vec![T::zero(); geom.patch_len() * plane];
            let mut out = vec![T::zero(); n * o * plane];
            for s in 0..n {
                kernels::im2col(&x[0].data()[s * img_len..(s + 1) * img_len], &geom, &mut cols);
                let dst = &mut out[s * o * plane..(s + 1) * o * plane];
                kernels::matmul_nn(x[1].data(), &cols, dst, o, geom.patch_len(), plane);
                for (oc, &bv) in x[2].data().iter().enumerate() {
                    for v in &mut dst[oc * plane..(oc + 1) * plane] {
                        *v = *v + bv;
                    }
                }
            }
            Ok(Tensor::from_parts(vec![n, o, ho, wo], out))
        }
        OpKind::MaxPool2d { size } => {
            let s = x[0].shape();
            if s.len() != 4 || *size == 0 || s[2] % size != 0 || s[3] % size != 0 {
                return Err(AutogradError::InvalidShape {
                    op,
                    shape: s.to_vec(),
                    expected: format!("[N,C,H,W] with H and W divisible by {size}"),
                });
            }
            let idx = kernels::maxpool_argmax(x[0].data(), s[0] * s[1], s[2], s[3], *size);
            let data = idx.iter().map(|&i| x[0].data()[i]).collect();
            Ok(Tensor::from_parts(vec![s[0], s[1], s[2] / size, s[3] / size], data))
        }
        OpKind::GlobalAvgPool => {
            let s = x[0].shape();
            if s.len() != 4 {
                return Err(AutogradError::InvalidShape {
                    op,
                    shape: s.to_vec(),
                    expected: "[N,C,H,W]".into(),
                });
            }
            let plane = s[2] * s[3];
            let inv = T::of(1.0 / plane as f64);
            let data = x[0]
                .data()
                .chunks(plane)
                .map(|c| c.iter().copied().sum::<T>() * inv)
                .collect();
            Ok(Tensor::from_parts(vec![s[0], s[1]], data))
        }
        OpKind::Reshape { shape } => x[0].clone().reshape(shape),
        OpKind::Relu => Ok(x[0].map(|v| if v > T::zero() { v } else { T::zero() })),
        OpKind::Sigmoid => Ok(x[0].map(sigmoid)),
        OpKind::Mse => {
            let (a, b) = (x[0], x[1]);
            if a.shape() != b.shape() {
                return Err(AutogradError::ShapeMismatch {
                    op,
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let total: T = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&p, &t)| (p - t) * (p - t))
                .sum();
            Ok(Tensor::scalar(total / T::of(mse_batch(a.shape()) as f64)))
        }
        OpKind::Scale { factor } => {
            let f = T::of(*factor);
            Ok(x[0].map(|v| v * f))
        }
        OpKind::Mean => {
            let n = T::of(x[0].numel() as f64);
            Ok(Tensor::scalar(x[0].data().iter().copied().sum::<T>() / n))
        }
        OpKind::Sum => Ok(Tensor::scalar(x[0].data().iter().copied().sum::<T>())),
        OpKind::LogSoftmax { temperature } => {
            temperature_ok(op, *temperature)?;
            Ok(rowwise(x[0], |row, out| log_softmax_row(row, *temperature, out)))
        }
        OpKind::Softmax { temperature } => {
            temperature_ok(op, *temperature)?;
            Ok(rowwise(x[0], |row, out| {
                log_softmax_row(row, *temperature, out);
                for v in out.iter_mut() {
                    *v = v.exp();
                }
            }))
        }
        OpKind::KlDiv => {
            let (r, m) = (x[0], x[1]);
            if r.shape() != m.shape() {
                return Err(AutogradError::ShapeMismatch {
                    op,
                    lhs: r.shape().to_vec(),
                    rhs: m.shape().to_vec(),
                });
            }
            let rows = r.numel() / last_dim(r.shape());
            let total: T = r
                .data()
                .iter()
                .zip(m.data())
                .map(|(&lr, &lm)| lr.exp() * (lr - lm))
                .sum();
            Ok(Tensor::scalar(total / T::of(rows as f64)))
        }
        OpKind::CrossEntropy { labels } => {
            let z = x[0];
            let classes = last_dim(z.shape());
            let rows = z.numel() / classes;
            if labels.len() != rows {
                return Err(AutogradError::ShapeMismatch {
                    op,
                    lhs: z.shape().to_vec(),
                    rhs: vec![labels.len()],
                });
            }
            if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
                return Err(AutogradError::LabelOutOfRange { label, classes });
            }
            let mut buf = vec![T::zero(); classes];
            let mut total = T::zero();
            for (row, &label) in z.data().chunks(classes).zip(labels) {
                log_softmax_row(row, 1.0, &mut buf);
                total = total - buf[label];
            }
            Ok(Tensor::scalar(total / T::of(rows as f64)))
        }
        OpKind::PadZeroLogit => {
            let s = x[0].shape();
            if s.len() != 2 {
                return Err(AutogradError::InvalidShape {
                    op,
                    shape: s.to_vec(),
                    expected: "[B,n]".into(),
                });
            }
            let mut data = Vec::with_capacity(s[0] * (s[1] + 1));
            for row in x[0].data().chunks(s[1]) {
                data.extend_from_slice(row);
                data.push(T::zero());
            }
            Ok(Tensor::from_parts(vec![s[0], s[1] + 1], data))
        }
    }
}

fn conv_geom(xs: &[usize], ws: &[usize], stride: usize, padding: usize) -> ConvGeom {
    ConvGeom {
        channels: xs[1],
        height: xs[2],
        width: xs[3],
        kernel: ws[2],
        stride,
        padding,
    }
}

#[inline]
fn sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// `out = row/T − logsumexp(row/T)`, max-shifted.
fn log_softmax_row<T: Element>(row: &[T], temperature: f64, out: &mut [T]) {
    let inv_t = T::of(1.0 / temperature);
    let max = row
        .iter()
        .fold(T::neg_infinity(), |m, &v| if v > m { v } else { m })
        * inv_t;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v * inv_t - max;
    }
    let log_norm = out.iter().map(|&s| s.exp()).sum::<T>().ln();
    for o in out.iter_mut() {
        *o = *o - log_norm;
    }
}

fn rowwise<T: Element>(x: &Tensor<T>, f: impl Fn(&[T], &mut [T])) -> Tensor<T> {
    let n = last_dim(x.shape());
    let mut data = vec![T::zero(); x.numel()];
    for (row, out) in x.data().chunks(n).zip(data.chunks_mut(n)) {
        f(row, out);
    }
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Input gradients for one node given its output gradient `g`.
fn grad<T: Element>(
    kind: &OpKind,
    x: &[&Tensor<T>],
    out: &Tensor<T>,
    g: &[T],
    wants: &[bool],
) -> Vec<Option<Vec<T>>> {
    match kind {
        OpKind::MatMul => {
            let (a, b) = (x[0], x[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let da = wants[0].then(|| {
                let mut da = vec![T::zero(); m * k];
                kernels::matmul_nt(g, b.data(), &mut da, m, n, k);
                da
            });
            let db = wants[1].then(|| {
                let mut db = vec![T::zero(); k * n];
                kernels::matmul_tn(a.data(), g, &mut db, m, k, n);
                db
            });
            vec![da, db]
        }
        OpKind::Add => {
            let period = x[1].numel();
            let db = wants[1].then(|| {
                let mut db = vec![T::zero(); period];
                for (i, &v) in g.iter().enumerate() {
                    db[i % period] = db[i % period] + v;
                }
                db
            });
            vec![wants[0].then(|| g.to_vec()), db]
        }
        OpKind::Mul => {
            let (a, b) = (x[0].data(), x[1].data());
            let period = b.len();
            let da = wants[0].then(|| g.iter().enumerate().map(|(i, &v)| v * b[i % period]).collect());
            let db = wants[1].then(|| {
                let mut db = vec![T::zero(); period];
                for (i, &v) in g.iter().enumerate() {
                    db[i % period] = db[i % period] + v * a[i];
                }
                db
            });
            vec![da, db]
        }
        OpKind::Conv2d { stride, padding } => {
            let (xs, ws) = (x[0].shape(), x[1].shape());
            let geom = conv_geom(xs, ws, *stride, *padding);
            let (n, o) = (xs[0], ws[0]);
            let plane = geom.out_height() * geom.out_width();
            let patch = geom.patch_len();
            let img_len = xs[1] * xs[2] * xs[3];
            let mut dx = wants[0].then(|| vec![T::zero(); x[0].numel()]);
            let mut dw = wants[1].then(|| vec![T::zero(); x[1].numel()]);
            let mut db = wants[2].then(|| vec![T::zero(); o]);
            let mut cols = vec![T::zero(); patch * plane];
            let mut dcols = vec![T::zero(); patch * plane];
            for s in 0..n {
                let gs = &g[s * o * plane..(s + 1) * o * plane];
                if let Some(dw) = dw.as_mut() {
                    kernels::im2col(&x[0].data()[s * img_len..(s + 1) * img_len], &geom, &mut cols);
                    kernels::matmul_nt(gs, &cols, dw, o, plane, patch);
                }
                if let Some(dx) = dx.as_mut() {
                    dcols.iter_mut().for_each(|v| *v = T::zero());
                    kernels::matmul_tn(x[1].data(), gs, &mut dcols, o, patch, plane);
                    kernels::col2im(&dcols, &geom, &mut dx[s * img_len..(s + 1) * img_len]);
                }
                if let Some(db) = db.as_mut() {
                    for (oc, d) in db.iter_mut().enumerate() {
                        *d = *d + gs[oc * plane..(oc + 1) * plane].iter().copied().sum::<T>();
                    }
                }
            }
            vec![dx, dw, db]
        }
        OpKind::MaxPool2d { size } => {
            let s = x[0].shape();
            let idx = kernels::maxpool_argmax(x[0].data(), s[0] * s[1], s[2], s[3], *size);
            let mut dx = vec![T::zero(); x[0].numel()];
            for (&i, &v) in idx.iter().zip(g) {
                dx[i] = dx[i] + v;
            }
            vec![Some(dx)]
        }
        OpKind::GlobalAvgPool => {
            let s = x[0].shape();
            let plane = s[2] * s[3];
            let inv = T::of(1.0 / plane as f64);
            let dx = g
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v * inv, plane))
                .collect();
            vec![Some(dx)]
        }
        OpKind::Reshape { .. } => vec![Some(g.to_vec())],
        OpKind::Relu => vec![Some(
            x[0].data()
                .iter()
                .zip(g)
                .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                .collect(),
        )],
        OpKind::Sigmoid => vec![Some(
            out.data()
                .iter()
                .zip(g)
                .map(|(&s, &d)| d * s * (T::one() - s))
                .collect(),
        )],
        OpKind::Mse => {
            let scale = T::of(2.0 / mse_batch(x[0].shape()) as f64) * g[0];
            let diff: Vec<T> = x[0]
                .data()
                .iter()
                .zip(x[1].data())
                .map(|(&p, &t)| (p - t) * scale)
                .collect();
            let dt = wants[1].then(|| diff.iter().map(|&v| -v).collect());
            vec![wants[0].then_some(diff), dt]
        }
        OpKind::Scale { factor } => {
            let f = T::of(*factor);
            vec![Some(g.iter().map(|&v| v * f).collect())]
        }
        OpKind::Mean => {
            let v = g[0] / T::of(x[0].numel() as f64);
            vec![Some(vec![v; x[0].numel()])]
        }
        OpKind::Sum => vec![Some(vec![g[0]; x[0].numel()])],
        OpKind::LogSoftmax { temperature } => {
            let n = last_dim(out.shape());
            let inv_t = T::of(1.0 / temperature);
            let mut dx = vec![T::zero(); out.numel()];
            for ((y, gr), d) in out.data().chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                let gsum: T = gr.iter().copied().sum();
                for ((dv, &yv), &gv) in d.iter_mut().zip(y).zip(gr) {
                    *dv = (gv - yv.exp() * gsum) * inv_t;
                }
            }
            vec![Some(dx)]
        }
        OpKind::Softmax { temperature } => {
            let n = last_dim(out.shape());
            let inv_t = T::of(1.0 / temperature);
            let mut dx = vec![T::zero(); out.numel()];
            for ((p, gr), d) in out.data().chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                let dot: T = p.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                for ((dv, &pv), &gv) in d.iter_mut().zip(p).zip(gr) {
                    *dv = pv * (gv - dot) * inv_t;
                }
            }
            vec![Some(dx)]
        }
        OpKind::KlDiv => {
            let rows = x[0].numel() / last_dim(x[0].shape());
            let scale = g[0] / T::of(rows as f64);
            let (r, m) = (x[0].data(), x[1].data());
            let dr = wants[0].then(|| {
                r.iter()
                    .zip(m)
                    .map(|(&lr, &lm)| scale * lr.exp() * (lr - lm + T::one()))
                    .collect()
            });
            let dm = wants[1].then(|| r.iter().map(|&lr| -scale * lr.exp()).collect());
            vec![dr, dm]
        }
        OpKind::CrossEntropy { labels } => {
            let classes = last_dim(x[0].shape());
            let scale = g[0] / T::of(labels.len() as f64);
            let mut dx = vec![T::zero(); x[0].numel()];
            for ((row, d), &label) in x[0].data().chunks(classes).zip(dx.chunks_mut(classes)).zip(labels) {
                log_softmax_row(row, 1.0, d);
                for (c, v) in d.iter_mut().enumerate() {
                    let onehot = if c == label { T::one() } else { T::zero() };
                    *v = (v.exp() - onehot) * scale;
                }
            }
            vec![Some(dx)]
        }
        OpKind::PadZeroLogit => {
            let n = x[0].shape()[1];
            let dx = g
                .chunks(n + 1)
                .flat_map(|row| row[..n].iter().copied())
                .collect();
            vec![Some(dx)]
        }
    }
}
