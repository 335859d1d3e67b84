//! Computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so a node's id is always larger
//! than the ids of its inputs and reverse id order is a valid topological
//! order for the backward sweep.

use crate::error::{Error, Result};

use super::kernels;

pub type NodeId = usize;

/// Dense row-major array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "shape {shape:?} must be non-empty with positive dimensions"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {numel} values but {} were given",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel]).expect("zero-sized shape")
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }
}

/// Operation kinds and their attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// `[a (m x k), b (k x n)] -> m x n`
    MatMul,
    /// `[x (c x h x w), weight (o x c x k x k), bias (o)] -> o x h x w`,
    /// stride 1 with zero padding that preserves the spatial size.
    Conv2d,
    /// Elementwise sum of two equally shaped tensors.
    Add,
    LeakyRelu { slope: f64 },
    Sigmoid,
    /// Softmax over the rows of each column of a 2-D tensor.
    SoftmaxColumns,
    /// Mean squared difference of two equally shaped tensors, as a scalar.
    Mse,
    Reshape { shape: Vec<usize> },
    Concat { axis: usize },
    Scale { factor: f64 },
    /// Sum over columns of the cross-entropy between the column softmax of a
    /// 2-D logit tensor and a one-hot target given by a row index per column.
    ColumnCrossEntropy { targets: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Option<Op>,
    inputs: Vec<NodeId>,
    requires_grad: bool,
    // Softmax probabilities cached by ColumnCrossEntropy.
    cache: Vec<f64>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node id.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Vec<f64>> {
        self.grads.get_mut(id).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: receives a gradient.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, None, Vec::new(), true, Vec::new())
    }

    /// Constant leaf: inputs and targets.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, None, Vec::new(), false, Vec::new())
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn op(&self, id: NodeId) -> Option<&Op> {
        self.nodes[id].op.as_ref()
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].inputs
    }

    fn push(
        &mut self,
        value: Tensor,
        op: Option<Op>,
        inputs: Vec<NodeId>,
        requires_grad: bool,
        cache: Vec<f64>,
    ) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            inputs,
            requires_grad,
            cache,
        });
        self.nodes.len() - 1
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward_op(Op::MatMul, &[a, b])
    }

    pub fn conv2d(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Conv2d, &[x, weight, bias])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Add, &[a, b])
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        self.forward_op(Op::LeakyRelu { slope }, &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Sigmoid, &[x])
    }

    pub fn softmax_columns(&mut self, x: NodeId) -> Result<NodeId> {
        self.forward_op(Op::SoftmaxColumns, &[x])
    }

    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward_op(Op::Mse, &[a, b])
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.forward_op(Op::Reshape { shape }, &[x])
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId> {
        self.forward_op(Op::Concat { axis }, xs)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        self.forward_op(Op::Scale { factor }, &[x])
    }

    pub fn column_cross_entropy(&mut self, logits: NodeId, targets: Vec<usize>) -> Result<NodeId> {
        self.forward_op(Op::ColumnCrossEntropy { targets }, &[logits])
    }

    /// Evaluates `op` on existing nodes and records it for the backward pass.
    pub fn forward_op(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if let Some(&bad) = inputs.iter().find(|&&id| id >= self.nodes.len()) {
            return Err(Error::Contract(format!("unknown node id {bad}")));
        }
        let arity = match &op {
            Op::MatMul | Op::Add | Op::Mse => Some(2),
            Op::Conv2d => Some(3),
            Op::Concat { .. } => None,
            _ => Some(1),
        };
        match arity {
            Some(n) if n != inputs.len() => {
                return Err(Error::Contract(format!(
                    "{op:?} takes {n} inputs, got {}",
                    inputs.len()
                )))
            }
            None if inputs.is_empty() => {
                return Err(Error::Contract("concat needs at least one input".into()))
            }
            _ => {}
        }

        let vals: Vec<&Tensor> = inputs.iter().map(|&id| &self.nodes[id].value).collect();
        let mut cache = Vec::new();
        let value = match &op {
            Op::MatMul => {
                let (m, k) = as_matrix(vals[0], "matmul lhs")?;
                let (k2, n) = as_matrix(vals[1], "matmul rhs")?;
                if k != k2 {
                    return Err(Error::Shape(format!(
                        "matmul inner dimensions differ: {m}x{k} * {k2}x{n}"
                    )));
                }
                let mut out = vec![0.0; m * n];
                kernels::matmul(&vals[0].data, &vals[1].data, &mut out, m, k, n);
                Tensor::new(vec![m, n], out)?
            }
            Op::Conv2d => {
                let dims = conv_dims(vals[0], vals[1], vals[2])?;
                let mut out = vec![0.0; dims.out_ch * dims.h * dims.w];
                kernels::conv2d(&vals[0].data, &vals[1].data, &vals[2].data, &mut out, &dims);
                Tensor::new(vec![dims.out_ch, dims.h, dims.w], out)?
            }
            Op::Add => {
                same_shape(vals[0], vals[1], "add")?;
                let out = vals[0]
                    .data
                    .iter()
                    .zip(&vals[1].data)
                    .map(|(a, b)| a + b)
                    .collect();
                Tensor::new(vals[0].shape.clone(), out)?
            }
            Op::LeakyRelu { slope } => {
                let out = vals[0]
                    .data
                    .iter()
                    .map(|&x| if x > 0.0 { x } else { slope * x })
                    .collect();
                Tensor::new(vals[0].shape.clone(), out)?
            }
            Op::Sigmoid => {
                let out = vals[0].data.iter().map(|&x| sigmoid(x)).collect();
                Tensor::new(vals[0].shape.clone(), out)?
            }
            Op::SoftmaxColumns => {
                let (r, c) = as_matrix(vals[0], "softmax_columns")?;
                let mut out = vals[0].data.clone();
                softmax_columns_in_place(&mut out, r, c);
                Tensor::new(vec![r, c], out)?
            }
            Op::Mse => {
                same_shape(vals[0], vals[1], "mse")?;
                let n = vals[0].numel() as f64;
                let sum: f64 = vals[0]
                    .data
                    .iter()
                    .zip(&vals[1].data)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Tensor::scalar(sum / n)
            }
            Op::Reshape { shape } => Tensor::new(shape.clone(), vals[0].data.clone())
                .map_err(|e| Error::Shape(format!("reshape {:?} -> {shape:?}: {e}", vals[0].shape)))?,
            Op::Concat { axis } => concat_forward(&vals, *axis)?,
            Op::Scale { factor } => {
                let out = vals[0].data.iter().map(|x| x * factor).collect();
                Tensor::new(vals[0].shape.clone(), out)?
            }
            Op::ColumnCrossEntropy { targets } => {
                let (r, c) = as_matrix(vals[0], "column cross-entropy logits")?;
                if targets.len() != c {
                    return Err(Error::Shape(format!(
                        "{} targets for {c} logit columns",
                        targets.len()
                    )));
                }
                if let Some(&t) = targets.iter().find(|&&t| t >= r) {
                    return Err(Error::Shape(format!("target row {t} out of range for {r} rows")));
                }
                let mut probs = vals[0].data.clone();
                softmax_columns_in_place(&mut probs, r, c);
                let logits = &vals[0].data;
                let mut loss = 0.0;
                for (j, &t) in targets.iter().enumerate() {
                    let max = (0..r).map(|i| logits[i * c + j]).fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + (0..r).map(|i| (logits[i * c + j] - max).exp()).sum::<f64>().ln();
                    loss += lse - logits[t * c + j];
                }
                cache = probs;
                Tensor::scalar(loss)
            }
        };

        let requires_grad = inputs.iter().any(|&id| self.nodes[id].requires_grad);
        Ok(self.push(value, Some(op), inputs.to_vec(), requires_grad, cache))
    }

    /// Reverse sweep from a scalar `loss`. Every node on a path from a
    /// trainable leaf to `loss` receives a gradient; `d loss / d loss = 1`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if loss >= self.nodes.len() {
            return Err(Error::Contract(format!("unknown node id {loss}")));
        }
        if !self.nodes[loss].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node {loss} has shape {:?}",
                self.nodes[loss].value.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(vec![1.0]);
        for id in (0..=loss).rev() {
            let node = &self.nodes[id];
            let Some(op) = &node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop(node, op, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, node: &Node, op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let ins = &node.inputs;
        let val = |i: usize| &self.nodes[ins[i]].value;
        let wants = |i: usize| self.nodes[ins[i]].requires_grad;

        match op {
            Op::MatMul => {
                let (m, k) = (val(0).shape[0], val(0).shape[1]);
                let n = val(1).shape[1];
                if wants(0) {
                    let da = slot(grads, ins[0], m * k);
                    kernels::matmul_grad_lhs(g, &val(1).data, da, m, k, n);
                }
                if wants(1) {
                    let db = slot(grads, ins[1], k * n);
                    kernels::matmul_grad_rhs(&val(0).data, g, db, m, k, n);
                }
            }
            Op::Conv2d => {
                let dims = conv_dims(val(0), val(1), val(2)).expect("validated in forward");
                if wants(0) {
                    let dx = slot(grads, ins[0], val(0).numel());
                    kernels::conv2d_grad_input(g, &val(1).data, dx, &dims);
                }
                if wants(1) {
                    let dw = slot(grads, ins[1], val(1).numel());
                    kernels::conv2d_grad_weight(g, &val(0).data, dw, &dims);
                }
                if wants(2) {
                    let db = slot(grads, ins[2], val(2).numel());
                    let plane = dims.h * dims.w;
                    for (o, acc) in db.iter_mut().enumerate() {
                        *acc += g[o * plane..(o + 1) * plane].iter().sum::<f64>();
                    }
                }
            }
            Op::Add | Op::Reshape { .. } => {
                for (i, &id) in ins.iter().enumerate() {
                    if wants(i) {
                        axpy(slot(grads, id, g.len()), 1.0, g);
                    }
                }
            }
            Op::Scale { factor } => {
                if wants(0) {
                    axpy(slot(grads, ins[0], g.len()), *factor, g);
                }
            }
            Op::LeakyRelu { slope } => {
                if wants(0) {
                    let x = &val(0).data;
                    let dx = slot(grads, ins[0], g.len());
                    for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(x) {
                        *d += if xi > 0.0 { gi } else { slope * gi };
                    }
                }
            }
            Op::Sigmoid => {
                if wants(0) {
                    let y = &node.value.data;
                    let dx = slot(grads, ins[0], g.len());
                    for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::SoftmaxColumns => {
                if wants(0) {
                    let (r, c) = (node.value.shape[0], node.value.shape[1]);
                    let y = &node.value.data;
                    let dx = slot(grads, ins[0], g.len());
                    for j in 0..c {
                        let dot: f64 = (0..r).map(|i| g[i * c + j] * y[i * c + j]).sum();
                        for i in 0..r {
                            dx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                        }
                    }
                }
            }
            Op::Mse => {
                let n = val(0).numel() as f64;
                let coeff = 2.0 * g[0] / n;
                let (a, b) = (&val(0).data, &val(1).data);
                for (i, sign) in [(0, 1.0), (1, -1.0)] {
                    if wants(i) {
                        let d = slot(grads, ins[i], a.len());
                        for ((di, &ai), &bi) in d.iter_mut().zip(a).zip(b) {
                            *di += sign * coeff * (ai - bi);
                        }
                    }
                }
            }
            Op::Concat { axis } => {
                let outer: usize = node.value.shape[..*axis].iter().product();
                let inner: usize = node.value.shape[axis + 1..].iter().product();
                let total = node.value.shape[*axis] * inner;
                let mut offset = 0;
                for (i, &id) in ins.iter().enumerate() {
                    let block = val(i).shape[*axis] * inner;
                    if wants(i) {
                        let d = slot(grads, id, outer * block);
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + block];
                            axpy(&mut d[o * block..(o + 1) * block], 1.0, src);
                        }
                    }
                    offset += block;
                }
            }
            Op::ColumnCrossEntropy { targets } => {
                if wants(0) {
                    let c = targets.len();
                    let probs = &node.cache;
                    let dx = slot(grads, ins[0], probs.len());
                    for (d, &p) in dx.iter_mut().zip(probs) {
                        *d += g[0] * p;
                    }
                    for (j, &t) in targets.iter().enumerate() {
                        dx[t * c + j] -= g[0];
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Column-wise softmax of a row-major `rows x cols` matrix.
pub(crate) fn softmax_columns_in_place(data: &mut [f64], rows: usize, cols: usize) {
    for j in 0..cols {
        let max = (0..rows).map(|i| data[i * cols + j]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for i in 0..rows {
            let e = (data[i * cols + j] - max).exp();
            data[i * cols + j] = e;
            sum += e;
        }
        for i in 0..rows {
            data[i * cols + j] /= sum;
        }
    }
}

fn as_matrix(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.shape[..] {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Shape(format!("{what} must be 2-D, got shape {:?}", t.shape))),
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::Shape(format!(
            "{what} operands differ in shape: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(())
}

fn conv_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<kernels::ConvDims> {
    let [in_ch, h, wd] = x.shape[..] else {
        return Err(Error::Shape(format!(
            "conv2d input must be channels x height x width, got {:?}",
            x.shape
        )));
    };
    let [out_ch, w_in, kh, kw] = w.shape[..] else {
        return Err(Error::Shape(format!(
            "conv2d weight must be out x in x k x k, got {:?}",
            w.shape
        )));
    };
    if w_in != in_ch {
        return Err(Error::Shape(format!(
            "conv2d weight expects {w_in} input channels, input has {in_ch}"
        )));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!("conv2d kernel must be square and odd, got {kh}x{kw}")));
    }
    if b.shape[..] != [out_ch] {
        return Err(Error::Shape(format!(
            "conv2d bias must have shape [{out_ch}], got {:?}",
            b.shape
        )));
    }
    Ok(kernels::ConvDims {
        in_ch,
        out_ch,
        h,
        w: wd,
        k: kh,
    })
}

fn concat_forward(vals: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = vals[0];
    if axis >= first.shape.len() {
        return Err(Error::Shape(format!(
            "concat axis {axis} out of range for shape {:?}",
            first.shape
        )));
    }
    for v in &vals[1..] {
        let compatible = v.shape.len() == first.shape.len()
            && v.shape.iter().zip(&first.shape).enumerate().all(|(d, (a, b))| d == axis || a == b);
        if !compatible {
            return Err(Error::Shape(format!(
                "concat along axis {axis}: {:?} incompatible with {:?}",
                v.shape, first.shape
            )));
        }
    }
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis + 1..].iter().product();
    let mut shape = first.shape.clone();
    shape[axis] = vals.iter().map(|v| v.shape[axis]).sum();
    let mut out = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for v in vals {
            let block = v.shape[axis] * inner;
            out.extend_from_slice(&v.data[o * block..(o + 1) * block]);
        }
    }
    Tensor::new(shape, out)
}
