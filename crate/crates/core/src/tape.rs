//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each recorded node holds its
//! forward value and the operation that produced it; [`Tape::backward`] walks
//! the nodes once, in reverse recording order, accumulating gradients into
//! the inputs that require them. Nodes are appended only after their inputs,
//! so recording order is already a topological order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HscfError, Result};
use crate::tensor::{gemm, normalize_adjacency_kernel, sigmoid, softmax, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterStore {
    entries: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}

/// Gradients keyed by parameter name, one entry per [`ParameterStore`] entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    entries: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        Gradients {
            entries: store
                .iter()
                .map(|(k, v)| (k.to_string(), v.zeros_like()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// `self += other`, name by name.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        for (name, g) in &other.entries {
            match self.entries.get_mut(name) {
                Some(acc) => acc.add_assign(g)?,
                None => {
                    return Err(HscfError::Contract(format!(
                        "gradient for unknown parameter {name}"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.entries.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
}

/// Recorded operation kinds. Also used to select a deliberately broken
/// backward rule when exercising the gradient checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Constant,
    Param,
    #[serde(rename = "matmul")]
    MatMul,
    #[serde(rename = "matmul_nt")]
    MatMulNt,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddScalar,
    Relu,
    Sigmoid,
    Exp,
    Sqrt,
    Square,
    LnClamped,
    Softmax,
    Sum,
    Mean,
    AddRowBias,
    ConcatCols,
    MeanRows,
    GatherRows,
    NormalizeAdjacency,
}

impl std::str::FromStr for OpKind {
    type Err = HscfError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| HscfError::InvalidArgument(format!("unknown op kind {s:?}")))
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Sqrt(Var),
    Square(Var),
    LnClamped(Var, f64),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    AddRowBias(Var, Var),
    ConcatCols(Var, Var),
    MeanRows(Var),
    GatherRows(Var, Vec<usize>),
    NormalizeAdjacency(Var, Vec<f64>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Constant => OpKind::Constant,
            Op::Param(_) => OpKind::Param,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatMulNt(..) => OpKind::MatMulNt,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Exp(_) => OpKind::Exp,
            Op::Sqrt(_) => OpKind::Sqrt,
            Op::Square(_) => OpKind::Square,
            Op::LnClamped(..) => OpKind::LnClamped,
            Op::Softmax(_) => OpKind::Softmax,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::AddRowBias(..) => OpKind::AddRowBias,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::MeanRows(_) => OpKind::MeanRows,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::NormalizeAdjacency(..) => OpKind::NormalizeAdjacency,
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<OpKind>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> HscfError {
    HscfError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes the backward rule of `kind` wrong (its incoming gradient is
    /// scaled by 1.5). Only useful for testing gradient checks.
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        let value = store
            .get(name)
            .ok_or_else(|| HscfError::Contract(format!("no parameter named {name}")))?
            .clone();
        Ok(self.push(value, Op::Param(name.to_string()), true))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.cols() {
            return Err(shape_err("matmul_nt", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), true, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMulNt(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "div", |x, y| x / y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Div(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v + c);
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    /// `max(0, x)`; the derivative at exactly 0 is taken as 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        let rg = self.rg(a);
        self.push(value, Op::Sqrt(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        let rg = self.rg(a);
        self.push(value, Op::Square(a), rg)
    }

    /// `ln(max(x, floor))`; zero gradient where the floor is active.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).map(|v| v.max(floor).ln());
        let rg = self.rg(a);
        self.push(value, Op::LnClamped(a, floor), rg)
    }

    /// Softmax over every entry of `a`.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_parts(t.shape().to_vec(), softmax(t.data()));
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean());
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Adds a length-`d` bias to every row of an `n×d` matrix.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if ta.shape().len() != 2 || tb.len() != ta.cols() {
            return Err(shape_err("add_row_bias", ta, tb));
        }
        let d = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(d) {
            for (x, b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddRowBias(a, bias), rg))
    }

    /// Feature-axis concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.rows() != tb.rows() {
            return Err(shape_err("concat_cols", ta, tb));
        }
        let (n, p, q) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::from_parts(vec![n, p + q], data),
            Op::ConcatCols(a, b),
            rg,
        ))
    }

    /// Column means of an `n×d` matrix, as a `1×d` matrix.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 {
            return Err(shape_err("mean_rows", ta, ta));
        }
        let (n, d) = (ta.rows(), ta.cols());
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(ta.row(i)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![1, d], out), Op::MeanRows(a), rg))
    }

    /// Row `i` of the result is row `indices[i]` of `a`. Equivalent to
    /// left-multiplying by a row-one-hot matrix.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 || indices.iter().any(|&i| i >= ta.rows()) {
            return Err(HscfError::Shape {
                op: "gather_rows",
                left: ta.shape().to_vec(),
                right: vec![indices.len()],
            });
        }
        let d = ta.cols();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(ta.row(i));
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::from_parts(vec![indices.len(), d], data),
            Op::GatherRows(a, indices.to_vec()),
            rg,
        ))
    }

    /// Differentiable `D^-1/2 (A + I) D^-1/2` with the input diagonal ignored.
    pub fn normalize_adjacency(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 || ta.rows() != ta.cols() {
            return Err(shape_err("normalize_adjacency", ta, ta));
        }
        let (value, inv_sqrt) = normalize_adjacency_kernel(ta);
        let rg = self.rg(a);
        Ok(self.push(value, Op::NormalizeAdjacency(a, inv_sqrt), rg))
    }

    /// Reverse sweep from a scalar `loss`. Every entry of `store` gets a
    /// gradient; parameters that do not reach the loss get zeros.
    pub fn backward(&self, loss: Var, store: &ParameterStore) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(HscfError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut out = Gradients::zeros_like(store);
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_parts(loss_value.shape().to_vec(), vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if self.fault == Some(node.op.kind()) {
                g = g.scale(1.5);
            }
            self.backward_node(node, g, &mut grads, &mut out)?;
        }
        Ok(out)
    }

    fn backward_node(
        &self,
        node: &Node,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        out: &mut Gradients,
    ) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut send = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(t),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Constant => {}
            Op::Param(name) => {
                if let Some(acc) = out.entries.get_mut(name) {
                    acc.add_assign(&g)?;
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, tb.data(), true, &mut da, false);
                    send(*a, Tensor::from_parts(vec![m, k], da));
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g.data(), false, &mut db, false);
                    send(*b, Tensor::from_parts(vec![k, n], db));
                }
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, tb.data(), false, &mut da, false);
                    send(*a, Tensor::from_parts(vec![m, k], da));
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; n * k];
                    gemm(n, m, k, g.data(), true, ta.data(), false, &mut db, false);
                    send(*b, Tensor::from_parts(vec![n, k], db));
                }
            }
            Op::Transpose(a) => send(*a, g.transpose()?),
            Op::Add(a, b) => {
                send(*b, g.clone());
                send(*a, g);
            }
            Op::Sub(a, b) => {
                send(*b, g.scale(-1.0));
                send(*a, g);
            }
            Op::Mul(a, b) => {
                send(*a, g.mul(val(*b))?);
                send(*b, g.mul(val(*a))?);
            }
            Op::Div(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                send(*a, g.zip_map(tb, "div", |gv, bv| gv / bv)?);
                let db = Tensor::from_parts(
                    g.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(ta.data().iter().zip(tb.data()))
                        .map(|(gv, (av, bv))| -gv * av / (bv * bv))
                        .collect(),
                );
                send(*b, db);
            }
            Op::Scale(a, c) => send(*a, g.scale(*c)),
            Op::AddScalar(a) => send(*a, g),
            Op::Relu(a) => send(
                *a,
                g.zip_map(val(*a), "relu", |gv, x| if x > 0.0 { gv } else { 0.0 })?,
            ),
            Op::Sigmoid(a) => send(*a, g.zip_map(y, "sigmoid", |gv, s| gv * s * (1.0 - s))?),
            Op::Exp(a) => send(*a, g.mul(y)?),
            Op::Sqrt(a) => send(*a, g.zip_map(y, "sqrt", |gv, r| gv / (2.0 * r))?),
            Op::Square(a) => send(*a, g.zip_map(val(*a), "square", |gv, x| 2.0 * x * gv)?),
            Op::LnClamped(a, floor) => {
                let f = *floor;
                send(
                    *a,
                    g.zip_map(val(*a), "ln", |gv, x| if x > f { gv / x } else { 0.0 })?,
                )
            }
            Op::Softmax(a) => {
                let dot: f64 = g.data().iter().zip(y.data()).map(|(gv, s)| gv * s).sum();
                send(*a, g.zip_map(y, "softmax", |gv, s| s * (gv - dot))?);
            }
            Op::Sum(a) => send(*a, Tensor::full(val(*a).shape(), g.item())),
            Op::Mean(a) => {
                let ta = val(*a);
                send(*a, Tensor::full(ta.shape(), g.item() / ta.len() as f64));
            }
            Op::AddRowBias(a, bias) => {
                let tb = val(*bias);
                let d = tb.len();
                let mut db = vec![0.0; d];
                for row in g.data().chunks(d) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                send(*bias, Tensor::from_parts(tb.shape().to_vec(), db));
                send(*a, g);
            }
            Op::ConcatCols(a, b) => {
                let (p, q) = (val(*a).cols(), val(*b).cols());
                let n = g.rows();
                let mut da = Vec::with_capacity(n * p);
                let mut db = Vec::with_capacity(n * q);
                for i in 0..n {
                    let row = g.row(i);
                    da.extend_from_slice(&row[..p]);
                    db.extend_from_slice(&row[p..]);
                }
                send(*a, Tensor::from_parts(vec![n, p], da));
                send(*b, Tensor::from_parts(vec![n, q], db));
            }
            Op::MeanRows(a) => {
                let ta = val(*a);
                let (n, d) = (ta.rows(), ta.cols());
                let mut da = Vec::with_capacity(n * d);
                for _ in 0..n {
                    da.extend(g.data().iter().map(|v| v / n as f64));
                }
                send(*a, Tensor::from_parts(vec![n, d], da));
            }
            Op::GatherRows(a, indices) => {
                let ta = val(*a);
                let d = ta.cols();
                let mut da = ta.zeros_like();
                for (out_row, &src) in indices.iter().enumerate() {
                    let dst = &mut da.data_mut()[src * d..(src + 1) * d];
                    for (x, v) in dst.iter_mut().zip(g.row(out_row)) {
                        *x += v;
                    }
                }
                send(*a, da);
            }
            Op::NormalizeAdjacency(a, inv_sqrt) => {
                // out_ij = w_ij s_i s_j with w_ii = 1 and s_k = (1 + sum_{l!=k} a_kl)^-1/2.
                let ta = val(*a);
                let n = ta.rows();
                let s = inv_sqrt;
                let w = |i: usize, j: usize| if i == j { 1.0 } else { ta.at(i, j) };
                let ds: Vec<f64> = (0..n)
                    .map(|k| {
                        s.iter().enumerate().fold(0.0, |acc, (j, sj)| {
                            acc + g.at(k, j) * w(k, j) * sj + g.at(j, k) * w(j, k) * sj
                        })
                    })
                    .collect();
                let mut da = Tensor::zeros(&[n, n]);
                for k in 0..n {
                    let row_term = -0.5 * s[k].powi(3) * ds[k];
                    for l in 0..n {
                        if k != l {
                            da.set(k, l, g.at(k, l) * s[k] * s[l] + row_term);
                        }
                    }
                }
                send(*a, da);
            }
        }
        Ok(())
    }
}
