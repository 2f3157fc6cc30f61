use std::collections::HashMap;

use super::real::Real;
use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
    /// Whether decoupled weight decay applies (false for biases and norm gains).
    pub decay: bool,
}

/// Named parameter tensors. Registration order is stable and defines
/// serialization order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>, decay: bool) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        let id = self.params.len();
        self.params.push(Param { name: name.to_string(), value, trainable: true, decay });
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    trainable: p.trainable,
                    decay: p.decay,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Per-parameter gradients produced by [`Graph::backward`]. Frozen and
/// unreached parameters have no entry.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn empty(n: usize) -> Self {
        Gradients { grads: vec![None; n] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn set(&mut self, id: ParamId, grad: Tensor<T>) {
        self.grads[id.0] = Some(grad);
    }

    /// Gradient as a dense tensor, zeros when the parameter was not reached.
    pub fn get_or_zeros(&self, id: ParamId, store: &ParamStore<T>) -> Tensor<T> {
        self.get(id).cloned().unwrap_or_else(|| Tensor::zeros(store.value(id).shape()))
    }

    /// True when the parameter received no gradient or an all-zero one.
    pub fn is_zero(&self, id: ParamId) -> bool {
        self.get(id).map_or(true, |g| g.data().iter().all(|v| *v == T::zero()))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(Option::is_none)
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    GatherRows { table: Var, idx: Vec<usize> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    SumAll(Var),
    SumCols(Var),
    Reshape(Var),
    PickCols { x: Var, cols: Vec<usize> },
    NormalizeRows { x: Var, norms: Vec<T> },
    BceWithLogits { logits: Var, labels: Vec<T> },
}

struct Node<T> {
    op: Op<T>,
    value: Option<Tensor<T>>,
    requires_grad: bool,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the
/// node list is already a topological order.
pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, Var>,
}

fn check_finite<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn normal_cdf<T: Real>(x: T) -> T {
    let half = T::from_f64c(0.5);
    half * (T::one() + (x * T::from_f64c(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn normal_pdf<T: Real>(x: T) -> T {
    let c = T::from_f64c(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    c * (-(x * x) * T::from_f64c(0.5)).exp()
}

/// Exact-erf GELU, `x·Φ(x)`.
pub fn gelu<T: Real>(x: T) -> T {
    x * normal_cdf(x)
}

fn gelu_grad<T: Real>(x: T) -> T {
    normal_cdf(x) + x * normal_pdf(x)
}

fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph { params, nodes: Vec::new(), param_nodes: HashMap::new() }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.value(*id),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, name: &'static str, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        check_finite(name, &value)?;
        self.nodes.push(Node { op, value: Some(value), requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push("constant", Op::Constant, t, false)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let trainable = self.params.get(id).trainable;
        self.nodes.push(Node { op: Op::Param(id), value: None, requires_grad: trainable });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn param_by_name(&mut self, name: &str) -> Result<Var> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        Ok(self.param(id))
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", Op::MatMul(a, b), Tensor::new(vec![m, n], out)?, rg)
    }

    /// `a · bᵀ` for `a[m×k]`, `b[n×k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2();
        let (n, k2) = self.value(b).dims2();
        if k != k2 {
            return Err(Error::shape("matmul_bt", format!("{m}x{k} by ({n}x{k2})^T")));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul_bt", Op::MatMulBT(a, b), Tensor::new(vec![m, n], out)?, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = x.dims2();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = x.data()[i * n + j];
            }
        }
        let rg = self.rg(a);
        self.push("transpose", Op::Transpose(a), Tensor::new(vec![n, m], out)?, rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let x = self.value(a);
        let y = self.value(b);
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data).expect("shape checked")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_with(a, b, |p, q| p + q);
        let rg = self.rg(a) || self.rg(b);
        self.push("add", Op::Add(a, b), t, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_with(a, b, |p, q| p - q);
        let rg = self.rg(a) || self.rg(b);
        self.push("sub", Op::Sub(a, b), t, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_with(a, b, |p, q| p * q);
        let rg = self.rg(a) || self.rg(b);
        self.push("mul", Op::Mul(a, b), t, rg)
    }

    /// Adds a length-`n` vector to every row of `a[m×n]`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2();
        if self.value(bias).len() != n {
            return Err(Error::shape("add_row", format!("{m}x{n} plus {:?}", self.shape(bias))));
        }
        let x = self.value(a);
        let b = self.value(bias).data();
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o = *o + bv;
            }
        }
        let shape = x.shape().to_vec();
        let rg = self.rg(a) || self.rg(bias);
        self.push("add_row", Op::AddRow(a, bias), Tensor::new(shape, out)?, rg)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let t = self.value(a).map(|v| v * c);
        let rg = self.rg(a);
        self.push("scale", Op::Scale(a, c), t, rg)
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(gelu);
        let rg = self.rg(a);
        self.push("gelu", Op::Gelu(a), t, rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        check_finite("softmax_rows", x)?;
        let (_, n) = x.dims2();
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        let shape = x.shape().to_vec();
        let rg = self.rg(a);
        self.push("softmax_rows", Op::SoftmaxRows(a), Tensor::new(shape, out)?, rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        check_finite("log_softmax_rows", x)?;
        let (_, n) = x.dims2();
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            for v in row.iter_mut() {
                *v = *v - lse;
            }
        }
        let shape = x.shape().to_vec();
        let rg = self.rg(a);
        self.push("log_softmax_rows", Op::LogSoftmaxRows(a), Tensor::new(shape, out)?, rg)
    }

    /// Row-wise layer normalization of `x[m×n]` with biased variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        if eps <= T::zero() {
            return Err(Error::invalid("layer_norm: eps must be positive"));
        }
        let (m, n) = self.value(x).dims2();
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::shape(
                "layer_norm",
                format!("row length {n}, gain {:?}, bias {:?}", self.shape(gain), self.shape(bias)),
            ));
        }
        let xv = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let nf = T::from_usize(n).unwrap();
        let mut xhat = vec![T::zero(); m * n];
        let mut rstd = vec![T::zero(); m];
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let r = T::one() / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            "layer_norm",
            Op::LayerNorm { x, gain, bias, xhat, rstd },
            Tensor::new(shape, out)?,
            rg,
        )
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, d) = t.dims2();
        if idx.is_empty() {
            return Err(Error::shape("gather_rows", "empty index list"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= v) {
            return Err(Error::shape("gather_rows", format!("index {bad} out of {v} rows")));
        }
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(t.row(i));
        }
        let rg = self.rg(table);
        self.push(
            "gather_rows",
            Op::GatherRows { table, idx: idx.to_vec() },
            Tensor::new(vec![idx.len(), d], out)?,
            rg,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = t.dims2();
        if len == 0 || start + len > n {
            return Err(Error::shape("slice_cols", format!("{start}+{len} of {n} columns")));
        }
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&t.row(i)[start..start + len]);
        }
        let rg = self.rg(x);
        self.push("slice_cols", Op::SliceCols { x, start }, Tensor::new(vec![m, len], out)?, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != m) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let n: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("concat_cols", Op::ConcatCols(parts.to_vec()), Tensor::new(vec![m, n], out)?, rg)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = t.dims2();
        if len == 0 || start + len > m {
            return Err(Error::shape("slice_rows", format!("{start}+{len} of {m} rows")));
        }
        let out = t.data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(x);
        self.push("slice_rows", Op::SliceRows { x, start }, Tensor::new(vec![len, n], out)?, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != n) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let m: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut out = Vec::with_capacity(m * n);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("concat_rows", Op::ConcatRows(parts.to_vec()), Tensor::new(vec![m, n], out)?, rg)
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        self.push("sum_all", Op::SumAll(x), Tensor::scalar(s), rg)
    }

    /// Sum across each row: `[m×n] -> [m]`.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (m, _) = t.dims2();
        let out: Vec<T> = (0..m).map(|i| t.row(i).iter().copied().sum()).collect();
        let rg = self.rg(x);
        self.push("sum_cols", Op::SumCols(x), Tensor::new(vec![m], out)?, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.rg(x);
        self.push("reshape", Op::Reshape(x), t, rg)
    }

    /// `out[i] = x[i, cols[i]]`.
    pub fn pick_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = t.dims2();
        if cols.len() != m || cols.iter().any(|&c| c >= n) {
            return Err(Error::shape("pick_cols", format!("{} picks for {m}x{n}", cols.len())));
        }
        let out: Vec<T> = cols.iter().enumerate().map(|(i, &c)| t.get(i, c)).collect();
        let rg = self.rg(x);
        self.push("pick_cols", Op::PickCols { x, cols: cols.to_vec() }, Tensor::new(vec![m], out)?, rg)
    }

    /// ℓ2-normalizes each row; a zero row is an error.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = t.dims2();
        let mut norms = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = t.row(i);
            let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if !(norm > T::zero()) || !norm.is_finite() {
                return Err(Error::NonFinite { op: "normalize_rows" });
            }
            norms.push(norm);
            out.extend(row.iter().map(|&v| v / norm));
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(x);
        self.push("normalize_rows", Op::NormalizeRows { x, norms }, Tensor::new(shape, out)?, rg)
    }

    /// Summed binary cross-entropy on logits. `labels[i] = 1` marks the
    /// positive class of `sigmoid(logits[i])`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T]) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != labels.len() {
            return Err(Error::shape("bce_with_logits", format!("{} logits, {} labels", z.len(), labels.len())));
        }
        let loss: T = z.data().iter().zip(labels).map(|(&zi, &l)| softplus(zi) - l * zi).sum();
        let rg = self.rg(logits);
        self.push(
            "bce_with_logits",
            Op::BceWithLogits { logits, labels: labels.to_vec() },
            Tensor::scalar(loss),
            rg,
        )
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        let mut out = Gradients::empty(self.params.len());

        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    match &mut out.grads[id.0] {
                        Some(acc) => acc.add_assign(&gy),
                        slot => *slot = Some(gy),
                    }
                }
                op => self.backward_op(op, idx, &gy, &mut grads)?,
            }
        }
        for g in out.grads.iter().flatten() {
            check_finite("backward", g)?;
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backward_op(
        &self,
        op: &Op<T>,
        idx: usize,
        gy: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let y = self.value(Var(idx));
        match op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).cols();
                if self.rg(*a) {
                    let mut ga = vec![T::zero(); m * k];
                    gemm_nt(gy.data(), self.value(*b).data(), &mut ga, m, n, k);
                    self.accumulate(grads, *a, Tensor::new(self.shape(*a).to_vec(), ga)?);
                }
                if self.rg(*b) {
                    let mut gb = vec![T::zero(); k * n];
                    gemm_tn(self.value(*a).data(), gy.data(), &mut gb, m, k, n);
                    self.accumulate(grads, *b, Tensor::new(self.shape(*b).to_vec(), gb)?);
                }
            }
            Op::MatMulBT(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).rows();
                if self.rg(*a) {
                    let mut ga = vec![T::zero(); m * k];
                    gemm_nn(gy.data(), self.value(*b).data(), &mut ga, m, n, k);
                    self.accumulate(grads, *a, Tensor::new(self.shape(*a).to_vec(), ga)?);
                }
                if self.rg(*b) {
                    let mut gb = vec![T::zero(); n * k];
                    gemm_tn(gy.data(), self.value(*a).data(), &mut gb, m, n, k);
                    self.accumulate(grads, *b, Tensor::new(self.shape(*b).to_vec(), gb)?);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = self.value(*a).dims2();
                let mut ga = vec![T::zero(); m * n];
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] = gy.data()[j * m + i];
                    }
                }
                self.accumulate(grads, *a, Tensor::new(self.shape(*a).to_vec(), ga)?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, gy.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let g = self.zip_values(gy, self.value(*b), |g, q| g * q);
                    self.accumulate(grads, *a, g);
                }
                if self.rg(*b) {
                    let g = self.zip_values(gy, self.value(*a), |g, p| g * p);
                    self.accumulate(grads, *b, g);
                }
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, gy.clone());
                if self.rg(*bias) {
                    let n = gy.cols();
                    let mut gb = vec![T::zero(); n];
                    for row in gy.data().chunks(n) {
                        for (o, &g) in gb.iter_mut().zip(row) {
                            *o = *o + g;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::new(self.shape(*bias).to_vec(), gb)?);
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, gy.map(|g| g * c));
            }
            Op::Gelu(a) => {
                let g = self.zip_values(gy, self.value(*a), |g, x| g * gelu_grad(x));
                self.accumulate(grads, *a, g);
            }
            Op::SoftmaxRows(a) => {
                let n = y.cols();
                let mut ga = vec![T::zero(); y.len()];
                for ((yr, gr), out) in y.data().chunks(n).zip(gy.data().chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: T = yr.iter().zip(gr).map(|(&p, &g)| p * g).sum();
                    for ((o, &p), &g) in out.iter_mut().zip(yr).zip(gr) {
                        *o = p * (g - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), ga)?);
            }
            Op::LogSoftmaxRows(a) => {
                let n = y.cols();
                let mut ga = vec![T::zero(); y.len()];
                for ((yr, gr), out) in y.data().chunks(n).zip(gy.data().chunks(n)).zip(ga.chunks_mut(n)) {
                    let sum: T = gr.iter().copied().sum();
                    for ((o, &ly), &g) in out.iter_mut().zip(yr).zip(gr) {
                        *o = g - ly.exp() * sum;
                    }
                }
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), ga)?);
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let (m, n) = y.dims2();
                let g = self.value(*gain).data();
                if self.rg(*gain) {
                    let mut gg = vec![T::zero(); n];
                    for i in 0..m {
                        for j in 0..n {
                            gg[j] = gg[j] + gy.data()[i * n + j] * xhat[i * n + j];
                        }
                    }
                    self.accumulate(grads, *gain, Tensor::new(self.shape(*gain).to_vec(), gg)?);
                }
                if self.rg(*bias) {
                    let mut gb = vec![T::zero(); n];
                    for row in gy.data().chunks(n) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o = *o + v;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::new(self.shape(*bias).to_vec(), gb)?);
                }
                if self.rg(*x) {
                    let nf = T::from_usize(n).unwrap();
                    let mut gx = vec![T::zero(); m * n];
                    for i in 0..m {
                        let mut mean_d = T::zero();
                        let mut mean_dx = T::zero();
                        for j in 0..n {
                            let d = gy.data()[i * n + j] * g[j];
                            mean_d = mean_d + d;
                            mean_dx = mean_dx + d * xhat[i * n + j];
                        }
                        mean_d = mean_d / nf;
                        mean_dx = mean_dx / nf;
                        for j in 0..n {
                            let d = gy.data()[i * n + j] * g[j];
                            gx[i * n + j] = rstd[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(self.shape(*x).to_vec(), gx)?);
                }
            }
            Op::GatherRows { table, idx } => {
                let t = self.value(*table);
                let d = t.cols();
                let mut gt = vec![T::zero(); t.len()];
                for (r, &i) in idx.iter().enumerate() {
                    let dst = &mut gt[i * d..(i + 1) * d];
                    for (o, &g) in dst.iter_mut().zip(&gy.data()[r * d..(r + 1) * d]) {
                        *o = *o + g;
                    }
                }
                self.accumulate(grads, *table, Tensor::new(t.shape().to_vec(), gt)?);
            }
            Op::SliceCols { x, start } => {
                let (m, n) = self.value(*x).dims2();
                let len = gy.cols();
                let mut gx = vec![T::zero(); m * n];
                for i in 0..m {
                    gx[i * n + start..i * n + start + len].copy_from_slice(gy.row(i));
                }
                self.accumulate(grads, *x, Tensor::new(self.shape(*x).to_vec(), gx)?);
            }
            Op::ConcatCols(parts) => {
                let m = gy.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let mut gp = Vec::with_capacity(m * w);
                        for i in 0..m {
                            gp.extend_from_slice(&gy.row(i)[offset..offset + w]);
                        }
                        self.accumulate(grads, p, Tensor::new(self.shape(p).to_vec(), gp)?);
                    }
                    offset += w;
                }
            }
            Op::SliceRows { x, start } => {
                let (m, n) = self.value(*x).dims2();
                let mut gx = vec![T::zero(); m * n];
                gx[start * n..start * n + gy.len()].copy_from_slice(gy.data());
                self.accumulate(grads, *x, Tensor::new(self.shape(*x).to_vec(), gx)?);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.rg(p) {
                        let gp = gy.data()[offset..offset + len].to_vec();
                        self.accumulate(grads, p, Tensor::new(self.shape(p).to_vec(), gp)?);
                    }
                    offset += len;
                }
            }
            Op::SumAll(x) => {
                let g = gy.item();
                self.accumulate(grads, *x, Tensor::full(self.shape(*x), g));
            }
            Op::SumCols(x) => {
                let (m, n) = self.value(*x).dims2();
                let mut gx = vec![T::zero(); m * n];
                for i in 0..m {
                    for v in &mut gx[i * n..(i + 1) * n] {
                        *v = gy.data()[i];
                    }
                }
                self.accumulate(grads, *x, Tensor::new(self.shape(*x).to_vec(), gx)?);
            }
            Op::Reshape(x) => {
                let g = gy.clone().reshape(self.shape(*x).to_vec())?;
                self.accumulate(grads, *x, g);
            }
            Op::PickCols { x, cols } => {
                let (m, n) = self.value(*x).dims2();
                let mut gx = vec![T::zero(); m * n];
                for (i, &c) in cols.iter().enumerate() {
                    gx[i * n + c] = gy.data()[i];
                }
                self.accumulate(grads, *x, Tensor::new(self.shape(*x).to_vec(), gx)?);
            }
            Op::NormalizeRows { x, norms } => {
                let n = y.cols();
                let mut gx = vec![T::zero(); y.len()];
                for (i, norm) in norms.iter().enumerate() {
                    let yr = y.row(i);
                    let gr = gy.row(i);
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for j in 0..n {
                        gx[i * n + j] = (gr[j] - yr[j] * dot) / *norm;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), gx)?);
            }
            Op::BceWithLogits { logits, labels } => {
                let g = gy.item();
                let z = self.value(*logits);
                let data = z.data().iter().zip(labels).map(|(&zi, &l)| g * (sigmoid(zi) - l)).collect();
                self.accumulate(grads, *logits, Tensor::new(z.shape().to_vec(), data)?);
            }
        }
        Ok(())
    }

    fn zip_values(&self, a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(b.shape().to_vec(), data).expect("same length")
    }
}
