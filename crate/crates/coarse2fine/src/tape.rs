//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] is an append-only arena of nodes built during the forward
//! pass. Each node stores its value and the operation (with parent indices
//! and any saved state) that produced it, which doubles as the backward
//! rule. [`Tape::backward`] walks the arena in reverse insertion order,
//! which is a reverse topological order by construction, accumulating
//! gradients deterministically.
//!
//! Forward ops reject shape mismatches (naming the shapes involved) and
//! non-finite outputs. Parameters are registered by name via
//! [`Tape::param`]; after backward every registered parameter has a
//! gradient, zero-filled if the loss did not reach it.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::cell::Cell;
use std::collections::BTreeMap;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    OneMinus(usize),
    MatMul(usize, usize),
    MatVec(usize, usize),
    VecMat(usize, usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Log(usize),
    Softmax(usize),
    LogSoftmax(usize),
    ConcatVec(Vec<usize>),
    ConcatRows(Vec<usize>),
    MeanRows(usize),
    SumAll(usize),
    Lookup { table: usize, ids: Vec<u32> },
    Conv1d { input: usize, filters: usize, bias: usize, width: usize },
    MaxOverTime { input: usize, argmax: Vec<usize> },
    Pick { input: usize, index: usize },
    Row { input: usize, row: usize },
    StackScalars(Vec<usize>),
    Reshape(usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, usize)>,
    record: bool,
    gru_steps: Cell<u64>,
}

/// Gradients produced by one backward pass.
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
    named: BTreeMap<String, Tensor>,
}

impl Gradients {
    /// Gradient w.r.t. an arbitrary node, if the loss reached it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.slots[v.0].as_ref()
    }

    /// Gradients of all registered parameters (zeros where unreached).
    pub fn named(&self) -> &BTreeMap<String, Tensor> {
        &self.named
    }

    pub fn into_named(self) -> BTreeMap<String, Tensor> {
        self.named
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            record: true,
            gru_steps: Cell::new(0),
        }
    }

    /// A tape that computes values but keeps no backward information.
    pub fn inference() -> Self {
        Tape {
            record: false,
            ..Tape::new()
        }
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

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.scalar_value()
    }

    pub fn gru_steps(&self) -> u64 {
        self.gru_steps.get()
    }

    pub fn count_gru_step(&self) {
        self.gru_steps.set(self.gru_steps.get() + 1);
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    /// Registers a named parameter leaf; its gradient is reported by
    /// [`Tape::backward`] even when the loss does not reach it.
    pub fn param(&mut self, name: &str, value: Tensor) -> Var {
        let v = self.leaf(value);
        self.params.push((name.to_string(), v.0));
        v
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op) -> Var {
        let op = if self.record { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        value.ensure_finite(op_name)?;
        Ok(self.push_unchecked(value, op))
    }

    fn binary_same_shape(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                op_name,
                format!("{} vs {}", ta.shape_string(), tb.shape_string()),
            ));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data().iter())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data);
        self.push(op_name, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Multiply by a compile-time constant (not differentiated through).
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let data = self.value(a).data().iter().map(|x| x * c).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data);
        self.push("scale", value, Op::Scale(a.0, c))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// Elementwise 1 - x.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let data = self.value(a).data().iter().map(|x| 1.0 - x).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data);
        self.push("one_minus", value, Op::OneMinus(a.0))
    }

    fn unary(
        &mut self,
        op_name: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data);
        self.push(op_name, value, op)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a.0))
    }

    /// Elementwise natural log. log(0) is rejected as non-finite.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, f64::ln, Op::Log(a.0))
    }

    /// General matrix product (m x k) . (k x n).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{} . {}", ta.shape_string(), tb.shape_string()),
            ));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let (da, db) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = da[i * k + p];
                for j in 0..n {
                    out[i * n + j] += aip * db[p * n + j];
                }
            }
        }
        self.push("matmul", Tensor::matrix(m, n, out), Op::MatMul(a.0, b.0))
    }

    /// Matrix-vector product (m x n) . (n) -> (m).
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (tw, tx) = (self.value(w), self.value(x));
        if !tw.is_matrix() || !tx.is_vector() || tw.cols() != tx.numel() {
            return Err(Error::shape(
                "matvec",
                format!("{} . {}", tw.shape_string(), tx.shape_string()),
            ));
        }
        let (m, n) = (tw.rows(), tw.cols());
        let (dw, dx) = (tw.data(), tx.data());
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &dw[i * n..(i + 1) * n];
            out[i] = row.iter().zip(dx.iter()).map(|(a, b)| a * b).sum();
        }
        self.push("matvec", Tensor::vector(out), Op::MatVec(w.0, x.0))
    }

    /// Row-vector-matrix product (m) . (m x n) -> (n).
    pub fn vecmat(&mut self, x: Var, a: Var) -> Result<Var> {
        let (tx, ta) = (self.value(x), self.value(a));
        if !tx.is_vector() || !ta.is_matrix() || tx.numel() != ta.rows() {
            return Err(Error::shape(
                "vecmat",
                format!("{} . {}", tx.shape_string(), ta.shape_string()),
            ));
        }
        let (m, n) = (ta.rows(), ta.cols());
        let (dx, da) = (tx.data(), ta.data());
        let mut out = vec![0.0; n];
        for i in 0..m {
            let xi = dx[i];
            if xi != 0.0 {
                for j in 0..n {
                    out[j] += xi * da[i * n + j];
                }
            }
        }
        self.push("vecmat", Tensor::vector(out), Op::VecMat(x.0, a.0))
    }

    /// Numerically stable softmax over a vector (max-shifted).
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_vector() || ta.numel() == 0 {
            return Err(Error::shape("softmax", ta.shape_string()));
        }
        let max = ta.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = ta.data().iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let data = exps.iter().map(|e| e / z).collect();
        self.push("softmax", Tensor::vector(data), Op::Softmax(a.0))
    }

    /// Log of softmax, computed directly via log-sum-exp.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_vector() || ta.numel() == 0 {
            return Err(Error::shape("log_softmax", ta.shape_string()));
        }
        let max = ta.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse: f64 = ta.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
        let data = ta.data().iter().map(|x| x - lse).collect();
        self.push("log_softmax", Tensor::vector(data), Op::LogSoftmax(a.0))
    }

    /// Concatenate vectors into one vector.
    pub fn concat_vec(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_vec", "no parts"));
        }
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if !t.is_vector() {
                return Err(Error::shape("concat_vec", t.shape_string()));
            }
            data.extend_from_slice(t.data());
        }
        self.push(
            "concat_vec",
            Tensor::vector(data),
            Op::ConcatVec(parts.iter().map(|v| v.0).collect()),
        )
    }

    /// Row-wise concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_rows", "no parts"));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if !t.is_matrix() || t.cols() != cols {
                return Err(Error::shape(
                    "concat_rows",
                    format!("{} with cols {}", t.shape_string(), cols),
                ));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        self.push(
            "concat_rows",
            Tensor::matrix(rows, cols, data),
            Op::ConcatRows(parts.iter().map(|v| v.0).collect()),
        )
    }

    /// Mean over the rows of a matrix -> vector of column means.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_matrix() || ta.rows() == 0 {
            return Err(Error::shape("mean_rows", ta.shape_string()));
        }
        let (n, e) = (ta.rows(), ta.cols());
        let mut out = vec![0.0; e];
        for r in 0..n {
            for j in 0..e {
                out[j] += ta.data()[r * e + j];
            }
        }
        for v in out.iter_mut() {
            *v /= n as f64;
        }
        self.push("mean_rows", Tensor::vector(out), Op::MeanRows(a.0))
    }

    /// Sum of all elements -> scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum_all", Tensor::scalar(s), Op::SumAll(a.0))
    }

    /// Gather rows of an embedding table: ids (n) x table (V x e) -> (n x e).
    pub fn lookup(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let tt = self.value(table);
        if !tt.is_matrix() {
            return Err(Error::shape("lookup", tt.shape_string()));
        }
        let (v, e) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            let id = id as usize;
            if id >= v {
                return Err(Error::invalid(
                    "lookup",
                    format!("id {} out of range for table with {} rows", id, v),
                ));
            }
            data.extend_from_slice(&tt.data()[id * e..(id + 1) * e]);
        }
        self.push(
            "lookup",
            Tensor::matrix(ids.len(), e, data),
            Op::Lookup { table: table.0, ids: ids.to_vec() },
        )
    }

    /// Valid 1-D convolution over a (T x e) sequence with F filters of
    /// `width` steps: filters (F x width*e), bias (F) -> ((T-width+1) x F).
    pub fn conv1d(&mut self, input: Var, filters: Var, bias: Var, width: usize) -> Result<Var> {
        let (ti, tf, tb) = (self.value(input), self.value(filters), self.value(bias));
        if !ti.is_matrix() || !tf.is_matrix() || !tb.is_vector() {
            return Err(Error::shape(
                "conv1d",
                format!(
                    "{} * {} + {}",
                    ti.shape_string(),
                    tf.shape_string(),
                    tb.shape_string()
                ),
            ));
        }
        let (t_len, e) = (ti.rows(), ti.cols());
        let f_count = tf.rows();
        if tf.cols() != width * e || tb.numel() != f_count || width == 0 {
            return Err(Error::shape(
                "conv1d",
                format!(
                    "filters {} need cols width*e = {}, bias {}",
                    tf.shape_string(),
                    width * e,
                    tb.shape_string()
                ),
            ));
        }
        if t_len < width {
            return Err(Error::invalid(
                "conv1d",
                format!("sequence length {} shorter than filter width {}", t_len, width),
            ));
        }
        let out_len = t_len - width + 1;
        let (di, df, db) = (ti.data(), tf.data(), tb.data());
        let mut out = vec![0.0; out_len * f_count];
        for t in 0..out_len {
            let window = &di[t * e..(t + width) * e];
            for f in 0..f_count {
                let filt = &df[f * width * e..(f + 1) * width * e];
                let s: f64 = window.iter().zip(filt.iter()).map(|(a, b)| a * b).sum();
                out[t * f_count + f] = s + db[f];
            }
        }
        self.push(
            "conv1d",
            Tensor::matrix(out_len, f_count, out),
            Op::Conv1d { input: input.0, filters: filters.0, bias: bias.0, width },
        )
    }

    /// Per-feature max over the time axis: (T x F) -> (F). Ties resolve to
    /// the earliest step.
    pub fn max_over_time(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_matrix() || ta.rows() == 0 {
            return Err(Error::shape("max_over_time", ta.shape_string()));
        }
        let (t_len, f_count) = (ta.rows(), ta.cols());
        let mut out = vec![f64::NEG_INFINITY; f_count];
        let mut argmax = vec![0usize; f_count];
        for t in 0..t_len {
            for f in 0..f_count {
                let v = ta.data()[t * f_count + f];
                if v > out[f] {
                    out[f] = v;
                    argmax[f] = t;
                }
            }
        }
        self.push(
            "max_over_time",
            Tensor::vector(out),
            Op::MaxOverTime { input: a.0, argmax },
        )
    }

    /// Select one element of a vector -> scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_vector() || index >= ta.numel() {
            return Err(Error::invalid(
                "pick",
                format!("index {} into {}", index, ta.shape_string()),
            ));
        }
        let v = ta.data()[index];
        self.push("pick", Tensor::scalar(v), Op::Pick { input: a.0, index })
    }

    /// Select one row of a matrix -> vector.
    pub fn row(&mut self, a: Var, row: usize) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_matrix() || row >= ta.rows() {
            return Err(Error::invalid(
                "row",
                format!("row {} of {}", row, ta.shape_string()),
            ));
        }
        let e = ta.cols();
        let data = ta.data()[row * e..(row + 1) * e].to_vec();
        self.push("row", Tensor::vector(data), Op::Row { input: a.0, row })
    }

    /// Stack scalars into a vector.
    pub fn stack_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("stack_scalars", "no parts"));
        }
        let mut data = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            if !t.is_scalar() {
                return Err(Error::shape("stack_scalars", t.shape_string()));
            }
            data.push(t.scalar_value());
        }
        self.push(
            "stack_scalars",
            Tensor::vector(data),
            Op::StackScalars(parts.iter().map(|v| v.0).collect()),
        )
    }

    /// View with a different shape (same element count, same order).
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let ta = self.value(a);
        let numel: usize = shape.iter().product();
        if numel != ta.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{} -> {:?}", ta.shape_string(), shape),
            ));
        }
        let value = Tensor::new(shape, ta.data().to_vec());
        self.push("reshape", value, Op::Reshape(a.0))
    }

    /// Backpropagate from a scalar loss. Returns gradients for every node
    /// the loss reaches and for every registered parameter (zeros where
    /// unreached). Deterministic: node order is fixed by construction.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::invalid(
                "backward",
                format!(
                    "loss must be scalar, got shape {}",
                    self.nodes[loss.0].value.shape_string()
                ),
            ));
        }
        let mut buf: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        buf[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let g = match buf[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_parents(i, &g, &mut buf);
            buf[i] = Some(g);
        }

        let slots: Vec<Option<Tensor>> = buf
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::new(self.nodes[i].value.shape().to_vec(), g)))
            .collect();

        let mut named = BTreeMap::new();
        for (name, idx) in &self.params {
            let g = slots[*idx]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[*idx].value.shape().to_vec()));
            named.insert(name.clone(), g);
        }
        Ok(Gradients { slots, named })
    }

    fn accumulate_parents(&self, i: usize, g: &[f64], buf: &mut [Option<Vec<f64>>]) {
        let acc = |buf: &mut [Option<Vec<f64>>], parent: usize, f: &mut dyn FnMut(&mut [f64])| {
            let slot = buf[parent].get_or_insert_with(|| vec![0.0; self.nodes[parent].value.numel()]);
            f(slot);
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(buf, *a, &mut |s| for (d, x) in s.iter_mut().zip(g) { *d += x });
                acc(buf, *b, &mut |s| for (d, x) in s.iter_mut().zip(g) { *d += x });
            }
            Op::Sub(a, b) => {
                acc(buf, *a, &mut |s| for (d, x) in s.iter_mut().zip(g) { *d += x });
                acc(buf, *b, &mut |s| for (d, x) in s.iter_mut().zip(g) { *d -= x });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                acc(buf, *a, &mut |s| {
                    for ((d, x), y) in s.iter_mut().zip(g).zip(vb) {
                        *d += x * y;
                    }
                });
                acc(buf, *b, &mut |s| {
                    for ((d, x), y) in s.iter_mut().zip(g).zip(va) {
                        *d += x * y;
                    }
                });
            }
            Op::Scale(a, c) => {
                acc(buf, *a, &mut |s| for (d, x) in s.iter_mut().zip(g) { *d += c * x });
            }
            Op::OneMinus(a) => {
                acc(buf, *a, &mut |s| for (d, x) in s.iter_mut().zip(g) { *d -= x });
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let (da, db) = (ta.data(), tb.data());
                acc(buf, *a, &mut |s| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut v = 0.0;
                            for j in 0..n {
                                v += g[i * n + j] * db[p * n + j];
                            }
                            s[i * k + p] += v;
                        }
                    }
                });
                acc(buf, *b, &mut |s| {
                    for p in 0..k {
                        for i in 0..m {
                            let aip = da[i * k + p];
                            if aip != 0.0 {
                                for j in 0..n {
                                    s[p * n + j] += aip * g[i * n + j];
                                }
                            }
                        }
                    }
                });
            }
            Op::MatVec(w, x) => {
                let (tw, tx) = (&self.nodes[*w].value, &self.nodes[*x].value);
                let (m, n) = (tw.rows(), tw.cols());
                let (dw, dx) = (tw.data(), tx.data());
                acc(buf, *w, &mut |s| {
                    for i in 0..m {
                        let gi = g[i];
                        if gi != 0.0 {
                            for j in 0..n {
                                s[i * n + j] += gi * dx[j];
                            }
                        }
                    }
                });
                acc(buf, *x, &mut |s| {
                    for i in 0..m {
                        let gi = g[i];
                        if gi != 0.0 {
                            for j in 0..n {
                                s[j] += gi * dw[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::VecMat(x, a) => {
                let (tx, ta) = (&self.nodes[*x].value, &self.nodes[*a].value);
                let (m, n) = (ta.rows(), ta.cols());
                let (dx, da) = (tx.data(), ta.data());
                acc(buf, *x, &mut |s| {
                    for i in 0..m {
                        let mut v = 0.0;
                        for j in 0..n {
                            v += g[j] * da[i * n + j];
                        }
                        s[i] += v;
                    }
                });
                acc(buf, *a, &mut |s| {
                    for i in 0..m {
                        let xi = dx[i];
                        if xi != 0.0 {
                            for j in 0..n {
                                s[i * n + j] += xi * g[j];
                            }
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let va = self.nodes[*a].value.data();
                acc(buf, *a, &mut |s| {
                    for (j, (d, x)) in s.iter_mut().zip(g).enumerate() {
                        if va[j] > 0.0 {
                            *d += x;
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.data();
                acc(buf, *a, &mut |s| {
                    for (j, (d, x)) in s.iter_mut().zip(g).enumerate() {
                        *d += x * (1.0 - y[j] * y[j]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.data();
                acc(buf, *a, &mut |s| {
                    for (j, (d, x)) in s.iter_mut().zip(g).enumerate() {
                        *d += x * y[j] * (1.0 - y[j]);
                    }
                });
            }
            Op::Log(a) => {
                let va = self.nodes[*a].value.data();
                acc(buf, *a, &mut |s| {
                    for (j, (d, x)) in s.iter_mut().zip(g).enumerate() {
                        *d += x / va[j];
                    }
                });
            }
            Op::Softmax(a) => {
                let p = self.nodes[i].value.data();
                let dot: f64 = g.iter().zip(p.iter()).map(|(x, y)| x * y).sum();
                acc(buf, *a, &mut |s| {
                    for (j, d) in s.iter_mut().enumerate() {
                        *d += p[j] * (g[j] - dot);
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let l = self.nodes[i].value.data();
                let gsum: f64 = g.iter().sum();
                acc(buf, *a, &mut |s| {
                    for (j, d) in s.iter_mut().enumerate() {
                        *d += g[j] - l[j].exp() * gsum;
                    }
                });
            }
            Op::ConcatVec(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[*p].value.numel();
                    let seg = &g[offset..offset + n];
                    acc(buf, *p, &mut |s| for (d, x) in s.iter_mut().zip(seg) { *d += x });
                    offset += n;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[*p].value.numel();
                    let seg = &g[offset..offset + n];
                    acc(buf, *p, &mut |s| for (d, x) in s.iter_mut().zip(seg) { *d += x });
                    offset += n;
                }
            }
            Op::MeanRows(a) => {
                let ta = &self.nodes[*a].value;
                let (n, e) = (ta.rows(), ta.cols());
                let inv = 1.0 / n as f64;
                acc(buf, *a, &mut |s| {
                    for r in 0..n {
                        for j in 0..e {
                            s[r * e + j] += g[j] * inv;
                        }
                    }
                });
            }
            Op::SumAll(a) => {
                let g0 = g[0];
                acc(buf, *a, &mut |s| for d in s.iter_mut() { *d += g0 });
            }
            Op::Lookup { table, ids } => {
                let e = self.nodes[*table].value.cols();
                acc(buf, *table, &mut |s| {
                    for (t, &id) in ids.iter().enumerate() {
                        let base = id as usize * e;
                        for j in 0..e {
                            s[base + j] += g[t * e + j];
                        }
                    }
                });
            }
            Op::Conv1d { input, filters, bias, width } => {
                let ti = &self.nodes[*input].value;
                let tf = &self.nodes[*filters].value;
                let (_t_len, e) = (ti.rows(), ti.cols());
                let f_count = tf.rows();
                let out_len = self.nodes[i].value.rows();
                let (di, df) = (ti.data(), tf.data());
                let w = *width;
                acc(buf, *input, &mut |s| {
                    for t in 0..out_len {
                        for f in 0..f_count {
                            let gtf = g[t * f_count + f];
                            if gtf != 0.0 {
                                let filt = &df[f * w * e..(f + 1) * w * e];
                                for (off, fv) in filt.iter().enumerate() {
                                    s[t * e + off] += gtf * fv;
                                }
                            }
                        }
                    }
                });
                acc(buf, *filters, &mut |s| {
                    for t in 0..out_len {
                        let window = &di[t * e..(t + w) * e];
                        for f in 0..f_count {
                            let gtf = g[t * f_count + f];
                            if gtf != 0.0 {
                                let base = f * w * e;
                                for (off, iv) in window.iter().enumerate() {
                                    s[base + off] += gtf * iv;
                                }
                            }
                        }
                    }
                });
                acc(buf, *bias, &mut |s| {
                    for t in 0..out_len {
                        for f in 0..f_count {
                            s[f] += g[t * f_count + f];
                        }
                    }
                });
            }
            Op::MaxOverTime { input, argmax } => {
                let f_count = argmax.len();
                acc(buf, *input, &mut |s| {
                    for f in 0..f_count {
                        s[argmax[f] * f_count + f] += g[f];
                    }
                });
            }
            Op::Pick { input, index } => {
                let g0 = g[0];
                acc(buf, *input, &mut |s| s[*index] += g0);
            }
            Op::Row { input, row } => {
                let e = self.nodes[*input].value.cols();
                acc(buf, *input, &mut |s| {
                    for j in 0..e {
                        s[row * e + j] += g[j];
                    }
                });
            }
            Op::StackScalars(parts) => {
                for (t, p) in parts.iter().enumerate() {
                    let gt = g[t];
                    acc(buf, *p, &mut |s| s[0] += gt);
                }
            }
            Op::Reshape(a) => {
                acc(buf, *a, &mut |s| for (d, x) in s.iter_mut().zip(g) { *d += x });
            }
        }
    }
}

/// Weights of one GRU, as tape variables.
#[derive(Clone, Copy)]
pub struct GruVars {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wh: Var,
    pub uh: Var,
    pub bh: Var,
}

/// One GRU step:
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   cand = tanh(Wh x + Uh (r * h) + bh)
///   h' = (1 - z) * h + z * cand
pub fn gru_cell(tape: &mut Tape, h: Var, x: Var, w: &GruVars) -> Result<Var> {
    tape.count_gru_step();
    let gate = |tape: &mut Tape, wx: Var, uh: Var, b: Var, x: Var, h: Var| -> Result<Var> {
        let a = tape.matvec(wx, x)?;
        let c = tape.matvec(uh, h)?;
        let s = tape.add(a, c)?;
        tape.add(s, b)
    };
    let z = {
        let pre = gate(tape, w.wz, w.uz, w.bz, x, h)?;
        tape.sigmoid(pre)?
    };
    let r = {
        let pre = gate(tape, w.wr, w.ur, w.br, x, h)?;
        tape.sigmoid(pre)?
    };
    let rh = tape.mul(r, h)?;
    let cand = {
        let pre = gate(tape, w.wh, w.uh, w.bh, x, rh)?;
        tape.tanh(pre)?
    };
    let keep = tape.one_minus(z)?;
    let kept = tape.mul(keep, h)?;
    let new = tape.mul(z, cand)?;
    tape.add(kept, new)
}
