//! Reverse-mode tape over small dense vectors and matrices.
//!
//! A [`Graph`] borrows a frozen [`ParamSet`], records every operation of one
//! forward pass as a node, and [`Graph::backward`] replays the nodes in
//! reverse to produce [`Gradients`] for the parameters. The graph is
//! consumed by `backward`, so each training step builds a fresh tape.
//!
//! Parameters live in `f32`; values recorded on the tape are `f64`, so
//! finite-difference checks are limited by truncation rather than rounding.

use crate::error::{Error, Result};
use crate::numcore::rng::Rng;
use crate::numcore::tensor::{Gradients, ParamId, ParamSet};

/// Node handle inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    Row { param: ParamId, index: usize },
    Linear { terms: Vec<(Var, Var)>, bias: Option<Var> },
    MatTVec { m: Var, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
    Sum(Vec<Var>),
    Dot(Var, Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
    rows: usize,
    cols: usize,
}

struct DropoutState {
    rate: f32,
    rng: Rng,
}

/// Single-threaded recording tape for one forward pass.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    dropout: Option<DropoutState>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_values(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn log_softmax_values(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    xs.iter().map(|&x| x - lse).collect()
}

/// Numerically stable softmax of a plain slice.
pub fn softmax(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::Invalid("softmax of an empty vector".into()));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("softmax input contains NaN".into()));
    }
    Ok(softmax_values(xs))
}

/// Numerically stable log-softmax of a plain slice.
pub fn log_softmax(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::Invalid("log-softmax of an empty vector".into()));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("log-softmax input contains NaN".into()));
    }
    Ok(log_softmax_values(xs))
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            dropout: None,
        }
    }

    /// Training-mode graph: [`Graph::dropout`] zeroes inputs with
    /// probability `rate` and rescales survivors by `1 / (1 - rate)`.
    pub fn with_dropout(params: &'p ParamSet, rate: f32, rng: Rng) -> Self {
        let mut g = Graph::new(params);
        if rate > 0.0 {
            g.dropout = Some(DropoutState { rate, rng });
        }
        g
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`; handles to them
    /// become invalid. Lets inference reuse a prefix such as an encoder pass.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        for slot in &mut self.param_nodes {
            if slot.is_some_and(|v| v.0 >= len) {
                *slot = None;
            }
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>, rows: usize, cols: usize) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            op,
            value,
            rows,
            cols,
        });
        Var(self.nodes.len() - 1)
    }

    /// Values of a node, row-major.
    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// `(rows, cols)` of a node; vectors are `n x 1`.
    pub fn dims(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn len_of(&self, v: Var) -> usize {
        let (r, c) = self.dims(v);
        r * c
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn constant(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(Op::Const, values, n, 1)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![0.0; n])
    }

    /// Leaf for a whole parameter tensor; repeated calls share one node.
    pub fn param(&mut self, pid: ParamId) -> Var {
        if let Some(v) = self.param_nodes[pid.0] {
            return v;
        }
        let t = self.params.get(pid);
        let (rows, cols) = t.dims2();
        let value = t.data().iter().map(|&x| x as f64).collect();
        let v = self.push(Op::Param(pid), value, rows, cols);
        self.param_nodes[pid.0] = Some(v);
        v
    }

    /// Embedding lookup: row `index` of a parameter matrix.
    pub fn row(&mut self, pid: ParamId, index: usize) -> Result<Var> {
        let t = self.params.get(pid);
        let (rows, cols) = t.dims2();
        if index >= rows {
            return Err(Error::Shape(format!(
                "row {index} out of range for {} with {rows} rows",
                self.params.name(pid)
            )));
        }
        let value = t.data()[index * cols..(index + 1) * cols]
            .iter()
            .map(|&x| x as f64)
            .collect();
        Ok(self.push(Op::Row { param: pid, index }, value, cols, 1))
    }

    /// `sum_i W_i x_i + b`.
    pub fn linear(&mut self, terms: &[(Var, Var)], bias: Option<Var>) -> Result<Var> {
        let out = match (terms.first(), bias) {
            (Some(&(w, _)), _) => self.dims(w).0,
            (None, Some(b)) => self.len_of(b),
            (None, None) => return Err(Error::Shape("linear with no terms".into())),
        };
        let mut acc = vec![0.0f64; out];
        for &(w, x) in terms {
            let (r, c) = self.dims(w);
            if r != out || c != self.len_of(x) {
                return Err(Error::Shape(format!(
                    "linear term {r}x{c} applied to vector of {} (output {out})",
                    self.len_of(x)
                )));
            }
            let wv = self.value(w);
            let xv = self.value(x);
            for (i, a) in acc.iter_mut().enumerate() {
                let row = &wv[i * c..(i + 1) * c];
                *a += row.iter().zip(xv).map(|(wi, xi)| wi * xi).sum::<f64>();
            }
        }
        if let Some(b) = bias {
            if self.len_of(b) != out {
                return Err(Error::Shape(format!(
                    "bias of {} for output {out}",
                    self.len_of(b)
                )));
            }
            for (a, bv) in acc.iter_mut().zip(self.value(b)) {
                *a += bv;
            }
        }
        Ok(self.push(
            Op::Linear {
                terms: terms.to_vec(),
                bias,
            },
            acc,
            out,
            1,
        ))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.linear(&[(w, x)], None)
    }

    /// `M^T x` for `M` of shape `m x n` and `x` of length `m`.
    pub fn mat_t_vec(&mut self, m: Var, x: Var) -> Result<Var> {
        let (r, c) = self.dims(m);
        if self.len_of(x) != r {
            return Err(Error::Shape(format!(
                "transpose product {r}x{c} with vector of {}",
                self.len_of(x)
            )));
        }
        let mv = self.value(m);
        let xv = self.value(x);
        let mut acc = vec![0.0f64; c];
        for i in 0..r {
            let xi = xv[i];
            for (a, &mij) in acc.iter_mut().zip(&mv[i * c..(i + 1) * c]) {
                *a += mij * xi;
            }
        }
        Ok(self.push(Op::MatTVec { m, x }, acc, c, 1))
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.dims(a),
                self.dims(b)
            )));
        }
        Ok(())
    }

    fn zip_op(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_len(a, b, "elementwise")?;
        let (r, c) = self.dims(a);
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(op, value, r, c))
    }

    fn map_op(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (r, c) = self.dims(a);
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(op, value, r, c)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map_op(a, Op::Scale(a, k), |x| x * k)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map_op(a, Op::OneMinus(a), |x| 1.0 - x)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_op(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_op(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map_op(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for &p in parts {
            value.extend_from_slice(self.value(p));
        }
        let n = value.len();
        self.push(Op::Concat(parts.to_vec()), value, n, 1)
    }

    /// Stacks equal-length vectors into the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(Error::Shape("stack of zero rows".into()));
        };
        let c = self.len_of(first);
        let mut value = Vec::with_capacity(c * rows.len());
        for &r in rows {
            if self.len_of(r) != c {
                return Err(Error::Shape("stack rows differ in length".into()));
            }
            value.extend_from_slice(self.value(r));
        }
        Ok(self.push(Op::Stack(rows.to_vec()), value, rows.len(), c))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let value = softmax(self.value(a))?;
        let n = value.len();
        Ok(self.push(Op::Softmax(a), value, n, 1))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let value = log_softmax(self.value(a))?;
        let n = value.len();
        Ok(self.push(Op::LogSoftmax(a), value, n, 1))
    }

    /// Scalar element `index` of a vector.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let n = self.len_of(a);
        if index >= n {
            return Err(Error::Shape(format!("pick {index} from vector of {n}")));
        }
        let value = vec![self.value(a)[index]];
        Ok(self.push(Op::Pick(a, index), value, 1, 1))
    }

    /// Sum of scalars; an empty sum is the constant zero.
    pub fn sum(&mut self, items: &[Var]) -> Var {
        if items.is_empty() {
            return self.constant(vec![0.0]);
        }
        let s: f64 = items.iter().map(|&v| self.value(v)[0]).sum();
        self.push(Op::Sum(items.to_vec()), vec![s], 1, 1)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.len_of(a) != self.len_of(b) {
            return Err(Error::Shape(format!(
                "dot of {} and {}",
                self.len_of(a),
                self.len_of(b)
            )));
        }
        let s: f64 = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .sum();
        Ok(self.push(Op::Dot(a, b), vec![s], 1, 1))
    }

    /// Inverted dropout; the identity when the graph is not training.
    pub fn dropout(&mut self, a: Var) -> Var {
        let Some(state) = self.dropout.as_mut() else {
            return a;
        };
        let keep = 1.0 - state.rate;
        let n = self.nodes[a.0].rows * self.nodes[a.0].cols;
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if state.rng.unit() < keep {
                    1.0 / keep as f64
                } else {
                    0.0
                }
            })
            .collect();
        let m = self.constant(mask);
        self.mul(a, m).expect("mask matches input")
    }

    /// Propagates d(loss)/d(node) back to the parameters.
    ///
    /// `loss` must be a scalar node. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self.params);
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Graph::backward`] but accumulates into existing buffers.
    pub fn backward_into(self, loss: Var, out: &mut Gradients) -> Result<()> {
        if self.len_of(loss) != 1 {
            return Err(Error::Shape("backward from a non-scalar".into()));
        }
        if !self.scalar(loss).is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {}",
                self.scalar(loss)
            )));
        }
        let mut sink = Sink {
            graph: &self,
            node_grads: Vec::new(),
            param_grads: Vec::new(),
        };
        sink.node_grads.resize_with(self.nodes.len(), || None);
        sink.param_grads.resize_with(self.params.len(), || None);
        sink.node_grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = sink.node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const | Op::Param(_) => {}
                Op::Row { param, index } => {
                    let cols = g.len();
                    let n = self.params.get(*param).len();
                    let buf = sink.param_grads[param.0].get_or_insert_with(|| vec![0.0; n]);
                    for (o, gi) in buf[index * cols..(index + 1) * cols].iter_mut().zip(&g) {
                        *o += gi;
                    }
                }
                Op::Linear { terms, bias } => {
                    for &(w, x) in terms {
                        let (r, c) = self.dims(w);
                        if sink.wants(x) {
                            let wv = self.value(w);
                            let mut dx = vec![0.0f64; c];
                            for i in 0..r {
                                let gi = g[i];
                                if gi == 0.0 {
                                    continue;
                                }
                                for (d, &wij) in dx.iter_mut().zip(&wv[i * c..(i + 1) * c]) {
                                    *d += gi * wij;
                                }
                            }
                            sink.add(x, &dx);
                        }
                        if sink.wants(w) {
                            let xv = self.value(x);
                            sink.with_buffer(w, |buf| {
                                for i in 0..r {
                                    let gi = g[i];
                                    if gi == 0.0 {
                                        continue;
                                    }
                                    for (b, &xj) in buf[i * c..(i + 1) * c].iter_mut().zip(xv) {
                                        *b += gi * xj;
                                    }
                                }
                            });
                        }
                    }
                    if let Some(b) = bias {
                        sink.add(*b, &g);
                    }
                }
                Op::MatTVec { m, x } => {
                    let (r, c) = self.dims(*m);
                    if sink.wants(*x) {
                        let mv = self.value(*m);
                        let dx: Vec<f64> = (0..r)
                            .map(|i| {
                                mv[i * c..(i + 1) * c]
                                    .iter()
                                    .zip(&g)
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>()
                            })
                            .collect();
                        sink.add(*x, &dx);
                    }
                    if sink.wants(*m) {
                        let xv = self.value(*x);
                        sink.with_buffer(*m, |buf| {
                            for i in 0..r {
                                let xi = xv[i];
                                for (b, &gj) in buf[i * c..(i + 1) * c].iter_mut().zip(&g) {
                                    *b += xi * gj;
                                }
                            }
                        });
                    }
                }
                Op::Add(a, b) => {
                    sink.add(*a, &g);
                    sink.add(*b, &g);
                }
                Op::Sub(a, b) => {
                    sink.add(*a, &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    sink.add(*b, &neg);
                }
                Op::Mul(a, b) => {
                    if sink.wants(*a) {
                        let da: Vec<f64> =
                            g.iter().zip(self.value(*b)).map(|(x, y)| x * y).collect();
                        sink.add(*a, &da);
                    }
                    if sink.wants(*b) {
                        let db: Vec<f64> =
                            g.iter().zip(self.value(*a)).map(|(x, y)| x * y).collect();
                        sink.add(*b, &db);
                    }
                }
                Op::Scale(a, k) => {
                    let d: Vec<f64> = g.iter().map(|v| v * k).collect();
                    sink.add(*a, &d);
                }
                Op::OneMinus(a) => {
                    let d: Vec<f64> = g.iter().map(|v| -v).collect();
                    sink.add(*a, &d);
                }
                Op::Tanh(a) => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gi, y)| gi * (1.0 - y * y))
                        .collect();
                    sink.add(*a, &d);
                }
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gi, y)| gi * y * (1.0 - y))
                        .collect();
                    sink.add(*a, &d);
                }
                Op::Relu(a) => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gi, y)| if *y > 0.0 { *gi } else { 0.0 })
                        .collect();
                    sink.add(*a, &d);
                }
                Op::Concat(parts) | Op::Stack(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.len_of(p);
                        sink.add(p, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let d: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| yi * (gi - gy)).collect();
                    sink.add(*a, &d);
                }
                Op::LogSoftmax(a) => {
                    let gsum: f64 = g.iter().sum();
                    let d: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gi, ly)| gi - ly.exp() * gsum)
                        .collect();
                    sink.add(*a, &d);
                }
                Op::Pick(a, index) => {
                    if sink.wants(*a) {
                        let index = *index;
                        let g0 = g[0];
                        sink.with_buffer(*a, |buf| buf[index] += g0);
                    }
                }
                Op::Sum(items) => {
                    for &it in items {
                        sink.add(it, &g);
                    }
                }
                Op::Dot(a, b) => {
                    let da: Vec<f64> = self.value(*b).iter().map(|v| v * g[0]).collect();
                    let db: Vec<f64> = self.value(*a).iter().map(|v| v * g[0]).collect();
                    sink.add(*a, &da);
                    sink.add(*b, &db);
                }
            }
        }

        for (pid, acc) in sink.param_grads.into_iter().enumerate() {
            if let Some(acc) = acc {
                for (o, v) in out.get_mut(ParamId(pid)).iter_mut().zip(acc) {
                    *o += v as f32;
                }
            }
        }
        Ok(())
    }
}

/// Gradient buffers for the backward sweep. Parameter leaves accumulate
/// into per-parameter buffers that are rounded into `f32` once at the end.
struct Sink<'a, 'p> {
    graph: &'a Graph<'p>,
    node_grads: Vec<Option<Vec<f64>>>,
    param_grads: Vec<Option<Vec<f64>>>,
}

impl Sink<'_, '_> {
    fn wants(&self, v: Var) -> bool {
        !matches!(self.graph.nodes[v.0].op, Op::Const)
    }

    fn with_buffer(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        let n = self.graph.len_of(v);
        match self.graph.nodes[v.0].op {
            Op::Const => {}
            Op::Param(pid) => f(self.param_grads[pid.0].get_or_insert_with(|| vec![0.0; n])),
            _ => f(self.node_grads[v.0].get_or_insert_with(|| vec![0.0; n])),
        }
    }

    fn add(&mut self, v: Var, g: &[f64]) {
        self.with_buffer(v, |buf| {
            for (b, x) in buf.iter_mut().zip(g) {
                *b += x;
            }
        });
    }
}
