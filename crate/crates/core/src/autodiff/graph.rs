//! Define-by-run reverse-mode differentiation.
//!
//! Every primitive appends a node holding its forward value and the handles of
//! its operands. Nodes are only ever appended, so node order is a topological
//! order and the backward sweep walks it in reverse.

use super::params::{ParamId, ParameterStore};
use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Equal,
    /// rhs is a row vector added to every row of lhs
    RowBias,
    /// rhs holds a single value
    ScalarRhs,
    /// lhs holds a single value
    ScalarLhs,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogClamped(Var, f64),
    SumAll(Var),
    SumAxis {
        x: Var,
        outer: usize,
        n: usize,
        inner: usize,
        keep: Option<Vec<bool>>,
    },
    GatherRows(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Concat {
        parts: Vec<Var>,
        outer: usize,
        inner: usize,
    },
    SliceLast {
        x: Var,
        start: usize,
        len: usize,
    },
    Reshape(Var),
    Dropout(Var, Vec<f64>),
    WhereRows(Vec<bool>, Var, Var),
}

/// Name of the primitive that produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Leaf,
    Param(ParamId),
    Primitive(&'static str),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

/// A computation graph built for one training or inference step.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    clamp_events: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated into this node by all backward passes so far.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Number of entries the clamped logarithm had to floor.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn provenance(&self, v: Var) -> (Provenance, Vec<Var>) {
        use Op::*;
        let op = &self.nodes[v.0].op;
        let (name, parents): (&'static str, Vec<Var>) = match op {
            Leaf => return (Provenance::Leaf, vec![]),
            Param(id) => return (Provenance::Param(*id), vec![]),
            MatMul(a, b) => ("matmul", vec![*a, *b]),
            BatchMatMul(a, b) => ("batch_matmul", vec![*a, *b]),
            Add(a, b, _) => ("add", vec![*a, *b]),
            Mul(a, b, _) => ("mul", vec![*a, *b]),
            Affine(x, _) => ("affine", vec![*x]),
            Tanh(x) => ("tanh", vec![*x]),
            Sigmoid(x) => ("sigmoid", vec![*x]),
            Softmax(x) => ("softmax", vec![*x]),
            LogClamped(x, _) => ("log", vec![*x]),
            SumAll(x) => ("sum", vec![*x]),
            SumAxis { x, .. } => ("sum_axis", vec![*x]),
            GatherRows(x, _) => ("gather_rows", vec![*x]),
            Pick(x, _) => ("pick", vec![*x]),
            Concat { parts, .. } => ("concat", parts.clone()),
            SliceLast { x, .. } => ("slice", vec![*x]),
            Reshape(x) => ("reshape", vec![*x]),
            Dropout(x, _) => ("dropout", vec![*x]),
            WhereRows(_, a, b) => ("where_rows", vec![*a, *b]),
        };
        (Provenance::Primitive(name), parents)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(
            value.all_finite() || !self.operands_finite(&op),
            "non-finite value produced from finite operands"
        );
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn operands_finite(&self, op: &Op) -> bool {
        let v = |x: &Var| self.nodes[x.0].value.all_finite();
        match op {
            Op::Leaf | Op::Param(_) => true,
            Op::MatMul(a, b)
            | Op::BatchMatMul(a, b)
            | Op::Add(a, b, _)
            | Op::Mul(a, b, _)
            | Op::WhereRows(_, a, b) => v(a) && v(b),
            Op::Concat { parts, .. } => parts.iter().all(v),
            Op::Affine(x, _)
            | Op::Tanh(x)
            | Op::Sigmoid(x)
            | Op::Softmax(x)
            | Op::LogClamped(x, _)
            | Op::SumAll(x)
            | Op::SumAxis { x, .. }
            | Op::GatherRows(x, _)
            | Op::Pick(x, _)
            | Op::SliceLast { x, .. }
            | Op::Reshape(x)
            | Op::Dropout(x, _) => v(x),
        }
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    // ---- leaves ----

    /// A constant input; gradients flow into it but it is never updated.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Copies the current value of a stored parameter into the graph.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    // ---- linear algebra ----

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    /// `[B,m,k] x [B,k,n] -> [B,m,n]`
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(self.shape_err("batch_matmul", a, b));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bs * m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for i in 0..bs {
            gemm_acc(
                &av[i * m * k..(i + 1) * m * k],
                &bv[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        Ok(self.push(Tensor::new(vec![bs, m, n], out)?, Op::BatchMatMul(a, b)))
    }

    // ---- elementwise ----

    fn broadcast_kind(&self, op: &'static str, a: Var, b: Var, allow_bias: bool) -> Result<Broadcast> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(Broadcast::Equal)
        } else if tb.len() == 1 {
            Ok(Broadcast::ScalarRhs)
        } else if ta.len() == 1 {
            Ok(Broadcast::ScalarLhs)
        } else if allow_bias
            && tb.rank() <= 2
            && tb.outer_len() == 1
            && ta.rank() >= 1
            && tb.last_dim() == ta.last_dim()
        {
            Ok(Broadcast::RowBias)
        } else {
            Err(self.shape_err(op, a, b))
        }
    }

    /// Elementwise sum; also accepts a scalar operand or a row-vector bias on the right.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind("add", a, b, true)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = match kind {
            Broadcast::Equal => zip_map(ta, tb, |x, y| x + y),
            Broadcast::ScalarRhs => ta.map(|x| x + tb.item()),
            Broadcast::ScalarLhs => tb.map(|y| ta.item() + y),
            Broadcast::RowBias => {
                let mut out = ta.clone();
                let bias = tb.data();
                for row in out.data_mut().chunks_mut(bias.len()) {
                    for (x, b) in row.iter_mut().zip(bias) {
                        *x += b;
                    }
                }
                out
            }
        };
        Ok(self.push(out, Op::Add(a, b, kind)))
    }

    /// Elementwise product; shapes must match or one side must be a scalar.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind("mul", a, b, false)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = match kind {
            Broadcast::Equal => zip_map(ta, tb, |x, y| x * y),
            Broadcast::ScalarRhs => ta.map(|x| x * tb.item()),
            Broadcast::ScalarLhs => tb.map(|y| ta.item() * y),
            Broadcast::RowBias => unreachable!(),
        };
        Ok(self.push(out, Op::Mul(a, b, kind)))
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::Affine(x, scale))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.affine(b, -1.0, 0.0);
        self.add(a, nb)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.masked_softmax(x, None)
    }

    /// Softmax over the last axis restricted to entries where `mask` is true;
    /// masked entries get probability exactly zero.
    pub fn masked_softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let t = self.value(x);
        if let Some(m) = mask {
            if m.len() != t.len() {
                return Err(Error::Shape {
                    op: "masked_softmax",
                    lhs: t.shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
        }
        let c = t.last_dim();
        let mut out = t.clone();
        for (r, row) in out.data_mut().chunks_mut(c).enumerate() {
            let keep = |j: usize| mask.is_none_or(|m| m[r * c + j]);
            softmax_row(row, keep).map_err(|_| {
                Error::Tensor(format!("masked_softmax: row {r} has every position masked"))
            })?;
        }
        Ok(self.push(out, Op::Softmax(x)))
    }

    /// Natural log of `max(x, floor)`. Entries below the floor are counted and
    /// receive zero gradient.
    pub fn log_clamped(&mut self, x: Var, floor: f64) -> Var {
        let t = self.value(x);
        let clamped = t.data().iter().filter(|&&v| v < floor).count();
        let out = t.map(|v| v.max(floor).ln());
        self.clamp_events += clamped;
        self.push(out, Op::LogClamped(x, floor))
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    /// Sums out one axis.
    ///
    /// Each output element is reduced over its values sorted by magnitude
    /// order (`f64::total_cmp`), so permuting the summed slices along `axis`
    /// gives a bit-identical result.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.masked_sum_axis(x, axis, None)
    }

    /// [`Graph::sum_axis`] that only includes slices whose `keep` entry is true.
    /// `keep` is indexed by `(outer, position along axis)`.
    pub fn masked_sum_axis(&mut self, x: Var, axis: usize, keep: Option<&[bool]>) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape();
        if axis >= shape.len() {
            return Err(Error::Tensor(format!("sum_axis: axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        if let Some(k) = keep {
            if k.len() != outer * n {
                return Err(Error::Shape {
                    op: "masked_sum_axis",
                    lhs: shape.to_vec(),
                    rhs: vec![k.len()],
                });
            }
        }
        let data = t.data();
        let mut out = vec![0.0; outer * inner];
        let mut buf = Vec::with_capacity(n);
        for o in 0..outer {
            for j in 0..inner {
                buf.clear();
                for p in 0..n {
                    if keep.is_none_or(|k| k[o * n + p]) {
                        buf.push(data[(o * n + p) * inner + j]);
                    }
                }
                buf.sort_by(f64::total_cmp);
                out[o * inner + j] = buf.iter().sum();
            }
        }
        let mut out_shape = shape[..axis].to_vec();
        out_shape.extend_from_slice(&shape[axis + 1..]);
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(
            value,
            Op::SumAxis {
                x,
                outer,
                n,
                inner,
                keep: keep.map(<[bool]>::to_vec),
            },
        ))
    }

    // ---- indexing and layout ----

    /// Selects rows along the first axis (embedding lookup, beam reordering).
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape();
        if shape.len() < 2 || rows.is_empty() {
            return Err(Error::Tensor(format!("gather_rows: needs rank >= 2 and indices, got {shape:?}")));
        }
        let n = shape[0];
        let width = t.len() / n;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::Tensor(format!("gather_rows: index {bad} out of range for {n} rows")));
        }
        let mut out = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            out.extend_from_slice(&t.data()[r * width..(r + 1) * width]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[0] = rows.len();
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::GatherRows(x, rows.to_vec())))
    }

    /// Picks one entry per row of `x` viewed as `[rows, last]`; returns `[rows]`.
    pub fn pick(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let c = t.last_dim();
        if cols.len() != t.outer_len() || cols.iter().any(|&j| j >= c) {
            return Err(Error::Shape {
                op: "pick",
                lhs: t.shape().to_vec(),
                rhs: vec![cols.len()],
            });
        }
        let out: Vec<f64> = cols.iter().enumerate().map(|(r, &j)| t.data()[r * c + j]).collect();
        let value = Tensor::vector(out)?;
        Ok(self.push(value, Op::Pick(x, cols.to_vec())))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Tensor("concat: no operands".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Tensor(format!("concat: axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let same = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !same {
                return Err(self.shape_err("concat", first, p));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let block = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                outer,
                inner,
            },
        ))
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let c = t.last_dim();
        if len == 0 || start + len > c {
            return Err(Error::Tensor(format!(
                "slice_last: {start}..{} out of range for {:?}",
                start + len,
                t.shape()
            )));
        }
        let mut out = Vec::with_capacity(t.outer_len() * len);
        for row in t.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::SliceLast { x, start, len }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Multiplies by an externally drawn mask (already scaled for inverted dropout).
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let t = self.value(x);
        if mask.len() != t.len() {
            return Err(Error::Shape {
                op: "dropout",
                lhs: t.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let out: Vec<f64> = t.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Dropout(x, mask)))
    }

    /// Row `r` of the result is row `r` of `a` where `mask[r]`, else of `b`.
    pub fn where_rows(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() || ta.shape().first() != Some(&mask.len()) {
            return Err(self.shape_err("where_rows", a, b));
        }
        let w = ta.len() / mask.len();
        let mut out = Vec::with_capacity(ta.len());
        for (r, &m) in mask.iter().enumerate() {
            let src = if m { ta } else { tb };
            out.extend_from_slice(&src.data()[r * w..(r + 1) * w]);
        }
        let value = Tensor::new(ta.shape().to_vec(), out)?;
        Ok(self.push(value, Op::WhereRows(mask.to_vec(), a, b)))
    }

    // ---- backward ----

    /// Accumulates `d root / d node` into every node reachable from `root`,
    /// and into the stored gradient of every parameter leaf.
    pub fn backward(&mut self, root: Var, store: &mut ParameterStore) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::NonScalarRoot(self.shape(root).to_vec()));
        }
        let mut pass: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        pass[root.0] = Some(Tensor::full(self.shape(root), 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = pass[i].take() else { continue };
            self.backward_node(i, &g, &mut pass);
            if let Op::Param(id) = self.nodes[i].op {
                store.grad_mut(id).add_assign(&g);
            }
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &Tensor, pass: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let gd = g.data();
        match &nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (av, bv) = (val(*a).data(), val(*b).data());
                with_grad(pass, nodes, *a, |da| gemm_nt_acc(gd, bv, da, m, n, k));
                with_grad(pass, nodes, *b, |db| gemm_tn_acc(av, gd, db, m, k, n));
            }
            Op::BatchMatMul(a, b) => {
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let (av, bv) = (val(*a).data(), val(*b).data());
                with_grad(pass, nodes, *a, |da| {
                    for t in 0..bs {
                        gemm_nt_acc(
                            &gd[t * m * n..(t + 1) * m * n],
                            &bv[t * k * n..(t + 1) * k * n],
                            &mut da[t * m * k..(t + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                });
                with_grad(pass, nodes, *b, |db| {
                    for t in 0..bs {
                        gemm_tn_acc(
                            &av[t * m * k..(t + 1) * m * k],
                            &gd[t * m * n..(t + 1) * m * n],
                            &mut db[t * k * n..(t + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                });
            }
            Op::Add(a, b, kind) => match kind {
                Broadcast::Equal => {
                    with_grad(pass, nodes, *a, |d| axpy(d, gd, 1.0));
                    with_grad(pass, nodes, *b, |d| axpy(d, gd, 1.0));
                }
                Broadcast::ScalarRhs => {
                    with_grad(pass, nodes, *a, |d| axpy(d, gd, 1.0));
                    with_grad(pass, nodes, *b, |d| d[0] += gd.iter().sum::<f64>());
                }
                Broadcast::ScalarLhs => {
                    with_grad(pass, nodes, *a, |d| d[0] += gd.iter().sum::<f64>());
                    with_grad(pass, nodes, *b, |d| axpy(d, gd, 1.0));
                }
                Broadcast::RowBias => {
                    with_grad(pass, nodes, *a, |d| axpy(d, gd, 1.0));
                    with_grad(pass, nodes, *b, |d| {
                        let c = d.len();
                        for row in gd.chunks(c) {
                            axpy(d, row, 1.0);
                        }
                    });
                }
            },
            Op::Mul(a, b, kind) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                match kind {
                    Broadcast::Equal => {
                        with_grad(pass, nodes, *a, |d| {
                            for ((d, g), y) in d.iter_mut().zip(gd).zip(bv) {
                                *d += g * y;
                            }
                        });
                        with_grad(pass, nodes, *b, |d| {
                            for ((d, g), x) in d.iter_mut().zip(gd).zip(av) {
                                *d += g * x;
                            }
                        });
                    }
                    Broadcast::ScalarRhs => {
                        with_grad(pass, nodes, *a, |d| axpy(d, gd, bv[0]));
                        with_grad(pass, nodes, *b, |d| d[0] += dot(gd, av));
                    }
                    Broadcast::ScalarLhs => {
                        with_grad(pass, nodes, *a, |d| d[0] += dot(gd, bv));
                        with_grad(pass, nodes, *b, |d| axpy(d, gd, av[0]));
                    }
                    Broadcast::RowBias => unreachable!(),
                }
            }
            Op::Affine(x, scale) => with_grad(pass, nodes, *x, |d| axpy(d, gd, *scale)),
            Op::Tanh(x) => {
                let y = nodes[i].value.data();
                with_grad(pass, nodes, *x, |d| {
                    for ((d, g), y) in d.iter_mut().zip(gd).zip(y) {
                        *d += g * (1.0 - y * y);
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = nodes[i].value.data();
                with_grad(pass, nodes, *x, |d| {
                    for ((d, g), y) in d.iter_mut().zip(gd).zip(y) {
                        *d += g * y * (1.0 - y);
                    }
                });
            }
            Op::Softmax(x) => {
                let y = &nodes[i].value;
                let c = y.last_dim();
                with_grad(pass, nodes, *x, |d| {
                    for ((d, g), y) in d.chunks_mut(c).zip(gd.chunks(c)).zip(y.data().chunks(c)) {
                        let inner = dot(g, y);
                        for j in 0..c {
                            d[j] += y[j] * (g[j] - inner);
                        }
                    }
                });
            }
            Op::LogClamped(x, floor) => {
                let xv = val(*x).data();
                with_grad(pass, nodes, *x, |d| {
                    for ((d, g), &v) in d.iter_mut().zip(gd).zip(xv) {
                        if v >= *floor {
                            *d += g / v;
                        }
                    }
                });
            }
            Op::SumAll(x) => with_grad(pass, nodes, *x, |d| {
                let s = gd[0];
                d.iter_mut().for_each(|d| *d += s);
            }),
            Op::SumAxis {
                x,
                outer,
                n,
                inner,
                keep,
            } => with_grad(pass, nodes, *x, |d| {
                for o in 0..*outer {
                    for p in 0..*n {
                        if keep.as_ref().is_none_or(|k| k[o * n + p]) {
                            let dst = &mut d[(o * n + p) * inner..(o * n + p + 1) * inner];
                            axpy(dst, &gd[o * inner..(o + 1) * inner], 1.0);
                        }
                    }
                }
            }),
            Op::GatherRows(x, rows) => with_grad(pass, nodes, *x, |d| {
                let w = gd.len() / rows.len();
                for (k, &r) in rows.iter().enumerate() {
                    axpy(&mut d[r * w..(r + 1) * w], &gd[k * w..(k + 1) * w], 1.0);
                }
            }),
            Op::Pick(x, cols) => {
                let c = val(*x).last_dim();
                with_grad(pass, nodes, *x, |d| {
                    for (r, &j) in cols.iter().enumerate() {
                        d[r * c + j] += gd[r];
                    }
                });
            }
            Op::Concat { parts, outer, inner } => {
                let axis_total: usize = gd.len() / (outer * inner);
                let mut offset = 0;
                for &p in parts {
                    let width = val(p).len() / outer;
                    with_grad(pass, nodes, p, |d| {
                        for o in 0..*outer {
                            let src = o * axis_total * inner + offset;
                            axpy(&mut d[o * width..(o + 1) * width], &gd[src..src + width], 1.0);
                        }
                    });
                    offset += width;
                }
            }
            Op::SliceLast { x, start, len } => {
                let c = val(*x).last_dim();
                with_grad(pass, nodes, *x, |d| {
                    for (drow, grow) in d.chunks_mut(c).zip(gd.chunks(*len)) {
                        axpy(&mut drow[*start..start + len], grow, 1.0);
                    }
                });
            }
            Op::Reshape(x) => with_grad(pass, nodes, *x, |d| axpy(d, gd, 1.0)),
            Op::Dropout(x, mask) => with_grad(pass, nodes, *x, |d| {
                for ((d, g), m) in d.iter_mut().zip(gd).zip(mask) {
                    *d += g * m;
                }
            }),
            Op::WhereRows(mask, a, b) => {
                let w = gd.len() / mask.len();
                for (var, want) in [(*a, true), (*b, false)] {
                    with_grad(pass, nodes, var, |d| {
                        for (r, &m) in mask.iter().enumerate() {
                            if m == want {
                                axpy(&mut d[r * w..(r + 1) * w], &gd[r * w..(r + 1) * w], 1.0);
                            }
                        }
                    });
                }
            }
        }
    }
}

fn with_grad(pass: &mut [Option<Tensor>], nodes: &[Node], v: Var, f: impl FnOnce(&mut [f64])) {
    let slot = &mut pass[v.0];
    let t = slot.get_or_insert_with(|| Tensor::zeros(nodes[v.0].value.shape()));
    f(t.data_mut());
}

fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    if a == 1.0 {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    } else {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += a * s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes already checked")
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax over the entries selected by `keep`; the rest become 0.
pub(crate) fn softmax_row(row: &mut [f64], keep: impl Fn(usize) -> bool) -> std::result::Result<(), ()> {
    let max = (0..row.len())
        .filter(|&j| keep(j))
        .map(|j| row[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(());
    }
    let mut sum = 0.0;
    for (j, x) in row.iter_mut().enumerate() {
        if keep(j) {
            *x = (*x - max).exp();
            sum += *x;
        } else {
            *x = 0.0;
        }
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
    Ok(())
}
