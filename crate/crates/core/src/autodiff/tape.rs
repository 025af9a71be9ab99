//! Operation tape for reverse-mode differentiation.
//!
//! Every primitive computes its value eagerly and, when at least one input
//! requires gradients, records itself so that [`Tape::backward`] can replay
//! the chain rule in reverse insertion order.

use rand::Rng;
use rayon::prelude::*;

use super::params::{Gradients, ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Lookup { table: ParamId, rows: Vec<usize> },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    SelectRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    MeanRows(Var, Vec<usize>),
    Softmax(Var),
    Dropout(Var, Vec<f64>),
    Interpolate(Var, Var, f64),
    ScatterRows(Var, Vec<usize>),
    SumAll(Var),
    SumSquares(Var),
    CrossEntropy(Var, Vec<usize>),
    PairWalk(Box<PairWalk>),
}

#[derive(Debug)]
struct PairWalk {
    edges: Var,
    weight: Var,
    mask: Vec<bool>,
    n: usize,
    beta: f64,
    /// `W e_kj` for every cell, kept for the backward pass.
    projected: Vec<f64>,
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param(id) | Op::Lookup { table: id, .. } => self.params.get(id).requires_grad,
            Op::Leaf => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, &[])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.params.value(id).clone();
        self.push(t, Op::Param(id), &[])
    }

    /// Embedding-row lookup straight from a parameter table.
    pub fn lookup(&mut self, table: ParamId, rows: &[usize]) -> Result<Var> {
        let t = self.params.value(table);
        let (n, c) = t.dims();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= n {
                return Err(Error::IndexOutOfRange("lookup", r, n));
            }
            data.extend_from_slice(t.row_slice(r));
        }
        let value = Tensor::matrix(rows.len(), c, data)?;
        Ok(self.push(
            value,
            Op::Lookup {
                table,
                rows: rows.to_vec(),
            },
            &[],
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims();
        let (k2, n) = self.value(b).dims();
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, y) in orow.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * y;
                }
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.value(a).dims();
        let av = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        let value = Tensor::matrix(n, m, out).expect("shape");
        self.push(value, Op::Transpose(a), &[a])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).dims() != self.value(b).dims() {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn elementwise(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let (m, n) = self.value(a).dims();
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        Tensor::matrix(m, n, data).expect("shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (m, n) = self.value(a).dims();
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::Add(a, b), &[a, b]))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims();
        if self.value(row).dims() != (1, n) {
            return Err(Error::shape("add_row", self.shape(a), self.shape(row)));
        }
        let r = self.value(row).data();
        let data = self
            .value(a)
            .data()
            .chunks(n.max(1))
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| x + y))
            .collect::<Vec<_>>();
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::AddRow(a, row), &[a, row]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (m, n) = self.value(a).dims();
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.elementwise(a, |x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.elementwise(a, sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.elementwise(a, f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    /// Concatenation along the last axis; all inputs need the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        };
        let m = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != m {
                return Err(Error::shape("concat", self.shape(first), self.shape(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// Concatenation along the first axis.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidArgument("stack of zero tensors".into()));
        };
        let n = self.value(first).cols();
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            if self.value(p).cols() != n {
                return Err(Error::shape("stack_rows", self.shape(first), self.shape(p)));
            }
            m += self.value(p).rows();
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::StackRows(parts.to_vec()), parts))
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.value(a).dims();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(Error::IndexOutOfRange("select_rows", r, m));
            }
            data.extend_from_slice(self.value(a).row_slice(r));
        }
        let value = Tensor::matrix(rows.len(), n, data)?;
        Ok(self.push(value, Op::SelectRows(a, rows.to_vec()), &[a]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims();
        if start + len > n {
            return Err(Error::shape("slice_cols", self.shape(a), &[start, len]));
        }
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&self.value(a).row_slice(r)[start..start + len]);
        }
        let value = Tensor::matrix(m, len, data)?;
        Ok(self.push(value, Op::SliceCols(a, start), &[a]))
    }

    /// Mean of the given rows, as a `1 x n` row.
    pub fn mean_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.value(a).dims();
        if rows.is_empty() {
            return Err(Error::InvalidArgument("mean over an empty index set".into()));
        }
        let mut out = vec![0.0; n];
        for &r in rows {
            if r >= m {
                return Err(Error::IndexOutOfRange("mean_rows", r, m));
            }
            for (o, x) in out.iter_mut().zip(self.value(a).row_slice(r)) {
                *o += x;
            }
        }
        let k = rows.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        Ok(self.push(Tensor::row(out), Op::MeanRows(a, rows.to_vec()), &[a]))
    }

    /// Row-wise softmax. With a mask, positions whose flag is `false` get
    /// probability zero and the remaining positions are normalized.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (m, n) = self.value(a).dims();
        if let Some(mask) = mask {
            if mask.len() != n {
                return Err(Error::shape("softmax", self.shape(a), &[mask.len()]));
            }
        }
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            data.extend(softmax_row(self.value(a).row_slice(r), mask)?);
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::Softmax(a), &[a]))
    }

    /// Inverted dropout: kept entries are divided by the keep probability.
    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - rate;
        let mult: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let (m, n) = self.value(a).dims();
        let data = zip_map(self.value(a).data(), &mult, |x, k| x * k);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::Dropout(a, mult), &[a]))
    }

    /// `alpha * x + (1 - alpha) * y`.
    pub fn interpolate(&mut self, x: Var, y: Var, alpha: f64) -> Result<Var> {
        self.same_shape("interpolate", x, y)?;
        let (m, n) = self.value(x).dims();
        let data = zip_map(self.value(x).data(), self.value(y).data(), |a, b| {
            alpha * a + (1.0 - alpha) * b
        });
        Ok(self.push(
            Tensor::matrix(m, n, data)?,
            Op::Interpolate(x, y, alpha),
            &[x, y],
        ))
    }

    /// Adds row `r` of `src` into row `targets[r]` of a zero `total x n` matrix.
    pub fn scatter_rows(&mut self, src: Var, targets: &[usize], total: usize) -> Result<Var> {
        let (m, n) = self.value(src).dims();
        if targets.len() != m {
            return Err(Error::shape("scatter_rows", self.shape(src), &[targets.len()]));
        }
        let mut out = vec![0.0; total * n];
        for (r, &t) in targets.iter().enumerate() {
            if t >= total {
                return Err(Error::IndexOutOfRange("scatter_rows", t, total));
            }
            for (o, x) in out[t * n..(t + 1) * n]
                .iter_mut()
                .zip(self.value(src).row_slice(r))
            {
                *o += x;
            }
        }
        let value = Tensor::matrix(total, n, out)?;
        Ok(self.push(value, Op::ScatterRows(src, targets.to_vec()), &[src]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a), &[a])
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|x| x * x).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(a), &[a])
    }

    /// Summed negative log-likelihood of `gold[r]` under the softmax of
    /// logits row `r`.
    pub fn cross_entropy(&mut self, logits: Var, gold: &[usize]) -> Result<Var> {
        let (m, n) = self.value(logits).dims();
        if gold.len() != m {
            return Err(Error::shape("cross_entropy", self.shape(logits), &[gold.len()]));
        }
        let mut total = 0.0;
        for (r, &g) in gold.iter().enumerate() {
            if g >= n {
                return Err(Error::IndexOutOfRange("cross_entropy", g, n));
            }
            let row = self.value(logits).row_slice(r);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            total += lse - row[g];
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy(logits, gold.to_vec()),
            &[logits],
        ))
    }

    /// One synchronous walk-aggregation step over an `n*n x d` edge matrix.
    ///
    /// For every unordered node pair `i < j`, sums
    /// `sigmoid(e_ik * (W e_kj))` over intermediates `k` with both edges
    /// present and blends it with the previous value:
    /// `beta * e_ij + (1 - beta) * sum`. Both `(i, j)` and `(j, i)` receive
    /// the result; the diagonal stays zero.
    pub fn pair_walk(
        &mut self,
        edges: Var,
        weight: Var,
        mask: &[bool],
        n: usize,
        beta: f64,
    ) -> Result<Var> {
        let (rows, d) = self.value(edges).dims();
        if rows != n * n || mask.len() != n * n {
            return Err(Error::shape("pair_walk", self.shape(edges), &[n, n, mask.len()]));
        }
        if self.value(weight).dims() != (d, d) {
            return Err(Error::shape("pair_walk", self.shape(edges), self.shape(weight)));
        }
        let e = self.value(edges).data();
        let w = self.value(weight).data();
        let projected = project_cells(e, w, n * n, d);
        let out = walk_forward(e, &projected, mask, n, d, beta);
        let value = Tensor::matrix(n * n, d, out)?;
        let op = Op::PairWalk(Box::new(PairWalk {
            edges,
            weight,
            mask: mask.to_vec(),
            n,
            beta,
            projected,
        }));
        Ok(self.push(value, op, &[edges, weight]))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        let mut out = Gradients::default();
        if !self.nodes[loss.0].requires_grad {
            return Ok(out);
        }
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.add_dense(*id, &g),
                Op::Lookup { table, rows } => {
                    let c = node.value.cols();
                    for (r, &row) in rows.iter().enumerate() {
                        out.add_row(*table, c, row, &g[r * c..(r + 1) * c]);
                    }
                }
                op => self.propagate(op, &node.value, &g, &mut grads),
            }
        }
        Ok(out)
    }

    fn accum(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(buf);
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf | Op::Param(_) | Op::Lookup { .. } => unreachable!(),
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims();
                let n = self.value(*b).cols();
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.accum(grads, *a, |ga| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            ga[i * k + p] += dot(grow, &bv[p * n..(p + 1) * n]);
                        }
                    }
                });
                self.accum(grads, *b, |gb| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = self.value(*a).dims();
                self.accum(grads, *a, |ga| {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, |ga| add_assign(ga, g));
                self.accum(grads, *b, |gb| add_assign(gb, g));
            }
            Op::AddRow(a, row) => {
                let n = self.value(*row).cols();
                self.accum(grads, *a, |ga| add_assign(ga, g));
                self.accum(grads, *row, |gr| {
                    for chunk in g.chunks(n.max(1)) {
                        add_assign(gr, chunk);
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.accum(grads, *a, |ga| {
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * y;
                    }
                });
                self.accum(grads, *b, |gb| {
                    for ((o, gi), x) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * x;
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accum(grads, *a, |ga| {
                    for (o, gi) in ga.iter_mut().zip(g) {
                        *o += gi * s;
                    }
                });
            }
            Op::Sigmoid(a) => {
                self.accum(grads, *a, |ga| {
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(out.data()) {
                        *o += gi * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(a) => {
                self.accum(grads, *a, |ga| {
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(out.data()) {
                        *o += gi * (1.0 - y * y);
                    }
                });
            }
            Op::Concat(parts) => {
                let (m, total) = out.dims();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    self.accum(grads, p, |gp| {
                        for r in 0..m {
                            add_assign(
                                &mut gp[r * c..(r + 1) * c],
                                &g[r * total + offset..r * total + offset + c],
                            );
                        }
                    });
                    offset += c;
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accum(grads, p, |gp| add_assign(gp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SelectRows(a, rows) => {
                let n = self.value(*a).cols();
                self.accum(grads, *a, |ga| {
                    for (r, &src) in rows.iter().enumerate() {
                        add_assign(&mut ga[src * n..(src + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let n = self.value(*a).cols();
                let (m, len) = out.dims();
                self.accum(grads, *a, |ga| {
                    for r in 0..m {
                        add_assign(
                            &mut ga[r * n + start..r * n + start + len],
                            &g[r * len..(r + 1) * len],
                        );
                    }
                });
            }
            Op::MeanRows(a, rows) => {
                let n = self.value(*a).cols();
                let k = rows.len() as f64;
                self.accum(grads, *a, |ga| {
                    for &r in rows {
                        for (o, gi) in ga[r * n..(r + 1) * n].iter_mut().zip(g) {
                            *o += gi / k;
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let (m, n) = out.dims();
                self.accum(grads, *a, |ga| {
                    for r in 0..m {
                        let y = &out.data()[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let inner = dot(y, gr);
                        for j in 0..n {
                            ga[r * n + j] += y[j] * (gr[j] - inner);
                        }
                    }
                });
            }
            Op::Dropout(a, mult) => {
                self.accum(grads, *a, |ga| {
                    for ((o, gi), k) in ga.iter_mut().zip(g).zip(mult) {
                        *o += gi * k;
                    }
                });
            }
            Op::Interpolate(x, y, alpha) => {
                self.accum(grads, *x, |gx| {
                    for (o, gi) in gx.iter_mut().zip(g) {
                        *o += alpha * gi;
                    }
                });
                self.accum(grads, *y, |gy| {
                    for (o, gi) in gy.iter_mut().zip(g) {
                        *o += (1.0 - alpha) * gi;
                    }
                });
            }
            Op::ScatterRows(src, targets) => {
                let n = self.value(*src).cols();
                self.accum(grads, *src, |gs| {
                    for (r, &t) in targets.iter().enumerate() {
                        add_assign(&mut gs[r * n..(r + 1) * n], &g[t * n..(t + 1) * n]);
                    }
                });
            }
            Op::SumAll(a) => {
                self.accum(grads, *a, |ga| ga.iter_mut().for_each(|o| *o += g[0]));
            }
            Op::SumSquares(a) => {
                let av = self.value(*a).data();
                self.accum(grads, *a, |ga| {
                    for (o, x) in ga.iter_mut().zip(av) {
                        *o += 2.0 * x * g[0];
                    }
                });
            }
            Op::CrossEntropy(logits, gold) => {
                let n = self.value(*logits).cols();
                let lv = self.value(*logits);
                self.accum(grads, *logits, |gl| {
                    for (r, &t) in gold.iter().enumerate() {
                        let p = softmax_row(lv.row_slice(r), None).expect("unmasked");
                        for (j, pj) in p.iter().enumerate() {
                            let ind = if j == t { 1.0 } else { 0.0 };
                            gl[r * n + j] += g[0] * (pj - ind);
                        }
                    }
                });
            }
            Op::PairWalk(pw) => self.pair_walk_backward(pw, g, grads),
        }
    }

    fn pair_walk_backward(&self, pw: &PairWalk, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let n = pw.n;
        let e = self.value(pw.edges).data();
        let w = self.value(pw.weight).data();
        let d = self.value(pw.edges).cols();
        let p = &pw.projected;
        let beta = pw.beta;
        let mut de = vec![0.0; n * n * d];
        let mut dp = vec![0.0; n * n * d];
        let mut ds = vec![0.0; d];
        for i in 0..n {
            for j in i + 1..n {
                let ij = i * n + j;
                let ji = j * n + i;
                // both output cells carry the same value
                let gsum: Vec<f64> = (0..d).map(|a| g[ij * d + a] + g[ji * d + a]).collect();
                for a in 0..d {
                    de[ij * d + a] += beta * gsum[a];
                }
                for k in 0..n {
                    if k == i || k == j || !pw.mask[i * n + k] || !pw.mask[k * n + j] {
                        continue;
                    }
                    let ik = i * n + k;
                    let kj = k * n + j;
                    for a in 0..d {
                        let s = sigmoid(e[ik * d + a] * p[kj * d + a]);
                        ds[a] = (1.0 - beta) * gsum[a] * s * (1.0 - s);
                    }
                    for a in 0..d {
                        de[ik * d + a] += ds[a] * p[kj * d + a];
                        dp[kj * d + a] += ds[a] * e[ik * d + a];
                    }
                }
            }
        }
        // P = E W^T (row convention): dE += dP W, dW += dP^T E
        let need_w = self.nodes[pw.weight.0].requires_grad;
        let mut dw = vec![0.0; d * d];
        for cell in 0..n * n {
            let dpc = &dp[cell * d..(cell + 1) * d];
            if dpc.iter().all(|&x| x == 0.0) {
                continue;
            }
            let ec = &e[cell * d..(cell + 1) * d];
            for a in 0..d {
                let ga = dpc[a];
                if ga == 0.0 {
                    continue;
                }
                let wrow = &w[a * d..(a + 1) * d];
                for b in 0..d {
                    de[cell * d + b] += ga * wrow[b];
                }
                if need_w {
                    for b in 0..d {
                        dw[a * d + b] += ga * ec[b];
                    }
                }
            }
        }
        self.accum(grads, pw.edges, |ge| add_assign(ge, &de));
        self.accum(grads, pw.weight, |gw| add_assign(gw, &dw));
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// Softmax of one row; masked-out positions get exactly zero.
pub fn softmax_row(row: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    let on = |j: usize| mask.map_or(true, |m| m[j]);
    if !(0..row.len()).any(on) {
        return Err(Error::AllMasked);
    }
    let mx = (0..row.len())
        .filter(|&j| on(j))
        .map(|j| row[j])
        .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) });
    let mut out: Vec<f64> = (0..row.len())
        .map(|j| if on(j) { (row[j] - mx).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}

/// `W e` for each of `cells` row vectors of width `d`.
fn project_cells(e: &[f64], w: &[f64], cells: usize, d: usize) -> Vec<f64> {
    let mut p = vec![0.0; cells * d];
    p.par_chunks_mut(d).enumerate().for_each(|(c, out)| {
        let ec = &e[c * d..(c + 1) * d];
        if ec.iter().all(|&x| x == 0.0) {
            return;
        }
        for (a, o) in out.iter_mut().enumerate() {
            *o = dot(&w[a * d..(a + 1) * d], ec);
        }
    });
    p
}

fn walk_forward(e: &[f64], p: &[f64], mask: &[bool], n: usize, d: usize, beta: f64) -> Vec<f64> {
    // each row i owns the cells (i, j) with j > i
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rows = vec![0.0; n * d];
            let mut agg = vec![0.0; d];
            for j in i + 1..n {
                agg.iter_mut().for_each(|x| *x = 0.0);
                for k in 0..n {
                    if k == i || k == j || !mask[i * n + k] || !mask[k * n + j] {
                        continue;
                    }
                    let ik = (i * n + k) * d;
                    let kj = (k * n + j) * d;
                    for a in 0..d {
                        agg[a] += sigmoid(e[ik + a] * p[kj + a]);
                    }
                }
                let ij = (i * n + j) * d;
                for a in 0..d {
                    rows[j * d + a] = beta * e[ij + a] + (1.0 - beta) * agg[a];
                }
            }
            rows
        })
        .collect();
    let mut out = vec![0.0; n * n * d];
    for i in 0..n {
        for j in i + 1..n {
            let v = &upper[i][j * d..(j + 1) * d];
            out[(i * n + j) * d..(i * n + j + 1) * d].copy_from_slice(v);
            out[(j * n + i) * d..(j * n + i + 1) * d].copy_from_slice(v);
        }
    }
    out
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
