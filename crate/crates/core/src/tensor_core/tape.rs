//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation evaluates eagerly and appends a node holding its value and
//! the handles of its inputs. [`Tape::backward`] walks the nodes in reverse
//! creation order, which is a valid topological order by construction.

use std::rc::Rc;

use crate::error::{arg_err, shape_err, Result};

use super::tensor::softmax_strided;
use super::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    AddConst(Var),
    MulConst(Var, Rc<Vec<f64>>),
    Sigmoid(Var),
    Gelu(Var),
    Relu(Var),
    Softmax { x: Var, outer: usize, n: usize, inner: usize },
    LayerNorm { x: Var, gain: Var, shift: Var, eps: f64 },
    Gather { table: Var, ids: Vec<usize> },
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    CrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<bool> },
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

/// A recording of one forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!("{what}: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, delta: &[T]) {
    match slot {
        Some(g) => g.iter_mut().zip(delta).for_each(|(g, &d)| *g = *g + d),
        None => *slot = Some(delta.to_vec()),
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

#[inline]
fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let k = T::of(0.044715);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

#[inline]
fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let k = T::of(0.044715);
    let half = T::of(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * k * x * x)
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `c[m,n] = a[m,k] · b[k,n]`
pub(crate) fn matmul_into<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj = *cj + aip * bj;
            }
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s = s + x * y;
    }
    s
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Gradients are tracked iff the tensor requires them.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let needs_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor<T>) -> Var {
        t.set_requires_grad(false);
        self.leaf(t)
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        self.value(v).dims2()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(shape_err!("matmul [{m},{k}] x [{k2},{n}]"));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ` for `a: [m,k]`, `b: [n,k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (n, k2) = self.dims2(b)?;
        if k != k2 {
            return Err(shape_err!("matmul_t [{m},{k}] x [{n},{k2}]^T"));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(dot(&ad[i * k..(i + 1) * k], &bd[j * k..(j + 1) * k]));
            }
        }
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMulT(a, b), &[a, b]))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, what)?;
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "add", |p, q| p + q)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "sub", |p, q| p - q)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "mul", |p, q| p * q)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`n` vector to every row of `x: [.., n]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap();
        if self.value(bias).len() != n {
            return Err(shape_err!(
                "row bias of length {} for rows of {n}",
                self.value(bias).len()
            ));
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(&p, &q)| p + q))
            .collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(t, Op::AddRow(x, bias), &[x, bias]))
    }

    /// `scale * x + offset`
    pub fn affine(&mut self, x: Var, scale: f64, offset: f64) -> Result<Var> {
        let (s, o) = (T::of(scale), T::of(offset));
        let v = self.value(x);
        let data = v.data().iter().map(|&p| s * p + o).collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Affine(x, scale), &[x]))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.affine(x, s, 0.0)
    }

    /// `1 - x`
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        self.affine(x, -1.0, 1.0)
    }

    /// Adds a constant tensor (e.g. a `-inf` attention mask).
    pub fn add_const(&mut self, x: Var, c: &[f64]) -> Result<Var> {
        let v = self.value(x);
        if v.len() != c.len() {
            return Err(shape_err!("constant of length {} for {:?}", c.len(), v.shape()));
        }
        let data = v.data().iter().zip(c).map(|(&p, &q)| p + T::of(q)).collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddConst(x), &[x]))
    }

    /// Multiplies by a constant tensor of the same size.
    pub fn mul_const(&mut self, x: Var, c: Rc<Vec<f64>>) -> Result<Var> {
        let v = self.value(x);
        if v.len() != c.len() {
            return Err(shape_err!("constant of length {} for {:?}", c.len(), v.shape()));
        }
        let data = v.data().iter().zip(c.iter()).map(|(&p, &q)| p * T::of(q)).collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        Ok(self.push(t, Op::MulConst(x, c), &[x]))
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T) -> Result<Tensor<T>> {
        let v = self.value(x);
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|&p| f(p)).collect())
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.map(x, sigmoid)?;
        Ok(self.push(t, Op::Sigmoid(x), &[x]))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.map(x, gelu)?;
        Ok(self.push(t, Op::Gelu(x), &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.map(x, |p| p.max(T::zero()))?;
        Ok(self.push(t, Op::Relu(x), &[x]))
    }

    /// Softmax along `axis`, with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = Tensor::<T>::axis_split(self.shape(x), axis)?;
        let v = self.value(x);
        let mut data = v.data().to_vec();
        softmax_strided(&mut data, outer, n, inner);
        let t = Tensor::new(v.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Softmax { x, outer, n, inner }, &[x]))
    }

    /// Normalizes over the last axis, then applies `gain` and `shift`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(arg_err!("layer_norm eps must be positive, got {eps}"));
        }
        let n = *self.shape(x).last().unwrap();
        if self.value(gain).len() != n || self.value(shift).len() != n {
            return Err(shape_err!(
                "layer_norm gain/shift lengths {}/{} for last axis {n}",
                self.value(gain).len(),
                self.value(shift).len()
            ));
        }
        let (g, s) = (self.value(gain).data(), self.value(shift).data());
        let e = T::of(eps);
        let nn = T::of(n as f64);
        let mut data = Vec::with_capacity(self.value(x).len());
        for row in self.value(x).data().chunks(n) {
            let mean = row.iter().copied().sum::<T>() / nn;
            let var = row.iter().map(|&p| (p - mean) * (p - mean)).sum::<T>() / nn;
            let rstd = T::one() / (var + e).sqrt();
            for j in 0..n {
                data.push(g[j] * (row[j] - mean) * rstd + s[j]);
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(t, Op::LayerNorm { x, gain, shift, eps }, &[x, gain, shift]))
    }

    /// Selects rows of a `[rows, cols]` table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims2(table)?;
        if ids.is_empty() {
            return Err(arg_err!("gather_rows with no ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(arg_err!("id {bad} out of range for table of {rows} rows"));
        }
        let td = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            data.extend_from_slice(&td[i * cols..(i + 1) * cols]);
        }
        let t = Tensor::new(vec![ids.len(), cols], data)?;
        Ok(self.push(
            t,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims2(x)?;
        if len == 0 || start + len > rows {
            return Err(shape_err!("rows {start}..{} of {rows}", start + len));
        }
        let data = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        let t = Tensor::new(vec![len, cols], data)?;
        Ok(self.push(t, Op::SliceRows { x, start }, &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims2(x)?;
        if len == 0 || start + len > cols {
            return Err(shape_err!("cols {start}..{} of {cols}", start + len));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let t = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(t, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(arg_err!("concat_cols of nothing"));
        }
        let rows = self.dims2(parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if r != rows {
                return Err(shape_err!("concat_cols row counts {r} vs {rows}"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let t = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(arg_err!("concat_rows of nothing"));
        }
        let cols = self.dims2(parts[0])?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if c != cols {
                return Err(shape_err!("concat_rows col counts {c} vs {cols}"));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Mean token cross-entropy of `logits: [n, V]` against `targets`,
    /// counting only rows where `mask` is true.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (n, vocab) = self.dims2(logits)?;
        if targets.len() != n || mask.len() != n {
            return Err(shape_err!(
                "cross_entropy over {n} rows with {} targets and {} mask entries",
                targets.len(),
                mask.len()
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(arg_err!("cross_entropy with every target masked"));
        }
        let ld = self.value(logits).data();
        let mut total = T::zero();
        for i in (0..n).filter(|&i| mask[i]) {
            let t = targets[i];
            if t >= vocab {
                return Err(arg_err!("target id {t} out of range for vocabulary {vocab}"));
            }
            let row = &ld[i * vocab..(i + 1) * vocab];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
            total = total + lse - row[t];
        }
        let t = Tensor::scalar(total / T::of(count as f64));
        Ok(self.push(
            t,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum::<T>();
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), &[x]))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Backpropagates from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(arg_err!(
                "backward from non-scalar of shape {:?}",
                self.shape(root)
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let want = |v: Var| self.nodes[v.0].needs_grad;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                if want(*a) {
                    let bd = val(*b).data();
                    let da = slot(grads, *a, m * k);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            da[i * k + p] = da[i * k + p] + dot(grow, &bd[p * n..(p + 1) * n]);
                        }
                    }
                }
                if want(*b) {
                    let ad = val(*a).data();
                    let db = slot(grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            if aip == T::zero() {
                                continue;
                            }
                            let drow = &mut db[p * n..(p + 1) * n];
                            for (d, &gj) in drow.iter_mut().zip(grow) {
                                *d = *d + aip * gj;
                            }
                        }
                    }
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[0];
                if want(*a) {
                    let bd = val(*b).data();
                    let da = slot(grads, *a, m * k);
                    for i in 0..m {
                        let drow = &mut da[i * k..(i + 1) * k];
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for (d, &bj) in drow.iter_mut().zip(&bd[j * k..(j + 1) * k]) {
                                *d = *d + gij * bj;
                            }
                        }
                    }
                }
                if want(*b) {
                    let ad = val(*a).data();
                    let db = slot(grads, *b, n * k);
                    for i in 0..m {
                        let arow = &ad[i * k..(i + 1) * k];
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for (d, &ai) in db[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                *d = *d + gij * ai;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if want(*a) {
                    accumulate(&mut grads[a.0], g);
                }
                if want(*b) {
                    accumulate(&mut grads[b.0], g);
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    accumulate(&mut grads[a.0], g);
                }
                if want(*b) {
                    let neg: Vec<T> = g.iter().map(|&x| -x).collect();
                    accumulate(&mut grads[b.0], &neg);
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    let d: Vec<T> = g.iter().zip(val(*b).data()).map(|(&x, &y)| x * y).collect();
                    accumulate(&mut grads[a.0], &d);
                }
                if want(*b) {
                    let d: Vec<T> = g.iter().zip(val(*a).data()).map(|(&x, &y)| x * y).collect();
                    accumulate(&mut grads[b.0], &d);
                }
            }
            Op::AddRow(x, bias) => {
                if want(*x) {
                    accumulate(&mut grads[x.0], g);
                }
                if want(*bias) {
                    let n = val(*bias).len();
                    let db = slot(grads, *bias, n);
                    for row in g.chunks(n) {
                        for (d, &r) in db.iter_mut().zip(row) {
                            *d = *d + r;
                        }
                    }
                }
            }
            Op::Affine(x, s) => {
                if want(*x) {
                    let s = T::of(*s);
                    let d: Vec<T> = g.iter().map(|&v| v * s).collect();
                    accumulate(&mut grads[x.0], &d);
                }
            }
            Op::AddConst(x) => {
                if want(*x) {
                    accumulate(&mut grads[x.0], g);
                }
            }
            Op::MulConst(x, c) => {
                if want(*x) {
                    let d: Vec<T> = g.iter().zip(c.iter()).map(|(&v, &q)| v * T::of(q)).collect();
                    accumulate(&mut grads[x.0], &d);
                }
            }
            Op::Sigmoid(x) => {
                if want(*x) {
                    let y = node.value.data();
                    let d: Vec<T> = g
                        .iter()
                        .zip(y)
                        .map(|(&v, &s)| v * s * (T::one() - s))
                        .collect();
                    accumulate(&mut grads[x.0], &d);
                }
            }
            Op::Gelu(x) => {
                if want(*x) {
                    let d: Vec<T> = g
                        .iter()
                        .zip(val(*x).data())
                        .map(|(&v, &p)| v * gelu_grad(p))
                        .collect();
                    accumulate(&mut grads[x.0], &d);
                }
            }
            Op::Relu(x) => {
                if want(*x) {
                    let d: Vec<T> = g
                        .iter()
                        .zip(val(*x).data())
                        .map(|(&v, &p)| if p > T::zero() { v } else { T::zero() })
                        .collect();
                    accumulate(&mut grads[x.0], &d);
                }
            }
            Op::Softmax { x, outer, n, inner } => {
                if want(*x) {
                    let y = node.value.data();
                    let (outer, n, inner) = (*outer, *n, *inner);
                    let mut d = vec![T::zero(); y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| o * n * inner + j * inner + i;
                            let s = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum::<T>();
                            for j in 0..n {
                                d[idx(j)] = y[idx(j)] * (g[idx(j)] - s);
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], &d);
                }
            }
            Op::LayerNorm { x, gain, shift, eps } => {
                let xd = val(*x).data();
                let gd = val(*gain).data();
                let n = gd.len();
                let nn = T::of(n as f64);
                let e = T::of(*eps);
                let mut dx = vec![T::zero(); xd.len()];
                let mut dgain = vec![T::zero(); n];
                let mut dshift = vec![T::zero(); n];
                let mut xhat = vec![T::zero(); n];
                let mut dxhat = vec![T::zero(); n];
                for (r, row) in xd.chunks(n).enumerate() {
                    let grow = &g[r * n..(r + 1) * n];
                    let mean = row.iter().copied().sum::<T>() / nn;
                    let var = row.iter().map(|&p| (p - mean) * (p - mean)).sum::<T>() / nn;
                    let rstd = T::one() / (var + e).sqrt();
                    for j in 0..n {
                        xhat[j] = (row[j] - mean) * rstd;
                        dxhat[j] = grow[j] * gd[j];
                        dgain[j] = dgain[j] + grow[j] * xhat[j];
                        dshift[j] = dshift[j] + grow[j];
                    }
                    let m1 = dxhat.iter().copied().sum::<T>() / nn;
                    let m2 = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / nn;
                    for j in 0..n {
                        dx[r * n + j] = rstd * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                if want(*x) {
                    accumulate(&mut grads[x.0], &dx);
                }
                if want(*gain) {
                    accumulate(&mut grads[gain.0], &dgain);
                }
                if want(*shift) {
                    accumulate(&mut grads[shift.0], &dshift);
                }
            }
            Op::Gather { table, ids } => {
                if want(*table) {
                    let (rows, cols) = (val(*table).shape()[0], val(*table).shape()[1]);
                    let dt = slot(grads, *table, rows * cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            dt[id * cols + c] = dt[id * cols + c] + g[r * cols + c];
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                if want(*x) {
                    let len = val(*x).len();
                    let cols = val(*x).shape()[1];
                    let dx = slot(grads, *x, len);
                    for (d, &v) in dx[start * cols..start * cols + g.len()].iter_mut().zip(g) {
                        *d = *d + v;
                    }
                }
            }
            Op::SliceCols { x, start } => {
                if want(*x) {
                    let (rows, cols) = (val(*x).shape()[0], val(*x).shape()[1]);
                    let w = node.value.shape()[1];
                    let dx = slot(grads, *x, rows * cols);
                    for r in 0..rows {
                        for c in 0..w {
                            let o = r * cols + start + c;
                            dx[o] = dx[o] + g[r * w + c];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.shape()[1];
                let rows = node.value.shape()[0];
                let mut off = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    if want(p) {
                        let dp = slot(grads, p, rows * w);
                        for r in 0..rows {
                            for c in 0..w {
                                dp[r * w + c] = dp[r * w + c] + g[r * total + off + c];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = val(p).len();
                    if want(p) {
                        accumulate(&mut grads[p.0], &g[off..off + len]);
                    }
                    off += len;
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
            } => {
                if want(*logits) {
                    let (n, vocab) = (val(*logits).shape()[0], val(*logits).shape()[1]);
                    let ld = val(*logits).data();
                    let count = mask.iter().filter(|&&m| m).count();
                    let scale = g[0] / T::of(count as f64);
                    let dl = slot(grads, *logits, n * vocab);
                    for i in (0..n).filter(|&i| mask[i]) {
                        let row = &ld[i * vocab..(i + 1) * vocab];
                        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                        let z = row.iter().map(|&v| (v - max).exp()).sum::<T>();
                        for j in 0..vocab {
                            let p = (row[j] - max).exp() / z;
                            let onehot = if j == targets[i] { T::one() } else { T::zero() };
                            dl[i * vocab + j] = dl[i * vocab + j] + scale * (p - onehot);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if want(*x) {
                    let d = vec![g[0]; val(*x).len()];
                    accumulate(&mut grads[x.0], &d);
                }
            }
        }
    }
}
