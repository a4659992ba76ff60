//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes. Shape mismatches
//! inside an op are programming errors and panic; non-finite outputs are
//! recorded and surfaced as [`Error::NonFinite`] when the value is read for a
//! loss or when [`Graph::backward`] runs.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Tensor};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Identity(Var),
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Softmax { x: Var, causal: bool },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gelu(Var),
    Embed { table: Var, ids: Vec<usize> },
    ConcatRows(Vec<Var>),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Transpose(Var),
    CrossEntropy { logits: Var, rows: Vec<(usize, usize)>, probs: Vec<T> },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Identity(_) => "identity",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Softmax { causal: false, .. } => "softmax",
            Op::Softmax { causal: true, .. } => "causal_softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu(_) => "gelu",
            Op::Embed { .. } => "embed",
            Op::ConcatRows(_) => "concat",
            Op::SliceRows { .. } => "slice",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(_) => "concat_cols",
            Op::Transpose(_) => "transpose",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    consumed: bool,
    non_finite: Option<&'static str>,
}

/// Gradients of a scalar with respect to every node of a graph.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `v`; zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn reaches(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }

    pub(crate) fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads[v.0].take()
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn row_dims(shape: &[usize]) -> (usize, usize) {
    let cols = *shape.last().unwrap_or(&1);
    let rows = if cols == 0 { 0 } else { shape.iter().product::<usize>() / cols };
    (rows, cols)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
            non_finite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(op.name());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        row_dims(self.shape(v))
    }

    /// First op that produced a non-finite value, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            Some(op) => Err(Error::NonFinite { op }),
            None => Ok(()),
        }
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn identity(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::Identity(x))
    }

    /// `a[n,k] @ b[k,m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_impl(a, b, false)
    }

    /// `a[n,k] @ b[m,k]^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Var {
        let (n, k) = self.dims(a);
        let (br, bc) = self.dims(b);
        let (kb, m) = if trans_b { (bc, br) } else { (br, bc) };
        assert_eq!(k, kb, "matmul inner dims {:?} x {:?}", self.shape(a), self.shape(b));
        let mut out = vec![T::zero(); n * m];
        gemm(
            n,
            k,
            m,
            self.value(a).data(),
            false,
            self.value(b).data(),
            trans_b,
            &mut out,
            T::zero(),
        );
        let value = Tensor::new(vec![n, m], out).expect("matmul shape");
        self.push(value, Op::MatMul { a, b, trans_b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let mut value = self.value(a).clone();
        for (x, y) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *x += *y;
        }
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `[cols]` vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (_, cols) = self.dims(a);
        assert_eq!(self.value(bias).numel(), cols, "add_row bias length");
        let mut value = self.value(a).clone();
        let b = self.value(bias).data();
        for row in value.data_mut().chunks_mut(cols.max(1)) {
            for (x, y) in row.iter_mut().zip(b) {
                *x += *y;
            }
        }
        self.push(value, Op::AddRow(a, bias))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes");
        let mut value = self.value(a).clone();
        for (x, y) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *x *= *y;
        }
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::from_f64(s);
        let mut value = self.value(a).clone();
        for x in value.data_mut() {
            *x *= s;
        }
        self.push(value, Op::Scale(a, s))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        self.softmax_impl(x, false)
    }

    /// Row-wise softmax where column `j > i` of row `i` is masked out.
    pub fn causal_softmax(&mut self, x: Var) -> Var {
        self.softmax_impl(x, true)
    }

    fn softmax_impl(&mut self, x: Var, causal: bool) -> Var {
        let (_, cols) = self.dims(x);
        let mut value = self.value(x).clone();
        if cols > 0 {
            for (i, row) in value.data_mut().chunks_mut(cols).enumerate() {
                let live = if causal { (i + 1).min(cols) } else { cols };
                softmax_in_place(&mut row[..live]);
                for v in &mut row[live..] {
                    *v = T::zero();
                }
            }
        }
        self.push(value, Op::Softmax { x, causal })
    }

    /// Layer normalisation over the last axis with affine `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (rows, cols) = self.dims(x);
        assert_eq!(self.value(gain).numel(), cols, "layer_norm gain");
        assert_eq!(self.value(bias).numel(), cols, "layer_norm bias");
        let eps = T::from_f64(LN_EPS);
        let n = T::from_f64(cols as f64);
        let xv = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![T::zero(); rows * cols];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out).expect("layer_norm shape");
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            let z = v.as_f64();
            *v = T::from_f64(0.5 * z * (1.0 + (GELU_C * (z + GELU_K * z * z * z)).tanh()));
        }
        self.push(value, Op::Gelu(x))
    }

    /// Gathers rows `ids` of `table[vocab, d]` into `[ids.len(), d]`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let (vocab, d) = self.dims(table);
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < vocab, "embed id {id} >= {vocab}");
            out.extend_from_slice(&t[id * d..(id + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], out).expect("embed shape");
        self.push(
            value,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Stacks `[r_i, d]` blocks into `[sum r_i, d]`.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let d = self.dims(parts[0]).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            assert_eq!(c, d, "concat_rows widths");
            out.extend_from_slice(self.value(p).data());
            rows += r;
        }
        let value = Tensor::new(vec![rows, d], out).expect("concat shape");
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Var {
        let (rows, _) = self.dims(x);
        assert!(start <= end && end <= rows, "slice_rows {start}..{end} of {rows}");
        let value = self.value(x).slice_rows(start, end);
        self.push(value, Op::SliceRows { x, start })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let (rows, cols) = self.dims(x);
        assert!(start <= end && end <= cols, "slice_cols {start}..{end} of {cols}");
        let w = end - start;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + end]);
        }
        let value = Tensor::new(vec![rows, w], out).expect("slice_cols shape");
        self.push(value, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts.iter().map(|&p| self.dims(p).1).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            assert_eq!(self.dims(p).0, rows, "concat_cols rows");
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let value = Tensor::new(vec![rows, total], out).expect("concat_cols shape");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (rows, cols) = self.dims(x);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = src[r * cols + c];
            }
        }
        let value = Tensor::new(vec![cols, rows], out).expect("transpose shape");
        self.push(value, Op::Transpose(x))
    }

    /// Mean cross-entropy over the rows selected by `mask`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (rows, vocab) = self.dims(logits);
        if targets.len() != rows || mask.len() != rows {
            return Err(Error::Shape(format!(
                "cross_entropy: {rows} rows, {} targets, {} mask entries",
                targets.len(),
                mask.len()
            )));
        }
        let selected: Vec<(usize, usize)> = (0..rows)
            .filter(|&r| mask[r])
            .map(|r| (r, targets[r]))
            .collect();
        if selected.is_empty() {
            return Err(Error::EmptyMask);
        }
        if let Some(&(_, t)) = selected.iter().find(|&&(_, t)| t >= vocab) {
            return Err(Error::TokenOutOfRange { id: t, vocab });
        }
        let z = self.value(logits).data();
        let mut probs = Vec::with_capacity(selected.len() * vocab);
        let mut total = 0.0f64;
        for &(r, t) in &selected {
            let row = &z[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            total += (lse - row[t]).as_f64();
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let loss = T::from_f64(total / selected.len() as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                rows: selected,
                probs,
            },
        ))
    }

    /// Runs reverse-mode accumulation from the scalar `loss`.
    ///
    /// A tape can be differentiated once; a second call returns
    /// [`Error::TapeConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.check_finite()?;
        let shape = self.shape(loss).to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NotScalar(shape));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            self.backprop_node(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }

        let mut bad = None;
        for g in grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                bad = Some("backward");
                break;
            }
        }
        if let Some(op) = bad {
            return Err(Error::NonFinite { op });
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn backprop_node(&self, i: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let (rows, cols) = row_dims(node.value.shape());
        match &node.op {
            Op::Leaf => {}
            Op::Identity(x) => self.acc(grads, *x, |g| add_into(g, gy)),
            Op::MatMul { a, b, trans_b } => {
                let (n, k) = self.dims(*a);
                let m = cols;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if *trans_b {
                    // y = a @ b^T, b: [m, k]
                    self.acc(grads, *a, |g| gemm(n, m, k, gy, false, bv, false, g, T::one()));
                    self.acc(grads, *b, |g| gemm(m, n, k, gy, true, av, false, g, T::one()));
                } else {
                    // y = a @ b, b: [k, m]
                    self.acc(grads, *a, |g| gemm(n, m, k, gy, false, bv, true, g, T::one()));
                    self.acc(grads, *b, |g| gemm(k, n, m, av, true, gy, false, g, T::one()));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |g| add_into(g, gy));
                self.acc(grads, *b, |g| add_into(g, gy));
            }
            Op::AddRow(a, bias) => {
                self.acc(grads, *a, |g| add_into(g, gy));
                self.acc(grads, *bias, |g| {
                    for row in gy.chunks(cols.max(1)) {
                        add_into(g, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.acc(grads, *a, |g| {
                    for ((g, &d), &o) in g.iter_mut().zip(gy).zip(bv) {
                        *g += d * o;
                    }
                });
                self.acc(grads, *b, |g| {
                    for ((g, &d), &o) in g.iter_mut().zip(gy).zip(av) {
                        *g += d * o;
                    }
                });
            }
            Op::Scale(a, s) => self.acc(grads, *a, |g| {
                for (g, &d) in g.iter_mut().zip(gy) {
                    *g += d * *s;
                }
            }),
            Op::Sum(a) => self.acc(grads, *a, |g| {
                for g in g.iter_mut() {
                    *g += gy[0];
                }
            }),
            Op::Softmax { x, .. } => self.acc(grads, *x, |g| {
                for r in 0..rows {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let dr = &gy[r * cols..(r + 1) * cols];
                    let dot: T = yr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
                    for c in 0..cols {
                        g[r * cols + c] += yr[c] * (dr[c] - dot);
                    }
                }
            }),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let gv = self.value(*gain).data();
                let n = T::from_f64(cols as f64);
                self.acc(grads, *x, |g| {
                    for r in 0..rows {
                        let h = &xhat[r * cols..(r + 1) * cols];
                        let d = &gy[r * cols..(r + 1) * cols];
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for c in 0..cols {
                            let dh = d[c] * gv[c];
                            mean_dh += dh;
                            mean_dh_h += dh * h[c];
                        }
                        mean_dh /= n;
                        mean_dh_h /= n;
                        for c in 0..cols {
                            let dh = d[c] * gv[c];
                            g[r * cols + c] += rstd[r] * (dh - mean_dh - h[c] * mean_dh_h);
                        }
                    }
                });
                self.acc(grads, *gain, |g| {
                    for r in 0..rows {
                        for c in 0..cols {
                            g[c] += gy[r * cols + c] * xhat[r * cols + c];
                        }
                    }
                });
                self.acc(grads, *bias, |g| {
                    for row in gy.chunks(cols.max(1)) {
                        add_into(g, row);
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                self.acc(grads, *x, |g| {
                    for ((g, &d), &v) in g.iter_mut().zip(gy).zip(xv) {
                        let z = v.as_f64();
                        let t = (GELU_C * (z + GELU_K * z * z * z)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * z * z);
                        *g += d * T::from_f64(0.5 * (1.0 + t) + 0.5 * z * dt);
                    }
                });
            }
            Op::Embed { table, ids } => self.acc(grads, *table, |g| {
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut g[id * cols..(id + 1) * cols], &gy[r * cols..(r + 1) * cols]);
                }
            }),
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    self.acc(grads, p, |g| add_into(g, &gy[off..off + len]));
                    off += len;
                }
            }
            Op::SliceRows { x, start } => {
                let c = self.dims(*x).1;
                let s = start * c;
                self.acc(grads, *x, |g| add_into(&mut g[s..s + gy.len()], gy));
            }
            Op::SliceCols { x, start } => {
                let xc = self.dims(*x).1;
                self.acc(grads, *x, |g| {
                    for r in 0..rows {
                        add_into(
                            &mut g[r * xc + start..r * xc + start + cols],
                            &gy[r * cols..(r + 1) * cols],
                        );
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    self.acc(grads, p, |g| {
                        for r in 0..rows {
                            add_into(&mut g[r * w..(r + 1) * w], &gy[r * cols + off..r * cols + off + w]);
                        }
                    });
                    off += w;
                }
            }
            Op::Transpose(x) => {
                // y: [cols, rows] of x; here rows/cols refer to y.
                self.acc(grads, *x, |g| {
                    for r in 0..rows {
                        for c in 0..cols {
                            g[c * rows + r] += gy[r * cols + c];
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                rows: sel,
                probs,
            } => {
                let vocab = self.dims(*logits).1;
                let scale = gy[0] / T::from_f64(sel.len() as f64);
                self.acc(grads, *logits, |g| {
                    for (k, &(r, t)) in sel.iter().enumerate() {
                        let p = &probs[k * vocab..(k + 1) * vocab];
                        let gr = &mut g[r * vocab..(r + 1) * vocab];
                        for c in 0..vocab {
                            gr[c] += p[c] * scale;
                        }
                        gr[t] -= scale;
                    }
                });
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(vec![T::zero(); self.nodes[v.0].value.numel()]);
        }
        f(slot.as_mut().expect("initialised"));
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
