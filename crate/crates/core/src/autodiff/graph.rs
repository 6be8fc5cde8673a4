//! Tape-based reverse-mode differentiation.
//!
//! Every op appends one node to the tape; node indices are a valid
//! topological order, so the backward pass is a single reverse sweep.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kernels::{batched_matmul, batched_transpose, logsumexp_rows, softmax_rows, transpose2};
use super::tensor::{numel, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul {
        a: Var,
        b: Var,
        shared: bool,
    },
    Transpose(Var),
    Permute {
        a: Var,
        axes: Vec<usize>,
    },
    Reshape(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        a: Var,
        axis: usize,
        start: usize,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    LayerNorm {
        a: Var,
        rstd: Vec<T>,
    },
    Relu(Var),
    Dropout {
        a: Var,
        mask: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        probs: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<T>,
        smoothing: T,
        probs: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    MaskedMean {
        a: Var,
        mask: Vec<bool>,
    },
    BroadcastTo(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A recorded computation.
///
/// Build with [`Graph::new`] for training (dropout active, gradients
/// recorded) or [`Graph::inference`] for decoding.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    train: bool,
    grad_enabled: bool,
    consumed: bool,
    rng: ChaCha8Rng,
}

fn suffix_repeat(a: &[usize], b: &[usize]) -> Option<usize> {
    if b.len() <= a.len() && a[a.len() - b.len()..] == *b {
        Some(numel(a) / numel(b))
    } else {
        None
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// Strides of a row-major shape.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn permute_data<T: Scalar>(data: &[T], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<T>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; out_shape.len()];
    let mut offset = 0usize;
    for _ in 0..data.len() {
        out.push(data[offset]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

/// Splits a shape around `axis` into (outer, axis extent, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, contrib: Vec<T>) {
    match slot {
        Some(g) => {
            for (x, y) in g.iter_mut().zip(contrib) {
                *x += y;
            }
        }
        None => *slot = Some(contrib),
    }
}

impl<T: Scalar> Graph<T> {
    /// Training-mode graph: gradients recorded, dropout active.
    pub fn new(train: bool, seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            train,
            grad_enabled: true,
            consumed: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Evaluation graph: no gradient bookkeeping, dropout disabled.
    pub fn inference() -> Self {
        let mut g = Graph::new(false, 0);
        g.grad_enabled = false;
        g
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad =
            self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        let requires_grad = self.grad_enabled;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass; `None` when no path reached `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor, zeros when nothing reached `v`.
    pub fn grad_tensor(&self, v: Var) -> Tensor<T> {
        let shape = self.shape(v).to_vec();
        match self.grad(v) {
            Some(g) => Tensor::from_parts(shape, g.to_vec()),
            None => Tensor::zeros(&shape),
        }
    }

    // ---- element-wise -------------------------------------------------

    /// `a + b`, where `b` may broadcast over the leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        suffix_repeat(sa, sb).ok_or_else(|| mismatch("add", sa, sb))?;
        let bv = self.value(b).data();
        let nb = bv.len();
        let data: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i % nb])
            .collect();
        let out = Tensor::from_parts(sa.to_vec(), data);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        suffix_repeat(sa, sb).ok_or_else(|| mismatch("sub", sa, sb))?;
        let bv = self.value(b).data();
        let nb = bv.len();
        let data: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x - bv[i % nb])
            .collect();
        let out = Tensor::from_parts(sa.to_vec(), data);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Element-wise product, `b` broadcasting over leading axes of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        suffix_repeat(sa, sb).ok_or_else(|| mismatch("mul", sa, sb))?;
        let bv = self.value(b).data();
        let nb = bv.len();
        let data: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * bv[i % nb])
            .collect();
        let out = Tensor::from_parts(sa.to_vec(), data);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a);
        let out = Tensor::from_parts(
            v.shape().to_vec(),
            v.data().iter().map(|&x| x * c).collect(),
        );
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::from_parts(
            v.shape().to_vec(),
            v.data()
                .iter()
                .map(|&x| if x > T::zero() { x } else { T::zero() })
                .collect(),
        );
        self.push(out, Op::Relu(a), &[a])
    }

    /// Inverted dropout. Identity when `rate == 0` or in eval mode.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Result<Var> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0,1]"
            )));
        }
        if !self.train || rate == 0.0 {
            return Ok(a);
        }
        let keep = T::lit(if rate < 1.0 { 1.0 / (1.0 - rate) } else { 0.0 });
        let n = self.value(a).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let v = self.value(a);
        let data = v.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let out = Tensor::from_parts(v.shape().to_vec(), data);
        Ok(self.push(out, Op::Dropout { a, mask }, &[a]))
    }

    // ---- shape ops ----------------------------------------------------

    /// Batched matrix product over the last two axes.
    ///
    /// `b` is either a plain `[k, n]` matrix shared across the batch, or has
    /// the same leading axes as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let lead = &sa[..sa.len() - 2];
        let shared = sb.len() == 2;
        if k != k2 || (!shared && sb[..sb.len() - 2] != *lead) {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let batch = numel(lead);
        let data = batched_matmul(
            self.value(a).data(),
            self.value(b).data(),
            batch,
            m,
            k,
            n,
            shared,
        );
        let mut shape = lead.to_vec();
        shape.extend([m, n]);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::MatMul { a, b, shared },
            &[a, b],
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() < 2 {
            return Err(mismatch("transpose", &s, &[]));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let data = batched_transpose(self.value(a).data(), numel(&s[..s.len() - 2]), r, c);
        let mut shape = s.clone();
        let n = shape.len();
        shape.swap(n - 2, n - 1);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Transpose(a), &[a]))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let mut seen = vec![false; s.len()];
        if axes.len() != s.len()
            || axes
                .iter()
                .any(|&x| x >= s.len() || std::mem::replace(&mut seen[x], true))
        {
            return Err(mismatch("permute", &s, axes));
        }
        let (shape, data) = permute_data(self.value(a).data(), &s, axes);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Permute {
                a,
                axes: axes.to_vec(),
            },
            &[a],
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if numel(shape) != v.numel() || shape.contains(&0) {
            return Err(mismatch("reshape", v.shape(), shape));
        }
        let out = Tensor::from_parts(shape.to_vec(), v.data().to_vec());
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Repeats `a` over new leading axes.
    pub fn broadcast_to(&mut self, a: Var, leading: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if leading.contains(&0) {
            return Err(mismatch("broadcast_to", v.shape(), leading));
        }
        let reps = numel(leading);
        let mut shape = leading.to_vec();
        shape.extend_from_slice(v.shape());
        let mut data = Vec::with_capacity(reps * v.numel());
        for _ in 0..reps {
            data.extend_from_slice(v.data());
        }
        Ok(self.push(Tensor::from_parts(shape, data), Op::BroadcastTo(a), &[a]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(mismatch("concat", &base, &[axis]));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let w = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// `a[..., start..start+len, ...]` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(mismatch("slice", &s, &[axis, start, len]));
        }
        let (outer, ext, inner) = split_axis(&s, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * ext + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Slice { a, axis, start },
            &[a],
        ))
    }

    /// Row lookup: `table[ids]`, output shape `ids_shape ++ [dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], ids_shape: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 || numel(ids_shape) != ids.len() {
            return Err(mismatch("embedding", &ts, ids_shape));
        }
        let (rows, dim) = (ts[0], ts[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidArgument(format!(
                "embedding id {bad} out of range for table of {rows} rows"
            )));
        }
        let tv = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            data.extend_from_slice(&tv[i * dim..(i + 1) * dim]);
        }
        let mut shape = ids_shape.to_vec();
        shape.push(dim);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    // ---- normalisation ------------------------------------------------

    fn last_dim(&self, a: Var, op: &'static str) -> Result<usize> {
        self.shape(a)
            .last()
            .copied()
            .ok_or_else(|| mismatch(op, self.shape(a), &[]))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let w = self.last_dim(a, "softmax")?;
        let v = self.value(a);
        let out = Tensor::from_parts(v.shape().to_vec(), softmax_rows(v.data(), w));
        Ok(self.push(out, Op::Softmax(a), &[a]))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let w = self.last_dim(a, "log_softmax")?;
        let v = self.value(a);
        let lse = logsumexp_rows(v.data(), w);
        let data = v
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x - lse[i / w])
            .collect();
        let out = Tensor::from_parts(v.shape().to_vec(), data);
        Ok(self.push(out, Op::LogSoftmax(a), &[a]))
    }

    /// Log-sum-exp over the last axis, which is removed.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var> {
        let w = self.last_dim(a, "logsumexp")?;
        let v = self.value(a);
        let shape = v.shape()[..v.rank() - 1].to_vec();
        let out = Tensor::from_parts(shape, logsumexp_rows(v.data(), w));
        Ok(self.push(out, Op::LogSumExp(a), &[a]))
    }

    /// Normalises the last axis to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let w = self.last_dim(a, "layer_norm")?;
        let v = self.value(a);
        let eps = T::lit(eps);
        let n = T::lit(w as f64);
        let mut data = Vec::with_capacity(v.numel());
        let mut rstd = Vec::with_capacity(v.numel() / w);
        for row in v.data().chunks(w) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            data.extend(row.iter().map(|&x| (x - mean) * r));
        }
        let out = Tensor::from_parts(v.shape().to_vec(), data);
        Ok(self.push(out, Op::LayerNorm { a, rstd }, &[a]))
    }

    // ---- attention ----------------------------------------------------

    /// Scaled dot-product attention core.
    ///
    /// `q: [B,H,Lq,d]`, `k: [B,H,Lk,d]`, `v: [B,H,Lk,dv]`. `key_mask`
    /// (`[B, Lk]`, `true` = attend) hides padded keys; `causal` hides keys
    /// after the query position. A query with no visible key gets a zero
    /// output row.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        key_mask: Option<&[bool]>,
        causal: bool,
    ) -> Result<Var> {
        let (sq, sk, sv) = (
            self.shape(q).to_vec(),
            self.shape(k).to_vec(),
            self.shape(v).to_vec(),
        );
        if sq.len() != 4 || sk.len() != 4 || sv.len() != 4 {
            return Err(mismatch("attention", &sq, &sk));
        }
        let (b, h, lq, d) = (sq[0], sq[1], sq[2], sq[3]);
        let (lk, dv) = (sk[2], sv[3]);
        if sk[..2] != sq[..2] || sk[3] != d || sv[..3] != sk[..3] {
            return Err(mismatch("attention", &sq, &sk));
        }
        if let Some(m) = key_mask {
            if m.len() != b * lk {
                return Err(mismatch("attention mask", &[b, lk], &[m.len()]));
            }
        }
        let scale = T::lit(1.0 / (d as f64).sqrt());
        let (qv, kv, vv) = (
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
        );
        let mut probs = vec![T::zero(); b * h * lq * lk];
        let mut out = vec![T::zero(); b * h * lq * dv];
        for bi in 0..b {
            for hi in 0..h {
                let bh = bi * h + hi;
                let qb = &qv[bh * lq * d..(bh + 1) * lq * d];
                let kb = &kv[bh * lk * d..(bh + 1) * lk * d];
                let vb = &vv[bh * lk * dv..(bh + 1) * lk * dv];
                for i in 0..lq {
                    let p_row = &mut probs[(bh * lq + i) * lk..(bh * lq + i + 1) * lk];
                    let qi = &qb[i * d..(i + 1) * d];
                    let mut max = T::neg_infinity();
                    for j in 0..lk {
                        let visible =
                            key_mask.is_none_or(|m| m[bi * lk + j]) && (!causal || j <= i);
                        if visible {
                            let kj = &kb[j * d..(j + 1) * d];
                            let s = qi.iter().zip(kj).map(|(&x, &y)| x * y).sum::<T>() * scale;
                            p_row[j] = s;
                            max = max.max(s);
                        } else {
                            p_row[j] = T::neg_infinity();
                        }
                    }
                    if max == T::neg_infinity() {
                        p_row.iter_mut().for_each(|p| *p = T::zero());
                        continue;
                    }
                    let mut total = T::zero();
                    for p in p_row.iter_mut() {
                        *p = if *p == T::neg_infinity() {
                            T::zero()
                        } else {
                            (*p - max).exp()
                        };
                        total += *p;
                    }
                    let o_row = &mut out[(bh * lq + i) * dv..(bh * lq + i + 1) * dv];
                    for (j, p) in p_row.iter_mut().enumerate() {
                        *p /= total;
                        if *p != T::zero() {
                            let vj = &vb[j * dv..(j + 1) * dv];
                            for (o, &x) in o_row.iter_mut().zip(vj) {
                                *o += *p * x;
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::from_parts(vec![b, h, lq, dv], out);
        Ok(self.push(value, Op::Attention { q, k, v, probs }, &[q, k, v]))
    }

    // ---- reductions and losses ---------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().copied().sum::<T>() / T::lit(v.numel() as f64);
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Mean over axis 1 of `[B, L, D]` restricted to `mask` (`[B, L]`).
    /// Rows with an empty mask pool to zero.
    pub fn masked_mean(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 || mask.len() != s[0] * s[1] {
            return Err(mismatch("masked_mean", &s, &[mask.len()]));
        }
        let (b, l, d) = (s[0], s[1], s[2]);
        let src = self.value(a).data();
        let mut data = vec![T::zero(); b * d];
        for bi in 0..b {
            let count = mask[bi * l..(bi + 1) * l].iter().filter(|&&m| m).count();
            if count == 0 {
                continue;
            }
            let inv = T::lit(1.0 / count as f64);
            let dst = &mut data[bi * d..(bi + 1) * d];
            for li in 0..l {
                if mask[bi * l + li] {
                    let row = &src[(bi * l + li) * d..(bi * l + li + 1) * d];
                    for (o, &x) in dst.iter_mut().zip(row) {
                        *o += x * inv;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![b, d], data),
            Op::MaskedMean {
                a,
                mask: mask.to_vec(),
            },
            &[a],
        ))
    }

    /// Weighted token cross-entropy with optional label smoothing.
    ///
    /// `logits` is viewed as `[N, V]`; returns the scalar
    /// `sum_i w_i * ((1-eps) * nll_i + eps * mean_v(-log p_iv))`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: &[T],
        smoothing: f64,
    ) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        let w = *s.last().ok_or_else(|| mismatch("cross_entropy", &s, &[]))?;
        let n = numel(&s) / w;
        if targets.len() != n || weights.len() != n {
            return Err(mismatch(
                "cross_entropy",
                &s,
                &[targets.len(), weights.len()],
            ));
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(Error::InvalidArgument(format!(
                "label smoothing {smoothing} outside [0,1)"
            )));
        }
        let eps = T::lit(smoothing);
        let lv = self.value(logits).data();
        let lse = logsumexp_rows(lv, w);
        let mut probs = vec![T::zero(); lv.len()];
        let mut total = T::zero();
        let inv_w = T::lit(1.0 / w as f64);
        for i in 0..n {
            let row = &lv[i * w..(i + 1) * w];
            for (p, &x) in probs[i * w..(i + 1) * w].iter_mut().zip(row) {
                *p = (x - lse[i]).exp();
            }
            if weights[i] == T::zero() {
                continue;
            }
            let t = targets[i];
            if t >= w {
                return Err(Error::InvalidArgument(format!(
                    "target id {t} out of range for {w} classes"
                )));
            }
            let nll = lse[i] - row[t];
            let mut loss = (T::one() - eps) * nll;
            if smoothing > 0.0 {
                let mean_nll = row.iter().map(|&x| lse[i] - x).sum::<T>() * inv_w;
                loss += eps * mean_nll;
            }
            total += weights[i] * loss;
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                smoothing: eps,
                probs,
            },
            &[logits],
        ))
    }

    // ---- backward -----------------------------------------------------

    /// Reverse sweep from a scalar `loss`. Allowed once per graph.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            self.grads = grads;
            return Ok(());
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let negate = matches!(node.op, Op::Sub(..));
                if rg(*a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if rg(*b) {
                    let nb = val(*b).numel();
                    let mut gb = vec![T::zero(); nb];
                    for (j, &x) in g.iter().enumerate() {
                        gb[j % nb] += x;
                    }
                    if negate {
                        gb.iter_mut().for_each(|x| *x = -*x);
                    }
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                let nb = bv.len();
                if rg(*a) {
                    let ga = g.iter().enumerate().map(|(j, &x)| x * bv[j % nb]).collect();
                    accumulate(&mut grads[a.0], ga);
                }
                if rg(*b) {
                    let mut gb = vec![T::zero(); nb];
                    for (j, (&x, &y)) in g.iter().zip(av).enumerate() {
                        gb[j % nb] += x * y;
                    }
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::Scale(a, c) => {
                if rg(*a) {
                    accumulate(&mut grads[a.0], g.iter().map(|&x| x * *c).collect());
                }
            }
            Op::Relu(a) => {
                if rg(*a) {
                    let av = val(*a).data();
                    let ga = g
                        .iter()
                        .zip(av)
                        .map(|(&x, &y)| if y > T::zero() { x } else { T::zero() })
                        .collect();
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::Dropout { a, mask } => {
                if rg(*a) {
                    accumulate(
                        &mut grads[a.0],
                        g.iter().zip(mask).map(|(&x, &m)| x * m).collect(),
                    );
                }
            }
            Op::MatMul { a, b, shared } => {
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = sb[sb.len() - 1];
                let batch = numel(&sa[..sa.len() - 2]);
                if rg(*a) {
                    // dA = dC * B^T
                    let ga = if *shared {
                        let bt = transpose2(val(*b).data(), k, n);
                        batched_matmul(g, &bt, batch, m, n, k, true)
                    } else {
                        let bt = batched_transpose(val(*b).data(), batch, k, n);
                        batched_matmul(g, &bt, batch, m, n, k, false)
                    };
                    accumulate(&mut grads[a.0], ga);
                }
                if rg(*b) {
                    // dB = A^T * dC
                    let gb = if *shared {
                        let at = transpose2(val(*a).data(), batch * m, k);
                        batched_matmul(&at, g, 1, k, batch * m, n, false)
                    } else {
                        let at = batched_transpose(val(*a).data(), batch, m, k);
                        batched_matmul(&at, g, batch, k, m, n, false)
                    };
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::Transpose(a) => {
                if rg(*a) {
                    let s = node.value.shape();
                    let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                    let ga = batched_transpose(g, numel(&s[..s.len() - 2]), r, c);
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::Permute { a, axes } => {
                if rg(*a) {
                    let mut inverse = vec![0; axes.len()];
                    for (i, &ax) in axes.iter().enumerate() {
                        inverse[ax] = i;
                    }
                    let (_, ga) = permute_data(g, node.value.shape(), &inverse);
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::Reshape(a) => {
                if rg(*a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
            }
            Op::BroadcastTo(a) => {
                if rg(*a) {
                    let n = val(*a).numel();
                    let mut ga = vec![T::zero(); n];
                    for chunk in g.chunks(n) {
                        for (x, &y) in ga.iter_mut().zip(chunk) {
                            *x += y;
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let ext = val(v).shape()[*axis];
                    if rg(v) {
                        let mut gv = Vec::with_capacity(outer * ext * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            gv.extend_from_slice(&g[base..base + ext * inner]);
                        }
                        accumulate(&mut grads[v.0], gv);
                    }
                    offset += ext;
                }
            }
            Op::Slice { a, axis, start } => {
                if rg(*a) {
                    let (outer, ext, inner) = split_axis(val(*a).shape(), *axis);
                    let len = node.value.shape()[*axis];
                    let mut ga = vec![T::zero(); outer * ext * inner];
                    for o in 0..outer {
                        let dst = (o * ext + start) * inner;
                        let src = o * len * inner;
                        ga[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::Embedding { table, ids } => {
                if rg(*table) {
                    let dim = val(*table).shape()[1];
                    let mut gt = vec![T::zero(); val(*table).numel()];
                    for (r, &id) in ids.iter().enumerate() {
                        for (x, &y) in gt[id * dim..(id + 1) * dim]
                            .iter_mut()
                            .zip(&g[r * dim..(r + 1) * dim])
                        {
                            *x += y;
                        }
                    }
                    accumulate(&mut grads[table.0], gt);
                }
            }
            Op::Softmax(a) => {
                if rg(*a) {
                    let y = node.value.data();
                    let w = *node.value.shape().last().unwrap();
                    let mut ga = vec![T::zero(); y.len()];
                    for ((gr, yr), out) in g.chunks(w).zip(y.chunks(w)).zip(ga.chunks_mut(w)) {
                        let dot: T = gr.iter().zip(yr).map(|(&x, &y)| x * y).sum();
                        for ((o, &x), &y) in out.iter_mut().zip(gr).zip(yr) {
                            *o = y * (x - dot);
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::LogSoftmax(a) => {
                if rg(*a) {
                    let y = node.value.data();
                    let w = *node.value.shape().last().unwrap();
                    let mut ga = vec![T::zero(); y.len()];
                    for ((gr, yr), out) in g.chunks(w).zip(y.chunks(w)).zip(ga.chunks_mut(w)) {
                        let total: T = gr.iter().copied().sum();
                        for ((o, &x), &y) in out.iter_mut().zip(gr).zip(yr) {
                            *o = x - y.exp() * total;
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::LogSumExp(a) => {
                if rg(*a) {
                    let av = val(*a);
                    let w = *av.shape().last().unwrap();
                    let mut ga = softmax_rows(av.data(), w);
                    for (r, row) in ga.chunks_mut(w).enumerate() {
                        row.iter_mut().for_each(|x| *x *= g[r]);
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::LayerNorm { a, rstd } => {
                if rg(*a) {
                    let y = node.value.data();
                    let w = *node.value.shape().last().unwrap();
                    let inv_n = T::lit(1.0 / w as f64);
                    let mut ga = vec![T::zero(); y.len()];
                    for (r, ((gr, yr), out)) in g
                        .chunks(w)
                        .zip(y.chunks(w))
                        .zip(ga.chunks_mut(w))
                        .enumerate()
                    {
                        let mean_g = gr.iter().copied().sum::<T>() * inv_n;
                        let mean_gy = gr.iter().zip(yr).map(|(&x, &y)| x * y).sum::<T>() * inv_n;
                        for ((o, &x), &y) in out.iter_mut().zip(gr).zip(yr) {
                            *o = rstd[r] * (x - mean_g - y * mean_gy);
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::Attention { q, k, v, probs } => {
                self.attention_backward(g, *q, *k, *v, probs, grads);
            }
            Op::Sum(a) => {
                if rg(*a) {
                    accumulate(&mut grads[a.0], vec![g[0]; val(*a).numel()]);
                }
            }
            Op::Mean(a) => {
                if rg(*a) {
                    let n = val(*a).numel();
                    accumulate(&mut grads[a.0], vec![g[0] / T::lit(n as f64); n]);
                }
            }
            Op::MaskedMean { a, mask } => {
                if rg(*a) {
                    let s = val(*a).shape();
                    let (b, l, d) = (s[0], s[1], s[2]);
                    let mut ga = vec![T::zero(); b * l * d];
                    for bi in 0..b {
                        let count = mask[bi * l..(bi + 1) * l].iter().filter(|&&m| m).count();
                        if count == 0 {
                            continue;
                        }
                        let inv = T::lit(1.0 / count as f64);
                        for li in 0..l {
                            if mask[bi * l + li] {
                                let dst = &mut ga[(bi * l + li) * d..(bi * l + li + 1) * d];
                                for (o, &x) in dst.iter_mut().zip(&g[bi * d..(bi + 1) * d]) {
                                    *o = x * inv;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                smoothing,
                probs,
            } => {
                if rg(*logits) {
                    let w = *val(*logits).shape().last().unwrap();
                    let uniform = *smoothing / T::lit(w as f64);
                    let mut gl = vec![T::zero(); probs.len()];
                    for (i, (&t, &wt)) in targets.iter().zip(weights).enumerate() {
                        if wt == T::zero() {
                            continue;
                        }
                        let scale = g[0] * wt;
                        let row = &mut gl[i * w..(i + 1) * w];
                        for (o, &p) in row.iter_mut().zip(&probs[i * w..(i + 1) * w]) {
                            *o = scale * (p - uniform);
                        }
                        row[t] -= scale * (T::one() - *smoothing);
                    }
                    accumulate(&mut grads[logits.0], gl);
                }
            }
        }
    }

    fn attention_backward(
        &self,
        g: &[T],
        q: Var,
        k: Var,
        v: Var,
        probs: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let (qt, kt, vt) = (
            &self.nodes[q.0].value,
            &self.nodes[k.0].value,
            &self.nodes[v.0].value,
        );
        let s = qt.shape();
        let (b, h, lq, d) = (s[0], s[1], s[2], s[3]);
        let lk = kt.shape()[2];
        let dv = vt.shape()[3];
        let scale = T::lit(1.0 / (d as f64).sqrt());
        let (need_q, need_k, need_v) = (
            self.nodes[q.0].requires_grad,
            self.nodes[k.0].requires_grad,
            self.nodes[v.0].requires_grad,
        );
        let mut gq = vec![T::zero(); qt.numel()];
        let mut gk = vec![T::zero(); kt.numel()];
        let mut gv = vec![T::zero(); vt.numel()];
        let mut ds = vec![T::zero(); lk];
        for bh in 0..b * h {
            let qb = &qt.data()[bh * lq * d..(bh + 1) * lq * d];
            let kb = &kt.data()[bh * lk * d..(bh + 1) * lk * d];
            let vb = &vt.data()[bh * lk * dv..(bh + 1) * lk * dv];
            for i in 0..lq {
                let p_row = &probs[(bh * lq + i) * lk..(bh * lq + i + 1) * lk];
                let g_row = &g[(bh * lq + i) * dv..(bh * lq + i + 1) * dv];
                // dP_ij = g_i . v_j ; dS = P * (dP - sum(P * dP))
                let mut dot = T::zero();
                for j in 0..lk {
                    let pj = p_row[j];
                    if pj == T::zero() {
                        ds[j] = T::zero();
                        continue;
                    }
                    let vj = &vb[j * dv..(j + 1) * dv];
                    let dp: T = g_row.iter().zip(vj).map(|(&x, &y)| x * y).sum();
                    ds[j] = dp;
                    dot += pj * dp;
                    if need_v {
                        let gvj = &mut gv[(bh * lk + j) * dv..(bh * lk + j + 1) * dv];
                        for (o, &x) in gvj.iter_mut().zip(g_row) {
                            *o += pj * x;
                        }
                    }
                }
                let qi = &qb[i * d..(i + 1) * d];
                for j in 0..lk {
                    let pj = p_row[j];
                    if pj == T::zero() {
                        continue;
                    }
                    let dsj = pj * (ds[j] - dot) * scale;
                    if need_q {
                        let kj = &kb[j * d..(j + 1) * d];
                        let gqi = &mut gq[(bh * lq + i) * d..(bh * lq + i + 1) * d];
                        for (o, &x) in gqi.iter_mut().zip(kj) {
                            *o += dsj * x;
                        }
                    }
                    if need_k {
                        let gkj = &mut gk[(bh * lk + j) * d..(bh * lk + j + 1) * d];
                        for (o, &x) in gkj.iter_mut().zip(qi) {
                            *o += dsj * x;
                        }
                    }
                }
            }
        }
        if need_q {
            accumulate(&mut grads[q.0], gq);
        }
        if need_k {
            accumulate(&mut grads[k.0], gk);
        }
        if need_v {
            accumulate(&mut grads[v.0], gv);
        }
    }
}
