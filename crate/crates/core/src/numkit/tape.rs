//! Define-by-run reverse-mode gradient tape.
//!
//! A [`Tape`] owns every tensor produced during one forward pass; ops return
//! [`Var`] handles. The tape is rebuilt per forward pass and is single-owner,
//! single-threaded. [`Tape::backward`] replays the recorded ops in reverse
//! and returns gradients for every leaf that received one.

use std::sync::Arc;

use super::tensor::{gemm, softmax_rows_kernel, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;
const ROPE_BASE: f64 = 10_000.0;

enum TapeOp {
    /// Leaf or constant; nothing to propagate.
    Source,
    Matmul { a: Var, b: Var },
    MatmulNT { a: Var, b: Var },
    Bmm { a: Var, b: Var },
    BmmNT { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddBiasLast { a: Var, bias: Var },
    AddMaskBcast { a: Var, mask: Var },
    Scale { a: Var, c: f64 },
    MulElem { a: Var, b: Var },
    SoftmaxLast { a: Var },
    LayerNormLast { x: Var, gain: Var, bias: Var, eps: f64 },
    Gelu { a: Var },
    Reshape { a: Var },
    SliceLastCols { a: Var, start: usize, len: usize },
    ConcatLastCols { parts: Vec<Var> },
    SliceAxis1 { a: Var, start: usize, len: usize },
    ConcatAxis1 { parts: Vec<Var> },
    BroadcastRows { a: Var },
    Rope { a: Var },
    SumAll { a: Var },
    NumericEmbed { values: Var, w: Var, b: Var },
    GatherRows { table: Var, indices: Arc<Vec<usize>> },
    BceWithLogits { logits: Var, targets: Arc<Vec<f64>> },
    SoftmaxCrossEntropy { logits: Var, labels: Arc<Vec<usize>> },
    MseLoss { pred: Var, targets: Arc<Vec<f64>> },
}

pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<TapeOp>,
    needs_grad: Vec<bool>,
    recording: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    by_node: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Gradient of the loss w.r.t. `v`, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.by_node[v.0].as_deref()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A recording tape: backward passes are available.
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
            recording: true,
        }
    }

    /// A non-recording tape for evaluation; ops store values only.
    pub fn inference() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
            recording: false,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    /// Register a gradient-carrying parameter.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), TapeOp::Source, self.recording)
    }

    /// Register data that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, TapeOp::Source, false)
    }

    fn push(&mut self, value: Tensor, op: TapeOp, needs: bool) -> Var {
        let id = self.values.len();
        self.values.push(value);
        if self.recording {
            self.ops.push(op);
            self.needs_grad.push(needs);
        } else {
            self.ops.push(TapeOp::Source);
            self.needs_grad.push(false);
        }
        Var(id)
    }

    fn unary(&mut self, value: Tensor, op: TapeOp, a: Var) -> Var {
        let needs = self.needs_grad[a.0];
        self.push(value, op, needs)
    }

    fn binary(&mut self, value: Tensor, op: TapeOp, a: Var, b: Var) -> Var {
        let needs = self.needs_grad[a.0] || self.needs_grad[b.0];
        self.push(value, op, needs)
    }

    // ---- linear algebra ------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.binary(value, TapeOp::Matmul { a, b }, a, b)
    }

    /// `a @ b^T` for rank-2 operands.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_nt(self.value(b));
        self.binary(value, TapeOp::MatmulNT { a, b }, a, b)
    }

    /// Batched matmul: `[B,m,k] @ [B,k,n] -> [B,m,n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Var {
        let value = bmm_forward(self.value(a), self.value(b), false);
        self.binary(value, TapeOp::Bmm { a, b }, a, b)
    }

    /// Batched `a @ b^T`: `[B,m,k] @ [B,n,k] -> [B,m,n]`.
    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Var {
        let value = bmm_forward(self.value(a), self.value(b), true);
        self.binary(value, TapeOp::BmmNT { a, b }, a, b)
    }

    // ---- elementwise and broadcasts -------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b));
        self.binary(value, TapeOp::Add { a, b }, a, b)
    }

    /// Add a length-`e` bias along the last axis.
    pub fn add_bias_last(&mut self, a: Var, bias: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(bias);
        let e = *av.shape().last().expect("add_bias_last on rank-0");
        assert!(
            bv.shape() == [e],
            "bias shape {:?} does not match last axis {} of {:?}",
            bv.shape(),
            e,
            av.shape()
        );
        let mut data = av.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += bv.data()[i % e];
        }
        let value = Tensor::new(av.shape().to_vec(), data);
        self.binary(value, TapeOp::AddBiasLast { a, bias }, a, bias)
    }

    /// Add an `[s,s]` additive mask to every batch slice of `[B,s,s]` scores.
    pub fn add_mask_bcast(&mut self, a: Var, mask: Var) -> Var {
        let av = self.value(a);
        let mv = self.value(mask);
        let (bsz, s1, s2) = av.dims3();
        assert!(
            mv.shape() == [s1, s2],
            "mask shape {:?} does not broadcast over scores {:?}",
            mv.shape(),
            av.shape()
        );
        let mut data = av.data().to_vec();
        let md = mv.data();
        for b in 0..bsz {
            let base = b * s1 * s2;
            for (i, m) in md.iter().enumerate() {
                data[base + i] += m;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data);
        self.binary(value, TapeOp::AddMaskBcast { a, mask }, a, mask)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.unary(value, TapeOp::Scale { a, c }, a)
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        assert!(
            av.shape() == bv.shape(),
            "mul_elem shape mismatch: {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data);
        self.binary(value, TapeOp::MulElem { a, b }, a, b)
    }

    // ---- nonlinearities --------------------------------------------------

    /// Softmax over the last axis; `-inf` entries become exact zeros.
    pub fn softmax_last(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let cols = *av.shape().last().expect("softmax_last on rank-0");
        let rows = av.len() / cols;
        let mut out = vec![0.0; av.len()];
        softmax_rows_kernel(av.data(), rows, cols, &mut out);
        let value = Tensor::new(av.shape().to_vec(), out);
        self.unary(value, TapeOp::SoftmaxLast { a }, a)
    }

    pub fn layernorm_last(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let value = self.value(x).layernorm(self.value(gain), self.value(bias), eps);
        let needs =
            self.needs_grad[x.0] || self.needs_grad[gain.0] || self.needs_grad[bias.0];
        self.push(value, TapeOp::LayerNormLast { x, gain, bias, eps }, needs)
    }

    /// Tanh-form GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| gelu_val(x)).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data);
        self.unary(value, TapeOp::Gelu { a }, a)
    }

    // ---- shape plumbing ---------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let value = self.value(a).reshape(shape);
        self.unary(value, TapeOp::Reshape { a }, a)
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        let e = *av.shape().last().expect("slice_last_cols on rank-0");
        assert!(start + len <= e, "slice {}..{} out of last axis {}", start, start + len, e);
        let rows = av.len() / e;
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&av.data()[r * e + start..r * e + start + len]);
        }
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let value = Tensor::new(shape, out);
        self.unary(value, TapeOp::SliceLastCols { a, start, len }, a)
    }

    /// Concatenate along the last axis.
    pub fn concat_last_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let lead: Vec<usize> = {
            let s = self.value(parts[0]).shape();
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            assert!(
                s[..s.len() - 1] == lead[..],
                "concat_last_cols leading dims differ: {:?} vs {:?}",
                &s[..s.len() - 1],
                lead
            );
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                let d = self.value(p).data();
                out.extend_from_slice(&d[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out);
        let needs = parts.iter().any(|p| self.needs_grad[p.0]);
        self.push(value, TapeOp::ConcatLastCols { parts: parts.to_vec() }, needs)
    }

    /// Rows `start..start+len` along axis 1 of a rank-3 tensor.
    pub fn slice_axis1(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        let (n, s, e) = av.dims3();
        assert!(start + len <= s, "slice {}..{} out of axis-1 extent {}", start, start + len, s);
        let mut out = Vec::with_capacity(n * len * e);
        for i in 0..n {
            let base = i * s * e + start * e;
            out.extend_from_slice(&av.data()[base..base + len * e]);
        }
        let value = Tensor::new(vec![n, len, e], out);
        self.unary(value, TapeOp::SliceAxis1 { a, start, len }, a)
    }

    /// Concatenate rank-3 tensors along axis 1.
    pub fn concat_axis1(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let (n, _, e) = self.value(parts[0]).dims3();
        let mut toks = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pn, pt, pe) = self.value(p).dims3();
            assert!(
                pn == n && pe == e,
                "concat_axis1 shape mismatch: {:?} vs batch {} embed {}",
                self.value(p).shape(),
                n,
                e
            );
            toks.push(pt);
        }
        let total: usize = toks.iter().sum();
        let mut out = Vec::with_capacity(n * total * e);
        for i in 0..n {
            for (&p, &pt) in parts.iter().zip(&toks) {
                let d = self.value(p).data();
                out.extend_from_slice(&d[i * pt * e..(i + 1) * pt * e]);
            }
        }
        let value = Tensor::new(vec![n, total, e], out);
        let needs = parts.iter().any(|p| self.needs_grad[p.0]);
        self.push(value, TapeOp::ConcatAxis1 { parts: parts.to_vec() }, needs)
    }

    /// Repeat a `[t,e]` matrix for every sample: `-> [n,t,e]`.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let av = self.value(a);
        let (t, e) = av.dims2();
        let mut out = Vec::with_capacity(n * t * e);
        for _ in 0..n {
            out.extend_from_slice(av.data());
        }
        let value = Tensor::new(vec![n, t, e], out);
        self.unary(value, TapeOp::BroadcastRows { a }, a)
    }

    /// Rotary position encoding over a `[n,dk]` per-head projection; the
    /// position index is the within-batch row. An odd trailing dimension is
    /// passed through unrotated.
    pub fn rope(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (n, dk) = av.dims2();
        let mut out = av.data().to_vec();
        rope_apply(&mut out, n, dk, 1.0);
        let value = Tensor::new(vec![n, dk], out);
        self.unary(value, TapeOp::Rope { a }, a)
    }

    // ---- reductions and losses -------------------------------------------

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.unary(value, TapeOp::SumAll { a }, a)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Per-feature affine embedding of numeric columns:
    /// `out[i,j,:] = values[i,j] * w[j,:] + b[j,:]`.
    pub fn numeric_embed(&mut self, values: Var, w: Var, b: Var) -> Var {
        let vv = self.value(values);
        let (n, d) = vv.dims2();
        let (dw, e) = self.value(w).dims2();
        assert!(
            dw == d && self.value(b).shape() == [d, e],
            "numeric_embed param shapes {:?}/{:?} do not match {} columns",
            self.value(w).shape(),
            self.value(b).shape(),
            d
        );
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; n * d * e];
        for i in 0..n {
            for j in 0..d {
                let x = vv.data()[i * d + j];
                let dst = &mut out[(i * d + j) * e..(i * d + j + 1) * e];
                for k in 0..e {
                    dst[k] = x * wd[j * e + k] + bd[j * e + k];
                }
            }
        }
        let value = Tensor::new(vec![n, d, e], out);
        let needs = self.needs_grad[w.0] || self.needs_grad[b.0] || self.needs_grad[values.0];
        self.push(value, TapeOp::NumericEmbed { values, w, b }, needs)
    }

    /// Row lookup into an embedding table: `-> [indices.len(), e]`.
    pub fn gather_rows(&mut self, table: Var, indices: Arc<Vec<usize>>) -> Var {
        let tv = self.value(table);
        let (rows, e) = tv.dims2();
        let mut out = Vec::with_capacity(indices.len() * e);
        for &idx in indices.iter() {
            assert!(idx < rows, "embedding index {} out of table rows {}", idx, rows);
            out.extend_from_slice(&tv.data()[idx * e..(idx + 1) * e]);
        }
        let value = Tensor::new(vec![indices.len(), e], out);
        let needs = self.needs_grad[table.0];
        self.push(value, TapeOp::GatherRows { table, indices }, needs)
    }

    /// Mean binary cross-entropy from logits (numerically stable form).
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<Vec<f64>>) -> Var {
        let lv = self.value(logits);
        assert!(
            lv.len() == targets.len(),
            "bce: {} logits vs {} targets",
            lv.len(),
            targets.len()
        );
        let n = targets.len() as f64;
        let mut total = 0.0;
        for (&z, &y) in lv.data().iter().zip(targets.iter()) {
            total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        }
        let value = Tensor::scalar(total / n);
        let needs = self.needs_grad[logits.0];
        self.push(value, TapeOp::BceWithLogits { logits, targets }, needs)
    }

    /// Mean softmax cross-entropy from `[n,k]` logits and class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Arc<Vec<usize>>) -> Var {
        let lv = self.value(logits);
        let (n, k) = lv.dims2();
        assert!(n == labels.len(), "ce: {} rows vs {} labels", n, labels.len());
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            assert!(label < k, "class label {} out of range {}", label, k);
            let row = &lv.data()[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
        let value = Tensor::scalar(total / n as f64);
        let needs = self.needs_grad[logits.0];
        self.push(value, TapeOp::SoftmaxCrossEntropy { logits, labels }, needs)
    }

    /// Mean squared error against constant targets.
    pub fn mse_loss(&mut self, pred: Var, targets: Arc<Vec<f64>>) -> Var {
        let pv = self.value(pred);
        assert!(
            pv.len() == targets.len(),
            "mse: {} predictions vs {} targets",
            pv.len(),
            targets.len()
        );
        let n = targets.len() as f64;
        let total: f64 = pv
            .data()
            .iter()
            .zip(targets.iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let value = Tensor::scalar(total / n);
        let needs = self.needs_grad[pred.0];
        self.push(value, TapeOp::MseLoss { pred, targets }, needs)
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse-accumulate gradients of a scalar loss over the whole tape.
    pub fn backward(&mut self, loss: Var) -> Grads {
        assert!(self.recording, "backward on a non-recording tape");
        let lv = self.value(loss);
        assert!(
            lv.len() == 1,
            "backward requires a scalar loss, got shape {:?}",
            lv.shape()
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..self.values.len()).rev() {
            if matches!(self.ops[i], TapeOp::Source) {
                continue;
            }
            // A node's gradient is final once every later consumer has run.
            let Some(gout) = grads[i].take() else { continue };
            self.propagate(i, &gout, &mut grads);
        }
        Grads { by_node: grads }
    }

    fn propagate(&self, node: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let values = &self.values;
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.needs_grad[v.0] {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; values[v.0].len()]);
            f(slot);
        };

        match &self.ops[node] {
            TapeOp::Source => {}
            TapeOp::Matmul { a, b } => {
                let (m, k) = values[a.0].dims2();
                let (_, n) = values[b.0].dims2();
                acc(grads, *a, &mut |g| {
                    gemm_acc(m, n, k, gout, false, values[b.0].data(), true, g)
                });
                acc(grads, *b, &mut |g| {
                    gemm_acc(k, m, n, values[a.0].data(), true, gout, false, g)
                });
            }
            TapeOp::MatmulNT { a, b } => {
                // C = A B^T with A [m,k], B [n,k].
                let (m, k) = values[a.0].dims2();
                let (n, _) = values[b.0].dims2();
                acc(grads, *a, &mut |g| {
                    gemm_acc(m, n, k, gout, false, values[b.0].data(), false, g)
                });
                acc(grads, *b, &mut |g| {
                    gemm_acc(n, m, k, gout, true, values[a.0].data(), false, g)
                });
            }
            TapeOp::Bmm { a, b } => {
                let (bs, m, k) = values[a.0].dims3();
                let (_, _, n) = values[b.0].dims3();
                acc(grads, *a, &mut |g| {
                    for s in 0..bs {
                        gemm_acc(
                            m,
                            n,
                            k,
                            &gout[s * m * n..(s + 1) * m * n],
                            false,
                            &values[b.0].data()[s * k * n..(s + 1) * k * n],
                            true,
                            &mut g[s * m * k..(s + 1) * m * k],
                        );
                    }
                });
                acc(grads, *b, &mut |g| {
                    for s in 0..bs {
                        gemm_acc(
                            k,
                            m,
                            n,
                            &values[a.0].data()[s * m * k..(s + 1) * m * k],
                            true,
                            &gout[s * m * n..(s + 1) * m * n],
                            false,
                            &mut g[s * k * n..(s + 1) * k * n],
                        );
                    }
                });
            }
            TapeOp::BmmNT { a, b } => {
                // Per batch: C = A B^T, A [m,k], B [n,k].
                let (bs, m, k) = values[a.0].dims3();
                let (_, n, _) = values[b.0].dims3();
                acc(grads, *a, &mut |g| {
                    for s in 0..bs {
                        gemm_acc(
                            m,
                            n,
                            k,
                            &gout[s * m * n..(s + 1) * m * n],
                            false,
                            &values[b.0].data()[s * n * k..(s + 1) * n * k],
                            false,
                            &mut g[s * m * k..(s + 1) * m * k],
                        );
                    }
                });
                acc(grads, *b, &mut |g| {
                    for s in 0..bs {
                        gemm_acc(
                            n,
                            m,
                            k,
                            &gout[s * m * n..(s + 1) * m * n],
                            true,
                            &values[a.0].data()[s * m * k..(s + 1) * m * k],
                            false,
                            &mut g[s * n * k..(s + 1) * n * k],
                        );
                    }
                });
            }
            TapeOp::Add { a, b } => {
                acc(grads, *a, &mut |g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
                acc(grads, *b, &mut |g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
            }
            TapeOp::AddBiasLast { a, bias } => {
                let e = values[bias.0].len();
                acc(grads, *a, &mut |g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
                acc(grads, *bias, &mut |g| {
                    for (i, go) in gout.iter().enumerate() {
                        g[i % e] += go;
                    }
                });
            }
            TapeOp::AddMaskBcast { a, mask } => {
                let cells = values[mask.0].len();
                acc(grads, *a, &mut |g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
                acc(grads, *mask, &mut |g| {
                    for (i, go) in gout.iter().enumerate() {
                        g[i % cells] += go;
                    }
                });
            }
            TapeOp::Scale { a, c } => {
                acc(grads, *a, &mut |g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += c * go;
                    }
                });
            }
            TapeOp::MulElem { a, b } => {
                acc(grads, *a, &mut |g| {
                    for ((gi, go), bv) in g.iter_mut().zip(gout).zip(values[b.0].data()) {
                        *gi += go * bv;
                    }
                });
                acc(grads, *b, &mut |g| {
                    for ((gi, go), av) in g.iter_mut().zip(gout).zip(values[a.0].data()) {
                        *gi += go * av;
                    }
                });
            }
            TapeOp::SoftmaxLast { a } => {
                let y = values[node].data();
                let cols = *values[node].shape().last().unwrap();
                acc(grads, *a, &mut |g| {
                    for r in 0..y.len() / cols {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &gout[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                        let dst = &mut g[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            dst[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            TapeOp::LayerNormLast { x, gain, bias, eps } => {
                let xv = values[x.0].data();
                let gv = values[gain.0].data();
                let e = values[gain.0].len();
                let rows = xv.len() / e;
                for r in 0..rows {
                    let row = &xv[r * e..(r + 1) * e];
                    let go = &gout[r * e..(r + 1) * e];
                    let mean = row.iter().sum::<f64>() / e as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / e as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    // dgamma/dbeta accumulate per feature; dx needs the two
                    // row means of the gain-scaled upstream gradient.
                    let mut mean_g = 0.0;
                    let mut mean_gx = 0.0;
                    for j in 0..e {
                        let xh = (row[j] - mean) * inv;
                        let gj = go[j] * gv[j];
                        mean_g += gj;
                        mean_gx += gj * xh;
                    }
                    mean_g /= e as f64;
                    mean_gx /= e as f64;
                    acc(grads, *x, &mut |g| {
                        let dst = &mut g[r * e..(r + 1) * e];
                        for j in 0..e {
                            let xh = (row[j] - mean) * inv;
                            let gj = go[j] * gv[j];
                            dst[j] += inv * (gj - mean_g - xh * mean_gx);
                        }
                    });
                    acc(grads, *gain, &mut |g| {
                        for j in 0..e {
                            let xh = (row[j] - mean) * inv;
                            g[j] += go[j] * xh;
                        }
                    });
                    acc(grads, *bias, &mut |g| {
                        for j in 0..e {
                            g[j] += go[j];
                        }
                    });
                }
            }
            TapeOp::Gelu { a } => {
                let xv = values[a.0].data();
                acc(grads, *a, &mut |g| {
                    for ((gi, go), &x) in g.iter_mut().zip(gout).zip(xv) {
                        *gi += go * gelu_deriv(x);
                    }
                });
            }
            TapeOp::Reshape { a } => {
                acc(grads, *a, &mut |g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
            }
            TapeOp::SliceLastCols { a, start, len } => {
                let e = *values[a.0].shape().last().unwrap();
                let rows = values[a.0].len() / e;
                acc(grads, *a, &mut |g| {
                    for r in 0..rows {
                        for j in 0..*len {
                            g[r * e + start + j] += gout[r * len + j];
                        }
                    }
                });
            }
            TapeOp::ConcatLastCols { parts } => {
                let total = *values[node].shape().last().unwrap();
                let rows = values[node].len() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = *values[p.0].shape().last().unwrap();
                    acc(grads, p, &mut |g| {
                        for r in 0..rows {
                            for j in 0..w {
                                g[r * w + j] += gout[r * total + offset + j];
                            }
                        }
                    });
                    offset += w;
                }
            }
            TapeOp::SliceAxis1 { a, start, len } => {
                let (n, s, e) = values[a.0].dims3();
                acc(grads, *a, &mut |g| {
                    for i in 0..n {
                        for j in 0..*len {
                            let src = (i * len + j) * e;
                            let dst = i * s * e + (start + j) * e;
                            for k in 0..e {
                                g[dst + k] += gout[src + k];
                            }
                        }
                    }
                });
            }
            TapeOp::ConcatAxis1 { parts } => {
                let (n, total, e) = values[node].dims3();
                let mut offset = 0;
                for &p in parts {
                    let (_, pt, _) = values[p.0].dims3();
                    acc(grads, p, &mut |g| {
                        for i in 0..n {
                            let src = i * total * e + offset * e;
                            let dst = i * pt * e;
                            for k in 0..pt * e {
                                g[dst + k] += gout[src + k];
                            }
                        }
                    });
                    offset += pt;
                }
            }
            TapeOp::BroadcastRows { a } => {
                let te = values[a.0].len();
                acc(grads, *a, &mut |g| {
                    for (i, go) in gout.iter().enumerate() {
                        g[i % te] += go;
                    }
                });
            }
            TapeOp::Rope { a } => {
                let (n, dk) = values[a.0].dims2();
                acc(grads, *a, &mut |g| {
                    // The rotation is orthogonal; its transpose is the
                    // rotation by the negated angle.
                    let mut inv = gout.to_vec();
                    rope_apply(&mut inv, n, dk, -1.0);
                    for (gi, go) in g.iter_mut().zip(&inv) {
                        *gi += go;
                    }
                });
            }
            TapeOp::SumAll { a } => {
                let go = gout[0];
                acc(grads, *a, &mut |g| {
                    for gi in g.iter_mut() {
                        *gi += go;
                    }
                });
            }
            TapeOp::NumericEmbed { values: vals, w, b } => {
                let vv = values[vals.0].data();
                let (n, d) = values[vals.0].dims2();
                let e = values[w.0].shape()[1];
                acc(grads, *w, &mut |g| {
                    for i in 0..n {
                        for j in 0..d {
                            let x = vv[i * d + j];
                            let src = (i * d + j) * e;
                            for k in 0..e {
                                g[j * e + k] += x * gout[src + k];
                            }
                        }
                    }
                });
                acc(grads, *b, &mut |g| {
                    for i in 0..n {
                        for j in 0..d {
                            let src = (i * d + j) * e;
                            for k in 0..e {
                                g[j * e + k] += gout[src + k];
                            }
                        }
                    }
                });
                let wd = values[w.0].data();
                acc(grads, *vals, &mut |g| {
                    for i in 0..n {
                        for j in 0..d {
                            let src = (i * d + j) * e;
                            let mut s = 0.0;
                            for k in 0..e {
                                s += wd[j * e + k] * gout[src + k];
                            }
                            g[i * d + j] += s;
                        }
                    }
                });
            }
            TapeOp::GatherRows { table, indices } => {
                let e = values[table.0].shape()[1];
                acc(grads, *table, &mut |g| {
                    for (i, &idx) in indices.iter().enumerate() {
                        for k in 0..e {
                            g[idx * e + k] += gout[i * e + k];
                        }
                    }
                });
            }
            TapeOp::BceWithLogits { logits, targets } => {
                let zv = values[logits.0].data();
                let n = targets.len() as f64;
                let go = gout[0];
                acc(grads, *logits, &mut |g| {
                    for ((gi, &z), &y) in g.iter_mut().zip(zv).zip(targets.iter()) {
                        let sig = 1.0 / (1.0 + (-z).exp());
                        *gi += go * (sig - y) / n;
                    }
                });
            }
            TapeOp::SoftmaxCrossEntropy { logits, labels } => {
                let zv = values[logits.0].data();
                let (n, k) = values[logits.0].dims2();
                let go = gout[0];
                acc(grads, *logits, &mut |g| {
                    for (i, &label) in labels.iter().enumerate() {
                        let row = &zv[i * k..(i + 1) * k];
                        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                        let dst = &mut g[i * k..(i + 1) * k];
                        for c in 0..k {
                            let p = (row[c] - max).exp() / denom;
                            let ind = if c == label { 1.0 } else { 0.0 };
                            dst[c] += go * (p - ind) / n as f64;
                        }
                    }
                });
            }
            TapeOp::MseLoss { pred, targets } => {
                let pv = values[pred.0].data();
                let n = targets.len() as f64;
                let go = gout[0];
                acc(grads, *pred, &mut |g| {
                    for ((gi, &p), &t) in g.iter_mut().zip(pv).zip(targets.iter()) {
                        *gi += go * 2.0 * (p - t) / n;
                    }
                });
            }
        }
    }
}

fn gelu_val(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let th = u.tanh();
    let sech2 = 1.0 - th * th;
    0.5 * (1.0 + th) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// In-place rotary encoding over consecutive dimension pairs; `sign` selects
/// the forward (+1) or inverse (-1) rotation.
fn rope_apply(data: &mut [f64], n: usize, dk: usize, sign: f64) {
    let pairs = dk / 2;
    for i in 0..n {
        let row = &mut data[i * dk..(i + 1) * dk];
        for j in 0..pairs {
            let angle = sign * i as f64 * ROPE_BASE.powf(-2.0 * j as f64 / dk as f64);
            let (sin, cos) = angle.sin_cos();
            let x = row[2 * j];
            let y = row[2 * j + 1];
            row[2 * j] = x * cos - y * sin;
            row[2 * j + 1] = x * sin + y * cos;
        }
    }
}

/// C += A·B with optional logical transposes (accumulating gemm).
fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], a_trans: bool, b: &[f64], b_trans: bool, c: &mut [f64]) {
    assert!(a.len() == m * k && b.len() == k * n && c.len() == m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths checked above; strides describe the same allocations.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn bmm_forward(a: &Tensor, b: &Tensor, nt: bool) -> Tensor {
    let (ba, m, k) = a.dims3();
    let (bb, d1, d2) = b.dims3();
    assert!(ba == bb, "bmm batch mismatch: {:?} vs {:?}", a.shape(), b.shape());
    let (kk, n) = if nt { (d2, d1) } else { (d1, d2) };
    assert!(
        k == kk,
        "bmm inner-dimension mismatch: {:?} vs {:?} (nt={})",
        a.shape(),
        b.shape(),
        nt
    );
    let mut out = vec![0.0; ba * m * n];
    for s in 0..ba {
        let av = &a.data()[s * m * k..(s + 1) * m * k];
        let bv = &b.data()[s * d1 * d2..(s + 1) * d1 * d2];
        gemm(m, k, n, av, false, bv, nt, &mut out[s * m * n..(s + 1) * m * n]);
    }
    Tensor::new(vec![ba, m, n], out)
}
