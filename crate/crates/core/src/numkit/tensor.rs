//! Dense n-dimensional f64 tensors, row-major.
//!
//! Tensors are immutable values; clones share storage. Shape violations are
//! programming errors and panic with both shapes in the message.

use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    /// Build a tensor from a shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let expect: usize = shape.iter().product();
        assert!(
            expect == data.len(),
            "tensor shape {:?} requires {} elements, got {}",
            shape,
            expect,
            data.len()
        );
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: Arc::new(vec![0.0; n]),
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: Arc::new(vec![value; n]),
        }
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: Arc::new(vec![value]),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert!(row.len() == c, "ragged rows: {} vs {}", row.len(), c);
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> f64 {
        assert!(
            self.data.len() == 1,
            "item() on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    /// (rows, cols) of a rank-2 tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert!(self.ndim() == 2, "expected rank-2 tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    pub fn dims3(&self) -> (usize, usize, usize) {
        assert!(self.ndim() == 3, "expected rank-3 tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        let (_, c) = self.dims2();
        self.data[i * c + j]
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let (r, c) = self.dims2();
        assert!(i < r, "row {} out of range for {:?}", i, self.shape);
        &self.data[i * c..(i + 1) * c]
    }

    /// Same storage, new shape (element counts must agree).
    pub fn reshape(&self, shape: Vec<usize>) -> Tensor {
        let expect: usize = shape.iter().product();
        assert!(
            expect == self.data.len(),
            "cannot reshape {:?} ({} elems) to {:?} ({} elems)",
            self.shape,
            self.data.len(),
            shape,
            expect
        );
        Tensor {
            shape,
            data: Arc::clone(&self.data),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = self.dims2();
        let (k2, n) = other.dims2();
        assert!(
            k == k2,
            "matmul dimension mismatch: lhs {:?} vs rhs {:?}",
            self.shape,
            other.shape
        );
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(), false, other.data(), false, &mut out);
        Tensor::new(vec![m, n], out)
    }

    /// `self @ other^T` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        let (m, k) = self.dims2();
        let (n, k2) = other.dims2();
        assert!(
            k == k2,
            "matmul_nt dimension mismatch: lhs {:?} vs rhs {:?}",
            self.shape,
            other.shape
        );
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(), false, other.data(), true, &mut out);
        Tensor::new(vec![m, n], out)
    }

    pub fn transpose2(&self) -> Tensor {
        let (r, c) = self.dims2();
        let src = self.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    /// Row-wise softmax of a rank-2 tensor. `-inf` entries map exactly to 0;
    /// a row with no finite entry panics (over-masked attention row).
    pub fn softmax_rows(&self) -> Tensor {
        let (r, c) = self.dims2();
        let mut out = vec![0.0; r * c];
        softmax_rows_kernel(self.data(), r, c, &mut out);
        Tensor::new(vec![r, c], out)
    }

    /// Layer normalization over the last axis followed by a per-element
    /// affine transform with `gain` and `bias` (both length = last extent).
    pub fn layernorm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Tensor {
        assert!(eps > 0.0, "layernorm eps must be positive, got {}", eps);
        let e = *self.shape.last().expect("layernorm on rank-0 tensor");
        assert!(
            gain.shape() == [e] && bias.shape() == [e],
            "layernorm gain/bias shapes {:?}/{:?} do not match last axis {}",
            gain.shape(),
            bias.shape(),
            e
        );
        let rows = self.data.len() / e;
        let mut out = vec![0.0; self.data.len()];
        layernorm_kernel(self.data(), rows, e, gain.data(), bias.data(), eps, &mut out);
        Tensor::new(self.shape.clone(), out)
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert!(
            self.shape == other.shape,
            "add shape mismatch: {:?} vs {:?}",
            self.shape,
            other.shape
        );
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert!(
            self.shape == other.shape,
            "sub shape mismatch: {:?} vs {:?}",
            self.shape,
            other.shape
        );
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|v| v * c).collect())
    }

    /// Maximum absolute difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert!(self.shape == other.shape, "shape mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert!(a.len() == b.len(), "dot length mismatch: {} vs {}", a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// C = A·B (+ optional transposes), C overwritten. Row-major slices.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
) {
    assert!(a.len() == m * k && b.len() == k * n && c.len() == m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }
    // Transposed operands are expressed through strides; no copies.
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
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn softmax_rows_kernel(src: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    assert!(cols > 0, "softmax over zero columns");
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            max > f64::NEG_INFINITY,
            "softmax row {} is fully masked (all entries are -inf)",
            r
        );
        let dst = &mut out[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            // exp(-inf - max) underflows to exactly 0.
            let e = (v - max).exp();
            *d = e;
            sum += e;
        }
        let inv = 1.0 / sum;
        for d in dst.iter_mut() {
            *d *= inv;
        }
        debug_assert!(dst.iter().all(|v| v.is_finite()), "softmax produced non-finite output");
    }
}

pub(crate) fn layernorm_kernel(
    src: &[f64],
    rows: usize,
    e: usize,
    gain: &[f64],
    bias: &[f64],
    eps: f64,
    out: &mut [f64],
) {
    for r in 0..rows {
        let row = &src[r * e..(r + 1) * e];
        let mean = row.iter().sum::<f64>() / e as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / e as f64;
        let inv = 1.0 / (var + eps).sqrt();
        let dst = &mut out[r * e..(r + 1) * e];
        for j in 0..e {
            dst[j] = (row[j] - mean) * inv * gain[j] + bias[j];
        }
        debug_assert!(dst.iter().all(|v| v.is_finite()), "layernorm produced non-finite output");
    }
}
