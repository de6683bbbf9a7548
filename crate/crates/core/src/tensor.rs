//! Dense row-major `f64` matrix used for activations (tokens x channels) and
//! weights (input channels x output channels), plus the per-channel
//! reductions the transforms are built from.
//!
//! Every constructor and every public operation checks that the result holds
//! only finite values; an overflow surfaces as [`Error::NonFinite`] instead of
//! leaking `inf`/`NaN` into downstream statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    /// Builds a tensor from row-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim(format!("empty tensor ({rows}x{cols})")));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        let t = Self { rows, cols, data };
        t.check_finite("Tensor2D::new")
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim(format!(
                    "ragged rows: row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// All-zero tensor. Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "Tensor2D dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a tensor by evaluating `f(row, col)` for every element.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Tensor whose every row is `v`.
    pub fn broadcast_row(rows: usize, v: &[f64]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * v.len());
        for _ in 0..rows {
            data.extend_from_slice(v);
        }
        Self::new(rows, v.len(), data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.cols)
    }

    /// Mutable row access for crate-internal kernels; callers must keep values finite.
    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.cols)
    }

    pub(crate) fn check_finite(self, op: &'static str) -> Result<Self> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Elementwise `f(x)`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
        .check_finite("Tensor2D::map")
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dim(format!(
                "{op}: shape {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
        .check_finite(op)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|x| x * c)
    }

    /// Frobenius norm, accumulated in row-major order.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Sub-matrix of columns `[start, end)`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.cols {
            return Err(Error::dim(format!(
                "column range {start}..{end} invalid for {} columns",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for row in self.iter_rows() {
            data.extend_from_slice(&row[start..end]);
        }
        Ok(Self {
            rows: self.rows,
            cols: end - start,
            data,
        })
    }
}

/// Per-channel summary statistics with population moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub absmax: Vec<f64>,
    pub variance: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    pub n_channels: usize,
}

/// Mean of every column over the token axis.
pub fn channel_means(x: &Tensor2D) -> Vec<f64> {
    let mut acc = vec![0.0; x.cols()];
    for row in x.iter_rows() {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = x.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

pub fn channel_absmax(x: &Tensor2D) -> Vec<f64> {
    let mut acc = vec![0.0_f64; x.cols()];
    for row in x.iter_rows() {
        for (a, v) in acc.iter_mut().zip(row) {
            *a = a.max(v.abs());
        }
    }
    acc
}

/// Mean, absmax, variance and excess kurtosis for every channel.
///
/// Kurtosis needs at least 4 tokens and a non-constant channel; otherwise it
/// is reported as 0.
pub fn channel_stats(x: &Tensor2D) -> ChannelStats {
    let d = x.cols();
    let s = x.rows() as f64;
    let mean = channel_means(x);
    let absmax = channel_absmax(x);
    let mut m2 = vec![0.0; d];
    let mut m4 = vec![0.0; d];
    for row in x.iter_rows() {
        for i in 0..d {
            let dev = row[i] - mean[i];
            let sq = dev * dev;
            m2[i] += sq;
            m4[i] += sq * sq;
        }
    }
    let mut variance = Vec::with_capacity(d);
    let mut excess_kurtosis = Vec::with_capacity(d);
    for i in 0..d {
        let var = m2[i] / s;
        let fourth = m4[i] / s;
        // Rounding residue of a constant channel is at most a few ulps of its magnitude.
        let floor = (16.0 * f64::EPSILON * absmax[i]).powi(2);
        let degenerate = x.rows() < 4 || var <= floor;
        variance.push(if var <= floor { 0.0 } else { var });
        excess_kurtosis.push(if degenerate { 0.0 } else { fourth / (var * var) - 3.0 });
    }
    ChannelStats {
        mean,
        absmax,
        variance,
        excess_kurtosis,
        n_channels: d,
    }
}

/// Matrix product `A·B`.
pub fn matmul(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.cols() != b.rows() {
        return Err(Error::dim(format!(
            "matmul: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(p)) {
                *o += av * bv;
            }
        }
    }
    Tensor2D::new(n, m, out).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFinite("matmul"),
        e => e,
    })
}

/// Row-vector product `v·B` for a single row vector `v`.
pub fn vecmat(v: &[f64], b: &Tensor2D) -> Result<Vec<f64>> {
    let t = Tensor2D::new(1, v.len(), v.to_vec())?;
    Ok(matmul(&t, b)?.into_data())
}

fn row_vector_op(
    a: &Tensor2D,
    v: &[f64],
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor2D> {
    if v.len() != a.cols() {
        return Err(Error::dim(format!(
            "{op}: vector length {} vs {} columns",
            v.len(),
            a.cols()
        )));
    }
    let mut out = a.clone();
    for row in out.rows_mut() {
        for (x, &vi) in row.iter_mut().zip(v) {
            *x = f(*x, vi);
        }
    }
    out.check_finite(op)
}

/// Adds `v` to every row of `a`.
/// Stacks tensors with equal column counts on top of each other.
pub fn concat_rows(parts: &[Tensor2D]) -> Result<Tensor2D> {
    let first = parts.first().ok_or_else(|| Error::dim("nothing to concatenate"))?;
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
    for p in parts {
        if p.cols != first.cols {
            return Err(Error::dim(format!("concat of {} and {} columns", first.cols, p.cols)));
        }
        data.extend_from_slice(&p.data);
    }
    Ok(Tensor2D { rows: data.len() / first.cols, cols: first.cols, data })
}

pub fn add_row_vector(a: &Tensor2D, v: &[f64]) -> Result<Tensor2D> {
    row_vector_op(a, v, "add_row_vector", |x, y| x + y)
}

/// Subtracts `v` from every row of `a`.
pub fn sub_row_vector(a: &Tensor2D, v: &[f64]) -> Result<Tensor2D> {
    row_vector_op(a, v, "sub_row_vector", |x, y| x - y)
}

/// `A·diag(g)`: column `i` multiplied by `g[i]`.
pub fn scale_columns(a: &Tensor2D, g: &[f64]) -> Result<Tensor2D> {
    row_vector_op(a, g, "scale_columns", |x, y| x * y)
}

/// `diag(g)·A`: row `i` multiplied by `g[i]`.
pub fn scale_rows(a: &Tensor2D, g: &[f64]) -> Result<Tensor2D> {
    if g.len() != a.rows() {
        return Err(Error::dim(format!(
            "scale_rows: vector length {} vs {} rows",
            g.len(),
            a.rows()
        )));
    }
    let mut out = a.clone();
    for (row, &gi) in out.rows_mut().zip(g) {
        row.iter_mut().for_each(|x| *x *= gi);
    }
    out.check_finite("scale_rows")
}
