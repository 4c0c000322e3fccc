use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m.data[k * n + k] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// A `1 x n` row vector.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r + 1..n {
                worst = worst.max((self.data[r * n + c] - self.data[c * n + r]).abs());
            }
        }
        worst
    }

    /// Largest `|i - j|` over nonzero entries.
    pub fn bandwidth(&self) -> usize {
        let mut band = 0;
        for r in 0..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                if v != 0.0 {
                    band = band.max(r.abs_diff(c));
                }
            }
        }
        band
    }
}

pub(crate) fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

pub(crate) fn check_inner(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

/// `A * B`. Zero entries of `A` are skipped, so banded left operands cost
/// proportionally to their band.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_inner("matmul", a, b)?;
    let mut c = Matrix::zeros(a.rows, b.cols);
    matmul_acc(a, b, &mut c);
    Ok(c)
}

/// `C += A * B` (shapes unchecked).
pub(crate) fn matmul_acc(a: &Matrix, b: &Matrix, c: &mut Matrix) {
    let n = b.cols;
    for i in 0..a.rows {
        let c_row = &mut c.data[i * n..(i + 1) * n];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
    }
}

/// `C += A^T * B` (shapes unchecked; `A` is `k x m`, `B` is `k x n`).
pub(crate) fn matmul_tn_acc(a: &Matrix, b: &Matrix, c: &mut Matrix) {
    let n = b.cols;
    for k in 0..a.rows {
        let b_row = &b.data[k * n..(k + 1) * n];
        for (i, &aki) in a.row(k).iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let c_row = &mut c.data[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aki * bv;
            }
        }
    }
}

/// `C += A * B^T` (shapes unchecked; `A` is `m x k`, `B` is `n x k`).
pub(crate) fn matmul_nt_acc(a: &Matrix, b: &Matrix, c: &mut Matrix) {
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            c.data[i * c.cols + j] += dot(a_row, b.row(j));
        }
    }
}

/// Like [`matmul_nt_acc`] but only entries with `|i - j| <= band` are touched.
pub(crate) fn matmul_nt_banded_acc(a: &Matrix, b: &Matrix, band: usize, c: &mut Matrix) {
    for i in 0..a.rows {
        let a_row = a.row(i);
        let lo = i.saturating_sub(band);
        let hi = (i + band + 1).min(b.rows);
        for j in lo..hi {
            c.data[i * c.cols + j] += dot(a_row, b.row(j));
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-wise softmax; each row sums to one.
pub fn row_softmax(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    for r in 0..y.rows {
        let row = y.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    y
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the weighted degrees of `A + I`.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    let (_, inv_sqrt) = normalized_with_scales(a)?;
    let n = a.rows;
    Ok(Matrix::from_fn(n, n, |r, c| {
        let self_loop = if r == c { 1.0 } else { 0.0 };
        (a.get(r, c) + self_loop) * inv_sqrt[r] * inv_sqrt[c]
    }))
}

pub(crate) const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Returns degrees of `A + I` and their inverse square roots.
pub(crate) fn normalized_with_scales(a: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.rows != a.cols {
        return Err(Error::ShapeMismatch {
            op: "normalize_adjacency",
            lhs: a.shape(),
            rhs: (a.cols, a.rows),
        });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(asym));
    }
    if a.data.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "adjacency has negative entries".into(),
        ));
    }
    let degrees: Vec<f64> = (0..a.rows)
        .map(|r| a.row(r).iter().sum::<f64>() + 1.0)
        .collect();
    let inv_sqrt = degrees.iter().map(|d| d.sqrt().recip()).collect();
    Ok((degrees, inv_sqrt))
}
