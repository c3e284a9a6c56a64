//! Dense matrices, Hadamard rotation and the seeded random number generator.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Index;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, Result};

/// Largest Hadamard order accepted by [`HadamardMatrix::new`].
pub const MAX_HADAMARD_ORDER: usize = 4096;

/// Dense real matrix stored row-major.
///
/// Every entry is finite; constructors reject NaN and infinities.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.data.chunks(self.cols.max(1))).finish()
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. All rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::BadShape {
                    rows: rows.len(),
                    cols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix by evaluating `f(row, col)`; non-finite values are rejected.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::new(rows, cols, data)
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

    /// Row-major backing slice.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Standard matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                expected: (self.cols, rhs.cols),
                found: rhs.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let acc = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in acc.iter_mut().zip(rhs.row(p)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn transpose_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "transpose_matmul",
                expected: (self.rows, rhs.cols),
                found: rhs.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for p in 0..self.rows {
            let rrow = rhs.row(p);
            for (i, &a) in self.row(p).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let acc = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in acc.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Elementwise map. The result must stay finite.
    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data.iter().copied().map(f).collect())
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self − other|` over all entries.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "max_abs_diff",
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, cols.len());
        for r in 0..self.rows {
            for (j, &c) in cols.iter().enumerate() {
                out.data[r * cols.len() + j] = self.get(r, c);
            }
        }
        out
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

/// Orthonormal Sylvester Hadamard matrix with entries `±1/√order`.
#[derive(Debug, Clone, PartialEq)]
pub struct HadamardMatrix {
    order: usize,
    matrix: Matrix,
}

impl HadamardMatrix {
    /// Builds the normalized Sylvester matrix of the given order,
    /// `H₂ₙ = [[Hₙ, Hₙ], [Hₙ, −Hₙ]] / √2`.
    pub fn new(order: usize) -> Result<Self> {
        if !order.is_power_of_two() || order > MAX_HADAMARD_ORDER {
            return Err(Error::NotPowerOfTwo(order));
        }
        let entry = normalization(order);
        let mut data = Vec::with_capacity(order * order);
        for r in 0..order {
            for c in 0..order {
                // Sylvester sign: (-1)^popcount(r & c)
                let sign = if (r & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                data.push(sign * entry);
            }
        }
        Ok(HadamardMatrix {
            order,
            matrix: Matrix::from_raw(order, order, data),
        })
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Computes `H · m` with the fast Walsh–Hadamard butterfly, `O(n log n)`
    /// per column instead of a dense product.
    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.order {
            return Err(Error::DimensionMismatch {
                op: "hadamard apply",
                expected: (self.order, m.cols()),
                found: m.shape(),
            });
        }
        let cols = m.cols();
        let mut out = m.clone();
        let data = out.data_mut();
        let mut half = 1;
        while half < self.order {
            for block in (0..self.order).step_by(2 * half) {
                for r in block..block + half {
                    let (top, bottom) = data.split_at_mut((r + half) * cols);
                    let a = &mut top[r * cols..(r + 1) * cols];
                    let b = &mut bottom[..cols];
                    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                        let (s, d) = (*x + *y, *x - *y);
                        *x = s;
                        *y = d;
                    }
                }
            }
            half *= 2;
        }
        let scale = normalization(self.order);
        for v in data.iter_mut() {
            *v *= scale;
        }
        Ok(out)
    }
}

fn normalization(order: usize) -> f64 {
    1.0 / libm::sqrt(order as f64)
}

/// Rotates a weight/activation pair into the Hadamard basis.
///
/// Returns `(H·W, H·X)`. Since `H` is orthonormal,
/// `(H·W)ᵀ(H·X) = Wᵀ(HᵀH)X = WᵀX`.
pub fn rotate_pair(w: &Matrix, x: &Matrix, h: &HadamardMatrix) -> Result<(Matrix, Matrix)> {
    if w.rows() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "rotate_pair",
            expected: (w.rows(), x.cols()),
            found: x.shape(),
        });
    }
    Ok((h.apply(w)?, h.apply(x)?))
}

/// Seeded generator with a stream identical on every platform.
///
/// Uniform bits come from ChaCha8 (a counter-based stream cipher); Gaussian
/// samples use the Box–Muller transform evaluated with `libm`, so the stream
/// does not depend on the host's float library.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Independent stream `index` under master seed `seed`. Streams for
    /// different indices never overlap, so trials can run in any order.
    pub fn for_trial(seed: u64, index: u64) -> Self {
        let mut rng = Rng::new(seed);
        rng.inner.set_stream(index);
        rng
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift; bias is < 2^-32 for the sizes used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal sample.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// Matrix of i.i.d. `N(0, std²)` entries, filled row-major.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| std * self.normal()).collect();
        Matrix::from_raw(rows, cols, data)
    }

    /// Matrix of i.i.d. uniform entries in `[lo, hi)`, filled row-major.
    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| self.uniform_in(lo, hi)).collect();
        Matrix::from_raw(rows, cols, data)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
