//! Dense row-major f64 arrays.
//!
//! Only the handful of operations the transducer stack needs are provided.
//! Shape mismatches are programming errors and panic.

use std::fmt;

/// A row-major `rows × cols` matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Array2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Array2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Array2({}x{}) ", self.rows, self.cols)?;
        f.debug_list().entries(self.data.iter().take(16)).finish()
    }
}

impl Array2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            rows * cols,
            data.len(),
            "Array2::from_vec: {rows}x{cols} needs {} values, got {}",
            rows * cols,
            data.len()
        );
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Stack equal-length rows into a matrix.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "Array2::from_rows: ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · other`
    pub fn matmul(&self, other: &Array2) -> Array2 {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let mut out = Array2::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b = other.row(k);
                for (oj, &bkj) in o.iter_mut().zip(b) {
                    *oj += aik * bkj;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`, accumulated into `out`.
    pub fn t_matmul_acc(&self, other: &Array2, out: &mut Array2) {
        assert_eq!(self.rows, other.rows, "t_matmul: row mismatch");
        assert_eq!(out.shape(), (self.cols, other.cols), "t_matmul: out shape");
        for r in 0..self.rows {
            let a = self.row(r);
            let b = other.row(r);
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let o = out.row_mut(i);
                for (oj, &bj) in o.iter_mut().zip(b) {
                    *oj += ai * bj;
                }
            }
        }
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Array2) -> Array2 {
        assert_eq!(self.cols, other.cols, "matmul_t: inner mismatch");
        let mut out = Array2::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// Add a `1 × cols` row vector to every row.
    pub fn add_row_broadcast(&mut self, bias: &Array2) {
        assert_eq!(bias.shape(), (1, self.cols), "bias shape");
        for i in 0..self.rows {
            for (x, &b) in self.row_mut(i).iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
    }

    /// Column sums accumulated into a `1 × cols` row vector.
    pub fn sum_rows_acc(&self, out: &mut Array2) {
        assert_eq!(out.shape(), (1, self.cols), "sum_rows out shape");
        for i in 0..self.rows {
            for (o, &x) in out.data.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Array2) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Array2 {
        assert!(start <= end && end <= self.rows);
        Array2::from_vec(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    /// Concatenate along columns: `[self | other]`.
    pub fn hcat(&self, other: &Array2) -> Array2 {
        assert_eq!(self.rows, other.rows, "hcat row mismatch");
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Array2::from_vec(self.rows, cols, data)
    }

    /// Split columns at `at`: inverse of [`Array2::hcat`].
    pub fn hsplit(&self, at: usize) -> (Array2, Array2) {
        assert!(at <= self.cols);
        let left = Array2::from_fn(self.rows, at, |i, j| self.get(i, j));
        let right = Array2::from_fn(self.rows, self.cols - at, |i, j| self.get(i, at + j));
        (left, right)
    }
}

/// A `d0 × d1 × d2` row-major tensor; the transducer lattices are `T × (U+1) × K̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct Array3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Array3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Self {
            dims: (d0, d1, d2),
            data: vec![0.0; d0 * d1 * d2],
        }
    }

    pub fn from_vec(d0: usize, d1: usize, d2: usize, data: Vec<f64>) -> Self {
        assert_eq!(d0 * d1 * d2, data.len(), "Array3::from_vec length");
        Self {
            dims: (d0, d1, d2),
            data,
        }
    }

    pub fn from_fn(
        d0: usize,
        d1: usize,
        d2: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(d0 * d1 * d2);
        for a in 0..d0 {
            for b in 0..d1 {
                for c in 0..d2 {
                    data.push(f(a, b, c));
                }
            }
        }
        Self {
            dims: (d0, d1, d2),
            data,
        }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn cell(&self, a: usize, b: usize) -> &[f64] {
        let (_, d1, d2) = self.dims;
        let start = (a * d1 + b) * d2;
        &self.data[start..start + d2]
    }

    #[inline]
    pub fn cell_mut(&mut self, a: usize, b: usize) -> &mut [f64] {
        let (_, d1, d2) = self.dims;
        let start = (a * d1 + b) * d2;
        &mut self.data[start..start + d2]
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.cell(a, b)[c]
    }

    /// View as a `(d0·d1) × d2` matrix.
    pub fn into_array2(self) -> Array2 {
        let (d0, d1, d2) = self.dims;
        Array2::from_vec(d0 * d1, d2, self.data)
    }

    pub fn from_array2(a: Array2, d0: usize, d1: usize) -> Self {
        let d2 = a.cols();
        assert_eq!(a.rows(), d0 * d1, "Array3::from_array2 row count");
        Self::from_vec(d0, d1, d2, a.into_vec())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
