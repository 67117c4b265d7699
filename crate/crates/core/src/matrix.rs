//! Dense square matrices indexed by (input port, output port).

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Row-major `n x n` matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

/// Queue lengths `q[i][j]` in packets.
pub type QueueMatrix = Matrix<u64>;
/// Per-slot arrivals `a[i][j]`.
pub type ArrivalMatrix = Matrix<u32>;
pub type RealMatrix = Matrix<f64>;

impl<T: Clone + Default> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::default(); n * n],
        }
    }
}

impl<T: Clone> Matrix<T> {
    pub fn filled(n: usize, value: T) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }
}

impl<T> Matrix<T> {
    /// Builds a matrix from row-major data. Returns `None` unless `data.len() == n * n`.
    pub fn from_vec(n: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == n * n).then_some(Self { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from nested rows; `None` if the rows are ragged or not square.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> Matrix<T> {
    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n.max(1)).map(<[T]>::to_vec).collect()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl QueueMatrix {
    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    pub fn to_real(&self) -> RealMatrix {
        self.map(|&v| v as f64)
    }
}

impl RealMatrix {
    pub fn dot(&self, other: &RealMatrix) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for row in self.data.chunks(self.n.max(1)) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    pub fn sub(&self, other: &RealMatrix) -> RealMatrix {
        debug_assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &RealMatrix) -> RealMatrix {
        debug_assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> RealMatrix {
        self.map(|v| c * v)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &RealMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `x[i][j] = w[i] + w_tilde[j]`.
    pub fn from_row_col(w: &[f64], w_tilde: &[f64]) -> RealMatrix {
        assert_eq!(w.len(), w_tilde.len());
        Matrix::from_fn(w.len(), |i, j| w[i] + w_tilde[j])
    }

    /// Row indicator `e^(i)`: ones in row `i`, zeros elsewhere.
    pub fn row_indicator(n: usize, i: usize) -> RealMatrix {
        Matrix::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 })
    }

    /// Column indicator `e~^(j)`: ones in column `j`, zeros elsewhere.
    pub fn col_indicator(n: usize, j: usize) -> RealMatrix {
        Matrix::from_fn(n, |_, c| if c == j { 1.0 } else { 0.0 })
    }
}
