//! Dense row-major tensors and the eager kernels behind every recorded op.
//!
//! All reductions accumulate in ascending index order starting from `+0`, so
//! results are reproducible bit for bit.

use std::fmt;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(format!(
                "shape {shape:?} holds {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: T) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(shape_err("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::matrix(rows.len(), cols, data)
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a matrix; vectors count as one row, scalars as one.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Element-wise conversion through `f64`.
    pub fn cast<S: Scalar>(&self) -> Tensor<S> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| S::of(v.as_f64())).collect() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    fn zip(&self, other: &Self, what: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(shape_err(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip(other, "hadamard", |a, b| a * b)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.zip(other, "div", |a, b| a / b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn add_scalar(&self, c: T) -> Self {
        self.map(|v| v + c)
    }

    /// Multiplies every entry by the single value of `s`.
    pub fn scale_by(&self, s: &Self) -> Result<Self> {
        if s.len() != 1 {
            return Err(shape_err(format!("scale_by expects a scalar, got {:?}", s.shape)));
        }
        Ok(self.scale(s.data[0]))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    fn require_matrix(&self, what: &str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(shape_err(format!("{what}: expected a matrix, got {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(shape_err(format!(
                "matmul: inner dimensions {k} and {k2} disagree"
            )));
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Tensor { shape: vec![m, n], data: out })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.require_matrix("transpose")?;
        let mut out = Vec::with_capacity(m * n);
        for j in 0..n {
            for i in 0..m {
                out.push(self.data[i * n + j]);
            }
        }
        Ok(Tensor { shape: vec![n, m], data: out })
    }

    pub fn sum_all(&self) -> Self {
        Self::scalar(self.data.iter().fold(T::zero(), |acc, &v| acc + v))
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Self> {
        if self.len() != 1 {
            return Err(shape_err(format!("expand expects a scalar, got {:?}", self.shape)));
        }
        Ok(Self::full(shape, self.data[0]))
    }

    /// Sums each row of an `n×c` matrix into an `n×1` column.
    pub fn row_sum(&self) -> Result<Self> {
        let (n, c) = self.require_matrix("row_sum")?;
        let data = (0..n)
            .map(|i| self.data[i * c..(i + 1) * c].iter().fold(T::zero(), |a, &v| a + v))
            .collect();
        Ok(Tensor { shape: vec![n, 1], data })
    }

    /// Repeats an `n×1` column `c` times.
    pub fn broadcast_cols(&self, c: usize) -> Result<Self> {
        let (n, one) = self.require_matrix("broadcast_cols")?;
        if one != 1 {
            return Err(shape_err(format!("broadcast_cols expects n×1, got {:?}", self.shape)));
        }
        let mut data = Vec::with_capacity(n * c);
        for &v in &self.data {
            data.extend(std::iter::repeat_n(v, c));
        }
        Ok(Tensor { shape: vec![n, c], data })
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Result<Self> {
        let (n, c) = self.require_matrix("gather_rows")?;
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= n {
                return Err(shape_err(format!("gather_rows: row {i} out of {n}")));
            }
            data.extend_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Ok(Tensor { shape: vec![idx.len(), c], data })
    }

    /// Inverse of [`gather_rows`](Self::gather_rows): places row `k` at row
    /// `idx[k]` of an `n`-row zero matrix, summing repeated targets.
    pub fn scatter_rows(&self, idx: &[usize], n: usize) -> Result<Self> {
        let (m, c) = self.require_matrix("scatter_rows")?;
        if m != idx.len() {
            return Err(shape_err("scatter_rows: index count differs from rows"));
        }
        let mut out = vec![T::zero(); n * c];
        for (k, &i) in idx.iter().enumerate() {
            if i >= n {
                return Err(shape_err(format!("scatter_rows: row {i} out of {n}")));
            }
            for j in 0..c {
                out[i * c + j] = out[i * c + j] + self.data[k * c + j];
            }
        }
        Ok(Tensor { shape: vec![n, c], data: out })
    }

    /// Copies `len` flat entries starting at `offset` into a tensor of `shape`.
    pub fn slice_flat(&self, offset: usize, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if offset + len > self.len() {
            return Err(shape_err(format!(
                "slice {offset}..{} exceeds length {}",
                offset + len,
                self.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data[offset..offset + len].to_vec() })
    }

    /// Embeds the flat contents at `offset` of a zero vector of length `total`.
    pub fn pad_flat(&self, offset: usize, total: usize) -> Result<Self> {
        if offset + self.len() > total {
            return Err(shape_err("pad exceeds target length"));
        }
        let mut data = vec![T::zero(); total];
        data[offset..offset + self.len()].copy_from_slice(&self.data);
        Ok(Tensor { shape: vec![total], data })
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Self {
        self.map(T::tanh)
    }

    /// `x` for `x ≥ 0`, `slope·x` otherwise.
    pub fn leaky_relu(&self, slope: T) -> Self {
        self.map(|v| if v >= T::zero() { v } else { slope * v })
    }

    /// Derivative mask of [`leaky_relu`](Self::leaky_relu); the kink at 0 takes slope 1.
    pub fn leaky_relu_mask(&self, slope: T) -> Self {
        self.map(|v| if v >= T::zero() { T::one() } else { slope })
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&self) -> Result<Self> {
        let (n, c) = self.require_matrix("softmax_rows")?;
        let mut out = Vec::with_capacity(n * c);
        for i in 0..n {
            let row = &self.data[i * c..(i + 1) * c];
            let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let exps: Vec<T> = row.iter().map(|&v| (v - mx).exp()).collect();
            let z = exps.iter().fold(T::zero(), |a, &b| a + b);
            out.extend(exps.into_iter().map(|e| e / z));
        }
        Ok(Tensor { shape: vec![n, c], data: out })
    }

    /// Row-wise log-softmax via log-sum-exp.
    pub fn log_softmax_rows(&self) -> Result<Self> {
        let (n, c) = self.require_matrix("log_softmax_rows")?;
        let mut out = Vec::with_capacity(n * c);
        for i in 0..n {
            let row = &self.data[i * c..(i + 1) * c];
            let mut arg = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = j;
                }
            }
            let mx = row[arg];
            // log Σ e^(v - mx) = ln_1p(Σ over non-max entries), exact for the max term
            let rest = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != arg)
                .fold(T::zero(), |a, (_, &b)| a + (b - mx).exp());
            let lse = rest.ln_1p();
            out.extend(row.iter().map(|&v| (v - mx) - lse));
        }
        Ok(Tensor { shape: vec![n, c], data: out })
    }

    pub fn l2_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
    }

    /// Index of the largest entry of each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows())
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Concatenates matrices with equal column counts top to bottom.
    pub fn vstack(parts: &[Self]) -> Result<Self> {
        let cols = parts.first().map_or(0, Self::cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols() != cols {
                return Err(shape_err("vstack: column counts differ"));
            }
            rows += p.rows();
            data.extend_from_slice(&p.data);
        }
        Self::matrix(rows, cols, data)
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^v)` without overflow.
pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for Tensor<T> {
    type Error = Error;

    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let b = m(&[&[1.5, -2.0], &[0.25, 7.0]]);
        assert_eq!(Tensor::identity(2).matmul(&b).unwrap(), b);
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let v = m(&[&[0.0], &[1.0]]);
        assert_eq!(a.matmul(&v).unwrap(), m(&[&[2.0], &[4.0]]));
    }

    #[test]
    fn matmul_zero_and_mismatch() {
        let z = Tensor::<f64>::zeros(&[3, 2]);
        let any = Tensor::full(&[2, 5], 3.25);
        assert_eq!(z.matmul(&any).unwrap(), Tensor::zeros(&[3, 5]));
        assert!(matches!(any.matmul(&z), Err(Error::Shape(_))));
    }

    #[test]
    fn elementwise_examples() {
        let a = m(&[&[1.0, -2.0], &[3.5, 0.0]]);
        assert_eq!(a.hadamard(&Tensor::ones(&[2, 2])).unwrap(), a);
        assert_eq!(Tensor::scalar(0.0f64).sigmoid().item(), 0.5);
        let l = Tensor::scalar(-2.0f64).leaky_relu(0.01).item();
        assert!((l - (-0.02)).abs() < 1e-15);
        assert!(a.add(&Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = m(&[&[1000.0, 999.0, -5.0], &[0.1, 0.2, 0.3]]);
        let p = a.softmax_rows().unwrap();
        for i in 0..2 {
            let s: f64 = p.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        let a = m(&[&[0.2, 0.9, 0.9], &[1.0, 1.0, 0.0]]);
        assert_eq!(a.argmax_rows(), vec![1, 0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(-3.0f64) - (1.0 + (-3.0f64).exp()).ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0f64), 800.0);
        assert!(softplus(-800.0f64) >= 0.0);
    }

    #[test]
    fn gather_scatter_are_adjoint() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let g = a.gather_rows(&[2, 0]).unwrap();
        assert_eq!(g, m(&[&[5.0, 6.0], &[1.0, 2.0]]));
        let s = g.scatter_rows(&[2, 0], 3).unwrap();
        assert_eq!(s, m(&[&[1.0, 2.0], &[0.0, 0.0], &[5.0, 6.0]]));
    }
}
