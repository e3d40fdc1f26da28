use crate::error::{shape_err, Error, Result};
use crate::gradcore::Tensor;
use crate::scalar::Scalar;

/// Coordinate-list sparse matrix, entries sorted by `(row, col)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, T)>,
    // row_start[i]..row_start[i + 1] indexes the entries of row i
    row_start: Vec<usize>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Sorts the entries and rejects duplicates or out-of-range indices.
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, T)>) -> Result<Self> {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::Validation(format!(
                    "duplicate sparse entry ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(shape_err(format!("entry ({r}, {c}) outside {rows}×{cols}")));
        }
        let mut row_start = vec![0; rows + 1];
        for &(r, _, _) in &entries {
            row_start[r + 1] += 1;
        }
        for i in 0..rows {
            row_start[i + 1] += row_start[i];
        }
        Ok(SparseMatrix { rows, cols, entries, row_start })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, n, (0..n).map(|i| (i, i, T::one())).collect()).expect("valid identity")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, T)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn row_entries(&self, r: usize) -> &[(usize, usize, T)] {
        &self.entries[self.row_start[r]..self.row_start[r + 1]]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let row = self.row_entries(r);
        row.binary_search_by_key(&c, |&(_, col, _)| col)
            .map_or(T::zero(), |k| row[k].2)
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(&[self.rows, self.cols]);
        let cols = self.cols;
        for &(r, c, v) in &self.entries {
            t.data_mut()[r * cols + c] = v;
        }
        t
    }

    pub fn transpose(&self) -> Self {
        let entries = self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect();
        Self::new(self.cols, self.rows, entries).expect("transpose of a valid matrix")
    }

    /// Sparse × dense. Each output row accumulates its entries in ascending
    /// column order, matching [`Tensor::matmul`] on the densified matrix bit
    /// for bit.
    pub fn spmm(&self, dense: &Tensor<T>) -> Result<Tensor<T>> {
        if dense.shape().len() != 2 || dense.rows() != self.cols {
            return Err(shape_err(format!(
                "spmm: {}×{} sparse against dense {:?}",
                self.rows,
                self.cols,
                dense.shape()
            )));
        }
        let n = dense.cols();
        let mut out = vec![T::zero(); self.rows * n];
        for r in 0..self.rows {
            let orow = &mut out[r * n..(r + 1) * n];
            for &(_, c, v) in self.row_entries(r) {
                for (o, &d) in orow.iter_mut().zip(dense.row(c)) {
                    *o = *o + v * d;
                }
            }
        }
        Tensor::matrix(self.rows, n, out)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && self.entries.iter().all(|&(r, c, v)| (self.get(c, r) - v).abs() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_times_dense_is_zero() {
        let s = SparseMatrix::<f64>::new(3, 2, vec![]).unwrap();
        let d = Tensor::full(&[2, 4], 1.5);
        assert_eq!(s.spmm(&d).unwrap(), Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn identity_pattern_is_identity() {
        let d = Tensor::<f64>::from_f64(&[3, 2], &[1.0, -2.0, 3.0, 0.5, 7.0, 9.0]).unwrap();
        assert_eq!(SparseMatrix::identity(3).spmm(&d).unwrap(), d);
    }

    #[test]
    fn rejects_duplicates_and_bounds() {
        assert!(SparseMatrix::new(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(SparseMatrix::new(2, 2, vec![(2, 0, 1.0)]).is_err());
        let d = Tensor::<f64>::zeros(&[3, 1]);
        assert!(SparseMatrix::<f64>::identity(2).spmm(&d).is_err());
    }

    #[test]
    fn random_spmm_matches_dense_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut cells: Vec<(usize, usize)> =
                (0..4).flat_map(|r| (0..4).map(move |c| (r, c))).collect();
            // pick 6 distinct cells
            for i in 0..6 {
                let j = rng.random_range(i..cells.len());
                cells.swap(i, j);
            }
            let entries =
                cells[..6].iter().map(|&(r, c)| (r, c, rng.random_range(-2.0..2.0))).collect();
            let s = SparseMatrix::new(4, 4, entries).unwrap();
            let d = Tensor::new(vec![4, 3], (0..12).map(|_| rng.random_range(-3.0..3.0)).collect())
                .unwrap();
            let a = s.spmm(&d).unwrap();
            let b = s.to_dense().matmul(&d).unwrap();
            let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }
}
