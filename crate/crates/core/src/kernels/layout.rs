use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Real};

/// A `rows x cols` matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMajorWeights<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> ColumnMajorWeights<T> {
    /// Stores `m` column-major.
    pub fn from_row_major(m: &DenseMatrix<T>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(m.get(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Stores `mᵀ` column-major, i.e. each row of `m` becomes one column.
    /// This is a straight copy of the row-major buffer.
    pub fn of_transpose(m: &DenseMatrix<T>) -> Self {
        Self {
            rows: m.cols(),
            cols: m.rows(),
            data: m.as_slice().to_vec(),
        }
    }

    pub fn to_row_major(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self.data[j * self.rows + i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline(always)]
    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }
}

/// Compressed sparse vector: sorted unique indices with their values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseActivationVector<T = f32> {
    len: usize,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> SparseActivationVector<T> {
    pub fn new(len: usize, indices: Vec<u32>, values: Vec<T>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::shape("SparseActivationVector", indices.len(), values.len()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("indices must be strictly ascending".into()));
        }
        if indices.last().is_some_and(|&i| i as usize >= len) {
            return Err(Error::InvalidInput(format!("index out of range for length {len}")));
        }
        Ok(Self { len, indices, values })
    }

    pub fn with_capacity(len: usize, cap: usize) -> Self {
        Self {
            len,
            indices: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
        }
    }

    pub fn from_dense(x: &[T]) -> Self {
        let mut out = Self::with_capacity(x.len(), x.len());
        for (j, &v) in x.iter().enumerate() {
            if v != T::zero() {
                out.push_unchecked(j as u32, v);
            }
        }
        out
    }

    pub(crate) fn reset(&mut self, len: usize) {
        self.len = len;
        self.indices.clear();
        self.values.clear();
    }

    /// Caller guarantees `index` exceeds every stored index and is `< len`.
    #[inline(always)]
    pub(crate) fn push_unchecked(&mut self, index: u32, value: T) {
        self.indices.push(index);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline(always)]
    pub fn entry(&self, k: usize) -> (usize, T) {
        (self.indices[k] as usize, self.values[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().map(|&j| j as usize).zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.len];
        for (j, v) in self.iter() {
            out[j] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn layout_round_trip_is_bit_identical(rows in 1usize..20, cols in 1usize..20, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let m = DenseMatrix::from_fn(rows, cols, |_, _| rng.normal() as f32);
            let cm = ColumnMajorWeights::from_row_major(&m);
            prop_assert_eq!(cm.to_row_major(), m.clone());
            let t = ColumnMajorWeights::of_transpose(&m);
            prop_assert_eq!(t.to_row_major(), m.transpose());
            for j in 0..cols {
                let col: Vec<f32> = (0..rows).map(|i| m.get(i, j)).collect();
                prop_assert_eq!(cm.column(j), &col[..]);
            }
        }

        #[test]
        fn sparse_dense_expansion(v in prop::collection::vec(prop_oneof![Just(0.0f32), -5.0f32..5.0], 1..64)) {
            let s = SparseActivationVector::from_dense(&v);
            prop_assert_eq!(s.to_dense(), v.clone());
            prop_assert_eq!(s.nnz(), v.iter().filter(|x| **x != 0.0).count());
        }
    }

    #[test]
    fn constructor_validates() {
        assert!(SparseActivationVector::<f32>::new(4, vec![1, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseActivationVector::<f32>::new(4, vec![2, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseActivationVector::<f32>::new(4, vec![4], vec![1.0]).is_err());
        assert!(SparseActivationVector::<f32>::new(4, vec![0], vec![]).is_err());
        assert!(SparseActivationVector::<f32>::new(4, vec![0, 3], vec![1.0, 2.0]).is_ok());
    }
}
