use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// Vectors are plain contiguous buffers.
pub type DenseVector<T = f64> = Vec<T>;

/// Row-major dense matrix with at least one row and one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::new",
                format!("{} elements", rows * cols),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    /// `y = W x`.
    pub fn matvec(&self, x: &[T]) -> Result<DenseVector<T>> {
        let mut y = vec![T::zero(); self.rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    /// `y = W x` into a caller-provided buffer of length `rows`.
    pub fn matvec_into(&self, x: &[T], y: &mut [T]) -> Result<()> {
        if x.len() != self.cols {
            return Err(Error::shape("matvec", format!("x.len = {}", self.cols), x.len()));
        }
        if y.len() != self.rows {
            return Err(Error::shape("matvec", format!("y.len = {}", self.rows), y.len()));
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
        Ok(())
    }

    /// `y = Wᵀ g`, accumulated row by row.
    pub fn matvec_transposed(&self, g: &[T]) -> Result<DenseVector<T>> {
        if g.len() != self.rows {
            return Err(Error::shape(
                "matvec_transposed",
                format!("g.len = {}", self.rows),
                g.len(),
            ));
        }
        let mut y = vec![T::zero(); self.cols];
        for (i, &gi) in g.iter().enumerate() {
            if gi != T::zero() {
                axpy(gi, self.row(i), &mut y);
            }
        }
        Ok(y)
    }

    /// `W += a bᵀ`.
    pub fn add_outer(&mut self, a: &[T], b: &[T]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            if ai != T::zero() {
                axpy(ai, b, self.row_mut(i));
            }
        }
    }
}

const LANES: usize = 8;

/// Inner product with eight independent accumulators, reduced in a fixed order.
///
/// Every dense and sparse path that produces a dot product goes through this
/// function, so results are bitwise comparable across paths.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for k in 0..LANES {
            acc[k] = acc[k] + xa[k] * xb[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    let s01 = acc[0] + acc[1];
    let s23 = acc[2] + acc[3];
    let s45 = acc[4] + acc[5];
    let s67 = acc[6] + acc[7];
    ((s01 + s23) + (s45 + s67)) + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Norm-wise relative deviation `max|a - b| / max|b|`.
///
/// Returns 0 when both vectors are identically zero and infinity when only
/// the reference is zero.
pub fn max_relative_deviation<T: Real>(a: &[T], reference: &[T]) -> f64 {
    assert_eq!(a.len(), reference.len());
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (&x, &r) in a.iter().zip(reference) {
        diff = diff.max((x.as_f64() - r.as_f64()).abs());
        scale = scale.max(r.as_f64().abs());
    }
    if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn identity_matvec() {
        let w = DenseMatrix::<f64>::identity(3);
        assert_eq!(w.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_matvec() {
        let w = DenseMatrix::<f64>::zeros(2, 3);
        assert_eq!(w.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_matvec() {
        let w = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(w.matvec(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_mismatch() {
        let w = DenseMatrix::<f64>::zeros(2, 3);
        assert!(matches!(w.matvec(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn new_rejects_bad_length_and_empty() {
        assert!(DenseMatrix::<f64>::new(2, 2, vec![0.0; 3]).is_err());
        assert!(DenseMatrix::<f64>::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn dot_matches_naive_on_odd_lengths() {
        let mut rng = SeededRng::new(3);
        for n in [1usize, 7, 8, 9, 31, 64, 100] {
            let a: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_matvec_matches_explicit_transpose() {
        let mut rng = SeededRng::new(5);
        let w = DenseMatrix::from_fn(5, 7, |_, _| rng.uniform(-1.0, 1.0));
        let g: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let a = w.matvec_transposed(&g).unwrap();
        let b = w.transpose().matvec(&g).unwrap();
        assert!(max_relative_deviation(&a, &b) < 1e-14);
    }

    proptest! {
        #[test]
        fn matvec_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = SeededRng::new(seed);
            let rows = 1 + (rng.next_u64() % 12) as usize;
            let cols = 1 + (rng.next_u64() % 12) as usize;
            let w = DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform(-1.0, 1.0));
            let x: Vec<f64> = (0..cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let y: Vec<f64> = (0..cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = w.matvec(&combo).unwrap();
            let wx = w.matvec(&x).unwrap();
            let wy = w.matvec(&y).unwrap();
            let rhs: Vec<f64> = wx.iter().zip(&wy).map(|(p, q)| a * p + b * q).collect();
            for (l, r) in lhs.iter().zip(&rhs) {
                prop_assert!((l - r).abs() <= 1e-10 * r.abs().max(1.0));
            }
        }
    }
}
