use ndarray::{Array2, ArrayView2};

use super::Real;
use crate::error::{Error, Result};

/// Compressed sparse row matrix with explicit values.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, T)>,
    ) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|t| t.0 >= nrows || t.1 >= ncols) {
            return Err(Error::Shape(format!(
                "entry ({i}, {j}) outside {nrows}x{ncols}"
            )));
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut offsets = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                let tail = values.last_mut().expect("nonempty");
                *tail = *tail + v;
                continue;
            }
            indices.push(j);
            values.push(v);
            offsets[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..nrows {
            offsets[i + 1] += offsets[i];
        }
        Ok(Self {
            nrows,
            ncols,
            offsets,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            offsets: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Block-diagonal concatenation.
    pub fn block_diag(blocks: &[Csr<T>]) -> Self {
        let nrows = blocks.iter().map(|b| b.nrows).sum();
        let ncols = blocks.iter().map(|b| b.ncols).sum();
        let nnz = blocks.iter().map(|b| b.nnz()).sum();
        let mut offsets = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        offsets.push(0);
        let mut col_base = 0;
        for b in blocks {
            for i in 0..b.nrows {
                let (lo, hi) = (b.offsets[i], b.offsets[i + 1]);
                indices.extend(b.indices[lo..hi].iter().map(|j| j + col_base));
                values.extend_from_slice(&b.values[lo..hi]);
                offsets.push(indices.len());
            }
            col_base += b.ncols;
        }
        Self {
            nrows,
            ncols,
            offsets,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(T::zero(), |(_, v)| v)
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)))
            .collect();
        Self::from_triplets(self.ncols, self.nrows, triplets).expect("in range")
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out[[i, j]] = out[[i, j]] + v;
            }
        }
        out
    }

    pub fn map_values<U: Real>(&self, f: impl Fn(T) -> U) -> Csr<U> {
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            offsets: self.offsets.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sparse-times-dense product. Each output row is accumulated in stored
    /// column order, so the result is bitwise reproducible.
    pub fn spmm(&self, dense: ArrayView2<T>) -> Result<Array2<T>> {
        if dense.nrows() != self.ncols {
            return Err(Error::Shape(format!(
                "spmm: sparse is {}x{}, dense has {} rows",
                self.nrows,
                self.ncols,
                dense.nrows()
            )));
        }
        let width = dense.ncols();
        let mut out = Array2::<T>::zeros((self.nrows, width));
        let dense = dense.as_standard_layout();
        let src = dense.as_slice().expect("standard layout");
        let dst = out.as_slice_mut().expect("fresh array");
        for i in 0..self.nrows {
            let out_row = &mut dst[i * width..(i + 1) * width];
            for (j, v) in self.row(i) {
                let in_row = &src[j * width..(j + 1) * width];
                for (o, &x) in out_row.iter_mut().zip(in_row) {
                    *o = *o + v * x;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_zero() {
        let d = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f32);
        assert_eq!(Csr::<f32>::identity(4).spmm(d.view()).unwrap(), d);
        assert_eq!(
            Csr::<f32>::zeros(2, 4).spmm(d.view()).unwrap(),
            Array2::<f32>::zeros((2, 3))
        );
    }

    #[test]
    fn dimension_mismatch() {
        let d = Array2::<f32>::zeros((3, 2));
        assert!(Csr::<f32>::identity(4).spmm(d.view()).is_err());
    }

    #[test]
    fn matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut trip = Vec::new();
            for i in 0..20 {
                for j in 0..20 {
                    if rng.random::<f64>() < 0.1 {
                        trip.push((i, j, rng.random_range(-1.0f32..1.0)));
                    }
                }
            }
            let s = Csr::from_triplets(20, 20, trip).unwrap();
            let d = Array2::from_shape_fn((20, 8), |_| rng.random_range(-1.0f32..1.0));
            let fast = s.spmm(d.view()).unwrap();
            // Reference: plain triple loop in f64.
            let dense = s.to_dense();
            for i in 0..20 {
                for c in 0..8 {
                    let mut acc = 0.0f64;
                    for k in 0..20 {
                        acc += dense[[i, k]] as f64 * d[[k, c]] as f64;
                    }
                    let got = fast[[i, c]] as f64;
                    assert!((got - acc).abs() <= 1e-6 * acc.abs().max(1.0), "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn block_diag_layout() {
        let a = Csr::<f64>::identity(2);
        let b = Csr::from_triplets(1, 3, vec![(0, 2, 5.0)]).unwrap();
        let m = Csr::block_diag(&[a, b]).to_dense();
        assert_eq!(m.dim(), (3, 5));
        assert_eq!(m[[0, 0]], 1.0);
        assert_eq!(m[[1, 1]], 1.0);
        assert_eq!(m[[2, 4]], 5.0);
        assert_eq!(m.sum(), 7.0);
    }

    #[test]
    fn duplicates_are_summed() {
        let m = Csr::from_triplets(1, 1, vec![(0, 0, 1.0f32), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.nnz(), 1);
    }
}
