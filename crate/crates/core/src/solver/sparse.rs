use crate::scalar::{Complex, Real};

/// Compressed sparse row matrix with real entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Builds from `(row, col, value)` triplets, summing duplicates. Column indices are sorted.
    pub fn from_triplets(rows: usize, cols: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < rows && c < cols);
            if last == Some((r, c)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let s = self.indptr[r];
        let e = self.indptr[r + 1];
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (idx, val) = self.row(r);
        idx.binary_search(&c).map_or(T::zero(), |k| val[k])
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols))
            .map(|r| self.get(r, r))
            .collect()
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let (idx, val) = self.row(r);
            *out = idx
                .iter()
                .zip(val)
                .fold(T::zero(), |s, (&c, &v)| s + v * x[c]);
        }
    }

    pub fn matvec_complex(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let (idx, val) = self.row(r);
                idx.iter()
                    .zip(val)
                    .fold(Complex::new(T::zero(), T::zero()), |s, (&c, &v)| {
                        Complex::new(s.re + v * x[c].re, s.im + v * x[c].im)
                    })
            })
            .collect()
    }

    /// `Aᵀ x`.
    pub fn tmatvec_complex(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![Complex::new(T::zero(), T::zero()); self.cols];
        for (r, xr) in x.iter().enumerate() {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                y[c].re += v * xr.re;
                y[c].im += v * xr.im;
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr<T> {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                trip.push((c, r, v));
            }
        }
        Csr::from_triplets(self.cols, self.rows, trip)
    }

    /// Submatrix with the given rows and columns. `col_map[c]` is the new column of `c`.
    pub fn extract(&self, rows: &[usize], col_map: &[Option<usize>], ncols: usize) -> Csr<T> {
        let mut trip = Vec::new();
        for (nr, &r) in rows.iter().enumerate() {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                if let Some(nc) = col_map[c] {
                    trip.push((nr, nc, v));
                }
            }
        }
        Csr::from_triplets(rows.len(), ncols, trip)
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|r| self.row(r).1.iter().fold(T::zero(), |s, v| s + v.abs()))
            .fold(T::zero(), |a, b| a.max(b))
    }
}
