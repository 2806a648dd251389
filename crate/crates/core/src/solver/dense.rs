//! Blocked LU with partial pivoting on dense column-major matrices.

use nalgebra::DMatrix;

use crate::error::SolverError;
use crate::scalar::Real;

const BLOCK: usize = 48;

/// `P A = L U` with unit lower `L`, stored in place.
#[derive(Clone, Debug)]
pub struct DenseLu<T: Real> {
    lu: DMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn factor(mut a: DMatrix<T>) -> Result<Self, SolverError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU needs a square matrix");
        let mut piv = vec![0usize; n];
        let mut k0 = 0;
        while k0 < n {
            let bs = BLOCK.min(n - k0);
            panel(&mut a, k0, bs, &mut piv)?;
            let rest = n - k0 - bs;
            if rest > 0 {
                {
                    let data = a.as_mut_slice();
                    for c in k0 + bs..n {
                        for j in k0..k0 + bs {
                            let u = data[c * n + j];
                            if u != T::zero() {
                                for i in j + 1..k0 + bs {
                                    let l = data[j * n + i];
                                    data[c * n + i] -= l * u;
                                }
                            }
                        }
                    }
                }
                let l21 = a.view((k0 + bs, k0), (rest, bs)).clone_owned();
                let u12 = a.view((k0, k0 + bs), (bs, rest)).clone_owned();
                a.view_mut((k0 + bs, k0 + bs), (rest, rest))
                    .gemm(-T::one(), &l21, &u12, T::one());
            }
            k0 += bs;
        }
        Ok(DenseLu { lu: a, piv })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Solves `A X = B` in place for a column-major block of right-hand sides.
    pub fn solve_in_place(&self, b: &mut DMatrix<T>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        if n == 0 {
            return;
        }
        for (j, &p) in self.piv.iter().enumerate() {
            if p != j {
                b.swap_rows(j, p);
            }
        }
        let r = b.ncols();
        // forward, unit lower
        let mut k0 = 0;
        while k0 < n {
            let bs = BLOCK.min(n - k0);
            {
                let l = self.lu.as_slice();
                let x = b.as_mut_slice();
                for col in 0..r {
                    let xc = &mut x[col * n..(col + 1) * n];
                    for j in k0..k0 + bs {
                        let v = xc[j];
                        if v != T::zero() {
                            for i in j + 1..k0 + bs {
                                xc[i] -= l[j * n + i] * v;
                            }
                        }
                    }
                }
            }
            let rest = n - k0 - bs;
            if rest > 0 {
                let xb = b.view((k0, 0), (bs, r)).clone_owned();
                let l21 = self.lu.view((k0 + bs, k0), (rest, bs));
                b.view_mut((k0 + bs, 0), (rest, r))
                    .gemm(-T::one(), &l21, &xb, T::one());
            }
            k0 += bs;
        }
        // backward, upper
        let nblocks = n.div_ceil(BLOCK);
        for blk in (0..nblocks).rev() {
            let k0 = blk * BLOCK;
            let bs = BLOCK.min(n - k0);
            {
                let u = self.lu.as_slice();
                let x = b.as_mut_slice();
                for col in 0..r {
                    let xc = &mut x[col * n..(col + 1) * n];
                    for j in (k0..k0 + bs).rev() {
                        let v = xc[j] / u[j * n + j];
                        xc[j] = v;
                        if v != T::zero() {
                            for i in k0..j {
                                xc[i] -= u[j * n + i] * v;
                            }
                        }
                    }
                }
            }
            if k0 > 0 {
                let xb = b.view((k0, 0), (bs, r)).clone_owned();
                let u01 = self.lu.view((0, k0), (k0, bs));
                b.view_mut((0, 0), (k0, r))
                    .gemm(-T::one(), &u01, &xb, T::one());
            }
        }
    }

    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let mut x = DMatrix::from_column_slice(b.len(), 1, b);
        self.solve_in_place(&mut x);
        x.as_slice().to_vec()
    }
}

fn panel<T: Real>(
    a: &mut DMatrix<T>,
    k0: usize,
    bs: usize,
    piv: &mut [usize],
) -> Result<(), SolverError> {
    let n = a.nrows();
    for j in k0..k0 + bs {
        let (p, best) = {
            let col = &a.as_slice()[j * n..(j + 1) * n];
            let mut p = j;
            let mut best = col[j].abs();
            for (i, v) in col.iter().enumerate().skip(j + 1) {
                if v.abs() > best {
                    best = v.abs();
                    p = i;
                }
            }
            (p, best)
        };
        if best == T::zero() || !best.is_finite_value() {
            return Err(SolverError::SingularPivot(j));
        }
        piv[j] = p;
        if p != j {
            a.swap_rows(j, p);
        }
        let data = a.as_mut_slice();
        let inv = T::one() / data[j * n + j];
        for i in j + 1..n {
            data[j * n + i] *= inv;
        }
        let (left, right) = data.split_at_mut((j + 1) * n);
        let lcol = &left[j * n..];
        for c in j + 1..k0 + bs {
            let off = (c - j - 1) * n;
            let u = right[off + j];
            if u != T::zero() {
                for i in j + 1..n {
                    right[off + i] -= lcol[i] * u;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let x = ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5;
            if i == j {
                x + 0.1
            } else {
                x
            }
        })
    }

    #[test]
    fn solves_random_systems() {
        for n in [1, 5, 47, 48, 49, 130] {
            let a = test_matrix(n);
            let b = DMatrix::from_fn(n, 3, |i, j| (i + 2 * j) as f64 - 1.0);
            let lu = DenseLu::factor(a.clone()).unwrap();
            let x = lu.solve(&b);
            let r = &a * &x - &b;
            assert!(
                r.amax() < 1e-9 * b.amax().max(1.0) * n as f64,
                "n={n}: {}",
                r.amax()
            );
        }
    }

    #[test]
    fn singular_detected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            DenseLu::factor(a),
            Err(SolverError::SingularPivot(1))
        ));
    }

    #[test]
    fn needs_pivoting() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let x = DenseLu::factor(a).unwrap().solve_vec(&[3.0, 4.0]);
        assert_eq!(x, vec![4.0, 3.0]);
    }
}
