//! Preconditioned MINRES for real symmetric (indefinite) systems.

use super::sparse::Csr;
use crate::error::SolverError;
use crate::scalar::Real;

/// Outcome of a converged MINRES run.
#[derive(Clone, Debug)]
pub struct MinresInfo {
    pub iterations: usize,
    pub residual: f64,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

/// Solves `A x = b` with the SPD diagonal preconditioner `1 / pdiag`.
pub fn minres<T: Real>(
    a: &Csr<T>,
    pdiag: &[T],
    b: &[T],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<T>, MinresInfo), SolverError> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        return Ok((
            x,
            MinresInfo {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let minv: Vec<T> = pdiag.iter().map(|d| T::one() / *d).collect();
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y: Vec<T> = r1.iter().zip(&minv).map(|(r, m)| *r * *m).collect();
    let beta1 = dot(&r1, &y).sqrt();
    let mut oldb = T::zero();
    let mut beta = beta1;
    let mut dbar = T::zero();
    let mut epsln = T::zero();
    let mut phibar = beta1;
    let mut cs = -T::one();
    let mut sn = T::zero();
    let mut w = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut history = Vec::new();
    let tiny = T::machine_eps() * T::machine_eps();

    for itn in 1..=max_iter {
        let s = T::one() / beta;
        for i in 0..n {
            v[i] = y[i] * s;
        }
        a.matvec(&v, &mut y);
        if itn >= 2 {
            let f = beta / oldb;
            for i in 0..n {
                y[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for i in 0..n {
            y[i] -= f * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        for i in 0..n {
            y[i] = r2[i] * minv[i];
        }
        oldb = beta;
        beta = dot(&r2, &y).max(T::zero()).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(tiny);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar = sn * phibar;
        let denom = T::one() / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        let rel = (phibar / beta1).as_f64();
        history.push(rel);
        if rel < tol || beta == T::zero() {
            let mut ax = vec![T::zero(); n];
            a.matvec(&x, &mut ax);
            let res = ax
                .iter()
                .zip(b)
                .fold(T::zero(), |s, (p, q)| s + (*p - *q) * (*p - *q))
                .sqrt()
                / bnorm;
            return Ok((
                x,
                MinresInfo {
                    iterations: itn,
                    residual: res.as_f64(),
                },
            ));
        }
    }
    Err(SolverError::NoConvergence {
        iterations: max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indefinite_tridiagonal() {
        let n = 200;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 2.0 - 0.3 + 0.001 * i as f64));
            if i + 1 < n {
                trip.push((i, i + 1, -1.0));
                trip.push((i + 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, n, trip);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let d: Vec<f64> = a.diagonal().iter().map(|v| v.abs()).collect();
        let (x, info) = minres(&a, &d, &b, 1e-12, 5000).unwrap();
        assert!(info.residual < 1e-9, "{info:?}");
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-8));
    }

    #[test]
    fn reports_history_on_failure() {
        let a = Csr::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 1, -1.0), (2, 2, 1e-3)]);
        let r = minres(&a, &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 1e-14, 1);
        assert!(
            matches!(r, Err(SolverError::NoConvergence { ref history, .. }) if history.len() == 1)
        );
    }
}
