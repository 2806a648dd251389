use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::config::ExperimentConfig;
use super::report::{Report, Table};
use super::{build_patch, build_system, carve, complex_gaussian, operator_and_svd, rng_for, weights_for, RunContext};
use crate::analysis::hcurl_norm_pair;
use crate::error::{AnalysisError, Error};
use crate::geometry::{Region, Role};
use crate::runge_op::RestrictionOperator;
use crate::scalar::Complex;
use crate::solver::TangentialTrace;

type C64 = Complex<f64>;

const RANDOM_PROBES: usize = 16;

/// `Aᴴ diag(w_X) A`, the `X`-energy as a form on boundary data.
fn energy_form(op: &RestrictionOperator<f64>) -> DMatrix<C64> {
    let mut wa = op.matrix.clone();
    for (r, w) in op.weights.gram_x().iter().enumerate() {
        wa.row_mut(r).scale_mut(*w);
    }
    hermitian(op.matrix.adjoint() * wa)
}

fn hermitian(m: DMatrix<C64>) -> DMatrix<C64> {
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest eigenpair of the pencil `(p, q)` with `q` positive definite.
pub fn top_generalized(p: &DMatrix<C64>, q: &DMatrix<C64>) -> Result<(f64, DVector<C64>), Error> {
    let chol = q.clone().cholesky().ok_or(AnalysisError::NotPositiveDefinite)?;
    let l = chol.l();
    let y = l.solve_lower_triangular(p).ok_or(AnalysisError::NotPositiveDefinite)?;
    let m = l.solve_lower_triangular(&y.adjoint()).ok_or(AnalysisError::NotPositiveDefinite)?.adjoint();
    let eig = SymmetricEigen::new(hermitian(m));
    let (k, lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, v)| if *v > best.1 { (k, *v) } else { best });
    let v = l.adjoint().solve_upper_triangular(&eig.eigenvectors.column(k).into_owned()).ok_or(AnalysisError::NotPositiveDefinite)?;
    Ok((lam, v))
}

fn quotient(p: &DMatrix<C64>, q: &DMatrix<C64>, f: &DVector<C64>) -> f64 {
    (f.adjoint() * p * f)[(0, 0)].re / (f.adjoint() * q * f)[(0, 0)].re
}

pub fn run_localization(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, Error> {
    let mut report = Report::new(cfg);
    let sys = build_system(cfg)?;
    let grid = sys.grid().clone();
    let patch = build_patch(cfg, &grid)?;
    let m = carve(&grid, cfg.regions.m.as_ref(), "M", Role::SubdomainA)?;
    let d = carve(&grid, cfg.regions.d.as_ref(), "D", Role::ExclusionD)?;
    if m.intersects(&d) {
        report.note("M and D overlap");
    }
    let wm = weights_for(&patch, &m)?;
    let wd = weights_for(&patch, &d)?;
    let (op_m, svd_m) = operator_and_svd(&sys, &wm, ctx)?;
    let (op_d, svd_d) = operator_and_svd(&sys, &wd, ctx)?;
    let p = energy_form(&op_m);
    let gv = wm.gram_v().map(|x| C64::new(x, 0.0));
    let shift = cfg.localization.eps_reg * svd_d.sigma[0] * svd_d.sigma[0];
    let q = hermitian(energy_form(&op_d) + &gv * C64::new(shift, 0.0));

    let nv = wm.v_len();
    let mut cutoffs: Vec<usize> = cfg.localization.cutoffs.iter().map(|&k| k.min(svd_m.rank())).filter(|&k| k > 0).collect();
    cutoffs.push(nv);
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let mut t = Table::new("localization", &["cutoff", "top_quotient"]);
    let mut tops = Vec::new();
    for &k in &cutoffs {
        let top = if k == nv {
            top_generalized(&p, &q)?.0
        } else {
            let phi = svd_m.phi.columns(0, k).into_owned();
            let pk = hermitian(phi.adjoint() * &p * &phi);
            let qk = hermitian(phi.adjoint() * &q * &phi);
            top_generalized(&pk, &qk)?.0
        };
        t.push(vec![k as f64, top]);
        tops.push((k, top));
    }
    report.tables.push(t);

    let (top, f) = top_generalized(&p, &q)?;
    let trace = TangentialTrace::new(patch.clone(), f.iter().copied().collect())?;
    let field = sys.solve_bvp(&trace)?;
    let omega = Region::omega(&grid);
    let mut n = Table::new("maximizer", &["quotient", "norm_m", "norm_d", "norm_omega", "v_norm"]);
    n.push(vec![
        top,
        hcurl_norm_pair(&m, &field)?,
        hcurl_norm_pair(&d, &field)?,
        hcurl_norm_pair(&omega, &field)?,
        wm.norm_v(trace.values.as_slice()),
    ]);
    report.tables.push(n);

    let probe = (0..RANDOM_PROBES)
        .map(|k| quotient(&p, &q, &DVector::from_vec(complex_gaussian(&mut rng_for(cfg.seed(), "localization", k as u64), nv))))
        .fold(f64::NEG_INFINITY, f64::max);
    report.check_le("random_probe_over_top", probe / top, 1.0 + 1e-10);
    let worst_drop = tops.windows(2).map(|w| (w[0].1 - w[1].1) / top).fold(f64::NEG_INFINITY, f64::max);
    report.check_le("quotient_nondecreasing_in_cutoff", worst_drop, 1e-8);
    let at = tops.iter().find(|(k, _)| *k >= 50).or(tops.last()).copied().unwrap_or((0, 0.0));
    report.check_ge(&format!("top_quotient_at_cutoff_{}", at.0), at.1, cfg.tolerances.quotient_min);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_forms_give_quotient_below_one() {
        let a = DMatrix::from_fn(4, 4, |i, j| C64::new(((i + 1) * (j + 2)) as f64 % 5.0 + if i == j { 6.0 } else { 0.0 }, 0.0));
        let p = hermitian(&a * a.adjoint());
        let eps = 1e-3;
        let q = &p + DMatrix::identity(4, 4) * C64::new(eps, 0.0);
        let (top, f) = top_generalized(&p, &q).unwrap();
        assert!(top < 1.0);
        assert!((quotient(&p, &q, &f) - top).abs() < 1e-10);
        let g = DVector::from_element(4, C64::new(1.0, -0.5));
        assert!(quotient(&p, &q, &g) <= top * (1.0 + 1e-12));
    }
}
