use super::config::ExperimentConfig;
use super::report::{Report, Table};
use super::{build_patch, build_system, carve, longest_strict_decrease, operator_and_svd, weights_for, RunContext};
use crate::analysis::{fit_line, hcurl_norm_pair, NormWeights};
use crate::error::Error;
use crate::geometry::{Region, Role};
use crate::oracle::{sample_on_region, SolutionSpec};
use crate::runge_op::{alpha_for_j, expand_target, truncate, Expansion, RestrictionOperator, SvdBundle};
use crate::scalar::Complex;
use crate::solver::{SystemMatrix, TangentialTrace};

/// Relative slack for the monotonicity checks, which hold exactly in exact arithmetic.
const MONOTONE_SLACK: f64 = 1e-10;

/// Dipole at the cell center closest to `a` among those at least `3h` from its cells.
pub fn default_dipole(a: &Region<f64>) -> Result<SolutionSpec, Error> {
    let g = a.grid();
    let h = g.h();
    let inside: Vec<[f64; 3]> = a.cells().map(|c| g.cell_center(c)).collect();
    let mut best: Option<(f64, [f64; 3])> = None;
    for k in 0..g.cell_count() {
        let c = g.cell(k);
        if a.contains_cell(c) {
            continue;
        }
        let x = g.cell_center(c);
        let d = inside.iter().map(|y| (0..3).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt()).fold(f64::INFINITY, f64::min);
        if d >= 3.0 * h && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, x));
        }
    }
    let (_, x0) = best.ok_or_else(|| Error::Experiment("no admissible dipole position outside A".into()))?;
    Ok(SolutionSpec::MagneticDipole { x0, moment: [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]] })
}

fn material_scalars(sys: &SystemMatrix<f64>) -> (f64, f64) {
    let m = sys.material();
    (m.eps(0)[(0, 0)], m.mu(0)[(0, 0)])
}

/// One row of the Runge ladder. `realizability` is `‖u|_A − A f‖_X / (σ₁‖f‖_V)`, the
/// solve-versus-matrix discrepancy on the scale of the operator norm.
#[derive(Clone, Debug, PartialEq)]
pub struct RungeRecord {
    pub j: usize,
    pub alpha: f64,
    pub kept: usize,
    pub x_error: f64,
    pub v_norm: f64,
    pub bound: f64,
    pub omega_norm: f64,
    pub tail: f64,
    pub realizability: f64,
}

/// Builds approximants for every `j`, evaluating the error through the operator matrix and
/// the approximating solution through a fresh solve on `Ω`.
pub fn runge_ladder(
    sys: &SystemMatrix<f64>,
    weights: &NormWeights<f64>,
    op: &RestrictionOperator<f64>,
    svd: &SvdBundle<f64>,
    target: &[Complex<f64>],
    exp: &Expansion<f64>,
    js: &[usize],
    c: f64,
    theta: f64,
    m: f64,
) -> Result<Vec<RungeRecord>, Error> {
    let sigma1 = *svd.sigma.first().ok_or_else(|| Error::Experiment("empty spectrum".into()))?;
    let mut approx = Vec::with_capacity(js.len());
    for &j in js {
        let alpha = alpha_for_j(j, c, theta, m)?.min(sigma1);
        let mut a = truncate(svd, &exp.coeffs, alpha)?;
        a.j_index = Some(j);
        approx.push(a);
    }
    let traces: Vec<TangentialTrace<f64>> = approx
        .iter()
        .map(|a| TangentialTrace::new(weights.patch().clone(), a.boundary_data.clone()))
        .collect::<Result<_, _>>()?;
    let fields = sys.solve_bvp_many(&traces)?;
    let omega = Region::omega(sys.grid());
    let mut out = Vec::with_capacity(js.len());
    for (a, f) in approx.iter().zip(&fields) {
        let image = op.apply(&a.boundary_data);
        let resid: Vec<Complex<f64>> = image.iter().zip(target).map(|(p, q)| p - q).collect();
        let restricted = weights.restrict(f);
        let diff: Vec<Complex<f64>> = restricted.iter().zip(&image).map(|(p, q)| p - q).collect();
        let kept_coeffs = a.coeffs.iter().zip(&svd.sigma).filter(|(_, s)| **s >= a.alpha);
        let bound = kept_coeffs.map(|(c, _)| c.norm_sqr()).sum::<f64>().sqrt() / a.alpha;
        out.push(RungeRecord {
            j: a.j_index.unwrap_or(0),
            alpha: a.alpha,
            kept: a.kept_count,
            x_error: weights.norm_x(&resid),
            v_norm: weights.norm_v(&a.boundary_data),
            bound,
            omega_norm: hcurl_norm_pair(&omega, f)?,
            tail: a.tail_norm,
            realizability: weights.norm_x(&diff) / (sigma1 * weights.norm_v(&a.boundary_data)).max(f64::MIN_POSITIVE),
        });
    }
    Ok(out)
}

pub fn run_runge(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, Error> {
    let mut report = Report::new(cfg);
    let sys = build_system(cfg)?;
    let grid = sys.grid().clone();
    let patch = build_patch(cfg, &grid)?;
    let a = carve(&grid, cfg.regions.a.as_ref(), "A", Role::SubdomainA)?;
    let weights = weights_for(&patch, &a)?;
    let (op, svd) = operator_and_svd(&sys, &weights, ctx)?;

    let spec = match &cfg.runge.target {
        Some(s) => s.clone(),
        None => {
            let s = default_dipole(&a)?;
            report.note(format!("target defaulted to {}", serde_json::to_string(&s).unwrap_or_default()));
            s
        }
    };
    let (eps0, mu0) = material_scalars(&sys);
    let sol = spec.build(cfg.omega, eps0, mu0)?;
    let target = weights.restrict(&sample_on_region(&sol, &a)?);
    let exp = expand_target(&svd, &weights, &target);
    report.note(format!(
        "patch dofs {}, region dofs {}, sigma_1 = {:.6e}, sigma_min = {:.6e}, out-of-span {:.6e} of {:.6e}",
        weights.v_len(),
        weights.x_len(),
        svd.sigma[0],
        svd.sigma[svd.rank() - 1],
        exp.out_of_span,
        exp.target_norm
    ));
    let mut js = cfg.runge.js.clone();
    js.sort_unstable();
    js.dedup();
    let recs = runge_ladder(&sys, &weights, &op, &svd, &target, &exp, &js, cfg.runge.c, cfg.theta(), cfg.runge.m)?;

    let mut t = Table::new(
        "runge",
        &["j", "alpha", "kept", "x_error", "x_error_rel", "v_norm", "termwise_bound", "omega_hcurl", "tail", "realizability"],
    );
    for r in &recs {
        t.push(vec![
            r.j as f64,
            r.alpha,
            r.kept as f64,
            r.x_error,
            r.x_error / exp.target_norm,
            r.v_norm,
            r.bound,
            r.omega_norm,
            r.tail,
            r.realizability,
        ]);
    }
    report.tables.push(t);

    let errs: Vec<f64> = recs.iter().map(|r| r.x_error).collect();
    let scale = exp.target_norm;
    let max_increase = errs.windows(2).map(|w| (w[1] - w[0]) / scale).fold(f64::NEG_INFINITY, f64::max);
    report.check_le("error_nonincreasing", max_increase, MONOTONE_SLACK);
    report.check_ge("strict_decrease_run", longest_strict_decrease(&errs) as f64, cfg.tolerances.strict_run as f64);
    let vmax = recs.iter().map(|r| r.v_norm).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let max_drop = recs.windows(2).map(|w| (w[0].v_norm - w[1].v_norm) / vmax).fold(f64::NEG_INFINITY, f64::max);
    report.check_le("v_norm_nondecreasing", max_drop, MONOTONE_SLACK);
    let worst_bound = recs.iter().map(|r| r.v_norm / r.bound.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    report.check_le("termwise_bound_ratio", worst_bound, 1.0 + 1e-12);
    let worst_real = recs.iter().map(|r| r.realizability).fold(0.0, f64::max);
    report.check_le("realizability", worst_real, cfg.tolerances.reconstruction);

    let lj: Vec<f64> = recs.iter().map(|r| (r.j as f64).ln()).collect();
    let le: Vec<f64> = recs.iter().map(|r| r.x_error.max(f64::MIN_POSITIVE).ln()).collect();
    report.fit("log_error_vs_log_j", fit_line(&lj, &le)?);
    let jm: Vec<f64> = recs.iter().map(|r| (r.j as f64).powf(2.0 / cfg.runge.m)).collect();
    let lv: Vec<f64> = recs.iter().map(|r| r.v_norm.max(f64::MIN_POSITIVE).ln()).collect();
    let growth = fit_line(&jm, &lv)?;
    report.check("growth_exponent_positive", growth.exponent, "> 0", growth.exponent > 0.0);
    report.check_ge("growth_r2", growth.r2, cfg.tolerances.growth_r2_min);
    report.fit("log_v_norm_vs_j_pow", growth);
    Ok(report)
}
