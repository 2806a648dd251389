use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::config::{ExperimentConfig, Strategy};
use super::report::{Report, StabilityBudget, Table};
use super::{build_patch, build_system, complex_gaussian, median, rng_for, RunContext};
use crate::analysis::{build_norm_weights, fit_log_modulus, hcurl_norm_pair, lp_norm, NormWeights};
use crate::error::{AnalysisError, Error};
use crate::geometry::{BoundaryPatch, Region};
use crate::oracle::{boundary_trace, sample_on_grid, SolutionSpec};
use crate::scalar::Complex;
use crate::solver::{FieldPair, SystemMatrix};

type C64 = Complex<f64>;

/// Smallest and largest regularization tried by the discrepancy search, relative to `μ_max`.
const LAMBDA_RANGE: (f64, f64) = (1e-16, 1e4);
const BISECTION_STEPS: usize = 80;

/// How the Tikhonov parameter is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Choice {
    /// Relative to the largest generalized eigenvalue.
    Fixed(f64),
    /// Matches the data misfit to `eta`.
    Morozov { eta: f64 },
}

/// Tangential `E` and `H` data on the patch `Γ`, in patch dof order.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyData {
    pub f: Vec<C64>,
    pub g: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub fields: FieldPair<f64>,
    pub boundary: Vec<C64>,
    /// Absolute regularization parameter.
    pub lambda: f64,
    pub misfit: f64,
}

/// Solve-then-trace least squares for the Cauchy problem on a fixed system and patch.
///
/// Unknowns are tangential `E` on every boundary edge. The data map sends them to
/// `(ν×E, ν×H)|_Γ`; the penalty is the discrete `L²(Ω)` norm of the field pair.
pub struct CauchyProblem {
    grid: crate::geometry::Grid<f64>,
    gamma: BoundaryPatch<f64>,
    weights: NormWeights<f64>,
    /// Columns are the full field pairs of the boundary basis: edges then faces.
    fields: DMatrix<C64>,
    data_op: DMatrix<C64>,
    /// `L^{-H} U` of the pencil `(Dᴴ G D, Q)`.
    basis: DMatrix<C64>,
    mu: Vec<f64>,
    /// `basisᴴ Dᴴ G`, applied to data.
    project: DMatrix<C64>,
}

fn to_vec(v: &DVector<C64>) -> Vec<C64> {
    v.iter().copied().collect()
}

impl CauchyProblem {
    pub fn new(sys: &SystemMatrix<f64>, gamma: &BoundaryPatch<f64>) -> Result<Self, Error> {
        let grid = sys.grid().clone();
        let nb = sys.boundary_edges().len();
        let ng = gamma.len();
        let ne = grid.edge_count();
        let nf = grid.face_count();
        let gpos: Vec<usize> = gamma
            .dofs()
            .iter()
            .map(|&e| sys.boundary_position(e).ok_or(crate::error::SolverError::TraceOffBoundary(e)))
            .collect::<Result<_, _>>()?;
        if ng >= nb {
            return Err(Error::Experiment("the Cauchy patch must be strictly smaller than the boundary".into()));
        }
        let mut fields = DMatrix::from_element(ne + nf, nb, C64::new(0.0, 0.0));
        let mut data_op = DMatrix::from_element(2 * ng, nb, C64::new(0.0, 0.0));
        for start in (0..nb).step_by(64) {
            let end = (start + 64).min(nb);
            let ubs: Vec<Vec<C64>> = (start..end)
                .map(|k| {
                    let mut u = vec![C64::new(0.0, 0.0); nb];
                    u[k] = C64::new(1.0, 0.0);
                    u
                })
                .collect();
            let sols = sys.solve_boundary_values(&ubs)?;
            for (i, s) in sols.iter().enumerate() {
                let col = start + i;
                for (r, z) in s.e.iter().chain(&s.h).enumerate() {
                    fields[(r, col)] = *z;
                }
                let ht = sys.boundary_h_trace(s, None);
                for (r, &p) in gpos.iter().enumerate() {
                    data_op[(r, col)] = if p == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                    data_op[(ng + r, col)] = ht[p];
                }
            }
        }
        let w: Vec<f64> = grid.edge_weights().into_iter().chain(grid.face_weights()).collect();
        let mut wf = fields.clone();
        for (r, wr) in w.iter().enumerate() {
            wf.row_mut(r).scale_mut(*wr);
        }
        let q = fields.adjoint() * &wf;
        let weights = build_norm_weights(gamma, &Region::omega(&grid))?;
        let gd = Self::gram_apply(&weights, &data_op, ng);
        let n = data_op.adjoint() * &gd;
        let chol = q.clone().cholesky().ok_or(AnalysisError::NotPositiveDefinite)?;
        let l = chol.l();
        let y = l.solve_lower_triangular(&n).ok_or(AnalysisError::NotPositiveDefinite)?;
        let m = l.solve_lower_triangular(&y.adjoint()).ok_or(AnalysisError::NotPositiveDefinite)?.adjoint();
        let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(m);
        let basis = l
            .adjoint()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or(AnalysisError::NotPositiveDefinite)?;
        let mu: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let project = basis.adjoint() * gd.adjoint();
        Ok(CauchyProblem { grid, gamma: gamma.clone(), weights, fields, data_op, basis, mu, project })
    }

    /// Block-diagonal `G_V ⊕ G_V` applied to the columns of a data-space matrix.
    fn gram_apply(weights: &NormWeights<f64>, m: &DMatrix<C64>, ng: usize) -> DMatrix<C64> {
        let mut out = m.clone();
        for c in 0..m.ncols() {
            let col: Vec<C64> = m.column(c).iter().copied().collect();
            let top = weights.apply_gram_v(&col[..ng]);
            let bot = weights.apply_gram_v(&col[ng..]);
            for (r, z) in top.into_iter().chain(bot).enumerate() {
                out[(r, c)] = z;
            }
        }
        out
    }

    pub fn patch(&self) -> &BoundaryPatch<f64> {
        &self.gamma
    }

    pub fn data_len(&self) -> usize {
        2 * self.gamma.len()
    }

    pub fn mu_max(&self) -> f64 {
        self.mu.iter().cloned().fold(0.0, f64::max)
    }

    /// `‖(a, b)‖_V = (‖a‖²_V + ‖b‖²_V)^{1/2}` on the stacked data vector.
    pub fn data_norm(&self, d: &[C64]) -> f64 {
        let ng = self.gamma.len();
        let a = self.weights.norm_v(&d[..ng]);
        let b = self.weights.norm_v(&d[ng..]);
        (a * a + b * b).sqrt()
    }

    /// Exact data of a field pair solving the discrete system.
    pub fn data_of(&self, sys: &SystemMatrix<f64>, f: &FieldPair<f64>) -> CauchyData {
        let ht = sys.boundary_h_trace(f, None);
        let (fv, gv) = self
            .gamma
            .dofs()
            .iter()
            .map(|&e| {
                let p = sys.boundary_position(e).expect("patch dof on the boundary");
                (f.e[e], ht[p])
            })
            .unzip();
        CauchyData { f: fv, g: gv }
    }

    fn solve(&self, z: &DVector<C64>, lambda: f64) -> DVector<C64> {
        let scaled = DVector::from_iterator(z.len(), z.iter().zip(&self.mu).map(|(v, m)| v / (m + lambda)));
        &self.basis * scaled
    }

    fn misfit(&self, u: &DVector<C64>, d: &DVector<C64>) -> f64 {
        let r = &self.data_op * u - d;
        self.data_norm(&to_vec(&r))
    }

    pub fn fields_of(&self, u: &[C64]) -> FieldPair<f64> {
        let v = &self.fields * DVector::from_column_slice(u);
        let ne = self.grid.edge_count();
        FieldPair { e: v.iter().take(ne).copied().collect(), h: v.iter().skip(ne).copied().collect() }
    }

    pub fn reconstruct(&self, data: &CauchyData, choice: Choice) -> Result<Reconstruction, Error> {
        let ng = self.gamma.len();
        if data.f.len() != ng || data.g.len() != ng {
            return Err(crate::error::SolverError::Dimension { got: data.f.len().min(data.g.len()), expected: ng }.into());
        }
        if data.f.iter().chain(&data.g).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(crate::error::SolverError::NonFinite.into());
        }
        let d = DVector::from_iterator(2 * ng, data.f.iter().chain(&data.g).copied());
        let z = &self.project * &d;
        let mmax = self.mu_max().max(f64::MIN_POSITIVE);
        let eval = |rel: f64| {
            let u = self.solve(&z, rel * mmax);
            let m = self.misfit(&u, &d);
            (u, m)
        };
        let rel = match choice {
            Choice::Fixed(rel) => rel,
            Choice::Morozov { eta } => {
                let (mut lo, mut hi) = (LAMBDA_RANGE.0.ln(), LAMBDA_RANGE.1.ln());
                if eval(lo.exp()).1 >= eta {
                    lo.exp()
                } else if eval(hi.exp()).1 <= eta {
                    hi.exp()
                } else {
                    for _ in 0..BISECTION_STEPS {
                        let mid = 0.5 * (lo + hi);
                        if eval(mid.exp()).1 < eta {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    (0.5 * (lo + hi)).exp()
                }
            }
        };
        let (u, misfit) = eval(rel);
        let boundary = to_vec(&u);
        Ok(Reconstruction { fields: self.fields_of(&boundary), boundary, lambda: rel * mmax, misfit })
    }
}

/// Reconstructs `(E, H)` on `Ω` from noisy tangential data on the problem's patch.
pub fn cauchy_reconstruct(problem: &CauchyProblem, data: &CauchyData, strategy: Choice) -> Result<Reconstruction, Error> {
    problem.reconstruct(data, strategy)
}

/// Magnetic dipole beyond the middle of the upper `x` side, a quarter box length or three
/// cells away, whichever is larger.
pub fn default_truth(grid: &crate::geometry::Grid<f64>) -> SolutionSpec {
    let (lo, hi) = (grid.origin(), grid.upper());
    let len = hi[0] - lo[0];
    let mid = [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]));
    SolutionSpec::MagneticDipole { x0: [hi[0] + (0.25 * len).max(3.0 * grid.h()), mid[1], mid[2]], moment: [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]] }
}

fn noisy(problem: &CauchyProblem, data: &CauchyData, eta: f64, seed: u64, level: u64) -> CauchyData {
    let ng = data.f.len();
    let mut rng = rng_for(seed, "cauchy-noise", level);
    let n = complex_gaussian(&mut rng, 2 * ng);
    let s = eta / problem.data_norm(&n).max(f64::MIN_POSITIVE);
    CauchyData {
        f: data.f.iter().zip(&n[..ng]).map(|(a, b)| a + b * s).collect(),
        g: data.g.iter().zip(&n[ng..]).map(|(a, b)| a + b * s).collect(),
    }
}

pub fn run_cauchy(cfg: &ExperimentConfig, _ctx: &RunContext) -> Result<Report, Error> {
    let mut report = Report::new(cfg);
    let sys = build_system(cfg)?;
    let grid = sys.grid().clone();
    let gamma = build_patch(cfg, &grid)?;
    let omega = Region::omega(&grid);
    let m = sys.material();
    let spec = cfg.cauchy.truth.clone().unwrap_or_else(|| default_truth(&grid));
    let sol = spec.build(cfg.omega, m.eps(0)[(0, 0)], m.mu(0)[(0, 0)])?;
    let truth = sys.solve_bvp(&boundary_trace(&sol, &grid)?)?;
    let analytic = sample_on_grid(&sol, &grid)?;
    let disc_error = hcurl_norm_pair(&omega, &truth.sub(&analytic))?;

    let problem = CauchyProblem::new(&sys, &gamma)?;
    let data = problem.data_of(&sys, &truth);
    let p = cfg.exponents.p;
    let zeta = lp_norm(&omega, &truth.e, None, p)? + lp_norm(&omega, &vec![C64::new(0.0, 0.0); grid.edge_count()], Some(&truth.h), p)?;
    let truth_norm = hcurl_norm_pair(&omega, &truth)?;
    report.note(format!(
        "boundary unknowns {}, patch dofs {}, zeta = {zeta:.6e}, data norm = {:.6e}, truth H(curl) norm = {truth_norm:.6e}",
        sys.boundary_edges().len(),
        gamma.len(),
        problem.data_norm(&[data.f.clone(), data.g.clone()].concat())
    ));

    let zero = problem.reconstruct(&data, Choice::Fixed(cfg.regularization.lambda))?;
    let zero_err = hcurl_norm_pair(&omega, &zero.fields.sub(&truth))?;
    let mut z = Table::new("zero_noise", &["lambda", "misfit", "error", "forward_discretization_error"]);
    z.push(vec![zero.lambda, zero.misfit, zero_err, disc_error]);
    report.check_le("zero_noise_error_over_discretization", zero_err / disc_error, cfg.tolerances.zero_noise_factor);

    let mut levels: Vec<f64> = cfg.noise.etas.clone();
    levels.sort_by(|a, b| b.total_cmp(a));
    let jobs: Vec<(usize, usize)> =
        (0..levels.len()).flat_map(|i| (0..cfg.noise.seeds.len()).map(move |k| (i, k))).collect();
    let runs: Vec<Result<(usize, usize, f64, f64, f64, f64), Error>> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let eps = levels[i];
            let eta = eps * zeta / (1.0 - eps);
            let nd = noisy(&problem, &data, eta, cfg.noise.seeds[k], i as u64);
            let choice = match cfg.regularization.strategy {
                Strategy::Morozov => Choice::Morozov { eta },
                Strategy::Fixed => Choice::Fixed(cfg.regularization.lambda),
            };
            let r = problem.reconstruct(&nd, choice)?;
            let err = hcurl_norm_pair(&omega, &r.fields.sub(&truth))?;
            Ok((i, k, eta, r.lambda, r.misfit, err))
        })
        .collect();
    let mut raw = Table::new("runs", &["eps", "seed", "eta", "lambda", "misfit", "misfit_over_eta", "error"]);
    let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); levels.len()];
    let mut worst_morozov: f64 = 1.0;
    for r in runs {
        let (i, k, eta, lambda, misfit, err) = r?;
        raw.push(vec![levels[i], cfg.noise.seeds[k] as f64, eta, lambda, misfit, misfit / eta, err]);
        per_level[i].push(err);
        let ratio = misfit / eta;
        worst_morozov = worst_morozov.max(ratio.max(1.0 / ratio));
    }
    let mut main = Table::new("cauchy", &["eps", "eta", "zeta", "median_error", "median_error_rel"]);
    let mut medians = Vec::new();
    for (i, errs) in per_level.iter_mut().enumerate() {
        let eta = levels[i] * zeta / (1.0 - levels[i]);
        let budget = StabilityBudget::new(eta, zeta, 0.0)?;
        let med = median(errs);
        medians.push((levels[i], med / (budget.zeta + budget.eta)));
        main.push(vec![levels[i], eta, zeta, med, med / (zeta + eta)]);
    }
    report.tables.push(main);
    report.tables.push(raw);
    report.tables.push(z);

    let med: Vec<f64> = report.tables[0].column("median_error").unwrap_or_default();
    let worst_rise = med.windows(2).map(|w| (w[1] - w[0]) / truth_norm).fold(f64::NEG_INFINITY, f64::max);
    report.check_le("median_error_monotone_in_eta", worst_rise, 0.0);
    if cfg.regularization.strategy == Strategy::Morozov {
        report.check_le("morozov_misfit_factor", worst_morozov, cfg.tolerances.morozov_factor);
    }
    let fit = fit_log_modulus(&medians)?;
    report.check("log_modulus_m_positive", fit.exponent, "> 0", fit.exponent > 0.0);
    report.check_ge("log_modulus_r2", fit.r2, cfg.tolerances.r2_min);
    report.fit("log_modulus", fit);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{Cells, Tag};
    use crate::geometry::{PatchSpec, Side};

    fn setup() -> (SystemMatrix<f64>, CauchyProblem, FieldPair<f64>) {
        let mut cfg = ExperimentConfig::new(Tag::Cauchy);
        cfg.grid.n = Cells::Cube(6);
        cfg.patch.also = [Side::YMinus, Side::YPlus, Side::ZMinus, Side::ZPlus]
            .into_iter()
            .map(|side| PatchSpec { side, window: None })
            .collect();
        let cfg = cfg.resolve().unwrap();
        let sys = build_system(&cfg).unwrap();
        let gamma = build_patch(&cfg, sys.grid()).unwrap();
        let problem = CauchyProblem::new(&sys, &gamma).unwrap();
        let sol = default_truth(sys.grid()).build(2.0, 1.0, 1.0).unwrap();
        let truth = sys.solve_bvp(&boundary_trace(&sol, sys.grid()).unwrap()).unwrap();
        (sys, problem, truth)
    }

    #[test]
    fn penalty_limits() {
        let (sys, problem, truth) = setup();
        let omega = Region::omega(sys.grid());
        let data = problem.data_of(&sys, &truth);
        let tn = hcurl_norm_pair(&omega, &truth).unwrap();
        let r = problem.reconstruct(&data, Choice::Fixed(1e-12)).unwrap();
        let err = hcurl_norm_pair(&omega, &r.fields.sub(&truth)).unwrap();
        assert!(err < 1e-3 * tn, "{err} vs {tn}");
        let big = problem.reconstruct(&data, Choice::Fixed(1e12)).unwrap();
        assert!(hcurl_norm_pair(&omega, &big.fields).unwrap() < 1e-6 * tn);
    }

    #[test]
    fn morozov_hits_the_discrepancy() {
        let (sys, problem, truth) = setup();
        let data = problem.data_of(&sys, &truth);
        let eta = 1e-2 * problem.data_norm(&[data.f.clone(), data.g.clone()].concat());
        let nd = noisy(&problem, &data, eta, 7, 0);
        let r = cauchy_reconstruct(&problem, &nd, Choice::Morozov { eta }).unwrap();
        assert!(r.misfit <= 2.0 * eta && r.misfit >= 0.5 * eta, "{} vs {eta}", r.misfit);
    }

    #[test]
    fn rejects_full_boundary_patch_and_bad_data() {
        let (sys, problem, _) = setup();
        let full = crate::geometry::full_boundary(sys.grid());
        assert!(CauchyProblem::new(&sys, &full).is_err());
        let d = CauchyData { f: vec![C64::new(0.0, 0.0); 3], g: vec![] };
        assert!(problem.reconstruct(&d, Choice::Fixed(1.0)).is_err());
    }
}
