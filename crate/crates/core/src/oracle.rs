//! Closed-form time-harmonic fields in homogeneous media, for the convention
//! `∇×E = iωμH`, `∇×H = −iωεE`.

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, MaterialError, SolverError};
use crate::geometry::{full_boundary, Grid, Region, AXES};
use crate::materials::{make_material, MaterialSpec, TensorSpec};
use crate::scalar::{c, cabs2, cis, czero, Complex, Real};
use crate::solver::{FieldPair, SolverOptions, SystemMatrix, TangentialTrace};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("polarization is not transverse to the wavevector (k·p = {0:.3e})")]
    NotTransverse(f64),
    #[error("dispersion violated: |k|² = {k2}, ω²ε₀μ₀ = {target}")]
    Dispersion { k2: f64, target: f64 },
    #[error("evaluation point at distance {dist:.3e} from the singularity (minimum {min:.3e})")]
    Singularity { dist: f64, min: f64 },
    #[error("convergence study needs at least {need} grids, got {got}")]
    TooFewGrids { need: usize, got: usize },
    #[error("grids are not nested refinements")]
    NotNested,
    #[error("medium constants must be positive")]
    BadMedium,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kind<T: Real> {
    PlaneWave {
        k: [T; 3],
        p: [Complex<T>; 3],
    },
    /// `outgoing` selects `e^{+ikr}`; the conjugate solution uses `e^{−ikr}`.
    MagneticDipole {
        x0: [T; 3],
        m: [Complex<T>; 3],
        outgoing: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticSolution<T: Real> {
    pub kind: Kind<T>,
    pub omega: T,
    pub eps0: T,
    pub mu0: T,
}

/// JSON description of an analytic solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolutionSpec {
    /// Plane wave travelling along `direction`; `|k|` follows from the dispersion relation.
    PlaneWave {
        direction: [f64; 3],
        polarization: [[f64; 2]; 3],
    },
    MagneticDipole {
        x0: [f64; 3],
        moment: [[f64; 2]; 3],
    },
}

fn cvec<T: Real>(v: &[[f64; 2]; 3]) -> [Complex<T>; 3] {
    [0, 1, 2].map(|i| c(T::lit(v[i][0]), T::lit(v[i][1])))
}

impl SolutionSpec {
    pub fn build<T: Real>(
        &self,
        omega: T,
        eps0: T,
        mu0: T,
    ) -> Result<AnalyticSolution<T>, OracleError> {
        match self {
            SolutionSpec::PlaneWave {
                direction,
                polarization,
            } => {
                let n = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
                let kmag = omega * (eps0 * mu0).sqrt();
                let k = [0, 1, 2].map(|i| kmag * T::lit(direction[i] / n));
                plane_wave(k, cvec(polarization), omega, eps0, mu0)
            }
            SolutionSpec::MagneticDipole { x0, moment } => dipole_field(
                [0, 1, 2].map(|i| T::lit(x0[i])),
                cvec(moment),
                omega,
                eps0,
                mu0,
            ),
        }
    }
}

fn check_medium<T: Real>(omega: T, eps0: T, mu0: T) -> Result<(), OracleError> {
    if omega > T::zero() && eps0 > T::zero() && mu0 > T::zero() {
        Ok(())
    } else {
        Err(OracleError::BadMedium)
    }
}

/// `E = p e^{ik·x}`, `H = (k×p)/(ωμ₀) e^{ik·x}`.
pub fn plane_wave<T: Real>(
    k: [T; 3],
    p: [Complex<T>; 3],
    omega: T,
    eps0: T,
    mu0: T,
) -> Result<AnalyticSolution<T>, OracleError> {
    check_medium(omega, eps0, mu0)?;
    let kp = (0..3).fold(czero::<T>(), |s, i| s + p[i] * k[i]);
    let kn = k.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
    let pn = p.iter().fold(T::zero(), |s, v| s + cabs2(*v)).sqrt();
    if cabs2(kp).sqrt() > T::lit(1e-12) * (kn * pn).max(T::one()) {
        return Err(OracleError::NotTransverse(cabs2(kp).sqrt().as_f64()));
    }
    let k2 = kn * kn;
    let target = omega * omega * eps0 * mu0;
    if (k2 - target).abs() > T::lit(1e-12) * target.max(T::one()) {
        return Err(OracleError::Dispersion {
            k2: k2.as_f64(),
            target: target.as_f64(),
        });
    }
    Ok(AnalyticSolution {
        kind: Kind::PlaneWave { k, p },
        omega,
        eps0,
        mu0,
    })
}

/// Magnetic dipole of moment `m` at `x0`: `E = ∇φ × m`, `φ = e^{ikr}/(4πr)`.
pub fn dipole_field<T: Real>(
    x0: [T; 3],
    m: [Complex<T>; 3],
    omega: T,
    eps0: T,
    mu0: T,
) -> Result<AnalyticSolution<T>, OracleError> {
    check_medium(omega, eps0, mu0)?;
    Ok(AnalyticSolution {
        kind: Kind::MagneticDipole {
            x0,
            m,
            outgoing: true,
        },
        omega,
        eps0,
        mu0,
    })
}

fn cross<T: Real>(a: [Complex<T>; 3], b: [Complex<T>; 3]) -> [Complex<T>; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl<T: Real> AnalyticSolution<T> {
    pub fn wavenumber(&self) -> T {
        self.omega * (self.eps0 * self.mu0).sqrt()
    }

    /// Distance of `x` from the singular point (infinite for plane waves).
    pub fn singular_distance(&self, x: [T; 3]) -> f64 {
        match &self.kind {
            Kind::PlaneWave { .. } => f64::INFINITY,
            Kind::MagneticDipole { x0, .. } => AXES
                .iter()
                .fold(T::zero(), |s, &a| s + (x[a] - x0[a]) * (x[a] - x0[a]))
                .sqrt()
                .as_f64(),
        }
    }

    /// `(E(x), H(x))`.
    pub fn eval(&self, x: [T; 3]) -> ([Complex<T>; 3], [Complex<T>; 3]) {
        match &self.kind {
            Kind::PlaneWave { k, p } => {
                let ph = cis(k[0] * x[0] + k[1] * x[1] + k[2] * x[2]);
                let kc = k.map(|v| c(v, T::zero()));
                let kxp = cross(kc, *p);
                let s = T::one() / (self.omega * self.mu0);
                (p.map(|v| v * ph), kxp.map(|v| v * ph * s))
            }
            Kind::MagneticDipole { x0, m, outgoing } => {
                let d = [x[0] - x0[0], x[1] - x0[1], x[2] - x0[2]];
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let kk = if *outgoing {
                    self.wavenumber()
                } else {
                    -self.wavenumber()
                };
                let four_pi = T::lit(4.0) * T::pi();
                let eikr = cis(kk * r);
                let ikr = c(T::zero(), kk * r);
                let one = c(T::one(), T::zero());
                // g = φ'/r, g' = dg/dr
                let g = eikr * (ikr - one) / (four_pi * r * r * r);
                let gp = eikr * c(T::lit(3.0) - kk * kk * r * r, -T::lit(3.0) * kk * r)
                    / (four_pi * r * r * r * r);
                let phi = eikr / (four_pi * r);
                let dc = d.map(|v| c(v, T::zero()));
                let e = cross(dc, *m).map(|v| v * g);
                let mx = (0..3).fold(czero::<T>(), |s, i| s + m[i] * d[i]);
                let inv = one / (c(T::zero(), self.omega * self.mu0));
                let h = [0, 1, 2]
                    .map(|i| (m[i] * g + gp * mx * (d[i] / r) + m[i] * phi * (kk * kk)) * inv);
                (e, h)
            }
        }
    }

    fn check_point(&self, x: [T; 3], min: f64) -> Result<(), OracleError> {
        let dist = self.singular_distance(x);
        if dist < min {
            Err(OracleError::Singularity { dist, min })
        } else {
            Ok(())
        }
    }

    /// Solution whose `E` is the complex conjugate of this one's; its `H` is `−conj(H)`.
    pub fn conj(&self) -> AnalyticSolution<T> {
        match &self.kind {
            Kind::PlaneWave { k, p } => AnalyticSolution {
                kind: Kind::PlaneWave {
                    k: k.map(|v| -v),
                    p: p.map(|v| v.conj()),
                },
                ..self.clone()
            },
            Kind::MagneticDipole { x0, m, outgoing } => AnalyticSolution {
                kind: Kind::MagneticDipole {
                    x0: *x0,
                    m: m.map(|v| v.conj()),
                    outgoing: !outgoing,
                },
                ..self.clone()
            },
        }
    }
}

/// Tangential `E` at edge midpoints and normal `H` at face centers.
pub fn sample_on_grid<T: Real>(
    sol: &AnalyticSolution<T>,
    grid: &Grid<T>,
) -> Result<FieldPair<T>, OracleError> {
    if let Kind::MagneticDipole { x0, .. } = &sol.kind {
        let min = 2.0 * grid.h().as_f64();
        let u = grid.upper();
        let o = grid.origin();
        let mut d2 = 0.0;
        for a in AXES {
            let t = if x0[a] < o[a] {
                (o[a] - x0[a]).as_f64()
            } else if x0[a] > u[a] {
                (x0[a] - u[a]).as_f64()
            } else {
                0.0
            };
            d2 += t * t;
        }
        if d2.sqrt() < min {
            return Err(OracleError::Singularity {
                dist: d2.sqrt(),
                min,
            });
        }
    }
    let e = (0..grid.edge_count())
        .map(|k| {
            let ed = grid.edge(k);
            sol.eval(grid.edge_midpoint(ed)).0[ed.dir]
        })
        .collect();
    let h = (0..grid.face_count())
        .map(|k| {
            let f = grid.face(k);
            sol.eval(grid.face_center(f)).1[f.dir]
        })
        .collect();
    Ok(FieldPair { e, h })
}

/// Samples only on the edges and faces of the region's closure; other entries are zero.
pub fn sample_on_region<T: Real>(
    sol: &AnalyticSolution<T>,
    region: &Region<T>,
) -> Result<FieldPair<T>, OracleError> {
    let grid = region.grid();
    let min = 2.0 * grid.h().as_f64();
    let mut out = FieldPair::zeros(grid);
    for k in region.edges() {
        let ed = grid.edge(k);
        let x = grid.edge_midpoint(ed);
        sol.check_point(x, min)?;
        out.e[k] = sol.eval(x).0[ed.dir];
    }
    for k in region.faces() {
        let f = grid.face(k);
        let x = grid.face_center(f);
        sol.check_point(x, min)?;
        out.h[k] = sol.eval(x).1[f.dir];
    }
    Ok(out)
}

/// Tangential trace of the sampled field on the whole boundary.
pub fn boundary_trace<T: Real>(
    sol: &AnalyticSolution<T>,
    grid: &Grid<T>,
) -> Result<TangentialTrace<T>, OracleError> {
    let patch = full_boundary(grid);
    let min = 2.0 * grid.h().as_f64();
    let values = patch
        .dofs()
        .iter()
        .map(|&k| {
            let ed = grid.edge(k);
            let x = grid.edge_midpoint(ed);
            sol.check_point(x, min).map(|_| sol.eval(x).0[ed.dir])
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TangentialTrace { patch, values })
}

/// Discrete `L²(Ω)` norm of a field pair with identity masses.
pub fn pair_l2<T: Real>(grid: &Grid<T>, f: &FieldPair<T>) -> f64 {
    let ew = grid.edge_weights();
    let fw = grid.face_weights();
    let s =
        f.e.iter()
            .zip(&ew)
            .fold(T::zero(), |s, (z, w)| s + *w * cabs2(*z))
            + f.h
                .iter()
                .zip(&fw)
                .fold(T::zero(), |s, (z, w)| s + *w * cabs2(*z));
    s.as_f64().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: [usize; 3],
    pub h: f64,
    pub error: f64,
    /// Observed order against the previous (coarser) grid.
    pub order: Option<f64>,
}

/// Solves each grid with the solution's own boundary trace and reports `L²` errors and
/// successive observed orders.
pub fn convergence_study<T: Real>(
    sol: &AnalyticSolution<T>,
    grids: &[Grid<T>],
    opts: &SolverOptions,
) -> Result<Vec<ConvergenceRow>, OracleError> {
    if grids.len() < 3 {
        return Err(OracleError::TooFewGrids {
            need: 3,
            got: grids.len(),
        });
    }
    for w in grids.windows(2) {
        if !(w[1].h() < w[0].h()) {
            return Err(OracleError::NotNested);
        }
        let (lo0, hi0, lo1, hi1) = (w[0].origin(), w[0].upper(), w[1].origin(), w[1].upper());
        let tol = 1e-9 * w[0].h().as_f64();
        if AXES.iter().any(|&a| {
            (lo0[a] - lo1[a]).as_f64().abs() > tol || (hi0[a] - hi1[a]).as_f64().abs() > tol
        }) {
            return Err(OracleError::NotNested);
        }
    }
    let spec = MaterialSpec::Constant {
        eps: TensorSpec::Scalar(sol.eps0.as_f64()),
        mu: TensorSpec::Scalar(sol.mu0.as_f64()),
    };
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for g in grids {
        let mat = make_material(g, &spec)?;
        let sys = SystemMatrix::assemble_with(g, &mat, sol.omega, opts.clone())?;
        let trace = boundary_trace(sol, g)?;
        let num = sys.solve_bvp(&trace)?;
        let exact = sample_on_grid(sol, g)?;
        let error = pair_l2(g, &num.sub(&exact));
        let h = g.h().as_f64();
        let order = rows.last().map(|p| (p.error / error).ln() / (p.h / h).ln());
        log::info!("grid {:?}: h = {h:.4e}, error = {error:.4e}", g.n());
        rows.push(ConvergenceRow {
            n: g.n(),
            h,
            error,
            order,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::MaterialField;
    use crate::solver::residual;

    fn pw() -> AnalyticSolution<f64> {
        let w = 2.0;
        let dir = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        let k = dir.map(|d| d * w);
        let p = [c(2.0, 0.5), c(-1.0, 0.0), c(0.0, -0.25)];
        // project to make it transverse
        let kp = p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2];
        let p = [0, 1, 2].map(|i| p[i] - kp * dir[i]);
        plane_wave(k, p, w, 1.0, 1.0).unwrap()
    }

    #[test]
    fn plane_wave_h_example() {
        let s = plane_wave(
            [2.0, 0.0, 0.0],
            [czero(), c(1.0, 0.0), czero()],
            2.0,
            1.0,
            1.0,
        )
        .unwrap();
        let x = [0.3, -0.2, 0.7];
        let (e, h) = s.eval(x);
        let ph = cis(2.0 * 0.3);
        assert!(cabs2(e[1] - ph) < 1e-30);
        assert!(cabs2(h[2] - ph) < 1e-30 && cabs2(h[0]) == 0.0 && cabs2(h[1]) == 0.0);
    }

    #[test]
    fn plane_wave_preconditions() {
        let par = plane_wave(
            [2.0, 0.0, 0.0],
            [c(1.0, 0.0), czero(), czero()],
            2.0,
            1.0,
            1.0,
        );
        assert!(matches!(par, Err(OracleError::NotTransverse(_))));
        let disp = plane_wave(
            [3.0, 0.0, 0.0],
            [czero(), c(1.0, 0.0), czero()],
            2.0,
            1.0,
            1.0,
        );
        assert!(matches!(disp, Err(OracleError::Dispersion { .. })));
    }

    #[test]
    fn plane_wave_energy_ratio() {
        let s = pw();
        for x in [[0.1, 0.2, 0.3], [0.9, 0.5, 0.1]] {
            let (e, h) = s.eval(x);
            let ne: f64 = e.iter().map(|z| cabs2(*z)).sum::<f64>().sqrt();
            let nh: f64 = h.iter().map(|z| cabs2(*z)).sum::<f64>().sqrt();
            assert!((nh / ne - 1.0).abs() < 1e-14);
        }
    }

    /// Curl of the analytic field by central differences must match iωμH and −iωεE.
    #[test]
    fn dipole_satisfies_maxwell_pointwise() {
        let (w, eps, mu) = (3.0, 1.5, 0.8);
        let m = [c(0.3, 0.1), c(-0.5, 0.0), c(1.0, 0.2)];
        let s = dipole_field([0.1, -0.2, 0.05], m, w, eps, mu).unwrap();
        let x = [0.7, 0.4, -0.3];
        let d = 1e-5;
        let curl = |f: &dyn Fn([f64; 3]) -> [Complex<f64>; 3]| {
            let pd = |i: usize, j: usize| {
                let mut a = x;
                let mut b = x;
                a[j] += d;
                b[j] -= d;
                (f(a)[i] - f(b)[i]) / (2.0 * d)
            };
            [
                pd(2, 1) - pd(1, 2),
                pd(0, 2) - pd(2, 0),
                pd(1, 0) - pd(0, 1),
            ]
        };
        let (e, h) = s.eval(x);
        let ce = curl(&|p| s.eval(p).0);
        let ch = curl(&|p| s.eval(p).1);
        for i in 0..3 {
            let want_e = c(0.0, w * mu) * h[i];
            let want_h = c(0.0, -w * eps) * e[i];
            assert!(
                cabs2(ce[i] - want_e).sqrt() < 1e-6 * (1.0 + cabs2(want_e).sqrt()),
                "curl E {i}"
            );
            assert!(
                cabs2(ch[i] - want_h).sqrt() < 1e-6 * (1.0 + cabs2(want_h).sqrt()),
                "curl H {i}"
            );
        }
    }

    #[test]
    fn dipole_zero_moment_and_decay() {
        let z = dipole_field([0.0; 3], [czero(); 3], 1.0, 1.0, 1.0).unwrap();
        let (e, h) = z.eval([1.0, 2.0, 3.0]);
        assert!(e.iter().chain(h.iter()).all(|v| cabs2(*v) == 0.0));
        let s = dipole_field([0.0; 3], [czero(), czero(), c(1.0, 0.0)], 2.0, 1.0, 1.0).unwrap();
        let mag = |r: f64| {
            s.eval([r, 0.0, 0.0])
                .0
                .iter()
                .map(|v| cabs2(*v))
                .sum::<f64>()
                .sqrt()
        };
        assert!(mag(10.0) > mag(20.0) && mag(20.0) > mag(40.0));
    }

    #[test]
    fn sampling_rules() {
        let g = Grid::<f64>::unit_cube(6).unwrap();
        let inside =
            dipole_field([0.5; 3], [c(1.0, 0.0), czero(), czero()], 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            sample_on_grid(&inside, &g),
            Err(OracleError::Singularity { .. })
        ));
        let zero = dipole_field([2.0; 3], [czero(); 3], 1.0, 1.0, 1.0).unwrap();
        assert_eq!(sample_on_grid(&zero, &g).unwrap().max_abs(), 0.0);
        let outside = dipole_field(
            [1.5, 0.5, 0.2],
            [c(1.0, 0.5), czero(), c(0.0, 1.0)],
            2.0,
            1.0,
            1.0,
        )
        .unwrap();
        for s in [pw(), outside] {
            let a = sample_on_grid(&s, &g).unwrap();
            let b = sample_on_grid(&s.conj(), &g).unwrap();
            for (x, y) in a.e.iter().zip(&b.e) {
                assert!(cabs2(x.conj() - *y) < 1e-26);
            }
            for (x, y) in a.h.iter().zip(&b.h) {
                assert!(cabs2(x.conj() + *y) < 1e-26);
            }
        }
    }

    fn dipole_outside() -> AnalyticSolution<f64> {
        dipole_field(
            [2.0, 0.3, 0.6],
            [c(0.2, 0.0), c(0.0, 1.0), c(0.5, -0.5)],
            2.0,
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn sampled_residual_is_second_order() {
        for s in [pw(), dipole_outside()] {
            let mut prev: Option<f64> = None;
            for n in [8, 16] {
                let g = Grid::<f64>::unit_cube(n).unwrap();
                let mat = MaterialField::vacuum(&g);
                let sys = SystemMatrix::assemble(&g, &mat, 2.0).unwrap();
                let f = sample_on_grid(&s, &g).unwrap();
                let r = residual(&f, &sys, None);
                if let Some(p) = prev {
                    let order = (p / r).log2();
                    assert!(order > 1.8, "residual order {order}");
                }
                prev = Some(r);
            }
        }
    }

    #[test]
    fn dipole_h_matches_derived_h() {
        let s = dipole_outside();
        let mut errs = Vec::new();
        for n in [8, 16] {
            let g = Grid::<f64>::unit_cube(n).unwrap();
            let mat = MaterialField::vacuum(&g);
            let f = sample_on_grid(&s, &g).unwrap();
            let h = crate::solver::derive_h_from_e(&g, &mat, 2.0, &f.e);
            let fw = g.face_weights();
            let num: f64 = h
                .iter()
                .zip(&f.h)
                .zip(&fw)
                .map(|((a, b), w)| w * cabs2(*a - *b))
                .sum();
            errs.push(num.sqrt());
        }
        assert!((errs[0] / errs[1]).log2() > 1.8, "{errs:?}");
    }

    #[test]
    fn convergence_study_small() {
        let s = pw();
        let grids: Vec<Grid<f64>> = [4, 8, 16]
            .iter()
            .map(|&n| Grid::unit_cube(n).unwrap())
            .collect();
        let rows = convergence_study(&s, &grids, &SolverOptions::default()).unwrap();
        assert!(rows[0].order.is_none());
        assert!(rows[2].order.unwrap() > 1.8, "{rows:?}");
        assert_eq!(
            rows,
            convergence_study(&s, &grids, &SolverOptions::default()).unwrap()
        );
        assert!(matches!(
            convergence_study(&s, &grids[..1], &SolverOptions::default()),
            Err(OracleError::TooFewGrids { .. })
        ));
    }
}
