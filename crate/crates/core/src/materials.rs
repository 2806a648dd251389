//! Cellwise anisotropic permittivity and permeability.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::MaterialError;
use crate::geometry::{Grid, AXES};
use crate::scalar::{Fnv1a, Real};

/// JSON form of a 3×3 tensor: scalar multiple of identity, diagonal, or full.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorSpec {
    Scalar(f64),
    Diag([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl Default for TensorSpec {
    fn default() -> Self {
        TensorSpec::Scalar(1.0)
    }
}

impl TensorSpec {
    pub fn to_matrix<T: Real>(&self) -> Matrix3<T> {
        match self {
            TensorSpec::Scalar(s) => Matrix3::identity() * T::lit(*s),
            TensorSpec::Diag(d) => Matrix3::from_diagonal(&nalgebra::Vector3::new(
                T::lit(d[0]),
                T::lit(d[1]),
                T::lit(d[2]),
            )),
            TensorSpec::Full(m) => Matrix3::from_fn(|i, j| T::lit(m[i][j])),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialSpec {
    Constant {
        #[serde(default)]
        eps: TensorSpec,
        #[serde(default)]
        mu: TensorSpec,
    },
    /// Layers along `axis` separated at `breakpoints`, blended by linear ramps of `width`.
    Layered {
        axis: usize,
        breakpoints: Vec<f64>,
        eps: Vec<TensorSpec>,
        mu: Vec<TensorSpec>,
        width: f64,
    },
    /// Identity plus `amplitude` times a random symmetric field of `modes` cosine modes per entry.
    Smooth {
        seed: u64,
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_wavenumber")]
        max_wavenumber: f64,
    },
}

fn default_modes() -> usize {
    3
}

fn default_amplitude() -> f64 {
    0.2
}

fn default_wavenumber() -> f64 {
    2.0 * std::f64::consts::PI
}

impl MaterialSpec {
    pub fn vacuum() -> Self {
        MaterialSpec::Constant {
            eps: TensorSpec::Scalar(1.0),
            mu: TensorSpec::Scalar(1.0),
        }
    }
}

/// Piecewise-constant tensors per cell with ellipticity constant `c` and Lipschitz bound `lipschitz`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField<T: Real> {
    n: [usize; 3],
    h: T,
    eps: Vec<Matrix3<T>>,
    mu: Vec<Matrix3<T>>,
    nu: Vec<Matrix3<T>>,
    c: T,
    lipschitz: T,
}

/// Outcome of an ellipticity check.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityReport {
    pub pass: bool,
    /// Cell with the eigenvalue farthest outside `[c, 1/c]` (or closest to the edge when passing).
    pub worst_cell: usize,
    pub worst_is_mu: bool,
    pub worst_eigenvalue: f64,
}

fn symmetric_eigs<T: Real>(m: &Matrix3<T>) -> (T, T) {
    let e = SymmetricEigen::new(*m).eigenvalues;
    let lo = e[0].min(e[1]).min(e[2]);
    let hi = e[0].max(e[1]).max(e[2]);
    (lo, hi)
}

fn check_tensor<T: Real>(m: &Matrix3<T>, cell: usize) -> Result<(), MaterialError> {
    let scale = m
        .iter()
        .fold(T::zero(), |s, v| s.max(v.abs()))
        .max(T::one());
    let tol = T::lit(1e-12) * scale;
    for i in 0..3 {
        for j in 0..3 {
            if !m[(i, j)].is_finite_value() || (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(MaterialError::NotSymmetric { cell });
            }
        }
    }
    let (lo, _) = symmetric_eigs(m);
    if lo <= T::zero() {
        return Err(MaterialError::NotPositive {
            cell,
            eig: lo.as_f64(),
        });
    }
    Ok(())
}

impl<T: Real> MaterialField<T> {
    /// Validates the tensors and computes `c` and the Lipschitz bound.
    pub fn new(
        grid: &Grid<T>,
        eps: Vec<Matrix3<T>>,
        mu: Vec<Matrix3<T>>,
    ) -> Result<Self, MaterialError> {
        let cells = grid.cell_count();
        for v in [&eps, &mu] {
            if v.len() != cells {
                return Err(MaterialError::SizeMismatch {
                    got: v.len(),
                    expected: cells,
                });
            }
        }
        let mut c: Option<T> = None;
        for (k, m) in eps.iter().chain(mu.iter()).enumerate() {
            check_tensor(m, k % cells)?;
            let (lo, hi) = symmetric_eigs(m);
            let ck = lo.min(T::one() / hi);
            c = Some(c.map_or(ck, |v: T| v.min(ck)));
        }
        let nu = mu
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.try_inverse()
                    .ok_or(MaterialError::NotPositive { cell: k, eig: 0.0 })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut field = MaterialField {
            n: grid.n(),
            h: grid.h(),
            eps,
            mu,
            nu,
            c: c.expect("grid has cells"),
            lipschitz: T::zero(),
        };
        field.lipschitz = field.compute_lipschitz();
        Ok(field)
    }

    /// Samples tensor-valued functions at cell centers.
    pub fn from_fn<F, G>(grid: &Grid<T>, eps: F, mu: G) -> Result<Self, MaterialError>
    where
        F: Fn([T; 3]) -> Matrix3<T>,
        G: Fn([T; 3]) -> Matrix3<T>,
    {
        let centers: Vec<[T; 3]> = (0..grid.cell_count())
            .map(|k| grid.cell_center(grid.cell(k)))
            .collect();
        let e = centers.iter().map(|x| eps(*x)).collect();
        let m = centers.iter().map(|x| mu(*x)).collect();
        Self::new(grid, e, m)
    }

    pub fn vacuum(grid: &Grid<T>) -> Self {
        Self::from_fn(grid, |_| Matrix3::identity(), |_| Matrix3::identity())
            .expect("identity is valid")
    }

    pub fn eps(&self, cell: usize) -> &Matrix3<T> {
        &self.eps[cell]
    }

    pub fn mu(&self, cell: usize) -> &Matrix3<T> {
        &self.mu[cell]
    }

    /// `μ⁻¹` in a cell.
    pub fn nu(&self, cell: usize) -> &Matrix3<T> {
        &self.nu[cell]
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn lipschitz(&self) -> T {
        self.lipschitz
    }

    pub fn cell_count(&self) -> usize {
        self.eps.len()
    }

    /// Whether every cell carries the same ε and μ.
    pub fn is_homogeneous(&self) -> bool {
        self.eps.iter().all(|m| *m == self.eps[0]) && self.mu.iter().all(|m| *m == self.mu[0])
    }

    fn compute_lipschitz(&self) -> T {
        let n = self.n;
        let idx = |c: [usize; 3]| c[0] + n[0] * (c[1] + n[1] * c[2]);
        let mut m = T::zero();
        for field in [&self.eps, &self.mu] {
            for k in 0..field.len() {
                let c = [k % n[0], (k / n[0]) % n[1], k / (n[0] * n[1])];
                let t = &field[k];
                m = t.iter().fold(m, |acc, v| acc.max(v.abs()));
                for a in AXES {
                    if c[a] + 1 < n[a] {
                        let mut d = c;
                        d[a] += 1;
                        let u = &field[idx(d)];
                        for (x, y) in t.iter().zip(u.iter()) {
                            m = m.max((*y - *x).abs() / self.h);
                        }
                    }
                }
            }
        }
        m
    }

    pub fn fingerprint(&self, hasher: &mut Fnv1a) {
        for field in [&self.eps, &self.mu] {
            for t in field.iter() {
                for v in t.iter() {
                    hasher.write_f64(v.as_f64());
                }
            }
        }
    }
}

/// Builds a material field from its spec.
pub fn make_material<T: Real>(
    grid: &Grid<T>,
    spec: &MaterialSpec,
) -> Result<MaterialField<T>, MaterialError> {
    match spec {
        MaterialSpec::Constant { eps, mu } => {
            let e = eps.to_matrix::<T>();
            let m = mu.to_matrix::<T>();
            MaterialField::from_fn(grid, |_| e, |_| m)
        }
        MaterialSpec::Layered {
            axis,
            breakpoints,
            eps,
            mu,
            width,
        } => {
            if *axis > 2 {
                return Err(MaterialError::Spec(format!("axis {axis} out of range")));
            }
            if eps.len() != breakpoints.len() + 1 || mu.len() != breakpoints.len() + 1 {
                return Err(MaterialError::Spec(
                    "need one tensor per layer (breakpoints + 1)".into(),
                ));
            }
            if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                return Err(MaterialError::Spec("breakpoints must increase".into()));
            }
            let h = grid.h().as_f64();
            let jumps = eps.windows(2).chain(mu.windows(2)).any(|w| w[0] != w[1]);
            if jumps && *width < h * (1.0 - 1e-12) {
                return Err(MaterialError::JumpTooSharp { width: *width, h });
            }
            let et: Vec<Matrix3<T>> = eps.iter().map(|t| t.to_matrix()).collect();
            let mt: Vec<Matrix3<T>> = mu.iter().map(|t| t.to_matrix()).collect();
            let blend = |layers: &[Matrix3<T>], x: [T; 3]| {
                let mut out = layers[0];
                for (i, b) in breakpoints.iter().enumerate() {
                    let s = if *width > 0.0 {
                        ((x[*axis].as_f64() - b) / width + 0.5).clamp(0.0, 1.0)
                    } else if x[*axis].as_f64() >= *b {
                        1.0
                    } else {
                        0.0
                    };
                    out += (layers[i + 1] - layers[i]) * T::lit(s);
                }
                out
            };
            MaterialField::from_fn(grid, |x| blend(&et, x), |x| blend(&mt, x))
        }
        MaterialSpec::Smooth {
            seed,
            modes,
            amplitude,
            max_wavenumber,
        } => {
            if !(0.0..1.0 / 3.0).contains(amplitude) {
                return Err(MaterialError::Spec(format!(
                    "amplitude {amplitude} must lie in [0, 1/3)"
                )));
            }
            if *modes == 0 || !(*max_wavenumber > 0.0) {
                return Err(MaterialError::Spec(
                    "smooth field needs modes >= 1 and positive max_wavenumber".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let e = RandomTensorField::draw(&mut rng, *modes, *amplitude, *max_wavenumber);
            let m = RandomTensorField::draw(&mut rng, *modes, *amplitude, *max_wavenumber);
            MaterialField::from_fn(grid, |x| e.eval(x), |x| m.eval(x))
        }
    }
}

/// Identity plus a symmetric matrix whose six independent entries are cosine series.
struct RandomTensorField {
    amplitude: f64,
    // per entry: (wavevector, phase, weight)
    entries: [Vec<([f64; 3], f64, f64)>; 6],
}

impl RandomTensorField {
    fn draw(rng: &mut ChaCha8Rng, modes: usize, amplitude: f64, kmax: f64) -> Self {
        let mut entries: [Vec<([f64; 3], f64, f64)>; 6] = Default::default();
        for entry in entries.iter_mut() {
            let mut raw = Vec::with_capacity(modes);
            for _ in 0..modes {
                let mut k = [0.0f64; 3];
                for v in &mut k {
                    *v = rng.random_range(-1.0..1.0);
                }
                let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt().max(1e-12);
                let scale = kmax * rng.random_range(0.0..1.0) / norm;
                for v in &mut k {
                    *v *= scale;
                }
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let w: f64 = rng.random_range(-1.0..1.0);
                raw.push((k, phase, w));
            }
            let total: f64 = raw.iter().map(|r| r.2.abs()).sum::<f64>().max(1e-300);
            for r in &mut raw {
                r.2 /= total;
            }
            *entry = raw;
        }
        RandomTensorField { amplitude, entries }
    }

    fn eval<T: Real>(&self, x: [T; 3]) -> Matrix3<T> {
        let xf = [x[0].as_f64(), x[1].as_f64(), x[2].as_f64()];
        let val = |modes: &Vec<([f64; 3], f64, f64)>| {
            modes
                .iter()
                .map(|(k, ph, w)| w * (k[0] * xf[0] + k[1] * xf[1] + k[2] * xf[2] + ph).cos())
                .sum::<f64>()
        };
        let v: Vec<f64> = self.entries.iter().map(val).collect();
        let a = self.amplitude;
        Matrix3::new(
            1.0 + a * v[0],
            a * v[3],
            a * v[4],
            a * v[3],
            1.0 + a * v[1],
            a * v[5],
            a * v[4],
            a * v[5],
            1.0 + a * v[2],
        )
        .map(T::lit)
    }
}

/// Checks that every eigenvalue of ε and μ lies in `[c, 1/c]`.
pub fn ellipticity_check<T: Real>(mat: &MaterialField<T>, c: T) -> EllipticityReport {
    let lo_bound = c.as_f64();
    let hi_bound = 1.0 / lo_bound;
    let mut worst = EllipticityReport {
        pass: true,
        worst_cell: 0,
        worst_is_mu: false,
        worst_eigenvalue: f64::NAN,
    };
    let mut worst_slack = f64::INFINITY;
    for (is_mu, field) in [(false, &mat.eps), (true, &mat.mu)] {
        for (k, m) in field.iter().enumerate() {
            let (lo, hi) = symmetric_eigs(m);
            let (lo, hi) = (lo.as_f64(), hi.as_f64());
            let tol = 1e-12 * hi_bound.max(1.0);
            for (eig, slack) in [(lo, lo - lo_bound), (hi, hi_bound - hi)] {
                if slack < worst_slack {
                    worst_slack = slack;
                    worst.worst_cell = k;
                    worst.worst_is_mu = is_mu;
                    worst.worst_eigenvalue = eig;
                }
                if slack < -tol {
                    worst.pass = false;
                }
            }
        }
    }
    worst
}

/// Discrete `W^{1,∞}` bound stored on the field.
pub fn lipschitz_bound<T: Real>(mat: &MaterialField<T>) -> T {
    mat.lipschitz()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize) -> Grid<f64> {
        Grid::unit_cube(n).unwrap()
    }

    #[test]
    fn constant_identity() {
        let m = make_material(&g(4), &MaterialSpec::vacuum()).unwrap();
        assert_eq!(m.c(), 1.0);
        assert_eq!(lipschitz_bound(&m), 1.0);
        assert!(m.is_homogeneous());
    }

    #[test]
    fn ellipticity_examples() {
        let grid = g(4);
        let id = MaterialField::vacuum(&grid);
        assert!(ellipticity_check(&id, 0.5).pass);
        let d = |v: [f64; 3]| Matrix3::from_diagonal(&nalgebra::Vector3::new(v[0], v[1], v[2]));
        let bad = MaterialField::from_fn(
            &grid,
            |x| {
                if x[0] > 0.5 && x[1] > 0.5 && x[2] > 0.5 {
                    d([3.0, 1.0, 1.0])
                } else {
                    Matrix3::identity()
                }
            },
            |_| Matrix3::identity(),
        )
        .unwrap();
        let r = ellipticity_check(&bad, 0.5);
        assert!(!r.pass);
        assert!((r.worst_eigenvalue - 3.0).abs() < 1e-12);
        let c = grid.cell(r.worst_cell);
        assert!(c.iter().all(|&i| i >= 2));
        let ok =
            MaterialField::from_fn(&grid, |_| d([0.5, 1.0, 2.0]), |_| Matrix3::identity()).unwrap();
        assert!(ellipticity_check(&ok, 0.5).pass);
        assert!((ok.c() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_tensors() {
        let grid = g(4);
        let asym = MaterialField::from_fn(
            &grid,
            |_| Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0),
            |_| Matrix3::identity(),
        );
        assert!(matches!(asym, Err(MaterialError::NotSymmetric { .. })));
        let neg = MaterialField::from_fn(
            &grid,
            |_| -Matrix3::<f64>::identity(),
            |_| Matrix3::identity(),
        );
        assert!(matches!(neg, Err(MaterialError::NotPositive { .. })));
    }

    #[test]
    fn layered_jump_needs_width() {
        let grid = g(8);
        let spec = |width| MaterialSpec::Layered {
            axis: 0,
            breakpoints: vec![0.5],
            eps: vec![TensorSpec::Scalar(1.0), TensorSpec::Scalar(4.0)],
            mu: vec![TensorSpec::Scalar(1.0), TensorSpec::Scalar(1.0)],
            width,
        };
        assert!(matches!(
            make_material(&grid, &spec(0.0)),
            Err(MaterialError::JumpTooSharp { .. })
        ));
        let m = make_material(&grid, &spec(0.125)).unwrap();
        assert!((m.eps(grid.cell_index([0, 0, 0]))[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((m.eps(grid.cell_index([7, 0, 0]))[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((m.c() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn smooth_is_deterministic() {
        let grid = g(6);
        let spec = MaterialSpec::Smooth {
            seed: 7,
            modes: 3,
            amplitude: 0.2,
            max_wavenumber: 6.0,
        };
        let a = make_material(&grid, &spec).unwrap();
        let b = make_material(&grid, &spec).unwrap();
        assert_eq!(a, b);
        assert!(ellipticity_check(&a, a.c()).pass);
    }

    #[test]
    fn linear_ramp_lipschitz() {
        // Cell-center sampling of (1 + x/2) I: sup entry is 1.5 - h/4, difference quotient 0.5.
        for n in [4, 8, 16] {
            let grid = g(n);
            let m = MaterialField::from_fn(
                &grid,
                |x| Matrix3::identity() * (1.0 + 0.5 * x[0]),
                |_| Matrix3::identity(),
            )
            .unwrap();
            let h = 1.0 / n as f64;
            assert!((m.lipschitz() - (1.5 - h / 4.0)).abs() < 1e-12);
        }
    }
}
