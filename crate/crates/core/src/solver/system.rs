use nalgebra::{DMatrix, Matrix3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::incidence::{curl, curl_transpose};
use super::krylov::minres;
use super::multifrontal::{CellBox, Multifrontal};
use super::sparse::Csr;
use crate::error::SolverError;
use crate::geometry::{full_boundary, BoundaryPatch, Grid, Region, AXES};
use crate::materials::{ellipticity_check, MaterialField};
use crate::scalar::{cabs2, czero, Complex, Real};

/// Columns per block in multi right-hand-side solves. Fixed so results do not
/// depend on the number of worker threads.
const RHS_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative residual tolerance.
    pub tol: f64,
    /// Krylov iteration cap.
    pub max_iter: usize,
    /// Largest system solved by the direct factorization.
    pub direct_limit: usize,
    /// Relative resonance threshold: `margin ≥ threshold·‖K‖`.
    pub resonance_threshold: f64,
    pub check_resonance: bool,
    pub resonance_iters: usize,
    /// Front size below which nested dissection stops.
    pub leaf_size: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 10_000,
            direct_limit: 200_000,
            resonance_threshold: 1e-6,
            check_resonance: true,
            resonance_iters: 30,
            leaf_size: 64,
        }
    }
}

/// Tangential edge values on a boundary patch.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentialTrace<T: Real> {
    pub patch: BoundaryPatch<T>,
    pub values: Vec<Complex<T>>,
}

impl<T: Real> TangentialTrace<T> {
    pub fn new(patch: BoundaryPatch<T>, values: Vec<Complex<T>>) -> Result<Self, SolverError> {
        if values.len() != patch.len() {
            return Err(SolverError::Dimension {
                got: values.len(),
                expected: patch.len(),
            });
        }
        Ok(TangentialTrace { patch, values })
    }

    pub fn zeros(patch: BoundaryPatch<T>) -> Self {
        let n = patch.len();
        TangentialTrace {
            patch,
            values: vec![czero(); n],
        }
    }

    /// `k`-th nodal basis vector.
    pub fn basis(patch: BoundaryPatch<T>, k: usize) -> Self {
        let mut t = Self::zeros(patch);
        t.values[k] = Complex::new(T::one(), T::zero());
        t
    }
}

/// Volume sources `F` (edges) and `F̃` (faces) of the first-order system
/// `μ⁻¹∇×E − iωH = F̃`, `∇×H + iωεE = F/(iω)`, i.e. `∇×μ⁻¹∇×E − ω²εE = F + ∇×F̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceTerm<T: Real> {
    pub f: Vec<Complex<T>>,
    pub ftilde: Vec<Complex<T>>,
    pub support: Option<Region<T>>,
}

impl<T: Real> SourceTerm<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        SourceTerm {
            f: vec![czero(); grid.edge_count()],
            ftilde: vec![czero(); grid.face_count()],
            support: None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.f
            .iter()
            .chain(self.ftilde.iter())
            .all(|z| z.re == T::zero() && z.im == T::zero())
    }

    fn validate(&self, grid: &Grid<T>) -> Result<(), SolverError> {
        if self.f.len() != grid.edge_count() {
            return Err(SolverError::Dimension {
                got: self.f.len(),
                expected: grid.edge_count(),
            });
        }
        if self.ftilde.len() != grid.face_count() {
            return Err(SolverError::Dimension {
                got: self.ftilde.len(),
                expected: grid.face_count(),
            });
        }
        if self
            .f
            .iter()
            .chain(self.ftilde.iter())
            .any(|z| !z.re.is_finite_value() || !z.im.is_finite_value())
        {
            return Err(SolverError::NonFinite);
        }
        if let Some(r) = &self.support {
            let edges = r.edges();
            let faces = r.faces();
            let mut ein = vec![false; grid.edge_count()];
            let mut fin = vec![false; grid.face_count()];
            edges.iter().for_each(|&e| ein[e] = true);
            faces.iter().for_each(|&f| fin[f] = true);
            let zero = |z: &Complex<T>| z.re == T::zero() && z.im == T::zero();
            if self.f.iter().enumerate().any(|(k, z)| !ein[k] && !zero(z))
                || self
                    .ftilde
                    .iter()
                    .enumerate()
                    .any(|(k, z)| !fin[k] && !zero(z))
            {
                return Err(SolverError::Dimension {
                    got: 0,
                    expected: 0,
                });
            }
        }
        Ok(())
    }
}

/// `E` on every edge, `H` on every face.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair<T: Real> {
    pub e: Vec<Complex<T>>,
    pub h: Vec<Complex<T>>,
}

impl<T: Real> FieldPair<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        FieldPair {
            e: vec![czero(); grid.edge_count()],
            h: vec![czero(); grid.face_count()],
        }
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        FieldPair {
            e: self.e.iter().map(|z| *z * s).collect(),
            h: self.h.iter().map(|z| *z * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        FieldPair {
            e: self.e.iter().zip(&other.e).map(|(a, b)| *a - *b).collect(),
            h: self.h.iter().zip(&other.h).map(|(a, b)| *a - *b).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        FieldPair {
            e: self.e.iter().zip(&other.e).map(|(a, b)| *a + *b).collect(),
            h: self.h.iter().zip(&other.h).map(|(a, b)| *a + *b).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        FieldPair {
            e: self.e.iter().map(|z| z.conj()).collect(),
            h: self.h.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Restriction to the given edges followed by the given faces.
    pub fn restrict(&self, edges: &[usize], faces: &[usize]) -> Vec<Complex<T>> {
        edges
            .iter()
            .map(|&k| self.e[k])
            .chain(faces.iter().map(|&k| self.h[k]))
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.e
            .iter()
            .chain(self.h.iter())
            .fold(T::zero(), |m, z| m.max(cabs2(*z).sqrt()))
    }
}

enum Backend<T: Real> {
    Direct(Multifrontal<T>),
    Iterative { pdiag: Vec<T> },
}

/// Discrete `∇×μ⁻¹∇× − ω²ε` on interior edges, with its factorization.
pub struct SystemMatrix<T: Real> {
    grid: Grid<T>,
    mat: MaterialField<T>,
    omega: T,
    opts: SolverOptions,
    k_full: Csr<T>,
    k_ii: Csr<T>,
    k_ib: Csr<T>,
    interior: Vec<usize>,
    int_pos: Vec<Option<usize>>,
    boundary: Vec<usize>,
    bnd_pos: Vec<Option<usize>>,
    edge_w: Vec<T>,
    face_w: Vec<T>,
    bnd_area: Vec<T>,
    backend: Backend<T>,
    margin: f64,
    norm_est: f64,
}

/// Curl-curl and mass parts of the full (all-edge) matrix.
pub struct Parts<T: Real> {
    pub curl_curl: Csr<T>,
    pub mass: Csr<T>,
}

fn corner_iter() -> impl Iterator<Item = [usize; 3]> {
    (0..8).map(|s| [s & 1, (s >> 1) & 1, (s >> 2) & 1])
}

/// Cellwise corner-quadrature assembly of `Dᵀ M_ν D / h²` and `M_ε` on all edges.
pub fn assemble_parts<T: Real>(grid: &Grid<T>, mat: &MaterialField<T>) -> Parts<T> {
    let h = grid.h();
    let w = grid.cell_volume() / T::lit(8.0);
    let ih2 = T::one() / (h * h);
    let cells = grid.cell_count();
    let chunk = 512;
    let per_chunk: Vec<(Vec<(usize, usize, T)>, Vec<(usize, usize, T)>)> = (0..cells
        .div_ceil(chunk))
        .into_par_iter()
        .map(|ch| {
            let mut cc = Vec::new();
            let mut mm = Vec::new();
            for k in ch * chunk..((ch + 1) * chunk).min(cells) {
                let c = grid.cell(k);
                let le = grid.cell_edges(c);
                let lf = grid.cell_faces(c);
                let lpos_e = |e: usize| le.iter().position(|&x| x == e).expect("edge of cell");
                let lpos_f = |f: usize| lf.iter().position(|&x| x == f).expect("face of cell");
                let eps = mat.eps(k);
                let nu = mat.nu(k);
                let mut me = Matrix12::<T>::zeros();
                let mut mf = [[T::zero(); 6]; 6];
                for s in corner_iter() {
                    let ce: [usize; 3] = [0, 1, 2].map(|d| lpos_e(grid.cell_corner_edge(c, s, d)));
                    let cf: [usize; 3] = [0, 1, 2].map(|d| lpos_f(grid.cell_corner_face(c, s, d)));
                    for d1 in AXES {
                        for d2 in AXES {
                            me[(ce[d1], ce[d2])] += w * eps[(d1, d2)];
                            mf[cf[d1]][cf[d2]] += w * nu[(d1, d2)];
                        }
                    }
                }
                // local incidence
                let mut dl = [[0i8; 12]; 6];
                for (i, &f) in lf.iter().enumerate() {
                    for (e, s) in super::incidence::face_incidence(grid, grid.face(f)) {
                        dl[i][lpos_e(e)] = s;
                    }
                }
                let mut kc = Matrix12::<T>::zeros();
                for i in 0..6 {
                    for j in 0..6 {
                        let m = mf[i][j];
                        if m == T::zero() {
                            continue;
                        }
                        for a in 0..12 {
                            if dl[i][a] == 0 {
                                continue;
                            }
                            for b in 0..12 {
                                if dl[j][b] == 0 {
                                    continue;
                                }
                                let s = T::lit(f64::from(dl[i][a] * dl[j][b]));
                                kc[(a, b)] += s * m * ih2;
                            }
                        }
                    }
                }
                for a in 0..12 {
                    for b in 0..12 {
                        if kc[(a, b)] != T::zero() {
                            cc.push((le[a], le[b], kc[(a, b)]));
                        }
                        if me[(a, b)] != T::zero() {
                            mm.push((le[a], le[b], me[(a, b)]));
                        }
                    }
                }
            }
            (cc, mm)
        })
        .collect();
    let ne = grid.edge_count();
    let (mut cc, mut mm) = (Vec::new(), Vec::new());
    for (a, b) in per_chunk {
        cc.extend(a);
        mm.extend(b);
    }
    Parts {
        curl_curl: Csr::from_triplets(ne, ne, cc),
        mass: Csr::from_triplets(ne, ne, mm),
    }
}

type Matrix12<T> = nalgebra::SMatrix<T, 12, 12>;

/// `M v` for a cellwise tensor with corner quadrature on faces (`on_faces`) or edges.
fn apply_mass<T: Real>(
    grid: &Grid<T>,
    tensor: impl Fn(usize) -> Matrix3<T>,
    v: &[Complex<T>],
    on_faces: bool,
) -> Vec<Complex<T>> {
    let n = if on_faces {
        grid.face_count()
    } else {
        grid.edge_count()
    };
    assert_eq!(v.len(), n);
    let w = grid.cell_volume() / T::lit(8.0);
    let mut out = vec![czero(); n];
    for k in 0..grid.cell_count() {
        let c = grid.cell(k);
        let t = tensor(k);
        for s in corner_iter() {
            let ids: [usize; 3] = if on_faces {
                [0, 1, 2].map(|d| grid.cell_corner_face(c, s, d))
            } else {
                [0, 1, 2].map(|d| grid.cell_corner_edge(c, s, d))
            };
            for d1 in AXES {
                let mut acc = czero::<T>();
                for d2 in AXES {
                    let m = t[(d1, d2)] * w;
                    acc.re += m * v[ids[d2]].re;
                    acc.im += m * v[ids[d2]].im;
                }
                out[ids[d1]] += acc;
            }
        }
    }
    out
}

/// `M_ν v` on faces.
pub fn apply_face_mass<T: Real>(
    grid: &Grid<T>,
    mat: &MaterialField<T>,
    v: &[Complex<T>],
) -> Vec<Complex<T>> {
    apply_mass(grid, |k| *mat.nu(k), v, true)
}

/// `M_ε v` on edges.
pub fn apply_edge_mass<T: Real>(
    grid: &Grid<T>,
    mat: &MaterialField<T>,
    v: &[Complex<T>],
) -> Vec<Complex<T>> {
    apply_mass(grid, |k| *mat.eps(k), v, false)
}

/// Discrete curl `D E / h` on faces.
pub fn discrete_curl<T: Real>(grid: &Grid<T>, e: &[Complex<T>]) -> Vec<Complex<T>> {
    let ih = T::one() / grid.h();
    curl(grid, e).into_iter().map(|z| z * ih).collect()
}

/// Discrete dual curl `Dᵀ W_f H / h`, divided by the edge identity mass.
pub fn discrete_dual_curl<T: Real>(grid: &Grid<T>, hf: &[Complex<T>]) -> Vec<Complex<T>> {
    let fw = grid.face_weights();
    let ew = grid.edge_weights();
    let ih = T::one() / grid.h();
    let weighted: Vec<Complex<T>> = hf.iter().zip(&fw).map(|(z, w)| *z * *w).collect();
    curl_transpose(grid, &weighted)
        .into_iter()
        .zip(&ew)
        .map(|(z, w)| z * (ih / *w))
        .collect()
}

/// `H = (iω)⁻¹ μ⁻¹ ∇×E` with corner-averaged `μ⁻¹`.
pub fn derive_h_from_e<T: Real>(
    grid: &Grid<T>,
    mat: &MaterialField<T>,
    omega: T,
    e: &[Complex<T>],
) -> Vec<Complex<T>> {
    let ce = discrete_curl(grid, e);
    let m = apply_face_mass(grid, mat, &ce);
    let fw = grid.face_weights();
    let inv_iw = Complex::new(T::zero(), -T::one() / omega);
    m.into_iter()
        .zip(&fw)
        .map(|(z, w)| z * inv_iw * (T::one() / *w))
        .collect()
}

impl<T: Real> SystemMatrix<T> {
    pub fn assemble(grid: &Grid<T>, mat: &MaterialField<T>, omega: T) -> Result<Self, SolverError> {
        Self::assemble_with(grid, mat, omega, SolverOptions::default())
    }

    pub fn assemble_with(
        grid: &Grid<T>,
        mat: &MaterialField<T>,
        omega: T,
        opts: SolverOptions,
    ) -> Result<Self, SolverError> {
        if !(omega > T::zero()) || !omega.is_finite_value() {
            return Err(SolverError::BadOmega(omega.as_f64()));
        }
        let check = ellipticity_check(mat, mat.c());
        if !check.pass || mat.cell_count() != grid.cell_count() {
            return Err(SolverError::Ellipticity {
                cell: check.worst_cell,
            });
        }
        let parts = assemble_parts(grid, mat);
        let mut trip = Vec::with_capacity(parts.curl_curl.nnz() + parts.mass.nnz());
        let w2 = omega * omega;
        for (a, scale) in [(&parts.curl_curl, T::one()), (&parts.mass, -w2)] {
            for r in 0..a.rows {
                let (idx, val) = a.row(r);
                for (&c, &v) in idx.iter().zip(val) {
                    trip.push((r, c, scale * v));
                }
            }
        }
        let ne = grid.edge_count();
        let k_full = Csr::from_triplets(ne, ne, trip);
        drop(parts);

        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut int_pos = vec![None; ne];
        let mut bnd_pos = vec![None; ne];
        for k in 0..ne {
            if grid.edge_on_boundary(grid.edge(k)) {
                bnd_pos[k] = Some(boundary.len());
                boundary.push(k);
            } else {
                int_pos[k] = Some(interior.len());
                interior.push(k);
            }
        }
        let k_ii = k_full.extract(&interior, &int_pos, interior.len());
        let k_ib = k_full.extract(&interior, &bnd_pos, boundary.len());

        let bp = full_boundary(grid);
        let mut bnd_area = vec![T::zero(); boundary.len()];
        for (k, &e) in bp.dofs().iter().enumerate() {
            bnd_area[bnd_pos[e].expect("boundary edge")] = bp.area()[k];
        }

        let n = interior.len();
        let backend = if n <= opts.direct_limit {
            let boxes: Vec<CellBox> = interior
                .iter()
                .map(|&k| {
                    let e = grid.edge(k);
                    let mut lo = e.idx;
                    let hi = e.idx;
                    for a in AXES {
                        if a != e.dir {
                            lo[a] -= 1;
                        }
                    }
                    (lo, hi)
                })
                .collect();
            match Multifrontal::factor(&k_ii, &boxes, grid.n(), opts.leaf_size) {
                Ok(f) => Backend::Direct(f),
                Err(SolverError::SingularPivot(_)) => {
                    let w = omega.as_f64();
                    return Err(SolverError::Resonant {
                        margin: 0.0,
                        threshold: opts.resonance_threshold,
                        suggested_lo: w * 0.95,
                        suggested_hi: w * 1.05,
                    });
                }
                Err(e) => return Err(e),
            }
        } else {
            Backend::Iterative {
                pdiag: k_ii
                    .diagonal()
                    .iter()
                    .map(|d| d.abs().max(T::machine_eps()))
                    .collect(),
            }
        };
        let norm_est = k_ii.norm_inf().as_f64();
        log::debug!("assembled {n} interior dofs, omega = {}", omega.as_f64());
        let mut sys = SystemMatrix {
            grid: grid.clone(),
            mat: mat.clone(),
            omega,
            opts,
            k_full,
            k_ii,
            k_ib,
            interior,
            int_pos,
            boundary,
            bnd_pos,
            edge_w: grid.edge_weights(),
            face_w: grid.face_weights(),
            bnd_area,
            backend,
            margin: f64::NAN,
            norm_est,
        };
        if sys.opts.check_resonance {
            let margin = sys.resonance_guard();
            let threshold = sys.opts.resonance_threshold;
            if !(margin >= threshold) {
                let w = omega.as_f64();
                return Err(SolverError::Resonant {
                    margin,
                    threshold,
                    suggested_lo: w * 0.95,
                    suggested_hi: w * 1.05,
                });
            }
        }
        Ok(sys)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn material(&self) -> &MaterialField<T> {
        &self.mat
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Number of interior unknowns.
    pub fn dim(&self) -> usize {
        self.interior.len()
    }

    pub fn interior_edges(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_edges(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior_position(&self, edge: usize) -> Option<usize> {
        self.int_pos[edge]
    }

    pub fn boundary_position(&self, edge: usize) -> Option<usize> {
        self.bnd_pos[edge]
    }

    /// Matrix on interior unknowns.
    pub fn matrix(&self) -> &Csr<T> {
        &self.k_ii
    }

    /// Matrix on all edges, before eliminating boundary values.
    pub fn full_matrix(&self) -> &Csr<T> {
        &self.k_full
    }

    /// Relative resonance margin `σ_min / ‖K‖_∞` from the last guard run.
    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn norm_estimate(&self) -> f64 {
        self.norm_est
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Direct(_))
    }

    /// Boundary area attached to each boundary edge.
    pub fn boundary_area(&self) -> &[T] {
        &self.bnd_area
    }

    /// Inverse power iteration for the smallest singular value; stores and returns the
    /// relative margin.
    pub fn resonance_guard(&mut self) -> f64 {
        let n = self.dim();
        if n == 0 {
            self.margin = f64::INFINITY;
            return self.margin;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f0e);
        let mut v: Vec<T> = (0..n)
            .map(|_| T::lit(StandardNormal.sample(&mut rng)))
            .collect();
        let nv = v.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let iters = match self.backend {
            Backend::Direct(_) => self.opts.resonance_iters,
            Backend::Iterative { .. } => self.opts.resonance_iters.min(5),
        };
        let mut sigma = f64::INFINITY;
        for _ in 0..iters.max(1) {
            let y = match self.solve_real(&v) {
                Ok(y) => y,
                Err(_) => {
                    sigma = 0.0;
                    break;
                }
            };
            let ny = y.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt();
            if !(ny > T::zero()) || !ny.is_finite_value() {
                sigma = 0.0;
                break;
            }
            let s = 1.0 / ny.as_f64();
            let converged = (s - sigma).abs() <= 1e-8 * s;
            sigma = s;
            v = y.iter().map(|x| *x / ny).collect();
            if converged {
                break;
            }
        }
        self.margin = sigma / self.norm_est;
        self.margin
    }

    fn solve_real(&self, b: &[T]) -> Result<Vec<T>, SolverError> {
        match &self.backend {
            Backend::Direct(f) => {
                let mut x = DMatrix::from_column_slice(b.len(), 1, b);
                f.solve_in_place(&mut x);
                Ok(x.as_slice().to_vec())
            }
            Backend::Iterative { pdiag } => {
                minres(&self.k_ii, pdiag, b, 1e-8, self.opts.max_iter).map(|r| r.0)
            }
        }
    }

    fn relative_residual(&self, x: &[T], b: &[T]) -> f64 {
        let mut ax = vec![T::zero(); b.len()];
        self.k_ii.matvec(x, &mut ax);
        let nb = b.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
        if nb == T::zero() {
            return 0.0;
        }
        let nr = ax
            .iter()
            .zip(b)
            .fold(T::zero(), |s, (p, q)| s + (*p - *q) * (*p - *q))
            .sqrt();
        (nr / nb).as_f64()
    }

    /// Solves `K_ii x = b` for several complex right-hand sides.
    pub fn solve_interior_many(
        &self,
        rhs: &[Vec<Complex<T>>],
    ) -> Result<Vec<Vec<Complex<T>>>, SolverError> {
        let n = self.dim();
        for r in rhs {
            if r.len() != n {
                return Err(SolverError::Dimension {
                    got: r.len(),
                    expected: n,
                });
            }
        }
        // real and imaginary parts as separate real columns
        let cols: Vec<Vec<T>> = rhs
            .iter()
            .flat_map(|r| {
                [
                    r.iter().map(|z| z.re).collect::<Vec<T>>(),
                    r.iter().map(|z| z.im).collect(),
                ]
            })
            .collect();
        let solved: Vec<Vec<Vec<T>>> = cols
            .par_chunks(RHS_CHUNK)
            .map(|chunk| self.solve_real_block(chunk))
            .collect::<Result<_, _>>()?;
        let flat: Vec<Vec<T>> = solved.into_iter().flatten().collect();
        Ok(flat
            .chunks(2)
            .map(|p| {
                p[0].iter()
                    .zip(&p[1])
                    .map(|(a, b)| Complex::new(*a, *b))
                    .collect()
            })
            .collect())
    }

    fn solve_real_block(&self, cols: &[Vec<T>]) -> Result<Vec<Vec<T>>, SolverError> {
        let n = self.dim();
        match &self.backend {
            Backend::Direct(f) => {
                let b = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
                let mut x = b.clone();
                f.solve_in_place(&mut x);
                let mut out: Vec<Vec<T>> = (0..cols.len())
                    .map(|j| x.column(j).iter().copied().collect())
                    .collect();
                for (j, xj) in out.iter_mut().enumerate() {
                    let mut history = Vec::new();
                    let mut res = self.relative_residual(xj, &cols[j]);
                    history.push(res);
                    let mut steps = 0;
                    while res > self.opts.tol && steps < 3 {
                        let mut ax = vec![T::zero(); n];
                        self.k_ii.matvec(xj, &mut ax);
                        let r: Vec<T> = cols[j].iter().zip(&ax).map(|(p, q)| *p - *q).collect();
                        let mut d = DMatrix::from_column_slice(n, 1, &r);
                        f.solve_in_place(&mut d);
                        xj.iter_mut().zip(d.as_slice()).for_each(|(a, b)| *a += *b);
                        res = self.relative_residual(xj, &cols[j]);
                        history.push(res);
                        steps += 1;
                    }
                    if !(res <= self.opts.tol) {
                        return Err(SolverError::NoConvergence {
                            iterations: steps,
                            residual: res,
                            history,
                        });
                    }
                }
                Ok(out)
            }
            Backend::Iterative { pdiag } => cols
                .iter()
                .map(|b| {
                    minres(&self.k_ii, pdiag, b, self.opts.tol, self.opts.max_iter).map(|r| r.0)
                })
                .collect(),
        }
    }

    /// Boundary edge values of a trace; every patch dof must be a boundary edge.
    pub fn lift(&self, f: &TangentialTrace<T>) -> Result<Vec<Complex<T>>, SolverError> {
        if f.values.len() != f.patch.len() {
            return Err(SolverError::Dimension {
                got: f.values.len(),
                expected: f.patch.len(),
            });
        }
        let mut ub = vec![czero(); self.boundary.len()];
        for (k, &e) in f.patch.dofs().iter().enumerate() {
            let p = self.bnd_pos[e].ok_or(SolverError::TraceOffBoundary(e))?;
            ub[p] = f.values[k];
        }
        Ok(ub)
    }

    /// Assembles a full edge vector from interior and boundary parts.
    pub fn scatter_edges(&self, ui: &[Complex<T>], ub: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut e = vec![czero(); self.grid.edge_count()];
        for (k, &edge) in self.interior.iter().enumerate() {
            e[edge] = ui[k];
        }
        for (k, &edge) in self.boundary.iter().enumerate() {
            e[edge] = ub[k];
        }
        e
    }

    pub fn derive_h(&self, e: &[Complex<T>]) -> Vec<Complex<T>> {
        derive_h_from_e(&self.grid, &self.mat, self.omega, e)
    }

    /// Solves the boundary-value problem with tangential data `f` and no sources.
    pub fn solve_bvp(&self, f: &TangentialTrace<T>) -> Result<FieldPair<T>, SolverError> {
        Ok(self
            .solve_bvp_many(std::slice::from_ref(f))?
            .pop()
            .expect("one solution"))
    }

    pub fn solve_bvp_many(
        &self,
        fs: &[TangentialTrace<T>],
    ) -> Result<Vec<FieldPair<T>>, SolverError> {
        let ubs: Vec<Vec<Complex<T>>> =
            fs.iter().map(|f| self.lift(f)).collect::<Result<_, _>>()?;
        self.solve_boundary_values(&ubs)
    }

    /// Solves with prescribed values on all boundary edges.
    pub fn solve_boundary_values(
        &self,
        ubs: &[Vec<Complex<T>>],
    ) -> Result<Vec<FieldPair<T>>, SolverError> {
        for ub in ubs {
            if ub.len() != self.boundary.len() {
                return Err(SolverError::Dimension {
                    got: ub.len(),
                    expected: self.boundary.len(),
                });
            }
        }
        let rhs: Vec<Vec<Complex<T>>> = ubs
            .iter()
            .map(|ub| {
                self.k_ib
                    .matvec_complex(ub)
                    .into_iter()
                    .map(|z| -z)
                    .collect()
            })
            .collect();
        let sols = self.solve_interior_many(&rhs)?;
        Ok(sols
            .into_iter()
            .zip(ubs)
            .map(|(ui, ub)| {
                let e = self.scatter_edges(&ui, ub);
                let h = self.derive_h(&e);
                FieldPair { e, h }
            })
            .collect())
    }

    /// Solves the source problem with homogeneous tangential boundary values.
    pub fn solve_source(&self, src: &SourceTerm<T>) -> Result<FieldPair<T>, SolverError> {
        Ok(self
            .solve_source_many(std::slice::from_ref(src))?
            .pop()
            .expect("one solution"))
    }

    pub fn solve_source_many(
        &self,
        srcs: &[SourceTerm<T>],
    ) -> Result<Vec<FieldPair<T>>, SolverError> {
        for s in srcs {
            s.validate(&self.grid)?;
        }
        let rhs: Vec<Vec<Complex<T>>> = srcs.iter().map(|s| self.source_rhs(s)).collect();
        let sols = self.solve_interior_many(&rhs)?;
        let zero_b = vec![czero(); self.boundary.len()];
        Ok(sols
            .into_iter()
            .zip(srcs)
            .map(|(ui, s)| {
                let e = self.scatter_edges(&ui, &zero_b);
                let ce = discrete_curl(&self.grid, &e);
                let m = apply_face_mass(&self.grid, &self.mat, &ce);
                let inv_iw = Complex::new(T::zero(), -T::one() / self.omega);
                let h = m
                    .iter()
                    .zip(&self.face_w)
                    .zip(&s.ftilde)
                    .map(|((z, w), ft)| (*z * (T::one() / *w) - *ft) * inv_iw)
                    .collect();
                FieldPair { e, h }
            })
            .collect())
    }

    /// Weak right-hand side `W_e F + Cᵀ W_f F̃` on interior edges.
    fn source_rhs(&self, s: &SourceTerm<T>) -> Vec<Complex<T>> {
        let full = self.source_load(s);
        self.interior.iter().map(|&k| full[k]).collect()
    }

    fn source_load(&self, s: &SourceTerm<T>) -> Vec<Complex<T>> {
        let ih = T::one() / self.grid.h();
        let wf: Vec<Complex<T>> = s
            .ftilde
            .iter()
            .zip(&self.face_w)
            .map(|(z, w)| *z * (*w * ih))
            .collect();
        let ct = curl_transpose(&self.grid, &wf);
        s.f.iter()
            .zip(&self.edge_w)
            .zip(ct)
            .map(|((z, w), c)| *z * *w + c)
            .collect()
    }

    /// Tangential `H` on every boundary edge, from the weak form:
    /// `(ν×H)·t = −(K E − load)_b / (iω a_b)`.
    pub fn boundary_h_trace(
        &self,
        fields: &FieldPair<T>,
        src: Option<&SourceTerm<T>>,
    ) -> Vec<Complex<T>> {
        let ke = self.k_full.matvec_complex(&fields.e);
        let load = src.map(|s| self.source_load(s));
        let inv = Complex::new(T::zero(), T::one() / self.omega);
        self.boundary
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let mut v = ke[e];
                if let Some(l) = &load {
                    v -= l[e];
                }
                v * inv * (T::one() / self.bnd_area[k])
            })
            .collect()
    }
}

/// Relative discrete `L²` norm of the first-order residual
/// `(μ⁻¹∇×E − iωH − F̃, ∇×H + iωεE − F/(iω))`, the second component on interior edges.
pub fn residual<T: Real>(
    fields: &FieldPair<T>,
    sys: &SystemMatrix<T>,
    src: Option<&SourceTerm<T>>,
) -> f64 {
    let g = &sys.grid;
    let w = sys.omega;
    let iw = Complex::new(T::zero(), w);
    let ce = discrete_curl(g, &fields.e);
    let nce: Vec<Complex<T>> = apply_face_mass(g, &sys.mat, &ce)
        .into_iter()
        .zip(&sys.face_w)
        .map(|(z, fw)| z * (T::one() / *fw))
        .collect();
    let dual = discrete_dual_curl(g, &fields.h);
    let eps_e: Vec<Complex<T>> = apply_edge_mass(g, &sys.mat, &fields.e)
        .into_iter()
        .zip(&sys.edge_w)
        .map(|(z, ew)| z * (T::one() / *ew))
        .collect();
    let zf = vec![czero(); g.face_count()];
    let ze = vec![czero(); g.edge_count()];
    let (ft, fe) = match src {
        Some(s) => (&s.ftilde, &s.f),
        None => (&zf, &ze),
    };
    let inv_iw = Complex::new(T::zero(), -T::one() / w);
    let mut res = T::zero();
    let mut parts = [T::zero(); 6];
    for k in 0..g.face_count() {
        let a = nce[k];
        let b = iw * fields.h[k];
        let c = ft[k];
        let wt = sys.face_w[k];
        res += wt * cabs2(a - b - c);
        parts[0] += wt * cabs2(a);
        parts[1] += wt * cabs2(b);
        parts[2] += wt * cabs2(c);
    }
    for &k in &sys.interior {
        let a = dual[k];
        let b = iw * eps_e[k];
        let c = fe[k] * inv_iw;
        let wt = sys.edge_w[k];
        res += wt * cabs2(a + b - c);
        parts[3] += wt * cabs2(a);
        parts[4] += wt * cabs2(b);
        parts[5] += wt * cabs2(c);
    }
    let scale: f64 = parts.iter().map(|p| p.as_f64().sqrt()).sum();
    if scale == 0.0 {
        0.0
    } else {
        res.as_f64().sqrt() / scale
    }
}

/// Rayleigh-quotient iteration for the cavity eigenvalue `ω²` of
/// `∇×μ⁻¹∇×E = ω²εE` nearest to `omega_guess²`.
pub fn locate_resonance<T: Real>(
    grid: &Grid<T>,
    mat: &MaterialField<T>,
    omega_guess: T,
) -> Result<T, SolverError> {
    let parts = assemble_parts(grid, mat);
    let ne = grid.edge_count();
    let mut interior = Vec::new();
    let mut pos = vec![None; ne];
    for k in 0..ne {
        if !grid.edge_on_boundary(grid.edge(k)) {
            pos[k] = Some(interior.len());
            interior.push(k);
        }
    }
    let s = parts.curl_curl.extract(&interior, &pos, interior.len());
    let m = parts.mass.extract(&interior, &pos, interior.len());
    let boxes: Vec<CellBox> = interior
        .iter()
        .map(|&k| {
            let e = grid.edge(k);
            let mut lo = e.idx;
            for a in AXES {
                if a != e.dir {
                    lo[a] -= 1;
                }
            }
            (lo, e.idx)
        })
        .collect();
    let n = interior.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e50_4a7e);
    let mut v: Vec<T> = (0..n)
        .map(|_| T::lit(StandardNormal.sample(&mut rng)))
        .collect();
    let mut shift = omega_guess * omega_guess;
    let quad = |a: &Csr<T>, x: &[T]| {
        let mut ax = vec![T::zero(); x.len()];
        a.matvec(x, &mut ax);
        ax.iter()
            .zip(x)
            .fold(T::zero(), |acc, (p, q)| acc + *p * *q)
    };
    for it in 0..12 {
        let mut trip = Vec::with_capacity(s.nnz() + m.nnz());
        for (a, scale) in [(&s, T::one()), (&m, -shift)] {
            for r in 0..n {
                let (idx, val) = a.row(r);
                for (&c, &x) in idx.iter().zip(val) {
                    trip.push((r, c, scale * x));
                }
            }
        }
        let k = Csr::from_triplets(n, n, trip);
        let f = match Multifrontal::factor(&k, &boxes, grid.n(), 64) {
            Ok(f) => f,
            Err(SolverError::SingularPivot(_)) => return Ok(shift.sqrt()),
            Err(e) => return Err(e),
        };
        let mut mv = vec![T::zero(); n];
        m.matvec(&v, &mut mv);
        let mut y = DMatrix::from_column_slice(n, 1, &mv);
        f.solve_in_place(&mut y);
        let y = y.as_slice().to_vec();
        let lam = quad(&s, &y) / quad(&m, &y);
        let ny = quad(&m, &y).sqrt();
        v = y.iter().map(|x| *x / ny).collect();
        let done = (lam - shift).abs() <= T::lit(1e-14) * lam.abs();
        // plain inverse iteration for two steps, then Rayleigh shifts
        if it >= 1 {
            shift = lam;
        }
        if done {
            break;
        }
    }
    Ok(shift.sqrt())
}
