//! Restriction operator from boundary data on a patch to fields on a subdomain, its
//! adjoint, weighted SVD, truncated approximants and cache files.

use std::path::Path;

use nalgebra::DMatrix;

use crate::analysis::NormWeights;
use crate::error::{GeometryError, RungeError};
use crate::geometry::Region;
use crate::scalar::{czero, Complex, Fnv1a, Real};
use crate::solver::{apply_face_mass, SourceTerm, SystemMatrix, TangentialTrace};
use crate::store::{read_envelope, write_envelope, Kind};

/// Basis vectors solved per batch during column assembly.
const COLUMN_BATCH: usize = 64;

/// Dense matrix of `f ↦ (E_f, H_f)|_A` in the nodal patch basis.
#[derive(Clone, Debug)]
pub struct RestrictionOperator<T: Real> {
    pub matrix: DMatrix<Complex<T>>,
    pub weights: NormWeights<T>,
    pub provenance: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvdBundle<T: Real> {
    /// Descending.
    pub sigma: Vec<T>,
    /// `V`-orthonormal right vectors as columns.
    pub phi: DMatrix<Complex<T>>,
    /// `X`-orthonormal left vectors as columns.
    pub psi: DMatrix<Complex<T>>,
    pub provenance: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expansion<T: Real> {
    pub coeffs: Vec<Complex<T>>,
    /// `‖W − Σ c_k Ψ_k‖_X`.
    pub out_of_span: T,
    pub target_norm: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Approximant<T: Real> {
    pub alpha: T,
    pub j_index: Option<usize>,
    pub coeffs: Vec<Complex<T>>,
    pub boundary_data: Vec<Complex<T>>,
    pub kept_count: usize,
    /// `(Σ_{σ_k < α} |c_k|²)^{1/2}`.
    pub tail_norm: T,
}

/// Hash of everything the operator depends on.
pub fn provenance_hash<T: Real>(sys: &SystemMatrix<T>, weights: &NormWeights<T>) -> u64 {
    let mut h = Fnv1a::new();
    h.write(b"restriction-v1");
    h.write_u64(std::mem::size_of::<T>() as u64);
    sys.grid().fingerprint(&mut h);
    sys.material().fingerprint(&mut h);
    h.write_f64(sys.omega().as_f64());
    weights.patch().fingerprint(&mut h);
    weights.region().fingerprint(&mut h);
    h.finish()
}

fn check_region<T: Real>(region: &Region<T>) -> Result<(), RungeError> {
    if !region.is_compactly_contained() {
        return Err(GeometryError::NotCompactlyContained.into());
    }
    let comps = region.complement_components();
    if comps != 1 {
        return Err(GeometryError::ComplementDisconnected(comps).into());
    }
    Ok(())
}

/// One boundary-value solve per patch dof, restricted to the region closure.
pub fn assemble_restriction<T: Real>(
    sys: &SystemMatrix<T>,
    weights: &NormWeights<T>,
) -> Result<RestrictionOperator<T>, RungeError> {
    check_region(weights.region())?;
    let nv = weights.v_len();
    let nx = weights.x_len();
    let mut matrix = DMatrix::from_element(nx, nv, czero::<T>());
    for start in (0..nv).step_by(COLUMN_BATCH) {
        let end = (start + COLUMN_BATCH).min(nv);
        let traces: Vec<TangentialTrace<T>> =
            (start..end).map(|k| TangentialTrace::basis(weights.patch().clone(), k)).collect();
        let sols = sys.solve_bvp_many(&traces)?;
        for (k, s) in sols.iter().enumerate() {
            let col = weights.restrict(s);
            matrix.column_mut(start + k).iter_mut().zip(col).for_each(|(m, v)| *m = v);
        }
    }
    if matrix.iter().any(|z| !z.re.is_finite_value() || !z.im.is_finite_value()) {
        return Err(RungeError::Payload("non-finite operator entry".into()));
    }
    Ok(RestrictionOperator { matrix, weights: weights.clone(), provenance: provenance_hash(sys, weights) })
}

impl<T: Real> RestrictionOperator<T> {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.cols();
        (0..self.rows()).map(|i| (0..n).fold(czero(), |s, j| s + self.matrix[(i, j)] * f[j])).collect()
    }

    /// `G_V⁻¹ A† G_X F` from the stored matrix.
    pub fn matrix_adjoint(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        let w = self.weights.gram_x();
        let gx: Vec<Complex<T>> = x.iter().zip(w).map(|(z, w)| *z * *w).collect();
        let at: Vec<Complex<T>> = (0..self.cols())
            .map(|j| (0..self.rows()).fold(czero(), |s, i| s + self.matrix[(i, j)].conj() * gx[i]))
            .collect();
        self.weights.riesz_v(&at)
    }
}

/// Adjoint by a source solve: `G_X F` extended by zero drives the adjoint problem, and the
/// weak tangential trace of its solution on the patch, mapped by `G_V⁻¹`, represents `A*F`.
pub fn apply_adjoint<T: Real>(
    sys: &SystemMatrix<T>,
    weights: &NormWeights<T>,
    x: &[Complex<T>],
) -> Result<Vec<Complex<T>>, RungeError> {
    if x.len() != weights.x_len() {
        return Err(RungeError::Dimension { got: x.len(), expected: weights.x_len() });
    }
    let grid = sys.grid();
    let gx: Vec<Complex<T>> = x.iter().zip(weights.gram_x()).map(|(z, w)| *z * *w).collect();
    let g = weights.extend(&gx);
    let ew = grid.edge_weights();
    let fw = grid.face_weights();
    let mut src = SourceTerm::zeros(grid);
    for (k, z) in g.e.iter().enumerate() {
        src.f[k] = *z * (T::one() / ew[k]);
    }
    // the conjugate-transpose of H = (iω)⁻¹ W_f⁻¹ M_ν C E, written as a face source
    let scaled: Vec<Complex<T>> = g.h.iter().zip(&fw).map(|(z, w)| *z * (T::one() / *w)).collect();
    let m = apply_face_mass(grid, sys.material(), &scaled);
    let i_over_w = Complex::new(T::zero(), T::one() / sys.omega());
    for (k, z) in m.iter().enumerate() {
        src.ftilde[k] = *z * i_over_w * (T::one() / fw[k]);
    }
    let sol = sys.solve_source(&src)?;
    let trace = sys.boundary_h_trace(&sol, Some(&src));
    let iw = Complex::new(T::zero(), sys.omega());
    let area = sys.boundary_area();
    let rhs: Vec<Complex<T>> = weights
        .patch()
        .dofs()
        .iter()
        .map(|&e| {
            let b = sys.boundary_position(e).expect("patch dofs lie on the boundary");
            trace[b] * iw * area[b]
        })
        .collect();
    Ok(weights.riesz_v(&rhs))
}

/// SVD of `G_X^{1/2} A L_V^{−ᵀ}` mapped back to `V`- and `X`-orthonormal vectors.
pub fn weighted_svd<T: Real>(op: &RestrictionOperator<T>) -> Result<SvdBundle<T>, RungeError> {
    let w = &op.weights;
    let l = w.chol_v().map(|v| Complex::new(v, T::zero()));
    let xt = l.solve_lower_triangular(&op.matrix.transpose()).ok_or(RungeError::Svd)?;
    let sx: Vec<T> = w.gram_x().iter().map(|v| v.sqrt()).collect();
    let mut b = xt.transpose();
    for (i, mut row) in b.row_iter_mut().enumerate() {
        row *= Complex::new(sx[i], T::zero());
    }
    // the default convergence threshold leaves near-degenerate pairs visibly unconverged
    let iters = 1000 * b.ncols().max(b.nrows());
    let svd = nalgebra::SVD::try_new(b, true, true, T::machine_eps() * T::lit(1e-2), iters).ok_or(RungeError::Svd)?;
    let u = svd.u.ok_or(RungeError::Svd)?;
    let vt = svd.v_t.ok_or(RungeError::Svd)?;
    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).expect("finite sigma"));
    let sigma: Vec<T> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let v = DMatrix::from_fn(w.v_len(), r, |i, j| vt[(order[j], i)].conj());
    let lt = l.transpose();
    let phi = lt.solve_upper_triangular(&v).ok_or(RungeError::Svd)?;
    let psi = DMatrix::from_fn(w.x_len(), r, |i, j| u[(i, order[j])] * (T::one() / sx[i]));
    Ok(SvdBundle { sigma, phi, psi, provenance: op.provenance })
}

impl<T: Real> SvdBundle<T> {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn phi_col(&self, k: usize) -> Vec<Complex<T>> {
        self.phi.column(k).iter().copied().collect()
    }

    pub fn psi_col(&self, k: usize) -> Vec<Complex<T>> {
        self.psi.column(k).iter().copied().collect()
    }
}

/// `c_k = ⟨Ψ_k, W⟩_X` and the out-of-span remainder.
pub fn expand_target<T: Real>(svd: &SvdBundle<T>, weights: &NormWeights<T>, target: &[Complex<T>]) -> Expansion<T> {
    let coeffs: Vec<Complex<T>> = (0..svd.rank()).map(|k| weights.inner_x(&svd.psi_col(k), target)).collect();
    let mut rem = target.to_vec();
    for (k, c) in coeffs.iter().enumerate() {
        for (i, r) in rem.iter_mut().enumerate() {
            *r -= svd.psi[(i, k)] * *c;
        }
    }
    Expansion { coeffs, out_of_span: weights.norm_x(&rem), target_norm: weights.norm_x(target) }
}

/// `R_α W = Σ_{σ_k ≥ α} (c_k/σ_k) φ_k`.
pub fn truncate<T: Real>(svd: &SvdBundle<T>, coeffs: &[Complex<T>], alpha: T) -> Result<Approximant<T>, RungeError> {
    if !(alpha > T::zero()) {
        return Err(RungeError::NonPositive("alpha"));
    }
    let nv = svd.phi.nrows();
    let mut data = vec![czero::<T>(); nv];
    let mut kept = 0;
    let mut tail = T::zero();
    for (k, c) in coeffs.iter().enumerate() {
        let s = svd.sigma[k];
        if s >= alpha {
            kept += 1;
            let f = *c * (T::one() / s);
            for (i, d) in data.iter_mut().enumerate() {
                *d += svd.phi[(i, k)] * f;
            }
        } else {
            tail += c.norm_sqr();
        }
    }
    Ok(Approximant { alpha, j_index: None, coeffs: coeffs.to_vec(), boundary_data: data, kept_count: kept, tail_norm: tail.sqrt() })
}

fn check_params(c: f64, theta: f64, m: f64) -> Result<(), RungeError> {
    if !(0.0..1.0).contains(&theta) {
        return Err(RungeError::BadTheta(theta));
    }
    if !(c > 0.0) {
        return Err(RungeError::NonPositive("C"));
    }
    if !(m > 0.0) {
        return Err(RungeError::NonPositive("m"));
    }
    Ok(())
}

/// Inverts `1/j = (log(C/α^{1−θ}))^{−m/2}`: `α = (C e^{−j^{2/m}})^{1/(1−θ)}`.
pub fn alpha_for_j(j: usize, c: f64, theta: f64, m: f64) -> Result<f64, RungeError> {
    check_params(c, theta, m)?;
    if j == 0 {
        return Err(RungeError::NonPositive("j"));
    }
    let jf = j as f64;
    Ok(((c.ln() - jf.powf(2.0 / m)) / (1.0 - theta)).exp())
}

/// The forward relation: `(log(C/α^{1−θ}))^{−m/2}`, which equals `1/j` at `alpha_for_j(j)`.
pub fn inverse_j(alpha: f64, c: f64, theta: f64, m: f64) -> Result<f64, RungeError> {
    check_params(c, theta, m)?;
    Ok((c.ln() - (1.0 - theta) * alpha.ln()).powf(-m / 2.0))
}

fn push_matrix<T: Real>(out: &mut Vec<u8>, m: &DMatrix<Complex<T>>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.extend_from_slice(&z.re.as_f64().to_le_bytes());
            out.extend_from_slice(&z.im.as_f64().to_le_bytes());
        }
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], RungeError> {
        if self.at + n > self.b.len() {
            return Err(RungeError::Payload("payload is shorter than its dimensions".into()));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, RungeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, RungeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix<T: Real>(&mut self, rows: usize, cols: usize) -> Result<DMatrix<Complex<T>>, RungeError> {
        let mut m = DMatrix::from_element(rows, cols, czero::<T>());
        for i in 0..rows {
            for j in 0..cols {
                let re = self.f64()?;
                let im = self.f64()?;
                m[(i, j)] = Complex::new(T::lit(re), T::lit(im));
            }
        }
        Ok(m)
    }

    fn done(&self) -> Result<(), RungeError> {
        if self.at == self.b.len() {
            Ok(())
        } else {
            Err(RungeError::Payload("trailing bytes after payload".into()))
        }
    }
}

/// Rows and columns as `u64`, then row-major `(re, im)` doubles.
pub fn encode_operator<T: Real>(op: &RestrictionOperator<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 16 * op.rows() * op.cols());
    out.extend_from_slice(&(op.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(op.cols() as u64).to_le_bytes());
    push_matrix(&mut out, &op.matrix);
    out
}

pub fn decode_operator<T: Real>(
    payload: &[u8],
    weights: &NormWeights<T>,
    provenance: u64,
) -> Result<RestrictionOperator<T>, RungeError> {
    let mut r = Reader { b: payload, at: 0 };
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    if rows != weights.x_len() || cols != weights.v_len() {
        return Err(RungeError::Dimension { got: rows * cols, expected: weights.x_len() * weights.v_len() });
    }
    let matrix = r.matrix(rows, cols)?;
    r.done()?;
    Ok(RestrictionOperator { matrix, weights: weights.clone(), provenance })
}

/// Rank, `V` and `X` lengths as `u64`, then `σ`, `φ` and `Ψ` (row-major).
pub fn encode_svd<T: Real>(svd: &SvdBundle<T>) -> Vec<u8> {
    let mut out = Vec::new();
    for n in [svd.rank(), svd.phi.nrows(), svd.psi.nrows()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for s in &svd.sigma {
        out.extend_from_slice(&s.as_f64().to_le_bytes());
    }
    push_matrix(&mut out, &svd.phi);
    push_matrix(&mut out, &svd.psi);
    out
}

pub fn decode_svd<T: Real>(payload: &[u8], provenance: u64) -> Result<SvdBundle<T>, RungeError> {
    let mut r = Reader { b: payload, at: 0 };
    let rank = r.u64()? as usize;
    let nv = r.u64()? as usize;
    let nx = r.u64()? as usize;
    if rank > nv.min(nx) {
        return Err(RungeError::Payload(format!("rank {rank} exceeds dimensions {nv}×{nx}")));
    }
    let sigma = (0..rank).map(|_| r.f64().map(T::lit)).collect::<Result<Vec<T>, _>>()?;
    let phi = r.matrix(nv, rank)?;
    let psi = r.matrix(nx, rank)?;
    r.done()?;
    Ok(SvdBundle { sigma, phi, psi, provenance })
}

pub fn store_operator<T: Real>(op: &RestrictionOperator<T>, path: &Path) -> Result<(), RungeError> {
    Ok(write_envelope(Kind::Operator, op.provenance, &encode_operator(op), path)?)
}

pub fn load_operator<T: Real>(
    path: &Path,
    weights: &NormWeights<T>,
    provenance: u64,
) -> Result<RestrictionOperator<T>, RungeError> {
    let payload = read_envelope(path, Kind::Operator, provenance)?;
    decode_operator(&payload, weights, provenance)
}

pub fn store_svd<T: Real>(svd: &SvdBundle<T>, path: &Path) -> Result<(), RungeError> {
    Ok(write_envelope(Kind::Svd, svd.provenance, &encode_svd(svd), path)?)
}

pub fn load_svd<T: Real>(path: &Path, provenance: u64) -> Result<SvdBundle<T>, RungeError> {
    decode_svd(&read_envelope(path, Kind::Svd, provenance)?, provenance)
}
