use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::AnalysisError;
use crate::geometry::{BoundaryPatch, Region};
use crate::scalar::{Complex, Real};
use crate::solver::FieldPair;

/// Largest patch handled by the dense fractional surrogate.
pub const MAX_PATCH_DOFS: usize = 4000;

/// Inner products on boundary data `V` (dense surrogate Gram) and on `A`-restricted
/// fields `X` (diagonal volume weights).
#[derive(Clone, Debug)]
pub struct NormWeights<T: Real> {
    patch: BoundaryPatch<T>,
    region: Region<T>,
    gram_v: DMatrix<T>,
    chol_v: DMatrix<T>,
    gram_x: Vec<T>,
    edges: Vec<usize>,
    faces: Vec<usize>,
    spectral_error: f64,
}

/// `G_V = M^{1/2} (I + M^{-1/2} S M^{-1/2})^{-1/2} M^{1/2}` with `M` the boundary area
/// weights and `S` the graph Laplacian of parallel neighbouring dofs; `G_X` the
/// closure volume weights of the region.
pub fn build_norm_weights<T: Real>(patch: &BoundaryPatch<T>, region: &Region<T>) -> Result<NormWeights<T>, AnalysisError> {
    let n = patch.len();
    if n == 0 {
        return Err(AnalysisError::KindMismatch("empty patch"));
    }
    if n > MAX_PATCH_DOFS {
        return Err(AnalysisError::PatchTooLarge(n));
    }
    let area = patch.area();
    let mut lap = DMatrix::<T>::zeros(n, n);
    for (i, j) in patch.adjacency() {
        lap[(i, j)] -= T::one();
        lap[(j, i)] -= T::one();
        lap[(i, i)] += T::one();
        lap[(j, j)] += T::one();
    }
    let ms: Vec<T> = area.iter().map(|a| a.sqrt()).collect();
    let ns = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        id + lap[(i, j)] / (ms[i] * ms[j])
    });
    let eig = SymmetricEigen::new(ns.clone());
    if eig.eigenvalues.iter().any(|l| !(*l > T::zero())) {
        return Err(AnalysisError::NotPositiveDefinite);
    }
    let q = &eig.eigenvectors;
    let recon = q * DMatrix::from_diagonal(&eig.eigenvalues) * q.transpose();
    let spectral_error = ((recon - &ns).norm() / ns.norm()).as_f64();
    let inv_sqrt = DVector::from_iterator(n, eig.eigenvalues.iter().map(|l| T::one() / l.sqrt()));
    let core = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    let mut gram_v = DMatrix::from_fn(n, n, |i, j| ms[i] * core[(i, j)] * ms[j]);
    // exact symmetry so the Cholesky factor reproduces it
    gram_v = (&gram_v + gram_v.transpose()) * T::lit(0.5);
    let chol_v = Cholesky::new(gram_v.clone()).ok_or(AnalysisError::NotPositiveDefinite)?.l();

    let grid = region.grid();
    let edges = region.edges();
    let faces = region.faces();
    let gram_x: Vec<T> = edges
        .iter()
        .map(|&e| region.edge_weight(grid.edge(e)))
        .chain(faces.iter().map(|&f| region.face_weight(grid.face(f))))
        .collect();
    if gram_x.iter().any(|w| !(*w > T::zero())) {
        return Err(AnalysisError::NotPositiveDefinite);
    }
    Ok(NormWeights {
        patch: patch.clone(),
        region: region.clone(),
        gram_v,
        chol_v,
        gram_x,
        edges,
        faces,
        spectral_error,
    })
}

impl<T: Real> NormWeights<T> {
    pub fn patch(&self) -> &BoundaryPatch<T> {
        &self.patch
    }

    pub fn region(&self) -> &Region<T> {
        &self.region
    }

    pub fn gram_v(&self) -> &DMatrix<T> {
        &self.gram_v
    }

    /// Lower Cholesky factor `L` with `G_V = L Lᵀ`.
    pub fn chol_v(&self) -> &DMatrix<T> {
        &self.chol_v
    }

    pub fn gram_x(&self) -> &[T] {
        &self.gram_x
    }

    /// Relative reconstruction error of the eigendecomposition behind `G_V`.
    pub fn spectral_error(&self) -> f64 {
        self.spectral_error
    }

    pub fn v_len(&self) -> usize {
        self.gram_v.nrows()
    }

    pub fn x_len(&self) -> usize {
        self.gram_x.len()
    }

    /// Edges then faces of the region closure, in `X` order.
    pub fn x_edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn x_faces(&self) -> &[usize] {
        &self.faces
    }

    pub fn restrict(&self, f: &FieldPair<T>) -> Vec<Complex<T>> {
        f.restrict(&self.edges, &self.faces)
    }

    /// Extends an `X`-vector by zero to a full field pair.
    pub fn extend(&self, x: &[Complex<T>]) -> FieldPair<T> {
        let mut out = FieldPair::zeros(self.region.grid());
        let ne = self.edges.len();
        for (k, &e) in self.edges.iter().enumerate() {
            out.e[e] = x[k];
        }
        for (k, &f) in self.faces.iter().enumerate() {
            out.h[f] = x[ne + k];
        }
        out
    }

    /// `⟨a, b⟩_X = Σ w_k conj(a_k) b_k`.
    pub fn inner_x(&self, a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
        a.iter().zip(b).zip(&self.gram_x).fold(Complex::new(T::zero(), T::zero()), |s, ((x, y), w)| s + x.conj() * *y * *w)
    }

    pub fn norm_x(&self, a: &[Complex<T>]) -> T {
        self.inner_x(a, a).re.max(T::zero()).sqrt()
    }

    /// `⟨a, b⟩_V = a† G_V b`.
    pub fn inner_v(&self, a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
        let gb = self.apply_gram_v(b);
        a.iter().zip(&gb).fold(Complex::new(T::zero(), T::zero()), |s, (x, y)| s + x.conj() * *y)
    }

    pub fn norm_v(&self, a: &[Complex<T>]) -> T {
        self.inner_v(a, a).re.max(T::zero()).sqrt()
    }

    pub fn apply_gram_v(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.v_len();
        (0..n)
            .map(|i| {
                (0..n).fold(Complex::new(T::zero(), T::zero()), |s, j| s + b[j] * self.gram_v[(i, j)])
            })
            .collect()
    }

    /// Solves `G_V x = b` with the Cholesky factor.
    pub fn riesz_v(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.v_len();
        let l = &self.chol_v;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= y[j] * l[(i, j)];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= y[j] * l[(j, i)];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }
}
