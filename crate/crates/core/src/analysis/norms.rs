use crate::error::AnalysisError;
use crate::geometry::{Grid, Region, AXES};
use crate::scalar::{cabs2, czero, Complex, Real};
use crate::solver::{discrete_curl, discrete_dual_curl, FieldPair};

use super::weights::NormWeights;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    /// `p ∈ [1, ∞]`; `f64::INFINITY` gives the maximum norm.
    Lp(f64),
    Hcurl,
    BoundaryHs,
}

/// Argument of [`norm`].
#[derive(Clone, Copy, Debug)]
pub enum Field<'a, T: Real> {
    /// Electric field on all edges.
    Electric(&'a [Complex<T>]),
    Pair(&'a FieldPair<T>),
    /// Tangential data on the patch of the weights.
    Trace(&'a [Complex<T>]),
}

/// Cell-center value of an edge field: mean of the four parallel edges per axis.
pub fn cell_value_edges<T: Real>(grid: &Grid<T>, v: &[Complex<T>], c: [usize; 3]) -> [Complex<T>; 3] {
    let edges = grid.cell_edges(c);
    let q = T::lit(0.25);
    AXES.map(|d| (0..4).fold(czero::<T>(), |s, k| s + v[edges[4 * d + k]]) * q)
}

/// Cell-center value of a face field: mean of the two faces normal to each axis.
pub fn cell_value_faces<T: Real>(grid: &Grid<T>, v: &[Complex<T>], c: [usize; 3]) -> [Complex<T>; 3] {
    let faces = grid.cell_faces(c);
    let half = T::lit(0.5);
    AXES.map(|d| (v[faces[2 * d]] + v[faces[2 * d + 1]]) * half)
}

fn accumulate(acc: &mut f64, mag2: f64, p: f64, w: f64) {
    if p.is_infinite() {
        *acc = acc.max(mag2.sqrt());
    } else if p == 2.0 {
        *acc += w * mag2;
    } else {
        *acc += w * mag2.sqrt().powf(p);
    }
}

fn finish(acc: f64, p: f64) -> f64 {
    if p.is_infinite() {
        acc
    } else if p == 2.0 {
        acc.sqrt()
    } else {
        acc.powf(1.0 / p)
    }
}

/// Midpoint-rule `Lᵖ(region)` norm of the pointwise Euclidean magnitude of `E`, or of
/// the six-vector `(E, H)` when `h` is given.
pub fn lp_norm<T: Real>(
    region: &Region<T>,
    e: &[Complex<T>],
    h: Option<&[Complex<T>]>,
    p: f64,
) -> Result<f64, AnalysisError> {
    if !(p >= 1.0) {
        return Err(AnalysisError::BadExponent(p));
    }
    let grid = region.grid();
    if e.len() != grid.edge_count() || h.is_some_and(|h| h.len() != grid.face_count()) {
        return Err(AnalysisError::KindMismatch("field does not match the region grid"));
    }
    let w = grid.cell_volume().as_f64();
    let mut acc = 0.0;
    for c in region.cells() {
        let ev = cell_value_edges(grid, e, c);
        let mut m2: f64 = ev.iter().map(|z| cabs2(*z).as_f64()).sum();
        if let Some(h) = h {
            m2 += cell_value_faces(grid, h, c).iter().map(|z| cabs2(*z).as_f64()).sum::<f64>();
        }
        accumulate(&mut acc, m2, p, w);
    }
    Ok(finish(acc, p))
}

/// `sqrt(‖E‖² + ‖∇×E‖²)` over the region.
pub fn hcurl_norm_e<T: Real>(region: &Region<T>, e: &[Complex<T>]) -> Result<f64, AnalysisError> {
    let grid = region.grid();
    let l2 = lp_norm(region, e, None, 2.0)?;
    let ce = discrete_curl(grid, e);
    let w = grid.cell_volume().as_f64();
    let curl2: f64 = region
        .cells()
        .map(|c| w * cell_value_faces(grid, &ce, c).iter().map(|z| cabs2(*z).as_f64()).sum::<f64>())
        .sum();
    Ok((l2 * l2 + curl2).sqrt())
}

/// `‖(E, H)‖_{H(curl)}`; `∇×H` is the dual curl, averaged over the interior edges of
/// each cell.
pub fn hcurl_norm_pair<T: Real>(region: &Region<T>, f: &FieldPair<T>) -> Result<f64, AnalysisError> {
    let grid = region.grid();
    let he = hcurl_norm_e(region, &f.e)?;
    let l2h = lp_norm(region, &vec![czero(); grid.edge_count()], Some(&f.h), 2.0)?;
    let dual = discrete_dual_curl(grid, &f.h);
    let w = grid.cell_volume().as_f64();
    let mut curl2 = 0.0;
    for c in region.cells() {
        let edges = grid.cell_edges(c);
        for d in AXES {
            let mut s = czero::<T>();
            let mut k = 0usize;
            for &e in &edges[4 * d..4 * d + 4] {
                if !grid.edge_on_boundary(grid.edge(e)) {
                    s += dual[e];
                    k += 1;
                }
            }
            if k > 0 {
                curl2 += w * cabs2(s).as_f64() / (k * k) as f64;
            }
        }
    }
    Ok((he * he + l2h * l2h + curl2).sqrt())
}

/// Dispatches on the norm kind; `BoundaryHs` requires a trace and weights, the volume
/// norms require a region.
pub fn norm<T: Real>(
    field: Field<'_, T>,
    region: Option<&Region<T>>,
    weights: Option<&NormWeights<T>>,
    kind: NormKind,
) -> Result<f64, AnalysisError> {
    match (kind, field) {
        (NormKind::BoundaryHs, Field::Trace(v)) => {
            let w = weights.ok_or(AnalysisError::KindMismatch("boundary norm needs norm weights"))?;
            if v.len() != w.v_len() {
                return Err(AnalysisError::KindMismatch("trace length differs from the patch"));
            }
            Ok(w.norm_v(v).as_f64())
        }
        (NormKind::BoundaryHs, _) => Err(AnalysisError::KindMismatch("boundary norm applies to traces only")),
        (_, Field::Trace(_)) => Err(AnalysisError::KindMismatch("volume norm of a trace")),
        (k, f) => {
            let r = region.ok_or(AnalysisError::KindMismatch("volume norm needs a region"))?;
            match (k, f) {
                (NormKind::Lp(p), Field::Electric(e)) => lp_norm(r, e, None, p),
                (NormKind::Lp(p), Field::Pair(f)) => lp_norm(r, &f.e, Some(&f.h), p),
                (NormKind::Hcurl, Field::Electric(e)) => hcurl_norm_e(r, e),
                (NormKind::Hcurl, Field::Pair(f)) => hcurl_norm_pair(r, f),
                _ => unreachable!("handled above"),
            }
        }
    }
}
