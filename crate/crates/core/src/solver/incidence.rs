//! Integer incidence operators of the staggered grid: node → edge (grad),
//! edge → face (curl), face → cell (div). Generic over any ring so the identities
//! `curl ∘ grad = 0` and `div ∘ curl = 0` can be checked exactly.

use num_traits::Num;

use crate::geometry::{Edge, Face, Grid, AXES};
use crate::scalar::Real;

/// Forward difference of node values along every edge.
pub fn grad<T: Real, S: Num + Copy>(grid: &Grid<T>, phi: &[S]) -> Vec<S> {
    assert_eq!(phi.len(), grid.node_count());
    (0..grid.edge_count())
        .map(|k| {
            let e = grid.edge(k);
            let mut hi = e.idx;
            hi[e.dir] += 1;
            phi[grid.node_index(hi)] - phi[grid.node_index(e.idx)]
        })
        .collect()
}

/// Circulation of edge values around every face (counter-clockwise about the normal).
pub fn curl<T: Real, S: Num + Copy>(grid: &Grid<T>, e: &[S]) -> Vec<S> {
    assert_eq!(e.len(), grid.edge_count());
    (0..grid.face_count())
        .map(|k| {
            let f = grid.face(k);
            let [a0, b1, a1, b0] = crate::geometry::patch::face_edges(grid, f);
            (e[b1] - e[b0]) - (e[a1] - e[a0])
        })
        .collect()
}

/// Transpose of [`curl`]: face values scattered back to their edges.
pub fn curl_transpose<T: Real, S: Num + Copy>(grid: &Grid<T>, h: &[S]) -> Vec<S> {
    assert_eq!(h.len(), grid.face_count());
    let mut out = vec![S::zero(); grid.edge_count()];
    for (k, &v) in h.iter().enumerate() {
        let f = grid.face(k);
        let [a0, b1, a1, b0] = crate::geometry::patch::face_edges(grid, f);
        out[b1] = out[b1] + v;
        out[b0] = out[b0] - v;
        out[a1] = out[a1] - v;
        out[a0] = out[a0] + v;
    }
    out
}

/// Net outward flux of face values through every cell.
pub fn div<T: Real, S: Num + Copy>(grid: &Grid<T>, f: &[S]) -> Vec<S> {
    assert_eq!(f.len(), grid.face_count());
    (0..grid.cell_count())
        .map(|k| {
            let c = grid.cell(k);
            let mut acc = S::zero();
            for d in AXES {
                let mut hi = c;
                hi[d] += 1;
                acc = acc + f[grid.face_index(Face { dir: d, idx: hi })]
                    - f[grid.face_index(Face { dir: d, idx: c })];
            }
            acc
        })
        .collect()
}

/// Signed incidence entries of a face: `(edge, ±1)` in circulation order.
pub fn face_incidence<T: Real>(grid: &Grid<T>, f: Face) -> [(usize, i8); 4] {
    let [a0, b1, a1, b0] = crate::geometry::patch::face_edges(grid, f);
    [(a0, 1), (b1, 1), (a1, -1), (b0, -1)]
}

/// Edge tangent unit vector.
pub fn edge_tangent(e: Edge) -> [f64; 3] {
    let mut t = [0.0; 3];
    t[e.dir] = 1.0;
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn div_curl_and_curl_grad_vanish_exactly() {
        let g = Grid::<f64>::new([4, 5, 6], 0.1, [0.0; 3]).unwrap();
        let e: Vec<i64> = (0..g.edge_count() as i64)
            .map(|k| (k * 7919) % 101 - 50)
            .collect();
        assert!(div(&g, &curl(&g, &e)).iter().all(|&v| v == 0));
        let phi: Vec<Rational64> = (0..g.node_count() as i64)
            .map(|k| Rational64::new(k % 13 - 6, 1 + k % 7))
            .collect();
        assert!(curl(&g, &grad(&g, &phi))
            .iter()
            .all(|v| *v == Rational64::from_integer(0)));
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = Grid::<f64>::unit_cube(4).unwrap();
        let e: Vec<i64> = (0..g.edge_count() as i64).map(|k| k % 11 - 5).collect();
        let f: Vec<i64> = (0..g.face_count() as i64).map(|k| k % 5 - 2).collect();
        let ce = curl(&g, &e);
        let ctf = curl_transpose(&g, &f);
        let lhs: i64 = ce.iter().zip(&f).map(|(a, b)| a * b).sum();
        let rhs: i64 = e.iter().zip(&ctf).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn curl_of_linear_field() {
        // E = (−y, x, 0) sampled at edge midpoints has curl (0, 0, 2) everywhere.
        let g = Grid::<f64>::unit_cube(4).unwrap();
        let h = g.h();
        let e: Vec<f64> = (0..g.edge_count())
            .map(|k| {
                let ed = g.edge(k);
                let x = g.edge_midpoint(ed);
                [-x[1], x[0], 0.0][ed.dir] * h
            })
            .collect();
        let c = curl(&g, &e);
        for (k, v) in c.iter().enumerate() {
            let want = if g.face(k).dir == 2 { 2.0 * h * h } else { 0.0 };
            assert!((v - want).abs() < 1e-14);
        }
    }
}
