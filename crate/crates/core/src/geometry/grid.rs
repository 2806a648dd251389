use crate::error::GeometryError;
use crate::scalar::Real;

/// Coordinate axis.
pub const AXES: [usize; 3] = [0, 1, 2];

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 4;

/// Edge of the staggered mesh: direction `dir`, integer position `idx`.
/// Along `dir` the index counts cells, along the other two axes it counts nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub dir: usize,
    pub idx: [usize; 3],
}

/// Face of the staggered mesh with normal `dir`. Along `dir` the index counts
/// nodes, along the other two axes it counts cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Face {
    pub dir: usize,
    pub idx: [usize; 3],
}

/// Uniform Cartesian staggered grid. E lives on edges, H on faces.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    n: [usize; 3],
    h: T,
    origin: [T; 3],
    edge_off: [usize; 4],
    face_off: [usize; 4],
}

fn edge_ext(n: [usize; 3], d: usize) -> [usize; 3] {
    let mut e = [n[0] + 1, n[1] + 1, n[2] + 1];
    e[d] = n[d];
    e
}

fn face_ext(n: [usize; 3], d: usize) -> [usize; 3] {
    let mut e = n;
    e[d] = n[d] + 1;
    e
}

#[inline]
fn flat(ext: [usize; 3], i: [usize; 3]) -> usize {
    i[0] + ext[0] * (i[1] + ext[1] * i[2])
}

#[inline]
fn unflat(ext: [usize; 3], mut k: usize) -> [usize; 3] {
    let i = k % ext[0];
    k /= ext[0];
    let j = k % ext[1];
    [i, j, k / ext[1]]
}

impl<T: Real> Grid<T> {
    /// Builds a grid with `n` cells per axis, spacing `h` and lower corner `origin`.
    pub fn new(n: [usize; 3], h: T, origin: [T; 3]) -> Result<Self, GeometryError> {
        if let Some(axis) = AXES.into_iter().find(|&a| n[a] < MIN_CELLS) {
            return Err(GeometryError::AxisTooSmall {
                axis,
                n: n[axis],
                min: MIN_CELLS,
            });
        }
        if !(h > T::zero()) || !h.is_finite_value() {
            return Err(GeometryError::BadSpacing(h.as_f64()));
        }
        let mut edge_off = [0; 4];
        let mut face_off = [0; 4];
        for d in AXES {
            let e = edge_ext(n, d);
            let f = face_ext(n, d);
            edge_off[d + 1] = edge_off[d] + e[0] * e[1] * e[2];
            face_off[d + 1] = face_off[d] + f[0] * f[1] * f[2];
        }
        Ok(Grid {
            n,
            h,
            origin,
            edge_off,
            face_off,
        })
    }

    /// Unit-cube style grid `n³` with spacing `1/n` at the origin.
    pub fn unit_cube(n: usize) -> Result<Self, GeometryError> {
        Self::new([n; 3], T::one() / T::usize(n), [T::zero(); 3])
    }

    pub fn n(&self) -> [usize; 3] {
        self.n
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn origin(&self) -> [T; 3] {
        self.origin
    }

    /// Upper corner of the box.
    pub fn upper(&self) -> [T; 3] {
        let mut u = self.origin;
        for a in AXES {
            u[a] += self.h * T::usize(self.n[a]);
        }
        u
    }

    pub fn cell_volume(&self) -> T {
        self.h * self.h * self.h
    }

    pub fn volume(&self) -> T {
        self.cell_volume() * T::usize(self.cell_count())
    }

    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn node_count(&self) -> usize {
        (self.n[0] + 1) * (self.n[1] + 1) * (self.n[2] + 1)
    }

    pub fn edge_count(&self) -> usize {
        self.edge_off[3]
    }

    /// Number of edges of direction `d` (x-edges: `nx(ny+1)(nz+1)`).
    pub fn edge_count_dir(&self, d: usize) -> usize {
        self.edge_off[d + 1] - self.edge_off[d]
    }

    pub fn face_count(&self) -> usize {
        self.face_off[3]
    }

    pub fn face_count_dir(&self, d: usize) -> usize {
        self.face_off[d + 1] - self.face_off[d]
    }

    pub fn edge_extent(&self, d: usize) -> [usize; 3] {
        edge_ext(self.n, d)
    }

    pub fn face_extent(&self, d: usize) -> [usize; 3] {
        face_ext(self.n, d)
    }

    #[inline]
    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        flat(self.n, c)
    }

    #[inline]
    pub fn cell(&self, k: usize) -> [usize; 3] {
        unflat(self.n, k)
    }

    #[inline]
    pub fn node_index(&self, p: [usize; 3]) -> usize {
        flat([self.n[0] + 1, self.n[1] + 1, self.n[2] + 1], p)
    }

    #[inline]
    pub fn edge_index(&self, e: Edge) -> usize {
        self.edge_off[e.dir] + flat(edge_ext(self.n, e.dir), e.idx)
    }

    #[inline]
    pub fn edge(&self, k: usize) -> Edge {
        let dir = (0..3)
            .find(|&d| k < self.edge_off[d + 1])
            .expect("edge index in range");
        Edge {
            dir,
            idx: unflat(edge_ext(self.n, dir), k - self.edge_off[dir]),
        }
    }

    #[inline]
    pub fn face_index(&self, f: Face) -> usize {
        self.face_off[f.dir] + flat(face_ext(self.n, f.dir), f.idx)
    }

    #[inline]
    pub fn face(&self, k: usize) -> Face {
        let dir = (0..3)
            .find(|&d| k < self.face_off[d + 1])
            .expect("face index in range");
        Face {
            dir,
            idx: unflat(face_ext(self.n, dir), k - self.face_off[dir]),
        }
    }

    /// Edge index when the position is inside the grid.
    pub fn try_edge_index(&self, dir: usize, idx: [isize; 3]) -> Option<usize> {
        let ext = edge_ext(self.n, dir);
        let mut u = [0usize; 3];
        for a in AXES {
            if idx[a] < 0 || idx[a] as usize >= ext[a] {
                return None;
            }
            u[a] = idx[a] as usize;
        }
        Some(self.edge_index(Edge { dir, idx: u }))
    }

    /// Whether the edge lies in a boundary plane of the box.
    pub fn edge_on_boundary(&self, e: Edge) -> bool {
        AXES.into_iter()
            .any(|a| a != e.dir && (e.idx[a] == 0 || e.idx[a] == self.n[a]))
    }

    pub fn face_on_boundary(&self, f: Face) -> bool {
        f.idx[f.dir] == 0 || f.idx[f.dir] == self.n[f.dir]
    }

    /// Physical coordinates of the edge midpoint.
    pub fn edge_midpoint(&self, e: Edge) -> [T; 3] {
        let half = T::lit(0.5);
        let mut p = [T::zero(); 3];
        for a in AXES {
            let off = if a == e.dir { half } else { T::zero() };
            p[a] = self.origin[a] + self.h * (T::usize(e.idx[a]) + off);
        }
        p
    }

    /// Physical coordinates of the face center.
    pub fn face_center(&self, f: Face) -> [T; 3] {
        let half = T::lit(0.5);
        let mut p = [T::zero(); 3];
        for a in AXES {
            let off = if a == f.dir { T::zero() } else { half };
            p[a] = self.origin[a] + self.h * (T::usize(f.idx[a]) + off);
        }
        p
    }

    pub fn cell_center(&self, c: [usize; 3]) -> [T; 3] {
        let half = T::lit(0.5);
        let mut p = [T::zero(); 3];
        for a in AXES {
            p[a] = self.origin[a] + self.h * (T::usize(c[a]) + half);
        }
        p
    }

    pub fn node_position(&self, p: [usize; 3]) -> [T; 3] {
        let mut x = [T::zero(); 3];
        for a in AXES {
            x[a] = self.origin[a] + self.h * T::usize(p[a]);
        }
        x
    }

    /// Edge of direction `d` touching corner `s ∈ {0,1}³` of cell `c`.
    #[inline]
    pub fn cell_corner_edge(&self, c: [usize; 3], s: [usize; 3], d: usize) -> usize {
        let mut idx = [c[0] + s[0], c[1] + s[1], c[2] + s[2]];
        idx[d] = c[d];
        self.edge_index(Edge { dir: d, idx })
    }

    /// Face of normal `d` touching corner `s ∈ {0,1}³` of cell `c`.
    #[inline]
    pub fn cell_corner_face(&self, c: [usize; 3], s: [usize; 3], d: usize) -> usize {
        let mut idx = c;
        idx[d] = c[d] + s[d];
        self.face_index(Face { dir: d, idx })
    }

    /// The 12 edges of a cell, ordered by direction then by the two transverse offsets.
    pub fn cell_edges(&self, c: [usize; 3]) -> [usize; 12] {
        let mut out = [0; 12];
        let mut k = 0;
        for d in AXES {
            let a = (d + 1) % 3;
            let b = (d + 2) % 3;
            for sb in 0..2 {
                for sa in 0..2 {
                    let mut idx = c;
                    idx[a] += sa;
                    idx[b] += sb;
                    out[k] = self.edge_index(Edge { dir: d, idx });
                    k += 1;
                }
            }
        }
        out
    }

    /// The 6 faces of a cell: (normal d, low side), (normal d, high side) for d = x, y, z.
    pub fn cell_faces(&self, c: [usize; 3]) -> [usize; 6] {
        let mut out = [0; 6];
        for d in AXES {
            for s in 0..2 {
                let mut idx = c;
                idx[d] += s;
                out[2 * d + s] = self.face_index(Face { dir: d, idx });
            }
        }
        out
    }

    /// Cells adjacent to an edge (up to 4).
    pub fn edge_cells(&self, e: Edge) -> Vec<[usize; 3]> {
        let a = (e.dir + 1) % 3;
        let b = (e.dir + 2) % 3;
        let mut out = Vec::with_capacity(4);
        for db in 0..2usize {
            for da in 0..2usize {
                if e.idx[a] + da < 1 || e.idx[b] + db < 1 {
                    continue;
                }
                let ca = e.idx[a] + da - 1;
                let cb = e.idx[b] + db - 1;
                if ca >= self.n[a] || cb >= self.n[b] {
                    continue;
                }
                let mut c = e.idx;
                c[a] = ca;
                c[b] = cb;
                out.push(c);
            }
        }
        out
    }

    /// Cells adjacent to a face (1 or 2).
    pub fn face_cells(&self, f: Face) -> Vec<[usize; 3]> {
        let d = f.dir;
        let mut out = Vec::with_capacity(2);
        if f.idx[d] > 0 {
            let mut c = f.idx;
            c[d] -= 1;
            out.push(c);
        }
        if f.idx[d] < self.n[d] {
            out.push(f.idx);
        }
        out
    }

    /// Cell containing a point, clamped to the grid. `None` outside the box.
    pub fn locate(&self, x: [T; 3]) -> Option<[usize; 3]> {
        let mut c = [0; 3];
        for a in AXES {
            let s = ((x[a] - self.origin[a]) / self.h).as_f64();
            if s < 0.0 || s > self.n[a] as f64 {
                return None;
            }
            c[a] = (s.floor() as usize).min(self.n[a] - 1);
        }
        Some(c)
    }

    /// Whether a point lies in the closed box.
    pub fn contains_point(&self, x: [T; 3]) -> bool {
        let u = self.upper();
        AXES.into_iter()
            .all(|a| x[a] >= self.origin[a] && x[a] <= u[a])
    }

    /// Euclidean distance from a point to the box complement (0 outside).
    pub fn distance_to_boundary(&self, x: [T; 3]) -> T {
        let u = self.upper();
        let mut d: Option<T> = None;
        for a in AXES {
            let da = (x[a] - self.origin[a]).min(u[a] - x[a]);
            d = Some(match d {
                None => da,
                Some(v) => v.min(da),
            });
        }
        d.unwrap_or_else(T::zero).max(T::zero())
    }

    /// Identity mass of an edge: `h³` times the fraction of its cell neighbourhood inside the box.
    pub fn edge_volume_weight(&self, e: Edge) -> T {
        self.cell_volume() * T::usize(self.edge_cells(e).len()) / T::lit(4.0)
    }

    /// Identity mass of a face: `h³` interior, `h³/2` on the boundary.
    pub fn face_volume_weight(&self, f: Face) -> T {
        self.cell_volume() * T::usize(self.face_cells(f).len()) / T::lit(2.0)
    }

    /// Per-edge identity masses for all edges.
    pub fn edge_weights(&self) -> Vec<T> {
        (0..self.edge_count())
            .map(|k| self.edge_volume_weight(self.edge(k)))
            .collect()
    }

    pub fn face_weights(&self) -> Vec<T> {
        (0..self.face_count())
            .map(|k| self.face_volume_weight(self.face(k)))
            .collect()
    }

    /// Provenance bytes: cell counts, spacing, origin.
    pub fn fingerprint(&self, hasher: &mut crate::scalar::Fnv1a) {
        for a in AXES {
            hasher.write_u64(self.n[a] as u64);
        }
        hasher.write_f64(self.h.as_f64());
        for a in AXES {
            hasher.write_f64(self.origin[a].as_f64());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn x_edge_count_8() {
        let g = Grid::<f64>::new([8, 8, 8], 0.125, [0.0; 3]).unwrap();
        assert_eq!(g.edge_count_dir(0), 648);
        assert_eq!(g.edge_count(), 3 * 648);
        assert_eq!(g.face_count_dir(0), 9 * 64);
    }

    #[test]
    fn side_is_4h() {
        let g = Grid::<f64>::new([4, 4, 4], 0.3, [1.0, 2.0, 3.0]).unwrap();
        let u = g.upper();
        for a in AXES {
            assert!((u[a] - g.origin()[a] - 1.2).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_small_axis() {
        assert!(matches!(
            Grid::<f64>::new([3, 8, 8], 0.1, [0.0; 3]),
            Err(GeometryError::AxisTooSmall { axis: 0, .. })
        ));
        assert!(Grid::<f64>::new([4, 4, 4], 0.0, [0.0; 3]).is_err());
    }

    #[test]
    fn index_bijection() {
        let g = Grid::<f64>::new([4, 5, 6], 0.1, [0.0; 3]).unwrap();
        for k in 0..g.edge_count() {
            assert_eq!(g.edge_index(g.edge(k)), k);
        }
        for k in 0..g.face_count() {
            assert_eq!(g.face_index(g.face(k)), k);
        }
        for k in 0..g.cell_count() {
            assert_eq!(g.cell_index(g.cell(k)), k);
        }
    }

    #[test]
    fn adjacency_counts() {
        let g = Grid::<f64>::unit_cube(4).unwrap();
        let mut per_edge = vec![0usize; g.edge_count()];
        let mut per_face = vec![0usize; g.face_count()];
        for k in 0..g.cell_count() {
            let c = g.cell(k);
            for e in g.cell_edges(c) {
                per_edge[e] += 1;
            }
            for f in g.cell_faces(c) {
                per_face[f] += 1;
            }
        }
        for (k, &n) in per_edge.iter().enumerate() {
            assert_eq!(n, g.edge_cells(g.edge(k)).len());
        }
        for (k, &n) in per_face.iter().enumerate() {
            assert_eq!(n, g.face_cells(g.face(k)).len());
        }
        let total: f64 = g.edge_weights().iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }
}
