use serde::{Deserialize, Serialize};

use super::grid::{Edge, Face, Grid};
use crate::error::GeometryError;
use crate::scalar::Real;

/// One of the six sides of the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "x-")]
    XMinus,
    #[serde(rename = "x+")]
    XPlus,
    #[serde(rename = "y-")]
    YMinus,
    #[serde(rename = "y+")]
    YPlus,
    #[serde(rename = "z-")]
    ZMinus,
    #[serde(rename = "z+")]
    ZPlus,
}

impl Side {
    pub const ALL: [Side; 6] = [
        Side::XMinus,
        Side::XPlus,
        Side::YMinus,
        Side::YPlus,
        Side::ZMinus,
        Side::ZPlus,
    ];

    pub fn axis(self) -> usize {
        match self {
            Side::XMinus | Side::XPlus => 0,
            Side::YMinus | Side::YPlus => 1,
            Side::ZMinus | Side::ZPlus => 2,
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Side::XPlus | Side::YPlus | Side::ZPlus)
    }

    /// Tangential axes in cyclic order.
    pub fn tangential_axes(self) -> [usize; 2] {
        let d = self.axis();
        [(d + 1) % 3, (d + 2) % 3]
    }
}

/// Rectangle in the tangential coordinates of a side, ordered as `Side::tangential_axes`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

/// Whether edges on the rim of the patch are kept as unknowns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rim {
    #[default]
    Exclude,
    Include,
}

/// A side plus an optional window; no window means the full side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub side: Side,
    #[serde(default)]
    pub window: Option<Window>,
}

/// Set of boundary faces with their tangential edge dofs.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPatch<T> {
    grid: Grid<T>,
    faces: Vec<usize>,
    dofs: Vec<usize>,
    area: Vec<T>,
}

impl<T: Real> BoundaryPatch<T> {
    /// Builds a patch from explicit boundary faces (duplicates removed).
    pub fn from_faces(grid: &Grid<T>, mut faces: Vec<usize>) -> Result<Self, GeometryError> {
        faces.sort_unstable();
        faces.dedup();
        if faces.is_empty() {
            return Err(GeometryError::EmptyPatch);
        }
        if let Some(&f) = faces
            .iter()
            .find(|&&f| !grid.face_on_boundary(grid.face(f)))
        {
            return Err(GeometryError::FaceNotOnBoundary(f));
        }
        let h2 = grid.h() * grid.h();
        let half = T::lit(0.5);
        let mut acc: Vec<(usize, T)> = Vec::with_capacity(4 * faces.len());
        for &f in &faces {
            for e in face_edges(grid, grid.face(f)) {
                acc.push((e, h2 * half));
            }
        }
        acc.sort_by_key(|p| p.0);
        let mut dofs = Vec::new();
        let mut area: Vec<T> = Vec::new();
        for (e, w) in acc {
            if dofs.last() == Some(&e) {
                *area.last_mut().expect("nonempty") += w;
            } else {
                dofs.push(e);
                area.push(w);
            }
        }
        Ok(BoundaryPatch {
            grid: grid.clone(),
            faces,
            dofs,
            area,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn faces(&self) -> &[usize] {
        &self.faces
    }

    /// Sorted tangential edge indices.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    /// Boundary area attached to each dof (`h²/2` per listed face containing it).
    pub fn area(&self) -> &[T] {
        &self.area
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn position(&self, edge: usize) -> Option<usize> {
        self.dofs.binary_search(&edge).ok()
    }

    /// Number of listed faces containing each dof.
    pub fn face_multiplicity(&self) -> Vec<usize> {
        let unit = self.grid.h() * self.grid.h() * T::lit(0.5);
        self.area
            .iter()
            .map(|a| (*a / unit).as_f64().round() as usize)
            .collect()
    }

    /// Drops the dofs lying on the rim of the patch (contained in only one listed face).
    pub fn without_rim(&self) -> Result<Self, GeometryError> {
        let mult = self.face_multiplicity();
        let mut dofs = Vec::new();
        let mut area = Vec::new();
        for (k, &m) in mult.iter().enumerate() {
            if m >= 2 {
                dofs.push(self.dofs[k]);
                area.push(self.area[k]);
            }
        }
        if dofs.is_empty() {
            return Err(GeometryError::EmptyPatch);
        }
        Ok(BoundaryPatch {
            grid: self.grid.clone(),
            faces: self.faces.clone(),
            dofs,
            area,
        })
    }

    pub fn with_rim(&self, rim: Rim) -> Result<Self, GeometryError> {
        match rim {
            Rim::Include => Ok(self.clone()),
            Rim::Exclude => self.without_rim(),
        }
    }

    pub fn union(&self, other: &BoundaryPatch<T>) -> Result<Self, GeometryError> {
        let mut faces = self.faces.clone();
        faces.extend_from_slice(&other.faces);
        Self::from_faces(&self.grid, faces)
    }

    /// Pairs of parallel dofs that are opposite edges of a listed face.
    pub fn adjacency(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &f in &self.faces {
            let e = face_edges(&self.grid, self.grid.face(f));
            for (a, b) in [(e[0], e[2]), (e[1], e[3])] {
                if let (Some(i), Some(j)) = (self.position(a), self.position(b)) {
                    out.push((i.min(j), i.max(j)));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Outward unit normal of a boundary face.
    pub fn outward_normal(&self, face: usize) -> [T; 3] {
        let f = self.grid.face(face);
        let mut n = [T::zero(); 3];
        n[f.dir] = if f.idx[f.dir] == 0 {
            -T::one()
        } else {
            T::one()
        };
        n
    }

    pub fn fingerprint(&self, hasher: &mut crate::scalar::Fnv1a) {
        hasher.write_u64(self.dofs.len() as u64);
        for &d in &self.dofs {
            hasher.write_u64(d as u64);
        }
        for &f in &self.faces {
            hasher.write_u64(f as u64);
        }
    }
}

/// The four edges of a face in cyclic order: (a-edge low b), (b-edge high a), (a-edge high b), (b-edge low a).
pub fn face_edges<T: Real>(grid: &Grid<T>, f: Face) -> [usize; 4] {
    let d = f.dir;
    let a = (d + 1) % 3;
    let b = (d + 2) % 3;
    let mut p = f.idx;
    let e0 = grid.edge_index(Edge { dir: a, idx: p });
    p[a] += 1;
    let e1 = grid.edge_index(Edge { dir: b, idx: p });
    let mut q = f.idx;
    q[b] += 1;
    let e2 = grid.edge_index(Edge { dir: a, idx: q });
    let e3 = grid.edge_index(Edge { dir: b, idx: f.idx });
    [e0, e1, e2, e3]
}

/// Boundary faces of one side, optionally restricted to a window (face centers inside).
pub fn side_faces<T: Real>(grid: &Grid<T>, spec: &PatchSpec) -> Vec<usize> {
    let d = spec.side.axis();
    let [a, b] = spec.side.tangential_axes();
    let n = grid.n();
    let plane = if spec.side.is_upper() { n[d] } else { 0 };
    let mut out = Vec::new();
    for jb in 0..n[b] {
        for ja in 0..n[a] {
            let mut idx = [0; 3];
            idx[d] = plane;
            idx[a] = ja;
            idx[b] = jb;
            let f = Face { dir: d, idx };
            if let Some(w) = &spec.window {
                let x = grid.face_center(f);
                let (xa, xb) = (x[a].as_f64(), x[b].as_f64());
                if xa < w.lo[0] || xa > w.hi[0] || xb < w.lo[1] || xb > w.hi[1] {
                    continue;
                }
            }
            out.push(grid.face_index(f));
        }
    }
    out
}

/// Tangential dofs of all boundary faces selected by the given specs (rim included).
pub fn boundary_patch<T: Real>(
    grid: &Grid<T>,
    specs: &[PatchSpec],
) -> Result<BoundaryPatch<T>, GeometryError> {
    let mut faces = Vec::new();
    for s in specs {
        let f = side_faces(grid, s);
        if f.is_empty() {
            return Err(GeometryError::WindowMissesSide(s.side));
        }
        faces.extend(f);
    }
    BoundaryPatch::from_faces(grid, faces)
}

/// The whole boundary of the box.
pub fn full_boundary<T: Real>(grid: &Grid<T>) -> BoundaryPatch<T> {
    let specs: Vec<PatchSpec> = Side::ALL
        .iter()
        .map(|&side| PatchSpec { side, window: None })
        .collect();
    boundary_patch(grid, &specs).expect("every side has faces")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_face_count() {
        let g = Grid::<f64>::unit_cube(8).unwrap();
        let p = boundary_patch(
            &g,
            &[PatchSpec {
                side: Side::XMinus,
                window: None,
            }],
        )
        .unwrap();
        assert_eq!(p.len(), 144);
        assert_eq!(p.faces().len(), 64);
        let inner = p.without_rim().unwrap();
        assert_eq!(inner.len(), 2 * 7 * 8);
    }

    #[test]
    fn single_face_window() {
        let g = Grid::<f64>::unit_cube(8).unwrap();
        let w = Window {
            lo: [0.5, 0.5],
            hi: [0.625, 0.625],
        };
        let p = boundary_patch(
            &g,
            &[PatchSpec {
                side: Side::ZPlus,
                window: Some(w),
            }],
        )
        .unwrap();
        assert_eq!(p.faces().len(), 1);
        assert_eq!(p.len(), 4);
        assert!(p.without_rim().is_err());
        for &e in p.dofs() {
            let e = g.edge(e);
            assert_eq!(e.idx[2], 8);
            assert!(g.edge_on_boundary(e));
        }
    }

    #[test]
    fn disjoint_window_errors() {
        let g = Grid::<f64>::unit_cube(8).unwrap();
        let w = Window {
            lo: [2.0, 2.0],
            hi: [3.0, 3.0],
        };
        assert!(boundary_patch(
            &g,
            &[PatchSpec {
                side: Side::YMinus,
                window: Some(w)
            }]
        )
        .is_err());
    }

    #[test]
    fn whole_boundary_has_all_boundary_edges() {
        let g = Grid::<f64>::unit_cube(4).unwrap();
        let p = full_boundary(&g);
        let expected = (0..g.edge_count())
            .filter(|&k| g.edge_on_boundary(g.edge(k)))
            .count();
        assert_eq!(p.len(), expected);
        assert_eq!(p.without_rim().unwrap().len(), expected);
        let total: f64 = p.area().iter().sum();
        assert!((total - 12.0).abs() < 1e-12);
    }
}
