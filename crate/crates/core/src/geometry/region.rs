use serde::{Deserialize, Serialize};

use super::grid::{Edge, Face, Grid, AXES};
use crate::error::GeometryError;
use crate::scalar::Real;

/// Role a region plays in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Omega,
    SubdomainA,
    ExclusionD,
    ProbeG,
    Ball,
    Margin,
}

/// Shape algebra evaluated at cell centers. Coordinates are physical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    All,
    Ball {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        lo: [f64; 3],
        hi: [f64; 3],
    },
    Union {
        parts: Vec<Shape>,
    },
    Intersection {
        parts: Vec<Shape>,
    },
    /// Complement inside Ω.
    Complement {
        of: Box<Shape>,
    },
}

impl Shape {
    pub fn contains(&self, x: [f64; 3]) -> bool {
        match self {
            Shape::All => true,
            Shape::Ball { center, radius } => {
                let d2: f64 = AXES.iter().map(|&a| (x[a] - center[a]).powi(2)).sum();
                d2 <= radius * radius && *radius > 0.0
            }
            Shape::Box { lo, hi } => AXES.iter().all(|&a| x[a] >= lo[a] && x[a] <= hi[a]),
            Shape::Union { parts } => parts.iter().any(|s| s.contains(x)),
            Shape::Intersection { parts } => {
                !parts.is_empty() && parts.iter().all(|s| s.contains(x))
            }
            Shape::Complement { of } => !of.contains(x),
        }
    }
}

/// Voxel subset of a grid selected by cell-center membership.
#[derive(Clone, Debug, PartialEq)]
pub struct Region<T> {
    grid: Grid<T>,
    mask: Vec<bool>,
    role: Role,
    count: usize,
}

impl<T: Real> Region<T> {
    pub fn from_mask(grid: &Grid<T>, mask: Vec<bool>, role: Role) -> Result<Self, GeometryError> {
        assert_eq!(
            mask.len(),
            grid.cell_count(),
            "mask length must match cell count"
        );
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(GeometryError::EmptyRegion);
        }
        Ok(Region {
            grid: grid.clone(),
            mask,
            role,
            count,
        })
    }

    /// All cells of the grid.
    pub fn omega(grid: &Grid<T>) -> Self {
        Self::from_mask(grid, vec![true; grid.cell_count()], Role::Omega).expect("grid is nonempty")
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn cell_count(&self) -> usize {
        self.count
    }

    pub fn volume(&self) -> T {
        self.grid.cell_volume() * T::usize(self.count)
    }

    #[inline]
    pub fn contains_cell(&self, c: [usize; 3]) -> bool {
        self.mask[self.grid.cell_index(c)]
    }

    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(k, _)| self.grid.cell(k))
    }

    pub fn is_subset_of(&self, other: &Region<T>) -> bool {
        self.mask.len() == other.mask.len()
            && self.mask.iter().zip(&other.mask).all(|(a, b)| !a || *b)
    }

    pub fn intersects(&self, other: &Region<T>) -> bool {
        self.mask.iter().zip(&other.mask).any(|(a, b)| *a && *b)
    }

    pub fn union(&self, other: &Region<T>) -> Region<T> {
        let mask = self
            .mask
            .iter()
            .zip(&other.mask)
            .map(|(a, b)| *a || *b)
            .collect();
        Region::from_mask(&self.grid, mask, self.role).expect("union of nonempty regions")
    }

    /// Sorted edge indices of the closure of the region.
    pub fn edges(&self) -> Vec<usize> {
        let mut hit = vec![false; self.grid.edge_count()];
        for c in self.cells() {
            for e in self.grid.cell_edges(c) {
                hit[e] = true;
            }
        }
        hit.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| k)
            .collect()
    }

    /// Sorted face indices of the closure of the region.
    pub fn faces(&self) -> Vec<usize> {
        let mut hit = vec![false; self.grid.face_count()];
        for c in self.cells() {
            for f in self.grid.cell_faces(c) {
                hit[f] = true;
            }
        }
        hit.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| k)
            .collect()
    }

    /// Quadrature weight of an edge restricted to the region: `h³/4` per region cell.
    pub fn edge_weight(&self, e: Edge) -> T {
        let n = self
            .grid
            .edge_cells(e)
            .into_iter()
            .filter(|&c| self.contains_cell(c))
            .count();
        self.grid.cell_volume() * T::usize(n) / T::lit(4.0)
    }

    /// Quadrature weight of a face restricted to the region: `h³/2` per region cell.
    pub fn face_weight(&self, f: Face) -> T {
        let n = self
            .grid
            .face_cells(f)
            .into_iter()
            .filter(|&c| self.contains_cell(c))
            .count();
        self.grid.cell_volume() * T::usize(n) / T::lit(2.0)
    }

    /// At least one cell of clearance from the grid boundary.
    pub fn is_compactly_contained(&self) -> bool {
        let n = self.grid.n();
        self.cells()
            .all(|c| AXES.into_iter().all(|a| c[a] >= 1 && c[a] + 2 <= n[a]))
    }

    /// Number of 6-connected components of the complement of the region in the grid.
    pub fn complement_components(&self) -> usize {
        let n = self.grid.n();
        let mut seen = self.mask.clone();
        let mut comps = 0;
        let mut stack = Vec::new();
        for start in 0..seen.len() {
            if seen[start] {
                continue;
            }
            comps += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let c = self.grid.cell(k);
                for a in AXES {
                    for up in [false, true] {
                        let mut d = c;
                        if up {
                            if c[a] + 1 >= n[a] {
                                continue;
                            }
                            d[a] += 1;
                        } else {
                            if c[a] == 0 {
                                continue;
                            }
                            d[a] -= 1;
                        }
                        let kd = self.grid.cell_index(d);
                        if !seen[kd] {
                            seen[kd] = true;
                            stack.push(kd);
                        }
                    }
                }
            }
        }
        comps
    }

    pub fn complement_connected(&self) -> bool {
        self.complement_components() <= 1
    }

    /// Whether the closed ball `B(x, r)` lies inside the union of the region's closed voxels.
    pub fn contains_ball(&self, x: [T; 3], r: T) -> bool {
        if !self.grid.contains_point(x) || self.grid.distance_to_boundary(x) < r {
            return false;
        }
        self.nearest_complement_voxel(x, r).map_or(true, |d| d >= r)
    }

    /// Distance from `x` to the nearest voxel outside the region within search radius `r`.
    fn nearest_complement_voxel(&self, x: [T; 3], r: T) -> Option<T> {
        let g = &self.grid;
        let n = g.n();
        let h = g.h();
        let o = g.origin();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in AXES {
            let s = ((x[a] - o[a] - r) / h).as_f64().floor().max(0.0) as usize;
            let e = ((x[a] - o[a] + r) / h).as_f64().floor().max(0.0) as usize;
            lo[a] = s.min(n[a] - 1);
            hi[a] = e.min(n[a] - 1);
        }
        let mut best: Option<T> = None;
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let c = [i, j, k];
                    if self.contains_cell(c) {
                        continue;
                    }
                    let mut d2 = T::zero();
                    for a in AXES {
                        let l = o[a] + h * T::usize(c[a]);
                        let u = l + h;
                        let t = if x[a] < l {
                            l - x[a]
                        } else if x[a] > u {
                            x[a] - u
                        } else {
                            T::zero()
                        };
                        d2 += t * t;
                    }
                    let d = d2.sqrt();
                    best = Some(best.map_or(d, |b: T| b.min(d)));
                }
            }
        }
        best
    }

    /// Distance from `x` to the complement of the region (box exterior included),
    /// capped at `cap`.
    pub fn distance_to_complement(&self, x: [T; 3], cap: T) -> T {
        let db = self.grid.distance_to_boundary(x);
        let r = cap.min(db);
        match self.nearest_complement_voxel(x, r) {
            Some(d) => d.min(db).min(cap),
            None => db.min(cap),
        }
    }

    /// Smallest axis-aligned box (physical) containing the region's voxels.
    pub fn bounding_box(&self) -> ([T; 3], [T; 3]) {
        let g = &self.grid;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for c in self.cells() {
            for a in AXES {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a] + 1);
            }
        }
        (g.node_position(lo), g.node_position(hi))
    }

    /// Diameter of the bounding box.
    pub fn diameter(&self) -> T {
        let (lo, hi) = self.bounding_box();
        AXES.iter()
            .fold(T::zero(), |s, &a| s + (hi[a] - lo[a]) * (hi[a] - lo[a]))
            .sqrt()
    }

    pub fn fingerprint(&self, hasher: &mut crate::scalar::Fnv1a) {
        self.grid.fingerprint(hasher);
        let mut byte = 0u8;
        for (k, &m) in self.mask.iter().enumerate() {
            byte |= u8::from(m) << (k % 8);
            if k % 8 == 7 {
                hasher.write(&[byte]);
                byte = 0;
            }
        }
        hasher.write(&[byte]);
    }
}

/// Voxelizes a shape by the cell-center test.
pub fn carve_region<T: Real>(
    grid: &Grid<T>,
    shape: &Shape,
    role: Role,
) -> Result<Region<T>, GeometryError> {
    let mask = (0..grid.cell_count())
        .map(|k| {
            let x = grid.cell_center(grid.cell(k));
            shape.contains([x[0].as_f64(), x[1].as_f64(), x[2].as_f64()])
        })
        .collect();
    Region::from_mask(grid, mask, role)
}

/// Cells of `region` whose centers are farther than `r` from the region's complement.
pub fn interior_margin<T: Real>(region: &Region<T>, r: T) -> Result<Region<T>, GeometryError> {
    if r < T::zero() {
        return Err(GeometryError::BadRadius(r.as_f64()));
    }
    let g = region.grid();
    let cap = r + g.h();
    let mask = (0..g.cell_count())
        .map(|k| region.mask[k] && region.distance_to_complement(g.cell_center(g.cell(k)), cap) > r)
        .collect();
    Region::from_mask(g, mask, Role::Margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g8() -> Grid<f64> {
        Grid::unit_cube(8).unwrap()
    }

    #[test]
    fn ball_matches_brute_force() {
        let g = g8();
        let ball = Shape::Ball {
            center: [0.5; 3],
            radius: 0.3,
        };
        let r = carve_region(&g, &ball, Role::Ball).unwrap();
        let mut brute = 0;
        for k in 0..g.cell_count() {
            let x = g.cell_center(g.cell(k));
            let d2: f64 = (0..3).map(|a| (x[a] - 0.5) * (x[a] - 0.5)).sum();
            if d2.sqrt() <= 0.3 {
                brute += 1;
            }
        }
        assert_eq!(r.cell_count(), brute);
        assert_eq!(brute, 56);
    }

    #[test]
    fn full_box_and_empty_ball() {
        let g = g8();
        let all = carve_region(
            &g,
            &Shape::Box {
                lo: [0.0; 3],
                hi: [1.0; 3],
            },
            Role::Omega,
        )
        .unwrap();
        assert_eq!(all.cell_count(), 512);
        let empty = carve_region(
            &g,
            &Shape::Ball {
                center: [0.5; 3],
                radius: 0.0,
            },
            Role::Ball,
        );
        assert!(matches!(empty, Err(GeometryError::EmptyRegion)));
    }

    #[test]
    fn complement_shape() {
        let g = g8();
        let inner = Shape::Box {
            lo: [0.25; 3],
            hi: [0.75; 3],
        };
        let r = carve_region(
            &g,
            &Shape::Complement {
                of: Box::new(inner),
            },
            Role::Omega,
        )
        .unwrap();
        assert_eq!(r.cell_count(), 512 - 64);
        assert_eq!(r.complement_components(), 1);
        assert!(!r.is_compactly_contained());
    }

    #[test]
    fn margin_central_cube() {
        let g = g8();
        let omega = Region::omega(&g);
        let m = interior_margin(&omega, 0.25).unwrap();
        assert_eq!(m.cell_count(), 64);
        let full = interior_margin(&omega, 1e-9).unwrap();
        assert_eq!(full.cell_count(), 512);
        assert!(matches!(
            interior_margin(&omega, 0.6),
            Err(GeometryError::EmptyRegion)
        ));
    }

    #[test]
    fn shell_disconnects_complement() {
        let g = g8();
        let outer = Shape::Box {
            lo: [0.2; 3],
            hi: [0.8; 3],
        };
        let inner = Shape::Box {
            lo: [0.4; 3],
            hi: [0.6; 3],
        };
        let shell = Shape::Intersection {
            parts: vec![
                outer,
                Shape::Complement {
                    of: Box::new(inner),
                },
            ],
        };
        let r = carve_region(&g, &shell, Role::SubdomainA).unwrap();
        assert_eq!(r.complement_components(), 2);
        assert!(r.is_compactly_contained());
    }

    #[test]
    fn ball_containment() {
        let g = g8();
        let omega = Region::omega(&g);
        assert!(omega.contains_ball([0.5; 3], 0.5));
        assert!(!omega.contains_ball([0.5; 3], 0.51));
        let hole = carve_region(
            &g,
            &Shape::Complement {
                of: Box::new(Shape::Box {
                    lo: [0.4; 3],
                    hi: [0.6; 3],
                }),
            },
            Role::Omega,
        )
        .unwrap();
        assert!(!hole.contains_ball([0.3, 0.5, 0.5], 0.2));
        assert!(hole.contains_ball([0.3, 0.5, 0.5], 0.05));
    }
}
