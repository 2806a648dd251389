use super::grid::AXES;
use super::region::Region;
use crate::error::GeometryError;
use crate::scalar::Real;

/// Relative slack used when comparing distances against `2·r1`.
const DIST_TOL: f64 = 1e-9;

/// Chain of balls along a path, every ball of radius `r3` inside the host.
#[derive(Clone, Debug, PartialEq)]
pub struct BallChain<T> {
    pub centers: Vec<[T; 3]>,
    pub r1: T,
    pub r2: T,
    pub r3: T,
    pub path: Vec<[T; 3]>,
    /// Arclength parameter of each center along the path.
    pub params: Vec<T>,
    /// Number of centers placed before extracting the chain.
    pub placed: usize,
}

impl<T: Real> BallChain<T> {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Smallest pairwise center distance (infinite for a single ball).
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                best = best.min(dist(self.centers[i], self.centers[j]).as_f64());
            }
        }
        best
    }

    /// Checks disjointness, nesting and the volume bound. Returns the first violated property.
    pub fn check_invariants(&self, host: &Region<T>) -> Result<(), GeometryError> {
        let two_r1 = (T::lit(2.0) * self.r1).as_f64();
        if self.min_separation() < two_r1 * (1.0 - DIST_TOL) {
            return Err(GeometryError::ChainInvariant("disjointness"));
        }
        for w in self.centers.windows(2) {
            let lhs = dist(w[0], w[1]).as_f64() + self.r1.as_f64();
            if lhs > self.r2.as_f64() * (1.0 + DIST_TOL) {
                return Err(GeometryError::ChainInvariant("nesting"));
            }
        }
        if (self.len() as f64) > volume_bound(host, self.r1) {
            return Err(GeometryError::ChainInvariant("volume bound"));
        }
        Ok(())
    }
}

/// `|host| / (|B_1| r1³) + 1`.
pub fn volume_bound<T: Real>(host: &Region<T>, r1: T) -> f64 {
    let r = r1.as_f64();
    host.volume().as_f64() / (4.0 / 3.0 * std::f64::consts::PI * r * r * r) + 1.0
}

fn dist<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    AXES.iter()
        .fold(T::zero(), |s, &k| s + (a[k] - b[k]) * (a[k] - b[k]))
        .sqrt()
}

fn lerp<T: Real>(a: [T; 3], b: [T; 3], u: T) -> [T; 3] {
    [
        a[0] + u * (b[0] - a[0]),
        a[1] + u * (b[1] - a[1]),
        a[2] + u * (b[2] - a[2]),
    ]
}

/// Arclength-parametrized polyline.
struct Polyline<T> {
    pts: Vec<[T; 3]>,
    cum: Vec<T>,
}

impl<T: Real> Polyline<T> {
    fn new(pts: Vec<[T; 3]>) -> Self {
        let mut cum = vec![T::zero()];
        for w in pts.windows(2) {
            let last = *cum.last().expect("nonempty");
            cum.push(last + dist(w[0], w[1]));
        }
        Polyline { pts, cum }
    }

    fn length(&self) -> T {
        *self.cum.last().expect("nonempty")
    }

    fn at(&self, t: T) -> [T; 3] {
        for s in 0..self.pts.len().saturating_sub(1) {
            let len = self.cum[s + 1] - self.cum[s];
            if t <= self.cum[s + 1] || s + 2 == self.pts.len() {
                if len <= T::zero() {
                    return self.pts[s];
                }
                let u = ((t - self.cum[s]) / len).max(T::zero()).min(T::one());
                return lerp(self.pts[s], self.pts[s + 1], u);
            }
        }
        self.pts[0]
    }

    /// Largest `t` at which the path is within distance `rad` of at least one center.
    fn last_within(&self, centers: &[[T; 3]], rad: T) -> Option<T> {
        for s in (0..self.pts.len() - 1).rev() {
            let a = self.pts[s];
            let b = self.pts[s + 1];
            let len = self.cum[s + 1] - self.cum[s];
            let mut best: Option<T> = None;
            for c in centers {
                let u = if len <= T::zero() {
                    if dist(a, *c) <= rad {
                        Some(T::zero())
                    } else {
                        None
                    }
                } else {
                    segment_exit(a, b, *c, rad)
                };
                if let Some(u) = u {
                    best = Some(best.map_or(u, |v: T| v.max(u)));
                }
            }
            if let Some(u) = best {
                return Some(self.cum[s] + u * len);
            }
        }
        None
    }
}

/// Largest `u ∈ [0,1]` with `|a + u(b−a) − c| ≤ rad`, if any.
fn segment_exit<T: Real>(a: [T; 3], b: [T; 3], c: [T; 3], rad: T) -> Option<T> {
    let mut dd = T::zero();
    let mut df = T::zero();
    let mut ff = T::zero();
    for k in AXES {
        let d = b[k] - a[k];
        let f = a[k] - c[k];
        dd += d * d;
        df += d * f;
        ff += f * f;
    }
    // dd u² + 2 df u + (ff − rad²) ≤ 0
    let qc = ff - rad * rad;
    let disc = df * df - dd * qc;
    if disc < T::zero() {
        return None;
    }
    let sq = disc.sqrt();
    let lo = (-df - sq) / dd;
    let hi = (-df + sq) / dd;
    if hi < T::zero() || lo > T::one() {
        return None;
    }
    Some(hi.min(T::one()))
}

/// Places balls along `path` so that each new center sits at the last parameter where the
/// path is at distance `2·r1` from the set of existing centers, then returns the chain of
/// parent links from the first center to the center nearest the end of the path.
///
/// `r2 = 3 r1` and `r3 = 9 r1` unless overridden.
pub fn chain_of_balls<T: Real>(
    path: &[[T; 3]],
    r1: T,
    host: &Region<T>,
    radii: Option<(T, T)>,
) -> Result<BallChain<T>, GeometryError> {
    if !(r1 > T::zero()) {
        return Err(GeometryError::BadRadius(r1.as_f64()));
    }
    if path.is_empty() {
        return Err(GeometryError::EmptyPath);
    }
    let (r2, r3) = radii.unwrap_or((T::lit(3.0) * r1, T::lit(9.0) * r1));
    if r2 < T::lit(3.0) * r1 * (T::one() - T::lit(DIST_TOL)) || r3 < r2 {
        return Err(GeometryError::BadRadius(r2.as_f64()));
    }
    let mut pts = path.to_vec();
    if pts.len() == 1 {
        pts.push(pts[0]);
    }
    let line = Polyline::new(pts);
    let two_r1 = T::lit(2.0) * r1;
    let strict = two_r1 * (T::one() - T::lit(DIST_TOL));
    let end = line.at(line.length());

    let mut centers = vec![line.at(T::zero())];
    let mut params = vec![T::zero()];
    let mut parent: Vec<Option<usize>> = vec![None];
    loop {
        if centers.iter().any(|c| dist(*c, end) < strict) {
            break;
        }
        let t = match line.last_within(&centers, two_r1) {
            Some(t) => t,
            None => return Err(GeometryError::ChainStalled),
        };
        let last = *params.last().expect("nonempty");
        if t <= last {
            return Err(GeometryError::ChainStalled);
        }
        let x = line.at(t);
        let p = nearest(&centers, x);
        centers.push(x);
        params.push(t);
        parent.push(Some(p));
    }

    let target = nearest(&centers, end);
    let mut idx = vec![target];
    while let Some(p) = parent[*idx.last().expect("nonempty")] {
        idx.push(p);
    }
    idx.reverse();

    let chain = BallChain {
        centers: idx.iter().map(|&k| centers[k]).collect(),
        params: idx.iter().map(|&k| params[k]).collect(),
        r1,
        r2,
        r3,
        path: path.to_vec(),
        placed: centers.len(),
    };
    for c in &chain.centers {
        if !host.contains_ball(*c, r3) {
            return Err(GeometryError::PathLeavesHost);
        }
    }
    Ok(chain)
}

fn nearest<T: Real>(centers: &[[T; 3]], x: [T; 3]) -> usize {
    let mut best = 0;
    let mut bd = dist(centers[0], x);
    for (k, c) in centers.iter().enumerate().skip(1) {
        let d = dist(*c, x);
        if d < bd {
            bd = d;
            best = k;
        }
    }
    best
}

/// Axis-aligned cube `[lo, lo + side]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cube<T> {
    pub lo: [T; 3],
    pub side: T,
}

impl<T: Real> Cube<T> {
    pub fn center(&self) -> [T; 3] {
        let h = self.side * T::lit(0.5);
        [self.lo[0] + h, self.lo[1] + h, self.lo[2] + h]
    }

    pub fn diagonal(&self) -> T {
        self.side * T::lit(3.0).sqrt()
    }
}

/// Cubes of side `2 r1 / √3` from the lattice anchored at the grid origin that overlap the
/// region's voxels with positive volume.
pub fn cube_cover<T: Real>(region: &Region<T>, r1: T) -> Result<Vec<Cube<T>>, GeometryError> {
    if !(r1 > T::zero()) {
        return Err(GeometryError::BadRadius(r1.as_f64()));
    }
    let g = region.grid();
    let l = T::lit(2.0) * r1 / T::lit(3.0).sqrt();
    let o = g.origin();
    let h = g.h();
    let eps = T::lit(1e-12) * h;
    let mut keys = std::collections::BTreeSet::new();
    for c in region.cells() {
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in AXES {
            let x0 = T::usize(c[a]) * h;
            let x1 = x0 + h;
            lo[a] = ((x0 + eps) / l).as_f64().floor() as i64;
            hi[a] = ((x1 - eps) / l).as_f64().floor() as i64;
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    keys.insert((k, j, i));
                }
            }
        }
    }
    let to_t = |m: i64| T::from_i64(m).expect("lattice index");
    Ok(keys
        .into_iter()
        .map(|(k, j, i)| Cube {
            lo: [o[0] + to_t(i) * l, o[1] + to_t(j) * l, o[2] + to_t(k) * l],
            side: l,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::Grid;
    use crate::geometry::region::{carve_region, Role, Shape};

    fn big_host() -> Region<f64> {
        let g = Grid::new([40, 8, 8], 0.125, [-2.0, -0.5, -0.5]).unwrap();
        Region::omega(&g)
    }

    #[test]
    fn straight_segment_has_six_balls() {
        let host = big_host();
        let radii = Some((0.3, 0.3));
        let ch = chain_of_balls(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], 0.1, &host, radii).unwrap();
        assert_eq!(ch.len(), 6);
        for (k, t) in ch.params.iter().enumerate() {
            assert!((t - 0.2 * k as f64).abs() < 1e-12, "{k}: {t}");
        }
        ch.check_invariants(&host).unwrap();
    }

    #[test]
    fn short_path_single_ball() {
        let host = big_host();
        let ch =
            chain_of_balls(&[[0.0; 3], [0.15, 0.0, 0.0]], 0.1, &host, Some((0.3, 0.3))).unwrap();
        assert_eq!(ch.len(), 1);
    }

    #[test]
    fn looping_path_stays_disjoint() {
        let host = big_host();
        let path = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.05, 0.0],
            [0.0, 0.05, 0.0],
            [0.0, 0.1, 0.0],
            [1.5, 0.1, 0.0],
        ];
        let ch = chain_of_balls(&path, 0.04, &host, None).unwrap();
        assert!(ch.min_separation() >= 0.08 * (1.0 - 1e-9));
        ch.check_invariants(&host).unwrap();
        assert!(ch.placed >= ch.len());
    }

    #[test]
    fn path_leaving_host_errors() {
        let host = big_host();
        let r = chain_of_balls(&[[0.0; 3], [1.0, 0.0, 0.0]], 0.1, &host, None);
        assert!(matches!(r, Err(GeometryError::PathLeavesHost)));
    }

    #[test]
    fn aligned_cube_cover() {
        let g = Grid::<f64>::unit_cube(8).unwrap();
        let omega = Region::omega(&g);
        let cubes = cube_cover(&omega, 3f64.sqrt() / 2.0).unwrap();
        assert_eq!(cubes.len(), 1);
        assert!((cubes[0].diagonal() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_voxel_cover() {
        let g = Grid::<f64>::unit_cube(8).unwrap();
        let vox = carve_region(
            &g,
            &Shape::Ball {
                center: [0.5625; 3],
                radius: 0.01,
            },
            Role::Ball,
        )
        .unwrap();
        assert_eq!(vox.cell_count(), 1);
        for r1 in [0.11, 0.2, 0.3, 0.5] {
            let n = cube_cover(&vox, r1).unwrap().len();
            assert!((1..=8).contains(&n), "r1={r1}: {n}");
        }
    }
}
