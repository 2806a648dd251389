//! Sparse direct solver: geometric nested dissection plus multifrontal LU.
//!
//! Every unknown carries the box of grid cells it touches. Two unknowns couple only
//! if their boxes share a cell, so bisecting the cell box along its longest axis
//! yields valid separators without a graph partitioner.

use nalgebra::DMatrix;

use super::dense::DenseLu;
use super::sparse::Csr;
use crate::error::SolverError;
use crate::scalar::Real;

/// Inclusive cell range `[lo, hi]` per axis.
pub type CellBox = ([usize; 3], [usize; 3]);

struct Node<T: Real> {
    dofs: Vec<usize>,
    border: Vec<usize>,
    children: Vec<usize>,
    lu: Option<DenseLu<T>>,
    /// `F11⁻¹ F12`, `dofs.len() × border.len()`.
    w: DMatrix<T>,
}

/// Factorization of a symmetric sparse matrix.
pub struct Multifrontal<T: Real> {
    n: usize,
    nodes: Vec<Node<T>>,
    /// Node indices in elimination (post) order.
    order: Vec<usize>,
}

struct Builder<'a> {
    boxes: &'a [CellBox],
    leaf: usize,
    nodes: Vec<(Vec<usize>, Vec<usize>)>,
    order: Vec<usize>,
}

impl Builder<'_> {
    fn build(&mut self, lo: [usize; 3], hi: [usize; 3], dofs: Vec<usize>) -> usize {
        // half-open cell box [lo, hi)
        let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let axis = (0..3).max_by_key(|&a| (ext[a], 2 - a)).expect("three axes");
        if dofs.len() <= self.leaf || ext[axis] < 2 {
            return self.push(dofs, Vec::new());
        }
        let m = lo[axis] + ext[axis] / 2;
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut sep = Vec::new();
        for d in dofs {
            let (blo, bhi) = self.boxes[d];
            if bhi[axis] < m {
                left.push(d);
            } else if blo[axis] >= m {
                right.push(d);
            } else {
                sep.push(d);
            }
        }
        let mut children = Vec::new();
        let mut hl = hi;
        hl[axis] = m;
        let mut lr = lo;
        lr[axis] = m;
        if !left.is_empty() {
            children.push(self.build(lo, hl, left));
        }
        if !right.is_empty() {
            children.push(self.build(lr, hi, right));
        }
        if sep.is_empty() && children.len() == 1 {
            return children[0];
        }
        self.push(sep, children)
    }

    fn push(&mut self, dofs: Vec<usize>, children: Vec<usize>) -> usize {
        self.nodes.push((dofs, children));
        let id = self.nodes.len() - 1;
        self.order.push(id);
        id
    }
}

impl<T: Real> Multifrontal<T> {
    /// Factors `a` (symmetric) given the cell box of every unknown and the cell extents.
    pub fn factor(
        a: &Csr<T>,
        boxes: &[CellBox],
        cells: [usize; 3],
        leaf: usize,
    ) -> Result<Self, SolverError> {
        let n = a.rows;
        assert_eq!(n, a.cols);
        assert_eq!(boxes.len(), n);
        let mut b = Builder {
            boxes,
            leaf: leaf.max(1),
            nodes: Vec::new(),
            order: Vec::new(),
        };
        if n > 0 {
            b.build([0; 3], cells, (0..n).collect());
        }
        let Builder {
            nodes: raw, order, ..
        } = b;

        let mut pos = vec![0usize; n];
        let mut next = 0;
        for &id in &order {
            for &d in &raw[id].0 {
                pos[d] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next, n);

        let mut nodes: Vec<Node<T>> = raw
            .into_iter()
            .map(|(dofs, children)| Node {
                dofs,
                border: Vec::new(),
                children,
                lu: None,
                w: DMatrix::zeros(0, 0),
            })
            .collect();

        // symbolic: border = later-eliminated neighbours of the subtree
        let mut mark = vec![usize::MAX; n];
        for &id in &order {
            let end = nodes[id].dofs.iter().map(|&d| pos[d]).max();
            let mut border = Vec::new();
            if let Some(end) = end {
                for &d in &nodes[id].dofs {
                    for &c in a.row(d).0 {
                        if pos[c] > end && mark[c] != id {
                            mark[c] = id;
                            border.push(c);
                        }
                    }
                }
            }
            for k in 0..nodes[id].children.len() {
                let ch = nodes[id].children[k];
                for j in 0..nodes[ch].border.len() {
                    let c = nodes[ch].border[j];
                    if end.is_none_or(|e| pos[c] > e) && mark[c] != id {
                        mark[c] = id;
                        border.push(c);
                    }
                }
            }
            border.sort_unstable_by_key(|&c| pos[c]);
            nodes[id].border = border;
        }

        // numeric
        let mut updates: Vec<Option<DMatrix<T>>> = (0..nodes.len()).map(|_| None).collect();
        let mut loc = vec![usize::MAX; n];
        for &id in &order {
            let nf = nodes[id].dofs.len();
            let nb = nodes[id].border.len();
            let m = nf + nb;
            for (i, &d) in nodes[id]
                .dofs
                .iter()
                .chain(nodes[id].border.iter())
                .enumerate()
            {
                loc[d] = i;
            }
            let mut f = DMatrix::<T>::zeros(m, m);
            for (i, &r) in nodes[id].dofs.iter().enumerate() {
                let (idx, val) = a.row(r);
                for (&c, &v) in idx.iter().zip(val) {
                    let j = loc[c];
                    if j == usize::MAX {
                        continue;
                    }
                    f[(i, j)] += v;
                    if j >= nf {
                        f[(j, i)] += v;
                    }
                }
            }
            for k in 0..nodes[id].children.len() {
                let ch = nodes[id].children[k];
                if let Some(u) = updates[ch].take() {
                    let map: Vec<usize> = nodes[ch].border.iter().map(|&c| loc[c]).collect();
                    for (jj, &cj) in map.iter().enumerate() {
                        for (ii, &ci) in map.iter().enumerate() {
                            f[(ci, cj)] += u[(ii, jj)];
                        }
                    }
                }
            }
            for &d in nodes[id].dofs.iter().chain(nodes[id].border.iter()) {
                loc[d] = usize::MAX;
            }
            if nf == 0 {
                if nb > 0 {
                    updates[id] = Some(f);
                }
                continue;
            }
            let f11 = f.view((0, 0), (nf, nf)).clone_owned();
            let lu = DenseLu::factor(f11).map_err(|e| match e {
                SolverError::SingularPivot(j) => {
                    SolverError::SingularPivot(pos[nodes[id].dofs[0]] + j)
                }
                other => other,
            })?;
            if nb > 0 {
                let f12 = f.view((0, nf), (nf, nb)).clone_owned();
                let w = lu.solve(&f12);
                let mut s = f.view((nf, nf), (nb, nb)).clone_owned();
                let f21 = f.view((nf, 0), (nb, nf));
                s.gemm(-T::one(), &f21, &w, T::one());
                updates[id] = Some(s);
                nodes[id].w = w;
            }
            nodes[id].lu = Some(lu);
        }
        Ok(Multifrontal { n, nodes, order })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn factor_entries(&self) -> usize {
        self.nodes
            .iter()
            .map(|nd| nd.dofs.len() * nd.dofs.len() + nd.w.len())
            .sum()
    }

    /// Largest front dimension.
    pub fn max_front(&self) -> usize {
        self.nodes
            .iter()
            .map(|nd| nd.dofs.len() + nd.border.len())
            .max()
            .unwrap_or(0)
    }

    /// Solves `A X = B` in place; rows of `b` follow the original unknown order.
    pub fn solve_in_place(&self, b: &mut DMatrix<T>) {
        assert_eq!(b.nrows(), self.n);
        let r = b.ncols();
        for &id in &self.order {
            let nd = &self.nodes[id];
            let nf = nd.dofs.len();
            let Some(lu) = nd.lu.as_ref() else { continue };
            let mut b1 = DMatrix::<T>::from_fn(nf, r, |i, j| b[(nd.dofs[i], j)]);
            if !nd.border.is_empty() {
                let mut t = DMatrix::<T>::zeros(nd.border.len(), r);
                t.gemm_tr(T::one(), &nd.w, &b1, T::zero());
                for (i, &c) in nd.border.iter().enumerate() {
                    for j in 0..r {
                        b[(c, j)] -= t[(i, j)];
                    }
                }
            }
            lu.solve_in_place(&mut b1);
            for (i, &d) in nd.dofs.iter().enumerate() {
                for j in 0..r {
                    b[(d, j)] = b1[(i, j)];
                }
            }
        }
        for &id in self.order.iter().rev() {
            let nd = &self.nodes[id];
            if nd.lu.is_none() || nd.border.is_empty() {
                continue;
            }
            let x2 = DMatrix::<T>::from_fn(nd.border.len(), r, |i, j| b[(nd.border[i], j)]);
            let mut t = DMatrix::<T>::zeros(nd.dofs.len(), r);
            t.gemm(T::one(), &nd.w, &x2, T::zero());
            for (i, &d) in nd.dofs.iter().enumerate() {
                for j in 0..r {
                    b[(d, j)] -= t[(i, j)];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 3-D 7-point Laplacian shifted to be indefinite, unknowns on cells.
    fn laplacian(n: usize, shift: f64) -> (Csr<f64>, Vec<CellBox>) {
        let id = |i: usize, j: usize, k: usize| i + n * (j + n * k);
        let mut trip = Vec::new();
        let mut boxes = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let r = id(i, j, k);
                    trip.push((r, r, 6.0 - shift + 0.01 * (r % 7) as f64));
                    for (di, dj, dk) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                        let (a, b, c) = (i + di, j + dj, k + dk);
                        if a < n && b < n && c < n {
                            let s = id(a, b, c);
                            trip.push((r, s, -1.0));
                            trip.push((s, r, -1.0));
                        }
                    }
                    // a dof "touching" its cell and the +x,+y,+z neighbours' shared faces
                    boxes.push((
                        [
                            i.saturating_sub(1),
                            j.saturating_sub(1),
                            k.saturating_sub(1),
                        ],
                        [i, j, k],
                    ));
                }
            }
        }
        (Csr::from_triplets(n * n * n, n * n * n, trip), boxes)
    }

    #[test]
    fn matches_dense_solution() {
        for leaf in [1, 8, 1000] {
            let n = 7;
            let (a, boxes) = laplacian(n, 2.5);
            let mf = Multifrontal::factor(&a, &boxes, [n; 3], leaf).unwrap();
            let dim = a.rows;
            let b = DMatrix::from_fn(dim, 2, |i, j| ((i * 13 + j * 5) % 17) as f64 - 8.0);
            let mut x = b.clone();
            mf.solve_in_place(&mut x);
            let mut ax = vec![0.0; dim];
            for j in 0..2 {
                let col: Vec<f64> = x.column(j).iter().copied().collect();
                a.matvec(&col, &mut ax);
                let err = ax
                    .iter()
                    .zip(b.column(j).iter())
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-10, "leaf {leaf}: {err}");
            }
        }
    }
}
