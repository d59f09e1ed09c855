use std::collections::VecDeque;

use crate::{c, Error, Real, Result};

use super::sparse::CsrMatrix;

/// Reverse Cuthill–McKee ordering of the matrix graph. Each connected
/// component starts from a pseudo-peripheral vertex.
pub fn rcm_ordering<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize, visited_global: &[bool]| {
        let mut level = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        level[start] = 0;
        let mut last = start;
        while let Some(v) = q.pop_front() {
            last = v;
            for (w, _) in a.row(v) {
                if level[w] == usize::MAX && !visited_global[w] {
                    level[w] = level[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (last, level[last])
    };
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let mut start = seed;
        let (mut far, mut ecc) = bfs_levels(start, &visited);
        for _ in 0..4 {
            let (far2, ecc2) = bfs_levels(far, &visited);
            if ecc2 <= ecc {
                break;
            }
            start = far;
            far = far2;
            ecc = ecc2;
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).map(|(w, _)| w).filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `P A Pᵀ = L D Lᵀ` in envelope (skyline) storage, no pivoting.
#[derive(Debug, Clone)]
pub struct LdlFactor<T: Real> {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    /// Strict lower rows of `L`, row `i` covering columns `first[i]..i`.
    l: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> LdlFactor<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        let perm = rcm_ordering(a);
        Self::with_ordering(a, perm)
    }

    pub fn with_ordering(a: &CsrMatrix<T>, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, _) in a.row(old_i) {
                let j = inv[old_j];
                if j < first[new_i] {
                    first[new_i] = j;
                }
            }
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i]);
        }
        let mut l = vec![T::zero(); start[n]];
        let mut d = vec![T::zero(); n];
        let mut diag_scale = T::zero();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, v) in a.row(old_i) {
                let j = inv[old_j];
                if j < new_i {
                    l[start[new_i] + j - first[new_i]] = v;
                } else if j == new_i {
                    d[new_i] = v;
                    diag_scale = diag_scale.max(v.abs());
                }
            }
        }
        let tiny = diag_scale * T::epsilon() * c(1e2);
        for i in 0..n {
            let fi = first[i];
            let (head, row_i) = l.split_at_mut(start[i]);
            let row_i = &mut row_i[..i - fi];
            // row_i holds A_ij; overwrite with w_j = L_ij D_j progressively.
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let row_j = &head[start[j]..start[j] + (j - fj)];
                let mut s = row_i[j - fi];
                let wi = &row_i[lo - fi..j - fi];
                let lj = &row_j[lo - fj..j - fj];
                for (a, b) in wi.iter().zip(lj) {
                    s -= *a * *b;
                }
                row_i[j - fi] = s;
            }
            let mut di = d[i];
            for j in fi..i {
                let w = row_i[j - fi];
                let lij = w / d[j];
                di -= w * lij;
                row_i[j - fi] = lij;
            }
            if !(di.abs() > tiny) || !di.is_finite() {
                return Err(Error::SolverFailure(format!(
                    "pivot {i} of the LDLᵀ factorization is {di:e} (matrix singular or needs pivoting)"
                )));
            }
            d[i] = di;
        }
        Ok(LdlFactor { n, perm, first, start, l, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn envelope_size(&self) -> usize {
        self.l.len()
    }

    /// Number of negative pivots, the count of eigenvalues below zero.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < T::zero()).count()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y: Vec<T> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.l[self.start[i]..self.start[i + 1]];
            let s: T = row.iter().zip(&y[fi..i]).map(|(a, b)| *a * *b).sum();
            y[i] -= s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let yi = y[i];
            let row = &self.l[self.start[i]..self.start[i + 1]];
            for (k, a) in row.iter().enumerate() {
                y[fi + k] -= *a * yi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
