use std::collections::VecDeque;

use super::CsrMatrix;
use crate::{Error, Result};

/// Cholesky factor of a symmetric positive definite matrix, stored row by row
/// inside the envelope of a reverse Cuthill-McKee ordering.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// First stored column of each permuted row.
    first: Vec<usize>,
    /// Offset of each row's segment in `values`; the diagonal ends the segment.
    start: Vec<usize>,
    values: Vec<f64>,
}

/// Reverse Cuthill-McKee ordering of the matrix graph, one BFS per connected
/// component, each rooted at a pseudo-peripheral vertex.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![usize::MAX; n];
    for seed in 0..n {
        if placed[seed] {
            continue;
        }
        let root = peripheral_vertex(&adj, seed, &mut seen);
        let begin = order.len();
        placed[root] = true;
        order.push(root);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !placed[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                placed[u] = true;
                order.push(u);
            }
        }
    }
    order.reverse();
    order
}

/// Repeatedly restarts a BFS from the farthest, lowest-degree vertex of the
/// last level until the eccentricity stops growing.
fn peripheral_vertex(adj: &[Vec<usize>], seed: usize, seen: &mut [usize]) -> usize {
    let mut root = seed;
    let mut best = 0;
    loop {
        let (depth, last) = bfs_levels(adj, root, seen);
        let far = last
            .into_iter()
            .min_by_key(|&u| (adj[u].len(), u))
            .unwrap_or(root);
        if depth <= best {
            return root;
        }
        best = depth;
        root = far;
    }
}

fn bfs_levels(adj: &[Vec<usize>], root: usize, seen: &mut [usize]) -> (usize, Vec<usize>) {
    let mut queue = VecDeque::new();
    seen[root] = root;
    queue.push_back((root, 0usize));
    let mut depth = 0;
    let mut last = vec![root];
    while let Some((v, d)) = queue.pop_front() {
        if d > depth {
            depth = d;
            last.clear();
        }
        if d == depth {
            last.push(v);
        }
        for &u in &adj[v] {
            if seen[u] != root {
                seen[u] = root;
                queue.push_back((u, d + 1));
            }
        }
    }
    last.dedup();
    (depth, last)
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, fi) in first.iter_mut().enumerate() {
            for (j, _) in a.row(perm[i]) {
                *fi = (*fi).min(inv[j]);
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0usize);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut values = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let jj = inv[j];
                if jj <= i {
                    values[start[i] + jj - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = values.split_at_mut(start[i]);
            let row = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let rj = &done[start[j]..start[j + 1]];
                let s = dot(&row[lo - fi..j - fi], &rj[lo - fj..j - fj]);
                row[j - fi] = (row[j - fi] - s) / rj[j - fj];
            }
            let d = row[i - fi] - dot(&row[..i - fi], &row[..i - fi]);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "matrix is not positive definite (pivot {d:e} at row {})",
                    perm[i]
                )));
            }
            row[i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            start,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        self.solve_into(b, &mut x);
        x
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let s = dot(&row[..i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for (yk, l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= l * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
