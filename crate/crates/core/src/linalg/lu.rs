//! Banded LU factorization with partial pivoting on a reverse Cuthill-McKee
//! reordering.

use std::collections::VecDeque;

use super::{LinalgError, SparseMatrix};

/// Reverse Cuthill-McKee ordering of the symmetrized sparsity pattern.
/// `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = peripheral_node(&adj, &degree, seed);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Approximate pseudo-peripheral node of the component containing `seed`,
/// found by repeated breadth-first sweeps.
fn peripheral_node(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let mut eccentricity = 0;
    for _ in 0..8 {
        let levels = bfs_levels(adj, current);
        let depth = *levels.iter().filter_map(|l| *l).collect::<Vec<_>>().iter().max().unwrap_or(&0);
        if depth <= eccentricity && current != seed {
            break;
        }
        eccentricity = depth;
        let candidate = (0..adj.len())
            .filter(|&v| levels[v] == Some(depth))
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(current);
        if candidate == current {
            break;
        }
        current = candidate;
    }
    current
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

/// LU factors of a reordered band matrix, `P_r A P_r^T = L U` with row
/// interchanges interleaved as in LAPACK's `gbtrf`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    /// Width of the stored upper band (`ku + kl`).
    ku2: usize,
    /// Row-major upper factor; row `i` stores columns `i..=i + ku2`.
    upper: Vec<f64>,
    /// Multipliers of column `k` for rows `k + 1..=k + kl`.
    lower: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self, LinalgError> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(LinalgError::Dimension { expected: n, found: a.n_cols() });
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let (mut kl, mut ku) = (0, 0);
        for i in 0..n {
            for &j in a.row(i).0 {
                let (pi, pj) = (inverse[i], inverse[j]);
                if pi > pj {
                    kl = kl.max(pi - pj);
                } else {
                    ku = ku.max(pj - pi);
                }
            }
        }
        let ku2 = ku + kl;
        // working storage: row i holds columns i - kl ..= i + ku2
        let width = kl + ku2 + 1;
        let mut work = vec![0.0; n * width];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let pi = inverse[i];
            for (&j, &v) in cols.iter().zip(vals) {
                let pj = inverse[j];
                work[pi * width + pj + kl - pi] = v;
            }
        }
        let at = |i: usize, j: usize| i * width + j + kl - i;

        let mut lower = vec![0.0; n * kl];
        let mut pivots = vec![0; n];
        let scale = a.norm_inf().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = work[at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = work[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= f64::EPSILON * scale * 1e-3 {
                return Err(LinalgError::Singular(k));
            }
            pivots[k] = p;
            let last_col = (k + ku2).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    work.swap(at(k, j), at(p, j));
                }
            }
            let pivot = work[at(k, k)];
            for i in k + 1..=last_row {
                let l = work[at(i, k)] / pivot;
                lower[k * kl + (i - k - 1)] = l;
                work[at(i, k)] = 0.0;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        work[at(i, j)] -= l * work[at(k, j)];
                    }
                }
            }
        }
        let mut upper = vec![0.0; n * (ku2 + 1)];
        for i in 0..n {
            for j in i..=(i + ku2).min(n - 1) {
                upper[i * (ku2 + 1) + j - i] = work[at(i, j)];
            }
        }
        Ok(Self { n, kl, ku2, upper, lower, pivots, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidth of the reordered matrix.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku2 - self.kl)
    }

    #[inline]
    fn u(&self, i: usize, j: usize) -> f64 {
        self.upper[i * (self.ku2 + 1) + j - i]
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::Dimension { expected: n, found: b.len() });
        }
        let mut z: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            z.swap(k, self.pivots[k]);
            let zk = z[k];
            for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                z[i] -= self.lower[k * self.kl + (i - k - 1)] * zk;
            }
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in i + 1..=(i + self.ku2).min(n - 1) {
                s -= self.u(i, j) * z[j];
            }
            z[i] = s / self.u(i, i);
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = z[new];
        }
        Ok(x)
    }

    /// Solve `A x = b` followed by `steps` rounds of iterative refinement
    /// against the unfactored matrix `a`.
    pub fn solve_refined(&self, a: &SparseMatrix, b: &[f64], steps: usize) -> Result<Vec<f64>, LinalgError> {
        let mut x = self.solve(b)?;
        for _ in 0..steps {
            let ax = a.mul_vec(&x)?;
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            for (xi, d) in x.iter_mut().zip(self.solve(&r)?) {
                *xi += d;
            }
        }
        Ok(x)
    }

    /// Transposed counterpart of [`BandLu::solve_refined`].
    pub fn solve_transpose_refined(&self, a: &SparseMatrix, b: &[f64], steps: usize) -> Result<Vec<f64>, LinalgError> {
        let mut x = self.solve_transpose(b)?;
        for _ in 0..steps {
            let ax = a.transpose_mul_vec(&x)?;
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            for (xi, d) in x.iter_mut().zip(self.solve_transpose(&r)?) {
                *xi += d;
            }
        }
        Ok(x)
    }

    /// Solve `A^T x = b` with the same factors.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::Dimension { expected: n, found: b.len() });
        }
        let mut z: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // U^T z = b
        for j in 0..n {
            let mut s = z[j];
            for i in j.saturating_sub(self.ku2)..j {
                s -= self.u(i, j) * z[i];
            }
            z[j] = s / self.u(j, j);
        }
        // apply L_k^{-T} then P_k for k = n-1 .. 0
        for k in (0..n).rev() {
            let mut s = 0.0;
            for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                s += self.lower[k * self.kl + (i - k - 1)] * z[i];
            }
            z[k] -= s;
            z.swap(k, self.pivots[k]);
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = z[new];
        }
        Ok(x)
    }
}
