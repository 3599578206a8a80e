//! Limited-memory BFGS on flattened deformation fields with identity vector
//! transport.

use std::collections::VecDeque;

use crate::linalg::{dot, norm2};

/// Relative threshold of the curvature condition `s^T y > CURVATURE_TOL |s| |y|`.
pub const CURVATURE_TOL: f64 = 1e-14;

pub fn curvature_ok(s: &[f64], y: &[f64]) -> bool {
    dot(s, y) > CURVATURE_TOL * norm2(s) * norm2(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionKind {
    /// The gradient itself (empty memory or rejected pair).
    Gradient,
    /// Two-loop recursion over the stored pairs.
    QuasiNewton,
}

#[derive(Debug, Clone)]
pub struct Lbfgs {
    capacity: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl Lbfgs {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, pairs: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|(s, y)| (s.as_slice(), y.as_slice()))
    }

    /// Store `(s, y)` if it satisfies the curvature condition, dropping the
    /// oldest pair when full. Returns whether the pair was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        if self.capacity == 0 || !curvature_ok(&s, &y) {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
        true
    }

    /// `H g` by the two-loop recursion with `H_0 = (s^T y / y^T y) I` from the
    /// newest pair; `g` itself when the memory is empty.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let Some((s_new, y_new)) = self.pairs.back() else {
            return g.to_vec();
        };
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y) in self.pairs.iter().rev() {
            let rho = 1.0 / dot(s, y);
            let a = rho * dot(s, &q);
            axpy(&mut q, -a, y);
            alphas.push((rho, a));
        }
        let gamma = dot(s_new, y_new) / dot(y_new, y_new);
        q.iter_mut().for_each(|x| *x *= gamma);
        for ((s, y), (rho, a)) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(&mut q, a - b, s);
        }
        q
    }

    /// One optimizer update: offer the newest pair, then return the search
    /// direction. A rejected or missing pair yields the plain gradient.
    pub fn direction(&mut self, candidate: Option<(Vec<f64>, Vec<f64>)>, g: &[f64]) -> (Vec<f64>, DirectionKind) {
        let accepted = match candidate {
            Some((s, y)) => self.push(s, y),
            None => false,
        };
        if !accepted || self.is_empty() {
            return (g.to_vec(), DirectionKind::Gradient);
        }
        (self.apply(g), DirectionKind::QuasiNewton)
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_memory_returns_gradient() {
        let mut m = Lbfgs::new(15);
        let g = vec![1.0, -2.0, 3.0];
        assert_eq!(m.direction(None, &g), (g.clone(), DirectionKind::Gradient));
    }

    #[test]
    fn conjugate_history_recovers_newton_direction() {
        let d = [1.0, 4.0, 0.5, 10.0, 2.5];
        let n = d.len();
        let mut m = Lbfgs::new(15);
        for i in 0..n {
            let mut s = vec![0.0; n];
            s[i] = 0.3 + i as f64;
            let y: Vec<f64> = s.iter().zip(&d).map(|(a, b)| a * b).collect();
            assert!(m.push(s, y));
        }
        let g = vec![1.0, -1.0, 2.0, 0.5, -3.0];
        let h = m.apply(&g);
        for i in 0..n {
            let newton = g[i] / d[i];
            assert!((h[i] - newton).abs() <= 1e-8 * newton.abs(), "{i}: {} vs {newton}", h[i]);
        }
    }

    #[test]
    fn negative_curvature_pair_is_discarded() {
        let mut m = Lbfgs::new(3);
        assert!(m.push(vec![1.0, 0.0], vec![2.0, 0.0]));
        let g = vec![0.5, 0.25];
        let (dir, kind) = m.direction(Some((vec![1.0, 0.0], vec![-1.0, 0.0])), &g);
        assert_eq!(kind, DirectionKind::Gradient);
        assert_eq!(dir, g);
        assert_eq!(m.len(), 1);
        assert!(!m.push(vec![1.0, 0.0], vec![0.0, 1.0]));
    }

    #[test]
    fn capacity_drops_oldest() {
        let mut m = Lbfgs::new(2);
        for k in 1..=3 {
            m.push(vec![k as f64], vec![1.0]);
        }
        let s: Vec<f64> = m.pairs().map(|(s, _)| s[0]).collect();
        assert_eq!(s, vec![2.0, 3.0]);
        let mut none = Lbfgs::new(0);
        assert!(!none.push(vec![1.0], vec![1.0]));
    }

    #[test]
    fn direction_is_descent_for_spd_history() {
        let mut m = Lbfgs::new(5);
        m.push(vec![1.0, 1.0, 0.0], vec![2.0, 1.5, 0.1]);
        m.push(vec![0.0, 1.0, -1.0], vec![0.2, 1.0, -2.0]);
        let g = vec![0.3, -0.7, 1.1];
        assert!(dot(&m.apply(&g), &g) > 0.0);
    }
}
