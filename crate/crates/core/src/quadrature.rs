//! Symmetric quadrature rules on the reference triangle.

use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error)]
#[error("no quadrature rule of degree {0}; available degrees are 1, 2 and 5")]
pub struct UnsupportedOrder(pub usize);

/// Barycentric points and weights on the reference triangle; weights sum to
/// 1/2, the reference area.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: usize,
}

impl QuadratureRule {
    /// Rule exact for polynomials of total degree `degree`.
    pub fn with_degree(degree: usize) -> Result<Self, UnsupportedOrder> {
        match degree {
            1 => Ok(Self::centroid()),
            2 => Ok(Self::three_point()),
            5 => Ok(Self::dunavant7()),
            other => Err(UnsupportedOrder(other)),
        }
    }

    pub fn centroid() -> Self {
        let t = 1.0 / 3.0;
        Self { points: vec![[t, t, t]], weights: vec![0.5], degree: 1 }
    }

    pub fn three_point() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        Self {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 6.0; 3],
            degree: 2,
        }
    }

    /// Dunavant's 7-point rule, degree 5.
    pub fn dunavant7() -> Self {
        let s15 = 15f64.sqrt();
        let t = 1.0 / 3.0;
        let b1 = (6.0 - s15) / 21.0;
        let a1 = 1.0 - 2.0 * b1;
        let b2 = (6.0 + s15) / 21.0;
        let a2 = 1.0 - 2.0 * b2;
        let w0 = 9.0 / 80.0;
        let w1 = (155.0 - s15) / 2400.0;
        let w2 = (155.0 + s15) / 2400.0;
        Self {
            points: vec![
                [t, t, t],
                [a1, b1, b1],
                [b1, a1, b1],
                [b1, b1, a1],
                [a2, b2, b2],
                [b2, a2, b2],
                [b2, b2, a2],
            ],
            weights: vec![w0, w1, w1, w1, w2, w2, w2],
            degree: 5,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn barycentric(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Physical quadrature points of the triangle `(a, b, c)`.
    pub fn map(&self, [a, b, c]: &[Point; 3]) -> Vec<Point> {
        self.points.iter().map(|l| a * l[0] + b * l[1] + c * l[2]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Integral of x^i y^j over the reference triangle.
    fn monomial_integral(i: u32, j: u32) -> f64 {
        factorial(i) * factorial(j) / factorial(i + j + 2)
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        for degree in [1, 2, 5] {
            let rule = QuadratureRule::with_degree(degree).unwrap();
            assert!((rule.weights().iter().sum::<f64>() - 0.5).abs() < 1e-15);
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            for i in 0..=degree as u32 {
                for j in 0..=(degree as u32 - i) {
                    let approx: f64 = rule
                        .barycentric()
                        .iter()
                        .zip(rule.weights())
                        .map(|(l, w)| w * l[1].powi(i as i32) * l[2].powi(j as i32))
                        .sum();
                    let exact = monomial_integral(i, j);
                    assert!((approx - exact).abs() < 1e-15, "degree {degree}, x^{i} y^{j}");
                }
            }
        }
    }

    #[test]
    fn degree_five_is_not_exact_for_degree_six() {
        let rule = QuadratureRule::dunavant7();
        let approx: f64 = rule
            .barycentric()
            .iter()
            .zip(rule.weights())
            .map(|(l, w)| w * l[1].powi(6))
            .sum();
        assert!((approx - monomial_integral(6, 0)).abs() > 1e-6);
    }

    #[test]
    fn unknown_degree_rejected() {
        assert!(QuadratureRule::with_degree(3).is_err());
    }
}
