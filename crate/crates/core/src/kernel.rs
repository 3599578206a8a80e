//! Interface-dependent truncated kernels.
//!
//! The kernel acting at a point `x` is `phi1` if `x` lies in the inner region
//! and `phi2` otherwise (outer region and collar); it is cut off outside the
//! norm ball of radius `delta` around `x`.

use std::fmt;
use std::sync::Arc;

use crate::geometry::Point;
use crate::mesh::Region;

/// Truncation norm of the interaction ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Inf,
    Euclidean,
}

impl Norm {
    #[inline]
    pub fn of(self, z: &Point) -> f64 {
        match self {
            Norm::Inf => z.x.abs().max(z.y.abs()),
            Norm::Euclidean => z.norm(),
        }
    }

    /// Gradient of `|z|^2` in this norm.
    #[inline]
    fn grad_squared(self, z: &Point) -> Point {
        match self {
            Norm::Euclidean => 2.0 * z,
            Norm::Inf => {
                if z.x.abs() >= z.y.abs() {
                    Point::new(2.0 * z.x, 0.0)
                } else {
                    Point::new(0.0, 2.0 * z.y)
                }
            }
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "INF" => Ok(Norm::Inf),
            "euclidean" | "EUCLIDEAN" | "2" => Ok(Norm::Euclidean),
            other => Err(format!("unknown norm '{other}' (expected inf or euclidean)")),
        }
    }
}

/// A smooth kernel function `phi(x, y)` with its partial gradients.
pub trait PartialKernel: Send + Sync {
    fn value(&self, x: &Point, y: &Point) -> f64;
    fn grad_x(&self, x: &Point, y: &Point) -> Point;
    fn grad_y(&self, x: &Point, y: &Point) -> Point;
    /// True if `phi` depends on `y - x` only, so `grad_x + grad_y = 0`.
    fn is_radial(&self) -> bool;
    /// True if `phi` is zero on the truncation boundary, so pointwise
    /// truncation keeps the integrand continuous.
    fn vanishes_at_horizon(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl PartialKernel for Constant {
    fn value(&self, _: &Point, _: &Point) -> f64 {
        self.0
    }
    fn grad_x(&self, _: &Point, _: &Point) -> Point {
        Point::zeros()
    }
    fn grad_y(&self, _: &Point, _: &Point) -> Point {
        Point::zeros()
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn vanishes_at_horizon(&self) -> bool {
        self.0 == 0.0
    }
}

/// `scale * (1 - (|y - x| / delta)^2)`.
#[derive(Debug, Clone, Copy)]
pub struct Parabolic {
    pub scale: f64,
    pub delta: f64,
    pub norm: Norm,
}

impl PartialKernel for Parabolic {
    fn value(&self, x: &Point, y: &Point) -> f64 {
        let r = self.norm.of(&(y - x)) / self.delta;
        self.scale * (1.0 - r * r)
    }
    fn grad_x(&self, x: &Point, y: &Point) -> Point {
        -self.grad_y(x, y)
    }
    fn grad_y(&self, x: &Point, y: &Point) -> Point {
        self.norm.grad_squared(&(y - x)) * (-self.scale / (self.delta * self.delta))
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn vanishes_at_horizon(&self) -> bool {
        true
    }
}

type ScalarFn = dyn Fn(&Point, &Point) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&Point, &Point) -> Point + Send + Sync;

/// Kernel given by closures; used for non-radial test kernels.
pub struct FnKernel {
    pub value: Box<ScalarFn>,
    pub grad_x: Box<VectorFn>,
    pub grad_y: Box<VectorFn>,
}

impl PartialKernel for FnKernel {
    fn value(&self, x: &Point, y: &Point) -> f64 {
        (self.value)(x, y)
    }
    fn grad_x(&self, x: &Point, y: &Point) -> Point {
        (self.grad_x)(x, y)
    }
    fn grad_y(&self, x: &Point, y: &Point) -> Point {
        (self.grad_y)(x, y)
    }
    fn is_radial(&self) -> bool {
        false
    }
}

/// Which partial kernel applies at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inner,
    Outer,
}

impl From<Region> for Side {
    fn from(r: Region) -> Self {
        match r {
            Region::Omega1 => Side::Inner,
            Region::Omega2 | Region::Collar => Side::Outer,
        }
    }
}

/// The scaling constant `3 / (4 delta^4)`.
pub fn c_delta(delta: f64) -> f64 {
    3.0 / (4.0 * delta.powi(4))
}

#[derive(Clone)]
pub struct KernelSpec {
    phi1: Arc<dyn PartialKernel>,
    phi2: Arc<dyn PartialKernel>,
    delta: f64,
    norm: Norm,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("delta", &self.delta)
            .field("norm", &self.norm)
            .field("radial", &self.is_radial())
            .finish()
    }
}

impl KernelSpec {
    pub fn new(
        phi1: Arc<dyn PartialKernel>,
        phi2: Arc<dyn PartialKernel>,
        delta: f64,
        norm: Norm,
    ) -> Self {
        Self { phi1, phi2, delta, norm }
    }

    /// Constant `c_delta / 1000` inside, `100 c_delta (1 - (|y-x|_inf/delta)^2)`
    /// outside.
    pub fn two_phase(delta: f64) -> Self {
        let c = c_delta(delta);
        Self::new(
            Arc::new(Constant(c / 1000.0)),
            Arc::new(Parabolic { scale: 100.0 * c, delta, norm: Norm::Inf }),
            delta,
            Norm::Inf,
        )
    }

    /// The same kernel on both sides.
    pub fn single(phi: Arc<dyn PartialKernel>, delta: f64, norm: Norm) -> Self {
        Self::new(phi.clone(), phi, delta, norm)
    }

    pub fn zero(delta: f64) -> Self {
        Self::single(Arc::new(Constant(0.0)), delta, Norm::Inf)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn is_radial(&self) -> bool {
        self.phi1.is_radial() && self.phi2.is_radial()
    }

    pub fn partial(&self, side: Side) -> &dyn PartialKernel {
        match side {
            Side::Inner => self.phi1.as_ref(),
            Side::Outer => self.phi2.as_ref(),
        }
    }

    #[inline]
    pub fn in_support(&self, x: &Point, y: &Point) -> bool {
        self.norm.of(&(y - x)) <= self.delta
    }

    /// Truncated kernel `gamma(x, y)`.
    pub fn gamma(&self, side: Side, x: &Point, y: &Point) -> f64 {
        if self.in_support(x, y) {
            self.partial(side).value(x, y)
        } else {
            0.0
        }
    }

    /// `grad_x phi + grad_y phi` for the kernel of `side`; exactly zero for
    /// radial kernels.
    pub fn grad_sum(&self, side: Side, x: &Point, y: &Point) -> Point {
        let phi = self.partial(side);
        if phi.is_radial() {
            Point::zeros()
        } else {
            phi.grad_x(x, y) + phi.grad_y(x, y)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn product_kernel() -> FnKernel {
        FnKernel {
            value: Box::new(|x, y| x.x * y.y),
            grad_x: Box::new(|_, y| p(y.y, 0.0)),
            grad_y: Box::new(|x, _| p(0.0, x.x)),
        }
    }

    #[test]
    fn two_phase_kernel_values() {
        let k = KernelSpec::two_phase(0.1);
        assert!((c_delta(0.1) - 7500.0).abs() < 1e-9);
        let x = p(0.3, 0.4);
        assert!((k.gamma(Side::Inner, &x, &p(0.35, 0.45)) - 7.5).abs() < 1e-12);
        assert!((k.gamma(Side::Outer, &x, &x) - 750000.0).abs() < 1e-6);
        assert_eq!(k.gamma(Side::Inner, &x, &p(0.5, 0.4)), 0.0);
        assert!(k.gamma(Side::Outer, &x, &p(0.4, 0.4)).abs() < 1e-9);
        assert_eq!(k.grad_sum(Side::Outer, &x, &p(0.33, 0.41)), Point::zeros());
        assert!(k.is_radial());
    }

    #[test]
    fn x_only_kernel_grad_sum() {
        let phi = FnKernel {
            value: Box::new(|x, _| x.x),
            grad_x: Box::new(|_, _| p(1.0, 0.0)),
            grad_y: Box::new(|_, _| Point::zeros()),
        };
        let k = KernelSpec::single(Arc::new(phi), 0.1, Norm::Inf);
        assert_eq!(k.grad_sum(Side::Inner, &p(0.2, 0.2), &p(0.25, 0.2)), p(1.0, 0.0));
    }

    fn fd_grad_sum(phi: &dyn PartialKernel, x: &Point, y: &Point) -> Point {
        let h = 1e-6;
        let mut g = Point::zeros();
        for d in 0..2 {
            let mut e = Point::zeros();
            e[d] = h;
            g[d] = (phi.value(&(x + e), &(y + e)) - phi.value(&(x - e), &(y - e))) / (2.0 * h);
        }
        g
    }

    proptest! {
        #[test]
        fn product_kernel_grad_sum_matches_fd(
            x1 in 0.0..1.0f64, x2 in 0.0..1.0f64, z1 in -0.1..0.1f64, z2 in -0.1..0.1f64
        ) {
            let phi = product_kernel();
            let (x, y) = (p(x1, x2), p(x1 + z1, x2 + z2));
            let k = KernelSpec::single(Arc::new(product_kernel()), 0.1, Norm::Inf);
            let g = k.grad_sum(Side::Outer, &x, &y);
            prop_assert!((g - p(y.y, x.x)).norm() < 1e-15);
            let fd = fd_grad_sum(&phi, &x, &y);
            prop_assert!((g - fd).norm() <= 1e-6 * g.norm().max(1.0));
        }

        #[test]
        fn truncation_is_exact(x1 in 0.0..1.0f64, x2 in 0.0..1.0f64, z1 in -0.3..0.3f64, z2 in -0.3..0.3f64) {
            let k = KernelSpec::two_phase(0.1);
            let (x, y) = (p(x1, x2), p(x1 + z1, x2 + z2));
            if z1.abs().max(z2.abs()) > 0.1 {
                prop_assert_eq!(k.gamma(Side::Inner, &x, &y), 0.0);
                prop_assert_eq!(k.gamma(Side::Outer, &x, &y), 0.0);
            } else {
                prop_assert!(k.gamma(Side::Outer, &x, &y) >= 0.0);
            }
        }

        #[test]
        fn parabolic_gradients_match_fd(z1 in -0.1..0.1f64, z2 in -0.1..0.1f64) {
            // stay away from the ridge |z1| = |z2| where the inf-norm kinks
            prop_assume!((z1.abs() - z2.abs()).abs() > 1e-4);
            for norm in [Norm::Inf, Norm::Euclidean] {
                let phi = Parabolic { scale: 3.0, delta: 0.1, norm };
                let (x, y) = (p(0.4, 0.6), p(0.4 + z1, 0.6 + z2));
                let h = 1e-7;
                for d in 0..2 {
                    let mut e = Point::zeros();
                    e[d] = h;
                    let fd = (phi.value(&x, &(y + e)) - phi.value(&x, &(y - e))) / (2.0 * h);
                    prop_assert!((phi.grad_y(&x, &y)[d] - fd).abs() < 1e-5);
                }
                prop_assert_eq!(phi.grad_x(&x, &y), -phi.grad_y(&x, &y));
            }
        }
    }
}
