//! Planar geometry helpers shared by the mesh, transfer and optimizer code.

use nalgebra::Vector2;

/// A point (or displacement) in the plane.
pub type Point = Vector2<f64>;

#[inline]
fn coord(p: &Point) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

/// Exact orientation of `c` relative to the directed line `a -> b`.
///
/// Positive for a counter-clockwise turn, negative for clockwise and exactly
/// zero for collinear input.
pub fn orient2d(a: &Point, b: &Point, c: &Point) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

fn on_segment(a: &Point, b: &Point, p: &Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection test, including touching and collinear overlap.
pub fn segments_intersect(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let d1 = orient2d(q1, q2, p1);
    let d2 = orient2d(q1, q2, p2);
    let d3 = orient2d(p1, p2, q1);
    let d4 = orient2d(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Crossing-number point-in-polygon test for a closed polygon given by its
/// vertices (the closing edge is implicit).
pub fn point_in_polygon(p: &Point, polygon: &[Point]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&polygon[i], &polygon[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Signed area of a closed polygon, positive for counter-clockwise order.
pub fn polygon_signed_area(polygon: &[Point]) -> f64 {
    let n = polygon.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = &polygon[i];
        let b = &polygon[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice
}

/// Length of the closed polyline through `points`.
pub fn closed_polyline_length(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    (0..n).map(|i| (points[(i + 1) % n] - points[i]).norm()).sum()
}

/// Signed area of the triangle `(a, b, c)`.
#[inline]
pub fn triangle_signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Gradients of the three barycentric coordinate functions of a triangle.
pub fn barycentric_gradients(p: &[Point; 3]) -> [Point; 3] {
    let twice = 2.0 * triangle_signed_area(&p[0], &p[1], &p[2]);
    let g = |a: &Point, b: &Point| Point::new(a.y - b.y, b.x - a.x) / twice;
    [g(&p[1], &p[2]), g(&p[2], &p[0]), g(&p[0], &p[1])]
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    (p - closest_point_on_segment(p, a, b)).norm()
}

/// Orthogonal projection of `p` onto the closed segment `[a, b]`.
pub fn closest_point_on_segment(p: &Point, a: &Point, b: &Point) -> Point {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * s
}

/// Distance from `p` to the closed polyline through `points`.
pub fn point_polyline_distance(p: &Point, points: &[Point]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| point_segment_distance(p, &points[i], &points[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance between two closed polylines, sampled at the
/// vertices of each polyline against the segments of the other.
pub fn polyline_hausdorff(a: &[Point], b: &[Point]) -> f64 {
    let ab = a
        .iter()
        .map(|p| point_polyline_distance(p, b))
        .fold(0.0, f64::max);
    let ba = b
        .iter()
        .map(|p| point_polyline_distance(p, a))
        .fold(0.0, f64::max);
    ab.max(ba)
}

/// `n` points on the circle of given center and radius, counter-clockwise
/// starting at angle zero.
pub fn circle_points(center: Point, radius: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            center + Point::new(theta.cos(), theta.sin()) * radius
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn orientation_signs() {
        assert!(orient2d(&p(0.0, 0.0), &p(1.0, 0.0), &p(0.0, 1.0)) > 0.0);
        assert!(orient2d(&p(0.0, 0.0), &p(1.0, 0.0), &p(0.0, -1.0)) < 0.0);
        assert_eq!(orient2d(&p(0.0, 0.0), &p(1.0, 1.0), &p(3.0, 3.0)), 0.0);
    }

    #[test]
    fn segment_cases() {
        assert!(segments_intersect(&p(0.0, 0.0), &p(1.0, 1.0), &p(0.0, 1.0), &p(1.0, 0.0)));
        assert!(!segments_intersect(&p(0.0, 0.0), &p(1.0, 0.0), &p(0.0, 1.0), &p(1.0, 1.0)));
        // touching at an endpoint
        assert!(segments_intersect(&p(0.0, 0.0), &p(1.0, 0.0), &p(1.0, 0.0), &p(2.0, 1.0)));
        // collinear, disjoint
        assert!(!segments_intersect(&p(0.0, 0.0), &p(1.0, 0.0), &p(2.0, 0.0), &p(3.0, 0.0)));
        // collinear, overlapping
        assert!(segments_intersect(&p(0.0, 0.0), &p(2.0, 0.0), &p(1.0, 0.0), &p(3.0, 0.0)));
    }

    #[test]
    fn polygon_measures() {
        let square = [p(0.0, 0.0), p(0.5, 0.0), p(0.5, 0.5), p(0.0, 0.5)];
        assert_eq!(polygon_signed_area(&square), 0.25);
        assert_eq!(closed_polyline_length(&square), 2.0);
        assert!(point_in_polygon(&p(0.25, 0.25), &square));
        assert!(!point_in_polygon(&p(0.75, 0.25), &square));
    }

    #[test]
    fn barycentric_gradients_reproduce_linears() {
        let t = [p(0.1, 0.2), p(0.9, 0.3), p(0.4, 0.8)];
        let g = barycentric_gradients(&t);
        // sum of gradients is zero, and sum of x_i * grad lambda_i = e_1
        let s = g[0] + g[1] + g[2];
        assert!(s.norm() < 1e-14);
        let ex = g[0] * t[0].x + g[1] * t[1].x + g[2] * t[2].x;
        assert!((ex - p(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn hausdorff_of_shifted_square() {
        let a = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        let b: Vec<Point> = a.iter().map(|q| q + p(0.1, 0.0)).collect();
        assert!((polyline_hausdorff(&a, &b) - 0.1).abs() < 1e-15);
    }
}
