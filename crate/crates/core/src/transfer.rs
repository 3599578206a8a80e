//! Transfer of nodal data between non-matching meshes and re-meshing around
//! an interface.

use crate::fem::p1_gradient;
use crate::geometry::{triangle_signed_area, Point};
use crate::mesh::{generate_structured, InterfacePolyline, Mesh, MeshError};

/// Barycentric tolerance for accepting a point on a triangle boundary.
const INSIDE_TOL: f64 = 1e-12;

/// Bucket grid over triangle bounding boxes.
#[derive(Debug, Clone)]
pub struct PointLocator {
    lo: Point,
    cell: Point,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let nt = mesh.n_triangles().max(1);
        let (mut lo, mut hi) = (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
        for p in mesh.vertices() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let side = ((nt as f64).sqrt().ceil() as usize).max(1);
        let dims = [side, side];
        let span = (hi - lo).map(|s| s.max(f64::MIN_POSITIVE));
        let cell = Point::new(span.x / side as f64, span.y / side as f64);
        let mut locator = Self { lo, cell, dims, buckets: vec![Vec::new(); side * side] };
        for t in 0..mesh.n_triangles() {
            let pts = mesh.triangle_points(t);
            let (mut a, mut b) = (pts[0], pts[0]);
            for p in &pts[1..] {
                a = a.inf(p);
                b = b.sup(p);
            }
            let (i0, j0) = locator.cell_of(&a);
            let (i1, j1) = locator.cell_of(&b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    locator.buckets[j * dims[0] + i].push(t);
                }
            }
        }
        locator
    }

    fn cell_of(&self, p: &Point) -> (usize, usize) {
        let f = |v: f64, lo: f64, c: f64, n: usize| (((v - lo) / c).floor().max(0.0) as usize).min(n - 1);
        (f(p.x, self.lo.x, self.cell.x, self.dims[0]), f(p.y, self.lo.y, self.cell.y, self.dims[1]))
    }

    /// Containing triangle and barycentric coordinates, if any.
    pub fn locate(&self, mesh: &Mesh, p: &Point) -> Option<(usize, [f64; 3])> {
        let (i, j) = self.cell_of(p);
        let found = best_containing(mesh, self.buckets[j * self.dims[0] + i].iter().copied(), p);
        found.or_else(|| best_containing(mesh, 0..mesh.n_triangles(), p))
    }
}

fn barycentric(pts: &[Point; 3], p: &Point) -> [f64; 3] {
    let area = triangle_signed_area(&pts[0], &pts[1], &pts[2]);
    [
        triangle_signed_area(p, &pts[1], &pts[2]) / area,
        triangle_signed_area(&pts[0], p, &pts[2]) / area,
        triangle_signed_area(&pts[0], &pts[1], p) / area,
    ]
}

/// Among candidate triangles, the first one containing `p` (within
/// tolerance).
fn best_containing(
    mesh: &Mesh,
    candidates: impl Iterator<Item = usize>,
    p: &Point,
) -> Option<(usize, [f64; 3])> {
    for t in candidates {
        let l = barycentric(&mesh.triangle_points(t), p);
        if l.iter().all(|&x| x >= -INSIDE_TOL) {
            return Some((t, l));
        }
    }
    None
}

fn nearest_vertex(mesh: &Mesh, p: &Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (v, q) in mesh.vertices().iter().enumerate() {
        let d = (q - p).norm_squared();
        if d < best_d {
            best = v;
            best_d = d;
        }
    }
    best
}

/// A scalar P1 field on its own mesh that can be evaluated anywhere.
#[derive(Debug, Clone)]
pub struct DataField {
    mesh: Mesh,
    values: Vec<f64>,
    locator: PointLocator,
}

impl DataField {
    pub fn new(mesh: Mesh, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != mesh.n_vertices() {
            return Err(MeshError::FieldLength { expected: mesh.n_vertices(), found: values.len() });
        }
        if mesh.n_triangles() == 0 {
            return Err(MeshError::InvalidParameters("empty source mesh".into()));
        }
        let locator = PointLocator::new(&mesh);
        Ok(Self { mesh, values, locator })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value and gradient at `p`. Outside the mesh the nearest vertex value
    /// is used, with zero gradient.
    pub fn sample(&self, p: &Point) -> (f64, Point) {
        match self.locator.locate(&self.mesh, p) {
            Some((t, l)) => {
                let v = self.mesh.triangles()[t];
                let value = l[0] * self.values[v[0]] + l[1] * self.values[v[1]] + l[2] * self.values[v[2]];
                (value, p1_gradient(&self.mesh, t, &self.values))
            }
            None => (self.values[nearest_vertex(&self.mesh, p)], Point::zeros()),
        }
    }

    pub fn value(&self, p: &Point) -> f64 {
        self.sample(p).0
    }
}

/// Evaluate a P1 field at the vertices of another mesh.
pub fn interpolate(src_mesh: &Mesh, src_field: &[f64], dst_mesh: &Mesh) -> Result<Vec<f64>, MeshError> {
    let field = DataField::new(src_mesh.clone(), src_field.to_vec())?;
    Ok(dst_mesh.vertices().iter().map(|p| field.value(p)).collect())
}

/// Arc-length spacing of the resampled interface, in units of the fine mesh
/// size. Slightly above one cell so that no two points claim the same vertex.
pub const RESAMPLE_SPACING: f64 = 1.25;

/// Structured mesh of resolution `n_fine` around the interface of `old`.
pub fn remesh_around_interface(old: &Mesh, n_fine: usize, delta: f64) -> Result<Mesh, MeshError> {
    let poly = old.interface_polyline()?;
    if poly.self_intersects() {
        return Err(MeshError::InvalidInterface("interface intersects itself".into()));
    }
    let resampled = poly.resample(RESAMPLE_SPACING / n_fine as f64)?;
    generate_structured(n_fine, delta, &resampled)
}

/// Same as [`remesh_around_interface`] for a bare polyline.
pub fn mesh_around_polyline(poly: &InterfacePolyline, n: usize, delta: f64) -> Result<Mesh, MeshError> {
    generate_structured(n, delta, &poly.resample(RESAMPLE_SPACING / n as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polyline_hausdorff;

    fn circle_mesh(n: usize, r: f64) -> Mesh {
        let poly = InterfacePolyline::circle(Point::new(0.5, 0.5), r, 4 * n / 3).unwrap();
        mesh_around_polyline(&poly, n, 0.1).unwrap()
    }

    #[test]
    fn identical_meshes_copy_exactly() {
        let m = circle_mesh(12, 0.25);
        let f: Vec<f64> = (0..m.n_vertices()).map(|i| (i as f64).sin()).collect();
        assert_eq!(interpolate(&m, &f, &m).unwrap(), f);
    }

    #[test]
    fn affine_fields_are_reproduced() {
        let a = circle_mesh(13, 0.25);
        let b = circle_mesh(21, 0.2);
        let lin = |p: &Point| p.x + 2.0 * p.y - 0.3;
        let f: Vec<f64> = a.vertices().iter().map(lin).collect();
        let g = interpolate(&a, &f, &b).unwrap();
        for (p, v) in b.vertices().iter().zip(&g) {
            assert!((v - lin(p)).abs() < 1e-12);
        }
        let field = DataField::new(a, f).unwrap();
        let (_, grad) = field.sample(&Point::new(0.31, 0.77));
        assert!((grad - Point::new(1.0, 2.0)).norm() < 1e-10);
    }

    #[test]
    fn round_trip_error_is_first_order() {
        let coarse = circle_mesh(11, 0.25);
        let fine = circle_mesh(23, 0.25);
        let f = |p: &Point| (3.0 * p.x).sin() * (2.0 * p.y).cos();
        let fc: Vec<f64> = coarse.vertices().iter().map(f).collect();
        let back = interpolate(&fine, &interpolate(&coarse, &fc, &fine).unwrap(), &coarse).unwrap();
        let err = fc.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // |grad f| <= 3.7; errors scale with h^2 |D^2 f| in practice
        assert!(err <= 3.7 * coarse.h_max(), "round trip error {err}");
    }

    #[test]
    fn outside_points_take_nearest_vertex() {
        let m = circle_mesh(8, 0.25);
        let f: Vec<f64> = m.vertices().iter().map(|p| p.x).collect();
        let field = DataField::new(m, f).unwrap();
        let (v, g) = field.sample(&Point::new(5.0, 0.5));
        assert!((v - 1.1).abs() < 1e-12);
        assert_eq!(g, Point::zeros());
    }

    #[test]
    fn remesh_preserves_geometry() {
        let m = circle_mesh(20, 0.25);
        let same = remesh_around_interface(&m, 20, 0.1).unwrap();
        let h = polyline_hausdorff(&m.interface_points(), &same.interface_points());
        assert!(h <= 0.5 * m.h_max(), "Hausdorff {h}");
        let fine = remesh_around_interface(&m, 40, 0.1).unwrap();
        let ratio = fine.interface().len() as f64 / same.interface().len() as f64;
        assert!((1.6..2.4).contains(&ratio), "node ratio {ratio}");
        let hf = polyline_hausdorff(&m.interface_points(), &fine.interface_points());
        assert!(hf <= m.h_max());
    }
}
