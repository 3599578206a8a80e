//! Labeled triangular meshes of the nonlocal domain `[-delta, 1 + delta]^2`.
//!
//! The unit square is split by a closed interface polyline into an inner
//! region and an outer region; the surrounding collar of width `delta` carries
//! the volume constraint. The interface is vertex aligned: every interface
//! segment is a mesh edge.

mod generate;
pub mod io;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::geometry::{
    closed_polyline_length, point_in_polygon, polygon_signed_area, segments_intersect,
    triangle_signed_area, Point,
};

pub use generate::generate_structured;

/// Relative area threshold (in units of `h_max^2`) below which a triangle is
/// treated as degenerate.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("malformed mesh file at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported element type {0}; only 3-node triangles carry area")]
    UnsupportedElement(usize),
    #[error("unknown physical tag {0} (expected 1, 2 or 3)")]
    UnknownTag(usize),
    #[error("mesh has no interface (no edge between inner and outer region)")]
    NoInterface,
    #[error("interface edges do not form a single simple closed loop: {0}")]
    InvalidInterface(String),
    #[error("interface touches the boundary of the unit square")]
    InterfaceOnBoundary,
    #[error("triangle {triangle} is degenerate or inverted (signed area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("triangle {triangle} label {label:?} disagrees with its barycenter position")]
    LabelMismatch { triangle: usize, label: Region },
    #[error("interface points {0} and {1} snap onto the same mesh vertex")]
    SnapCollision(usize, usize),
    #[error("interface point {0} snaps onto a vertex outside the open unit square")]
    SnapOnBoundary(usize),
    #[error("cannot connect interface points {0} and {1} through mesh edges")]
    SnapDisconnected(usize, usize),
    #[error("invalid mesh parameters: {0}")]
    InvalidParameters(String),
    #[error("vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("field has length {found}, expected {expected}")]
    FieldLength { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Subdomain label of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    /// Inside the interface.
    Omega1,
    /// Inside the unit square, outside the interface.
    Omega2,
    /// The interaction collar outside the unit square.
    Collar,
}

impl Region {
    /// Physical tag used in mesh files.
    pub fn tag(self) -> usize {
        match self {
            Region::Omega1 => 1,
            Region::Omega2 => 2,
            Region::Collar => 3,
        }
    }

    pub fn from_tag(tag: usize) -> Result<Self, MeshError> {
        match tag {
            1 => Ok(Region::Omega1),
            2 => Ok(Region::Omega2),
            3 => Ok(Region::Collar),
            other => Err(MeshError::UnknownTag(other)),
        }
    }

    /// True for the two regions making up the unit square.
    pub fn in_omega(self) -> bool {
        !matches!(self, Region::Collar)
    }
}

/// Degree-of-freedom classification of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    /// Strictly inside the unit square: carries an unknown.
    Interior,
    /// On the boundary of the unit square or in the collar: clamped to zero.
    Constrained,
}

/// A closed polyline; the closing segment from the last to the first point is
/// implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePolyline {
    points: Vec<Point>,
}

impl InterfacePolyline {
    pub fn new(points: Vec<Point>) -> Result<Self, MeshError> {
        if points.len() < 3 {
            return Err(MeshError::InvalidInterface(format!(
                "need at least 3 points, got {}",
                points.len()
            )));
        }
        let n = points.len();
        for i in 0..n {
            if points[i] == points[(i + 1) % n] {
                return Err(MeshError::InvalidInterface(format!("repeated point at {i}")));
            }
        }
        Ok(Self { points })
    }

    pub fn circle(center: Point, radius: f64, n: usize) -> Result<Self, MeshError> {
        Self::new(crate::geometry::circle_points(center, radius, n))
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        closed_polyline_length(&self.points)
    }

    pub fn signed_area(&self) -> f64 {
        polygon_signed_area(&self.points)
    }

    pub fn self_intersects(&self) -> bool {
        self_intersects(&self.points)
    }

    /// Resample at (approximately) uniform arc-length spacing.
    pub fn resample(&self, spacing: f64) -> Result<Self, MeshError> {
        let total = self.length();
        let count = ((total / spacing).round() as usize).max(3);
        let step = total / count as f64;
        let n = self.points.len();
        let mut out = Vec::with_capacity(count);
        let mut seg = 0;
        let mut seg_start = 0.0;
        let mut seg_len = (self.points[1 % n] - self.points[0]).norm();
        for k in 0..count {
            let s = k as f64 * step;
            while s > seg_start + seg_len && seg < n - 1 {
                seg_start += seg_len;
                seg += 1;
                seg_len = (self.points[(seg + 1) % n] - self.points[seg]).norm();
            }
            let a = self.points[seg];
            let b = self.points[(seg + 1) % n];
            let frac = if seg_len > 0.0 { ((s - seg_start) / seg_len).clamp(0.0, 1.0) } else { 0.0 };
            out.push(a + (b - a) * frac);
        }
        Self::new(out)
    }
}

/// True iff two non-adjacent segments of the closed polyline intersect.
pub fn self_intersects(points: &[Point]) -> bool {
    let n = points.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (&points[i], &points[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(a, b, &points[j], &points[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// Labeled triangulation of `Omega ∪ Omega_I` with a vertex-aligned interface.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    labels: Vec<Region>,
    interface: Vec<usize>,
    dofs: Vec<DofKind>,
    interior: Vec<usize>,
    interior_index: Vec<usize>,
    h_max: f64,
}

const NOT_INTERIOR: usize = usize::MAX;

impl Mesh {
    /// Build a mesh from labeled triangles; the interface is recovered as the
    /// set of edges between inner and outer triangles. Triangles with negative
    /// orientation are reoriented. An empty interface is accepted here.
    pub fn from_labeled(
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        labels: Vec<Region>,
    ) -> Result<Self, MeshError> {
        if labels.len() != triangles.len() {
            return Err(MeshError::FieldLength { expected: triangles.len(), found: labels.len() });
        }
        for tri in triangles.iter_mut() {
            for &v in tri.iter() {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange(v));
                }
            }
            let [a, b, c] = *tri;
            if triangle_signed_area(&vertices[a], &vertices[b], &vertices[c]) < 0.0 {
                tri.swap(1, 2);
            }
        }
        let interface = extract_interface(&vertices, &triangles, &labels)?;
        Self::assemble(vertices, triangles, labels, interface)
    }

    /// Build a mesh with an explicitly given interface loop, which must match
    /// the inner/outer label boundary exactly.
    pub fn with_interface(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        labels: Vec<Region>,
        interface: Vec<usize>,
    ) -> Result<Self, MeshError> {
        let derived = extract_interface(&vertices, &triangles, &labels)?;
        if !same_cycle(&derived, &interface) {
            return Err(MeshError::InvalidInterface(
                "given interface does not match the label boundary".into(),
            ));
        }
        Self::assemble(vertices, triangles, labels, interface)
    }

    fn assemble(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        labels: Vec<Region>,
        interface: Vec<usize>,
    ) -> Result<Self, MeshError> {
        let h_max = max_diameter(&vertices, &triangles);
        check_areas(&vertices, &triangles, h_max)?;
        let dofs = classify_dofs(vertices.len(), &triangles, &labels);
        let mut interior_index = vec![NOT_INTERIOR; vertices.len()];
        let mut interior = Vec::new();
        for (v, kind) in dofs.iter().enumerate() {
            if *kind == DofKind::Interior {
                interior_index[v] = interior.len();
                interior.push(v);
            }
        }
        let mesh = Self { vertices, triangles, labels, interface, dofs, interior, interior_index, h_max };
        mesh.check_labels()?;
        Ok(mesh)
    }

    fn check_labels(&self) -> Result<(), MeshError> {
        let polygon = self.interface_points();
        for (t, label) in self.labels.iter().enumerate() {
            let c = self.barycenter(t);
            let in_square = c.x > 0.0 && c.x < 1.0 && c.y > 0.0 && c.y < 1.0;
            let ok = match label {
                Region::Collar => !in_square,
                Region::Omega1 => point_in_polygon(&c, &polygon),
                Region::Omega2 => polygon.is_empty() || !point_in_polygon(&c, &polygon),
            };
            if !ok {
                return Err(MeshError::LabelMismatch { triangle: t, label: *label });
            }
        }
        // vertices shared between the collar and the unit square sit on its boundary
        let mut in_collar = vec![false; self.vertices.len()];
        let mut in_square = vec![false; self.vertices.len()];
        for (tri, label) in self.triangles.iter().zip(&self.labels) {
            for &v in tri {
                if label.in_omega() {
                    in_square[v] = true;
                } else {
                    in_collar[v] = true;
                }
            }
        }
        for v in 0..self.vertices.len() {
            if in_collar[v] && in_square[v] {
                let p = self.vertices[v];
                let tol = 1e-12;
                let on_boundary = (p.x.abs() < tol || (p.x - 1.0).abs() < tol) && (-tol..=1.0 + tol).contains(&p.y)
                    || (p.y.abs() < tol || (p.y - 1.0).abs() < tol) && (-tol..=1.0 + tol).contains(&p.x);
                if !on_boundary {
                    return Err(MeshError::InvalidParameters(format!(
                        "vertex {v} joins collar and unit square away from its boundary"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn labels(&self) -> &[Region] {
        &self.labels
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Interface vertex indices in counter-clockwise cyclic order.
    pub fn interface(&self) -> &[usize] {
        &self.interface
    }

    pub fn interface_points(&self) -> Vec<Point> {
        self.interface.iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn interface_polyline(&self) -> Result<InterfacePolyline, MeshError> {
        InterfacePolyline::new(self.interface_points())
    }

    pub fn dofs(&self) -> &[DofKind] {
        &self.dofs
    }

    /// Vertex indices of the interior degrees of freedom, ascending.
    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Position of vertex `v` among the interior degrees of freedom.
    pub fn interior_index(&self, v: usize) -> Option<usize> {
        match self.interior_index[v] {
            NOT_INTERIOR => None,
            i => Some(i),
        }
    }

    pub fn is_interior(&self, v: usize) -> bool {
        self.dofs[v] == DofKind::Interior
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        triangle_signed_area(&a, &b, &c)
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        (a + b + c) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// Sorted, de-duplicated vertex neighbour lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for tri in &self.triangles {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        nb[tri[i]].push(tri[j]);
                    }
                }
            }
        }
        for list in nb.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Vertices belonging to a triangle that has an interface vertex, sorted.
    pub fn interface_one_ring(&self) -> Vec<usize> {
        let mut on_interface = vec![false; self.vertices.len()];
        for &v in &self.interface {
            on_interface[v] = true;
        }
        let mut active = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            if tri.iter().any(|&v| on_interface[v]) {
                for &v in tri {
                    active[v] = true;
                }
            }
        }
        (0..self.vertices.len()).filter(|&v| active[v]).collect()
    }

    /// Copy of this mesh with vertices moved to `x - alpha * disp(x)`.
    ///
    /// `disp` is interleaved (`[x0, y0, x1, y1, ...]`).
    pub fn deform(&self, disp: &[f64], alpha: f64) -> Result<Mesh, MeshError> {
        let moved = self.displaced_vertices(disp, alpha)?;
        let h_max = max_diameter(&moved, &self.triangles);
        check_areas(&moved, &self.triangles, h_max)?;
        Ok(Mesh { vertices: moved, h_max, ..self.clone() })
    }

    /// Copy with every interior vertex moved by an independent uniform
    /// offset in `[-amplitude * h_max, amplitude * h_max]^2`.
    pub fn jitter_interior(&self, amplitude: f64, rng: &mut impl rand::Rng) -> Result<Mesh, MeshError> {
        let r = amplitude * self.h_max;
        let mut disp = vec![0.0; 2 * self.vertices.len()];
        for &v in &self.interior {
            disp[2 * v] = rng.gen_range(-r..=r);
            disp[2 * v + 1] = rng.gen_range(-r..=r);
        }
        self.deform(&disp, 1.0)
    }

    /// Vertex positions `x - alpha * disp(x)` without any validity check.
    pub fn displaced_vertices(&self, disp: &[f64], alpha: f64) -> Result<Vec<Point>, MeshError> {
        if disp.len() != 2 * self.vertices.len() {
            return Err(MeshError::FieldLength { expected: 2 * self.vertices.len(), found: disp.len() });
        }
        Ok(self
            .vertices
            .iter()
            .enumerate()
            .map(|(v, p)| Point::new(p.x - alpha * disp[2 * v], p.y - alpha * disp[2 * v + 1]))
            .collect())
    }

    /// True if any triangle would become degenerate or inverted under the move.
    pub fn would_invert(&self, disp: &[f64], alpha: f64) -> Result<bool, MeshError> {
        let moved = self.displaced_vertices(disp, alpha)?;
        let h_max = max_diameter(&moved, &self.triangles);
        Ok(check_areas(&moved, &self.triangles, h_max).is_err())
    }

    /// Interface polyline after moving vertices by `-alpha * disp`.
    pub fn displaced_interface(&self, disp: &[f64], alpha: f64) -> Vec<Point> {
        self.interface
            .iter()
            .map(|&v| {
                let p = self.vertices[v];
                Point::new(p.x - alpha * disp[2 * v], p.y - alpha * disp[2 * v + 1])
            })
            .collect()
    }
}

/// True iff some interior vertex moved by `-alpha * disp` leaves the open
/// unit square.
pub fn out_of_omega(mesh: &Mesh, disp: &[f64], alpha: f64) -> bool {
    mesh.interior_vertices().iter().any(|&v| {
        let p = mesh.vertices()[v];
        let x = p.x - alpha * disp[2 * v];
        let y = p.y - alpha * disp[2 * v + 1];
        !(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0)
    })
}

fn max_diameter(vertices: &[Point], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|&[a, b, c]| {
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            (pa - pb).norm().max((pb - pc).norm()).max((pc - pa).norm())
        })
        .fold(0.0, f64::max)
}

fn check_areas(vertices: &[Point], triangles: &[[usize; 3]], h_max: f64) -> Result<(), MeshError> {
    let min_area = DEGENERATE_AREA_RATIO * h_max * h_max;
    for (t, &[a, b, c]) in triangles.iter().enumerate() {
        let area = triangle_signed_area(&vertices[a], &vertices[b], &vertices[c]);
        if !(area > min_area) {
            return Err(MeshError::DegenerateTriangle { triangle: t, area });
        }
    }
    Ok(())
}

type EdgeMap = BTreeMap<(usize, usize), Vec<usize>>;

fn edge_map(triangles: &[[usize; 3]]) -> EdgeMap {
    let mut edges: EdgeMap = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    edges
}

fn classify_dofs(n_vertices: usize, triangles: &[[usize; 3]], labels: &[Region]) -> Vec<DofKind> {
    let mut kinds = vec![DofKind::Interior; n_vertices];
    let mut touched = vec![false; n_vertices];
    for (tri, label) in triangles.iter().zip(labels) {
        for &v in tri {
            touched[v] = true;
            if !label.in_omega() {
                kinds[v] = DofKind::Constrained;
            }
        }
    }
    for ((a, b), owners) in edge_map(triangles) {
        if owners.len() == 1 {
            kinds[a] = DofKind::Constrained;
            kinds[b] = DofKind::Constrained;
        }
    }
    for v in 0..n_vertices {
        if !touched[v] {
            kinds[v] = DofKind::Constrained;
        }
    }
    kinds
}

/// Recover the interface loop (counter-clockwise) from triangle labels.
fn extract_interface(
    vertices: &[Point],
    triangles: &[[usize; 3]],
    labels: &[Region],
) -> Result<Vec<usize>, MeshError> {
    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut n_edges = 0;
    for ((a, b), owners) in edge_map(triangles) {
        let inner = owners.iter().filter(|&&t| labels[t] == Region::Omega1).count();
        if inner == 0 {
            continue;
        }
        if owners.len() == 1 {
            return Err(MeshError::InvalidInterface(format!(
                "inner region reaches the mesh boundary at edge ({a}, {b})"
            )));
        }
        if inner == 1 {
            let other = owners.iter().find(|&&t| labels[t] != Region::Omega1).copied();
            if let Some(t) = other {
                if labels[t] == Region::Collar {
                    return Err(MeshError::InterfaceOnBoundary);
                }
            }
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
            n_edges += 1;
        }
    }
    if adjacency.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((v, nb)) = adjacency.iter().find(|(_, nb)| nb.len() != 2) {
        return Err(MeshError::InvalidInterface(format!(
            "vertex {v} has {} interface edges",
            nb.len()
        )));
    }
    let start = *adjacency.keys().min().unwrap();
    let mut cycle = vec![start];
    let mut prev = start;
    let mut cur = adjacency[&start][0];
    while cur != start {
        cycle.push(cur);
        let nb = &adjacency[&cur];
        let next = if nb[0] == prev { nb[1] } else { nb[0] };
        prev = cur;
        cur = next;
        if cycle.len() > n_edges {
            break;
        }
    }
    if cycle.len() != n_edges {
        return Err(MeshError::InvalidInterface("edges form more than one loop".into()));
    }
    let mut points: Vec<Point> = cycle.iter().map(|&v| vertices[v]).collect();
    if polygon_signed_area(&points) < 0.0 {
        cycle.reverse();
        points.reverse();
    }
    if self_intersects(&points) {
        return Err(MeshError::InvalidInterface("loop intersects itself".into()));
    }
    Ok(cycle)
}

fn same_cycle(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    if a.is_empty() {
        return true;
    }
    let Some(shift) = b.iter().position(|&v| v == a[0]) else {
        return false;
    };
    let n = a.len();
    let forward = (0..n).all(|i| a[i] == b[(shift + i) % n]);
    let backward = (0..n).all(|i| a[i] == b[(shift + n - i) % n]);
    forward || backward
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_two_triangles(label: Region) -> Result<Mesh, MeshError> {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        Mesh::from_labeled(v, vec![[0, 1, 2], [0, 2, 3]], vec![label; 2])
    }

    #[test]
    fn square_and_bowtie() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        assert!(!self_intersects(&sq));
        let bowtie = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(self_intersects(&bowtie));
    }

    #[test]
    fn two_triangle_square_has_no_interface() {
        let m = unit_square_two_triangles(Region::Omega2).unwrap();
        assert!(m.interface().is_empty());
        assert_eq!(m.n_interior(), 0);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clockwise_triangles_are_reoriented() {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let m = Mesh::from_labeled(v, vec![[0, 2, 1]], vec![Region::Omega2]).unwrap();
        assert!(m.area(0) > 0.0);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        let err = Mesh::from_labeled(v, vec![[0, 1, 2]], vec![Region::Omega2]).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateTriangle { .. }));
    }

    #[test]
    fn resample_keeps_circle_geometry() {
        let c = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 200).unwrap();
        let r = c.resample(0.05).unwrap();
        assert_eq!(r.len(), (c.length() / 0.05).round() as usize);
        for p in r.points() {
            assert!(((p - Point::new(0.5, 0.5)).norm() - 0.25).abs() < 1e-3);
        }
    }
}
