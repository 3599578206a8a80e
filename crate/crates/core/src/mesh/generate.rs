//! Structured criss-cross mesh generator with interface snapping.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{InterfacePolyline, Mesh, MeshError, Region};
use crate::geometry::{closest_point_on_segment, point_in_polygon, point_segment_distance, Point};

/// Grid line coordinates along one axis: `n` cells on `[0, 1]` and
/// `ceil(delta * n)` cells on each side of the collar.
fn grid_lines(n: usize, delta: f64) -> Vec<f64> {
    let m = ((delta * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut xs = Vec::with_capacity(n + 2 * m + 1);
    for k in 0..m {
        xs.push(-delta + delta * k as f64 / m as f64);
    }
    for j in 0..=n {
        xs.push(j as f64 / n as f64);
    }
    for k in 1..=m {
        xs.push(1.0 + delta * k as f64 / m as f64);
    }
    xs
}

struct Grid {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

/// Every cell is split into four triangles around its center vertex.
fn criss_cross(xs: &[f64]) -> Grid {
    let lines = xs.len();
    let cells = lines - 1;
    let mut vertices = Vec::with_capacity(lines * lines + cells * cells);
    for &y in xs {
        for &x in xs {
            vertices.push(Point::new(x, y));
        }
    }
    let corner = |i: usize, j: usize| j * lines + i;
    let mut triangles = Vec::with_capacity(4 * cells * cells);
    for j in 0..cells {
        for i in 0..cells {
            let c = vertices.len();
            vertices.push(Point::new(0.5 * (xs[i] + xs[i + 1]), 0.5 * (xs[j] + xs[j + 1])));
            let (v00, v10) = (corner(i, j), corner(i + 1, j));
            let (v01, v11) = (corner(i, j + 1), corner(i + 1, j + 1));
            triangles.push([v00, v10, c]);
            triangles.push([v10, v11, c]);
            triangles.push([v11, v01, c]);
            triangles.push([v01, v00, c]);
        }
    }
    Grid { vertices, triangles }
}

/// Smallest fraction of its original area a triangle may keep when a vertex
/// is snapped.
const MIN_AREA_RATIO: f64 = 0.25;

fn strictly_inside(p: &Point) -> bool {
    p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 1.0
}

#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    vertex: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest edge path from `from` to `to` through free vertices, preferring
/// vertices close to the straight segment between the two endpoints.
fn segment_path(
    vertices: &[Point],
    neighbors: &[Vec<usize>],
    free: &[bool],
    from: usize,
    to: usize,
) -> Option<Vec<usize>> {
    let (a, b) = (vertices[from], vertices[to]);
    let mut cost = vec![f64::INFINITY; vertices.len()];
    let mut prev = vec![usize::MAX; vertices.len()];
    let mut heap = BinaryHeap::new();
    cost[from] = 0.0;
    heap.push(Candidate { cost: 0.0, vertex: from });
    while let Some(Candidate { cost: c, vertex: v }) = heap.pop() {
        if v == to {
            break;
        }
        if c > cost[v] {
            continue;
        }
        for &w in &neighbors[v] {
            if w != to && !free[w] {
                continue;
            }
            let step = (vertices[w] - vertices[v]).norm()
                + 2.0 * point_segment_distance(&vertices[w], &a, &b);
            if c + step < cost[w] {
                cost[w] = c + step;
                prev[w] = v;
                heap.push(Candidate { cost: c + step, vertex: w });
            }
        }
    }
    if !cost[to].is_finite() {
        return None;
    }
    let mut path = vec![to];
    let mut v = to;
    while v != from {
        v = prev[v];
        path.push(v);
    }
    path.reverse();
    Some(path)
}

fn neighbor_lists(n_vertices: usize, triangles: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut nb = vec![Vec::new(); n_vertices];
    for tri in triangles {
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            nb[a].push(b);
            nb[b].push(a);
        }
    }
    for list in nb.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    nb
}

fn min_area_ok(vertices: &[Point], triangles: &[[usize; 3]]) -> bool {
    let h = triangles
        .iter()
        .map(|&[a, b, c]| {
            (vertices[a] - vertices[b])
                .norm()
                .max((vertices[b] - vertices[c]).norm())
                .max((vertices[c] - vertices[a]).norm())
        })
        .fold(0.0, f64::max);
    let min_area = super::DEGENERATE_AREA_RATIO * h * h;
    triangles.iter().all(|&[a, b, c]| {
        crate::geometry::triangle_signed_area(&vertices[a], &vertices[b], &vertices[c]) > min_area
    })
}

/// Criss-cross triangulation of `[-delta, 1 + delta]^2` with `n` cells per
/// unit length, with the interface snapped onto mesh vertices.
///
/// Each interface point moves its nearest mesh vertex onto itself. Snapped
/// vertices that do not share an edge are joined by a short edge path whose
/// intermediate vertices are projected onto the connecting segment.
pub fn generate_structured(
    n: usize,
    delta: f64,
    interface: &InterfacePolyline,
) -> Result<Mesh, MeshError> {
    if n < 4 {
        return Err(MeshError::InvalidParameters(format!("n = {n} must be at least 4")));
    }
    if !(delta > 0.0) {
        return Err(MeshError::InvalidParameters(format!("delta = {delta} must be positive")));
    }
    if interface.self_intersects() {
        return Err(MeshError::InvalidInterface("polyline intersects itself".into()));
    }
    let points = interface.points();
    if points.iter().any(|p| !strictly_inside(p)) {
        return Err(MeshError::InterfaceOnBoundary);
    }

    let xs = grid_lines(n, delta);
    let Grid { mut vertices, triangles } = criss_cross(&xs);
    let neighbors = neighbor_lists(vertices.len(), &triangles);

    let mut incident = vec![Vec::new(); vertices.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            incident[v].push(t);
        }
    }
    let area = |verts: &[Point], t: usize| {
        let [a, b, c] = triangles[t];
        crate::geometry::triangle_signed_area(&verts[a], &verts[b], &verts[c])
    };
    let original: Vec<f64> = (0..triangles.len()).map(|t| area(&vertices, t)).collect();

    let mut owner = vec![usize::MAX; vertices.len()];
    let mut snapped = Vec::with_capacity(points.len());
    for (k, p) in points.iter().enumerate() {
        // nearest vertex whose move keeps every incident triangle at a
        // quarter of its original area or more
        let mut chosen = None;
        for v in nearby_vertices(&vertices, &xs, p) {
            let saved = vertices[v];
            vertices[v] = *p;
            let ok = incident[v].iter().all(|&t| area(&vertices, t) >= MIN_AREA_RATIO * original[t]);
            vertices[v] = saved;
            if ok {
                chosen = Some(v);
                break;
            }
        }
        let v = chosen.ok_or_else(|| {
            MeshError::InvalidParameters(format!(
                "snapping interface point {k} would collapse a triangle; refine the mesh"
            ))
        })?;
        if !strictly_inside(&vertices[v]) {
            return Err(MeshError::SnapOnBoundary(k));
        }
        if owner[v] != usize::MAX {
            return Err(MeshError::SnapCollision(owner[v], k));
        }
        owner[v] = k;
        snapped.push(v);
        vertices[v] = *p;
    }

    let mut free: Vec<bool> = vertices.iter().map(strictly_inside).collect();
    for &v in &snapped {
        free[v] = false;
    }
    let count = snapped.len();
    let mut cycle = Vec::with_capacity(count);
    let mut projected = Vec::new();
    for k in 0..count {
        let (from, to) = (snapped[k], snapped[(k + 1) % count]);
        cycle.push(from);
        if neighbors[from].binary_search(&to).is_ok() {
            continue;
        }
        let path = segment_path(&vertices, &neighbors, &free, from, to)
            .ok_or(MeshError::SnapDisconnected(k, (k + 1) % count))?;
        for &w in &path[1..path.len() - 1] {
            free[w] = false;
            cycle.push(w);
            projected.push((w, vertices[w]));
        }
    }
    for &(w, _) in &projected {
        let k = cycle.iter().position(|&c| c == w).unwrap();
        let (a, b) = previous_next_snapped(&cycle, k, &owner);
        vertices[w] = closest_point_on_segment(&vertices[w], &vertices[a], &vertices[b]);
    }
    if !min_area_ok(&vertices, &triangles) {
        for &(w, original) in &projected {
            vertices[w] = original;
        }
    }

    let polygon: Vec<Point> = cycle.iter().map(|&v| vertices[v]).collect();
    if super::self_intersects(&polygon) {
        return Err(MeshError::InvalidInterface(
            "snapped interface intersects itself; refine the mesh".into(),
        ));
    }
    let labels = triangles
        .iter()
        .map(|&[a, b, c]| {
            let bc = (vertices[a] + vertices[b] + vertices[c]) / 3.0;
            if !strictly_inside(&bc) {
                Region::Collar
            } else if point_in_polygon(&bc, &polygon) {
                Region::Omega1
            } else {
                Region::Omega2
            }
        })
        .collect();
    if crate::geometry::polygon_signed_area(&polygon) < 0.0 {
        cycle.reverse();
    }
    Mesh::with_interface(vertices, triangles, labels, cycle)
}

/// Nearest snapped vertices before and after position `k` of the cycle.
fn previous_next_snapped(cycle: &[usize], k: usize, owner: &[usize]) -> (usize, usize) {
    let n = cycle.len();
    let mut i = k;
    while owner[cycle[i]] == usize::MAX {
        i = (i + n - 1) % n;
    }
    let mut j = k;
    while owner[cycle[j]] == usize::MAX {
        j = (j + 1) % n;
    }
    (cycle[i], cycle[j])
}

/// Vertices of the cells around `p`, nearest first; ties go to the lower
/// index.
fn nearby_vertices(vertices: &[Point], xs: &[f64], p: &Point) -> Vec<usize> {
    let lines = xs.len();
    let cells = lines - 1;
    let locate = |t: f64| xs.partition_point(|&x| x <= t).clamp(1, cells) - 1;
    let (i, j) = (locate(p.x), locate(p.y));
    let mut candidates = Vec::with_capacity(9 + 9);
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            let (ci, cj) = (i as i64 + di, j as i64 + dj);
            if ci < 0 || cj < 0 || ci as usize >= cells || cj as usize >= cells {
                continue;
            }
            let (ci, cj) = (ci as usize, cj as usize);
            candidates.push(lines * lines + cj * cells + ci);
            for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                candidates.push((cj + b) * lines + ci + a);
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    candidates.sort_by(|&a, &b| {
        (vertices[a] - p)
            .norm_squared()
            .total_cmp(&(vertices[b] - p).norm_squared())
            .then(a.cmp(&b))
    });
    candidates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_signed_area;

    fn circle(n_points: usize) -> InterfacePolyline {
        InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, n_points).unwrap()
    }

    #[test]
    fn small_circle_mesh() {
        let m = generate_structured(8, 0.1, &circle(16)).unwrap();
        assert_eq!(m.interface().len(), 16);
        let poly = m.interface_points();
        for t in 0..m.n_triangles() {
            let inside = point_in_polygon(&m.barycenter(t), &poly);
            assert_eq!(inside, m.labels()[t] == Region::Omega1, "triangle {t}");
        }
        assert!((m.total_area() - 1.44).abs() < 1e-12 * 1.44);
    }

    #[test]
    fn snap_onto_boundary_is_rejected() {
        let poly = InterfacePolyline::new(vec![
            Point::new(0.99, 0.5),
            Point::new(0.6, 0.6),
            Point::new(0.6, 0.4),
        ])
        .unwrap();
        assert!(matches!(generate_structured(4, 0.1, &poly), Err(MeshError::SnapOnBoundary(0))));
    }

    #[test]
    fn fine_mesh_label_fractions() {
        let m = generate_structured(64, 0.1, &circle(100)).unwrap();
        // criss-cross cells have the cell side as longest edge; snapping
        // stretches a few edges near the interface
        assert!(m.h_max() >= 1.0 / 64.0 && m.h_max() < 1.5 / 64.0);
        let mut area = [0.0; 3];
        for t in 0..m.n_triangles() {
            let idx = match m.labels()[t] {
                Region::Omega1 => 0,
                Region::Omega2 => 1,
                Region::Collar => 2,
            };
            area[idx] += m.area(t);
        }
        let disk = std::f64::consts::PI * 0.0625;
        assert!((area[0] - disk).abs() < 0.1 * disk);
        assert!((area[1] - (1.0 - disk)).abs() < 0.1 * (1.0 - disk));
        assert!((area[2] - (1.44 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn sparse_sampling_is_completed_with_edge_paths() {
        let m = generate_structured(20, 0.1, &circle(8)).unwrap();
        assert!(m.interface().len() > 8);
        assert!(polygon_signed_area(&m.interface_points()) > 0.0);
        for p in m.interface_points() {
            let r = (p - Point::new(0.5, 0.5)).norm();
            assert!(r <= 0.25 + 1e-12 && r > 0.2);
        }
    }

    #[test]
    fn collision_is_reported() {
        let poly = InterfacePolyline::new(vec![
            Point::new(0.5, 0.5),
            Point::new(0.51, 0.5),
            Point::new(0.5, 0.7),
        ])
        .unwrap();
        assert!(matches!(generate_structured(8, 0.1, &poly), Err(MeshError::SnapCollision(0, 1))));
    }
}
