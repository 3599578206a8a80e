//! Mesh file formats: Gmsh MSH 2.2 ASCII (read/write), legacy VTK (write)
//! and interface CSV (read/write).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Mesh, MeshError, Region};
use crate::geometry::Point;

fn malformed(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Malformed { line, message: message.into() }
}

/// Parse MSH 2.2 ASCII text. Point (type 15) and line (type 1) elements are
/// skipped; any other non-triangle element is rejected.
pub fn parse_msh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut node_ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut labels = Vec::new();
    let mut seen_format = false;

    let mut next = |what: &str| -> Result<(usize, &str), MeshError> {
        lines.next().ok_or_else(|| malformed(0, format!("unexpected end of file while reading {what}")))
    };

    loop {
        let (ln, line) = match next("section") {
            Ok(x) => x,
            Err(_) => break,
        };
        match line {
            "" => continue,
            "$MeshFormat" => {
                let (ln, header) = next("format header")?;
                let version = header.split_whitespace().next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(malformed(ln, format!("unsupported MSH version {version}")));
                }
                if header.split_whitespace().nth(1) != Some("0") {
                    return Err(malformed(ln, "only ASCII files are supported"));
                }
                let (ln, end) = next("$EndMeshFormat")?;
                if end != "$EndMeshFormat" {
                    return Err(malformed(ln, "expected $EndMeshFormat"));
                }
                seen_format = true;
            }
            "$Nodes" => {
                let (ln, count) = next("node count")?;
                let count: usize = count.parse().map_err(|_| malformed(ln, "bad node count"))?;
                for _ in 0..count {
                    let (ln, row) = next("node")?;
                    let f: Vec<&str> = row.split_whitespace().collect();
                    if f.len() < 3 {
                        return Err(malformed(ln, "node line needs id, x, y"));
                    }
                    let id: usize = f[0].parse().map_err(|_| malformed(ln, "bad node id"))?;
                    let x: f64 = f[1].parse().map_err(|_| malformed(ln, "bad x coordinate"))?;
                    let y: f64 = f[2].parse().map_err(|_| malformed(ln, "bad y coordinate"))?;
                    if node_ids.insert(id, vertices.len()).is_some() {
                        return Err(malformed(ln, format!("duplicate node id {id}")));
                    }
                    vertices.push(Point::new(x, y));
                }
                let (ln, end) = next("$EndNodes")?;
                if end != "$EndNodes" {
                    return Err(malformed(ln, "expected $EndNodes"));
                }
            }
            "$Elements" => {
                let (ln, count) = next("element count")?;
                let count: usize = count.parse().map_err(|_| malformed(ln, "bad element count"))?;
                for _ in 0..count {
                    let (ln, row) = next("element")?;
                    let f: Vec<usize> = row
                        .split_whitespace()
                        .map(|s| s.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| malformed(ln, "non-integer element field"))?;
                    if f.len() < 3 {
                        return Err(malformed(ln, "element line too short"));
                    }
                    let (kind, n_tags) = (f[1], f[2]);
                    match kind {
                        1 | 15 => continue,
                        2 => {}
                        other => return Err(MeshError::UnsupportedElement(other)),
                    }
                    if n_tags < 1 || f.len() != 3 + n_tags + 3 {
                        return Err(malformed(ln, "triangle needs a physical tag and 3 nodes"));
                    }
                    let label = Region::from_tag(f[3])?;
                    let mut tri = [0; 3];
                    for (k, slot) in tri.iter_mut().enumerate() {
                        let id = f[3 + n_tags + k];
                        *slot = *node_ids
                            .get(&id)
                            .ok_or_else(|| malformed(ln, format!("unknown node id {id}")))?;
                    }
                    triangles.push(tri);
                    labels.push(label);
                }
                let (ln, end) = next("$EndElements")?;
                if end != "$EndElements" {
                    return Err(malformed(ln, "expected $EndElements"));
                }
            }
            other if other.starts_with('$') => {
                // skip unknown sections such as $PhysicalNames
                let end = format!("$End{}", &other[1..]);
                loop {
                    let (_, l) = next(&end)?;
                    if l == end {
                        break;
                    }
                }
            }
            _ => return Err(malformed(ln, format!("unexpected content '{line}'"))),
        }
    }
    if !seen_format {
        return Err(malformed(1, "missing $MeshFormat section"));
    }
    if triangles.is_empty() {
        return Err(malformed(0, "no triangles"));
    }
    let mesh = Mesh::from_labeled(vertices, triangles, labels)?;
    if mesh.interface().is_empty() {
        return Err(MeshError::NoInterface);
    }
    if mesh.interface().iter().any(|&v| !mesh.is_interior(v)) {
        return Err(MeshError::InterfaceOnBoundary);
    }
    Ok(mesh)
}

pub fn load_msh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    parse_msh(&fs::read_to_string(path)?)
}

/// MSH 2.2 ASCII text with physical tags 1/2/3 for the three regions.
pub fn msh_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.n_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{} {:e} {:e} 0", i + 1, p.x, p.y);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(s, "{}", mesh.n_triangles());
    for (t, (tri, label)) in mesh.triangles().iter().zip(mesh.labels()).enumerate() {
        let tag = label.tag();
        let _ = writeln!(s, "{} 2 2 {} {} {} {} {}", t + 1, tag, tag, tri[0] + 1, tri[1] + 1, tri[2] + 1);
    }
    s.push_str("$EndElements\n");
    s
}

pub fn save_msh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    fs::write(path, msh_string(mesh))?;
    Ok(())
}

/// Legacy VTK unstructured grid with the region tag as cell data and any
/// number of named point scalars.
pub fn vtk_string(mesh: &Mesh, point_data: &[(&str, &[f64])]) -> Result<String, MeshError> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nnlshape mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", p.x, p.y);
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for tri in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "CELL_DATA {nt}\nSCALARS label int 1\nLOOKUP_TABLE default");
    for label in mesh.labels() {
        let _ = writeln!(s, "{}", label.tag());
    }
    if !point_data.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
        for (name, values) in point_data {
            if values.len() != mesh.n_vertices() {
                return Err(MeshError::FieldLength { expected: mesh.n_vertices(), found: values.len() });
            }
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in values.iter() {
                let _ = writeln!(s, "{v:e}");
            }
        }
    }
    Ok(s)
}

pub fn save_vtk(mesh: &Mesh, point_data: &[(&str, &[f64])], path: impl AsRef<Path>) -> Result<(), MeshError> {
    fs::write(path, vtk_string(mesh, point_data)?)?;
    Ok(())
}

/// Interface points as `x,y` rows in cyclic order, with a header line.
pub fn interface_csv(points: &[Point]) -> String {
    let mut s = String::from("x,y\n");
    for p in points {
        let _ = writeln!(s, "{:e},{:e}", p.x, p.y);
    }
    s
}

pub fn parse_interface_csv(text: &str) -> Result<Vec<Point>, MeshError> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('x')) {
            continue;
        }
        let mut it = line.split(',');
        let mut coord = || -> Result<f64, MeshError> {
            it.next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| malformed(i + 1, "expected 'x,y'"))
        };
        let (x, y) = (coord()?, coord()?);
        points.push(Point::new(x, y));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured, InterfacePolyline};

    const TWO_TRIANGLES: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n\
        1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n$Elements\n2\n\
        1 2 2 2 2 1 2 3\n2 2 2 2 2 1 3 4\n$EndElements\n";

    #[test]
    fn all_outer_square_has_no_interface() {
        assert!(matches!(parse_msh(TWO_TRIANGLES), Err(MeshError::NoInterface)));
    }

    #[test]
    fn quads_are_rejected() {
        let text = TWO_TRIANGLES.replace("1 2 2 2 2 1 2 3", "1 3 2 2 2 1 2 3 4");
        assert!(matches!(parse_msh(&text), Err(MeshError::UnsupportedElement(3))));
    }

    #[test]
    fn truncated_file_reports_error() {
        let text = &TWO_TRIANGLES[..TWO_TRIANGLES.len() - 30];
        assert!(matches!(parse_msh(text), Err(MeshError::Malformed { .. })));
    }

    /// `k`x`k` grid on the unit square, each cell split along its diagonal;
    /// the listed cells `(i, j)` are inner.
    fn grid_msh(k: usize, inner: &[(usize, usize)]) -> String {
        let mut s = String::from("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
        s += &format!("{}\n", (k + 1) * (k + 1));
        for j in 0..=k {
            for i in 0..=k {
                s += &format!("{} {} {} 0\n", j * (k + 1) + i + 1, i as f64 / k as f64, j as f64 / k as f64);
            }
        }
        s += &format!("$EndNodes\n$Elements\n{}\n", 2 * k * k);
        let mut id = 1;
        for j in 0..k {
            for i in 0..k {
                let tag = if inner.contains(&(i, j)) { 1 } else { 2 };
                let v = |a: usize, b: usize| (j + b) * (k + 1) + i + a + 1;
                s += &format!("{id} 2 2 {tag} {tag} {} {} {}\n", v(0, 0), v(1, 0), v(1, 1));
                s += &format!("{} 2 2 {tag} {tag} {} {} {}\n", id + 1, v(0, 0), v(1, 1), v(0, 1));
                id += 2;
            }
        }
        s += "$EndElements\n";
        s
    }

    #[test]
    fn two_loops_are_rejected() {
        let text = grid_msh(6, &[(1, 1), (4, 4)]);
        assert!(matches!(parse_msh(&text), Err(MeshError::InvalidInterface(_))));
    }

    #[test]
    fn corner_touching_regions_are_rejected() {
        let text = grid_msh(4, &[(1, 1), (2, 2)]);
        assert!(matches!(parse_msh(&text), Err(MeshError::InvalidInterface(_))));
    }

    #[test]
    fn single_inner_square_loads() {
        let m = parse_msh(&grid_msh(4, &[(1, 1)])).unwrap();
        assert_eq!(m.interface().len(), 4);
        assert_eq!(m.n_interior(), 9);
    }

    #[test]
    fn msh_round_trip() {
        let poly = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 24).unwrap();
        let m = generate_structured(12, 0.1, &poly).unwrap();
        let back = parse_msh(&msh_string(&m)).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.labels(), m.labels());
        assert_eq!(back.n_interior(), m.n_interior());
        assert_eq!(back.interface().len(), m.interface().len());
    }

    #[test]
    fn interface_csv_round_trip() {
        let pts = crate::geometry::circle_points(Point::new(0.3, 0.6), 0.1, 7);
        assert_eq!(parse_interface_csv(&interface_csv(&pts)).unwrap(), pts);
    }
}
