//! Files written and read by the command-line driver.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::Point;
use crate::mesh::io::{interface_csv, load_msh, parse_interface_csv, save_msh, save_vtk};
use crate::mesh::{Mesh, MeshError};
use crate::optimizer::{History, IterationRecord};
use crate::transfer::DataField;

pub const DATA_MESH: &str = "data_mesh.msh";
pub const DATA_VTK: &str = "data_mesh.vtk";
pub const DATA_FIELD: &str = "u_bar.csv";
pub const TARGET_INTERFACE: &str = "target_interface.csv";

pub const HISTORY: &str = "history.csv";
pub const INTERFACES: &str = "interfaces";
pub const FINAL_MESH: &str = "final_mesh.vtk";
pub const FINAL_MSH: &str = "final_mesh.msh";
pub const OVERLAY: &str = "overlay.svg";
pub const RESOLVED_CONFIG: &str = "config.resolved";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Mesh { path: PathBuf, source: MeshError },
    #[error("{path}: line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

fn read(path: &Path) -> Result<String, ArtifactError> {
    fs::read_to_string(path).map_err(|source| ArtifactError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> Result<(), ArtifactError> {
    fs::write(path, text).map_err(|source| ArtifactError::Io { path: path.into(), source })
}

fn mesh_err(path: &Path) -> impl FnOnce(MeshError) -> ArtifactError + '_ {
    move |source| ArtifactError::Mesh { path: path.into(), source }
}

/// One value per line under a `value` header.
pub fn field_csv(values: &[f64]) -> String {
    let mut s = String::from("value\n");
    for v in values {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn parse_field_csv(text: &str) -> Result<Vec<f64>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "value") {
            continue;
        }
        out.push(line.parse().map_err(|e| (i + 1, format!("{e}")))?);
    }
    Ok(out)
}

/// Target data: the mesh it was generated on, its nodal values and the
/// target interface.
#[derive(Debug, Clone)]
pub struct DataSet {
    pub mesh: Mesh,
    pub u_bar: Vec<f64>,
    pub target: Vec<Point>,
}

impl DataSet {
    pub fn save(&self, dir: &Path) -> Result<(), ArtifactError> {
        fs::create_dir_all(dir).map_err(|source| ArtifactError::Io { path: dir.into(), source })?;
        let p = dir.join(DATA_MESH);
        save_msh(&self.mesh, &p).map_err(mesh_err(&p))?;
        let p = dir.join(DATA_VTK);
        save_vtk(&self.mesh, &[("u_bar", &self.u_bar)], &p).map_err(mesh_err(&p))?;
        write(&dir.join(DATA_FIELD), &field_csv(&self.u_bar))?;
        write(&dir.join(TARGET_INTERFACE), &interface_csv(&self.target))
    }

    pub fn load(dir: &Path) -> Result<Self, ArtifactError> {
        let p = dir.join(DATA_MESH);
        let mesh = load_msh(&p).map_err(mesh_err(&p))?;
        let p = dir.join(DATA_FIELD);
        let u_bar = parse_field_csv(&read(&p)?)
            .map_err(|(line, message)| ArtifactError::Format { path: p.clone(), line, message })?;
        if u_bar.len() != mesh.n_vertices() {
            let message = format!("{} values for {} mesh vertices", u_bar.len(), mesh.n_vertices());
            return Err(ArtifactError::Format { path: p, line: 0, message });
        }
        let p = dir.join(TARGET_INTERFACE);
        let target = parse_interface_csv(&read(&p)?).map_err(mesh_err(&p))?;
        Ok(Self { mesh, u_bar, target })
    }

    pub fn field(&self) -> Result<DataField, MeshError> {
        DataField::new(self.mesh.clone(), self.u_bar.clone())
    }
}

/// Writes history and interface snapshots of a run as it progresses, so an
/// interrupted run leaves its last valid state on disk.
pub struct RunWriter {
    dir: PathBuf,
    history: History,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self, ArtifactError> {
        let interfaces = dir.join(INTERFACES);
        fs::create_dir_all(&interfaces).map_err(|source| ArtifactError::Io { path: interfaces, source })?;
        Ok(Self { dir: dir.into(), history: History::default() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn interface_path(&self, iter: usize) -> PathBuf {
        self.dir.join(INTERFACES).join(format!("iter_{iter:04}.csv"))
    }

    pub fn write_initial(&self, mesh: &Mesh) -> Result<(), ArtifactError> {
        write(&self.interface_path(0), &interface_csv(&mesh.interface_points()))?;
        write(&self.dir.join(HISTORY), &self.history.to_csv())
    }

    /// Append a record and store the interface reached after it.
    pub fn record(&mut self, record: &IterationRecord, mesh: &Mesh) -> Result<(), ArtifactError> {
        self.history.records.push(record.clone());
        write(&self.interface_path(record.iter), &interface_csv(&mesh.interface_points()))?;
        write(&self.dir.join(HISTORY), &self.history.to_csv())
    }

    pub fn finish(&self, mesh: &Mesh, iterates: &[Vec<Point>], target: &[Point]) -> Result<(), ArtifactError> {
        let p = self.dir.join(FINAL_MESH);
        save_vtk(mesh, &[], &p).map_err(mesh_err(&p))?;
        let p = self.dir.join(FINAL_MSH);
        save_msh(mesh, &p).map_err(mesh_err(&p))?;
        let (initial, rest) = iterates.split_first().map_or((&[][..], &[][..]), |(a, b)| (a.as_slice(), b));
        write(&self.dir.join(OVERLAY), &svg_overlay(initial, rest, target))
    }
}

pub fn load_history(path: &Path) -> Result<History, ArtifactError> {
    History::parse_csv(&read(path)?).map_err(|message| ArtifactError::Format { path: path.into(), line: 0, message })
}

/// Closed polylines over the unit square: initial in black, iterates in blue,
/// target in red.
pub fn svg_overlay(initial: &[Point], iterates: &[Vec<Point>], target: &[Point]) -> String {
    const SIZE: f64 = 600.0;
    let polygon = |pts: &[Point], color: &str, width: f64, opacity: f64| {
        let coords: Vec<String> =
            pts.iter().map(|p| format!("{:.2},{:.2}", p.x * SIZE, (1.0 - p.y) * SIZE)).collect();
        format!(
            "  <polygon points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" stroke-opacity=\"{opacity}\"/>\n",
            coords.join(" ")
        )
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         \x20 <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\" stroke=\"gray\"/>\n"
    );
    let n = iterates.len();
    for (k, pts) in iterates.iter().enumerate() {
        let last = k + 1 == n;
        s.push_str(&polygon(pts, "blue", if last { 2.0 } else { 1.0 }, if last { 1.0 } else { 0.35 }));
    }
    if !initial.is_empty() {
        s.push_str(&polygon(initial, "black", 1.5, 1.0));
    }
    if !target.is_empty() {
        s.push_str(&polygon(target, "red", 1.5, 1.0));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::InterfacePolyline;
    use crate::system::Objective;
    use crate::transfer::mesh_around_polyline;

    fn mesh() -> Mesh {
        mesh_around_polyline(&InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 24).unwrap(), 8, 0.1).unwrap()
    }

    #[test]
    fn field_csv_round_trips() {
        let v = vec![0.1 + 0.2, -1e-300, 6.02e23, 0.0];
        assert_eq!(parse_field_csv(&field_csv(&v)).unwrap(), v);
        assert_eq!(parse_field_csv("value\n1\nx\n").unwrap_err().0, 3);
    }

    #[test]
    fn data_set_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = mesh();
        let u: Vec<f64> = m.vertices().iter().map(|p| p.x.sin() * p.y / 3.0).collect();
        let data = DataSet { target: m.interface_points(), mesh: m, u_bar: u };
        data.save(dir.path()).unwrap();
        let back = DataSet::load(dir.path()).unwrap();
        assert_eq!(back.mesh.vertices(), data.mesh.vertices());
        assert_eq!(back.mesh.triangles(), data.mesh.triangles());
        assert_eq!(back.mesh.labels(), data.mesh.labels());
        assert_eq!(back.u_bar, data.u_bar);
        assert_eq!(back.target, data.target);
    }

    #[test]
    fn missing_data_dir_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(DataSet::load(&dir.path().join("nope")), Err(ArtifactError::Mesh { .. })));
    }

    #[test]
    fn writer_keeps_history_current() {
        let dir = tempfile::tempdir().unwrap();
        let m = mesh();
        let mut w = RunWriter::create(dir.path()).unwrap();
        w.write_initial(&m).unwrap();
        let rec = IterationRecord {
            iter: 1,
            objective: Objective { tracking: 2.5, perimeter: 0.0 },
            grad_norm: 1.0,
            alpha: 0.5,
            ls_rounds: 1,
            mu_max: 19.2,
            restarts: 0,
        };
        w.record(&rec, &m).unwrap();
        let h = load_history(&dir.path().join(HISTORY)).unwrap();
        assert_eq!(h.records, vec![rec]);
        let pts = parse_interface_csv(&fs::read_to_string(w.interface_path(1)).unwrap()).unwrap();
        assert_eq!(pts, m.interface_points());
        w.finish(&m, &[m.interface_points(), m.interface_points()], &m.interface_points()).unwrap();
        let svg = fs::read_to_string(dir.path().join(OVERLAY)).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 3);
        assert!(svg.contains("stroke=\"red\"") && svg.contains("stroke=\"black\"") && svg.contains("stroke=\"blue\""));
    }
}
