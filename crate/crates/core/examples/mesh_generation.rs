//! Structured mesh around a circular interface, written as MSH and VTK.
//!
//! `cargo run --release --example mesh_generation -- [n] [out_dir]`

use std::path::PathBuf;

use nlshape::geometry::Point;
use nlshape::mesh::io::{save_msh, save_vtk};
use nlshape::mesh::{DofKind, InterfacePolyline, Region};
use nlshape::transfer::mesh_around_polyline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let out: PathBuf = args.next().map_or_else(|| std::env::temp_dir().join("nlshape_mesh"), PathBuf::from);

    let poly = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 64)?;
    let mesh = mesh_around_polyline(&poly, n, 0.1)?;

    let count = |r: Region| mesh.labels().iter().filter(|&&l| l == r).count();
    let constrained = mesh.dofs().iter().filter(|&&d| d == DofKind::Constrained).count();
    println!("n = {n}: {} vertices, {} triangles, h_max {:.4}", mesh.n_vertices(), mesh.n_triangles(), mesh.h_max());
    println!(
        "triangles: {} inside, {} outside, {} in the interaction collar",
        count(Region::Omega1),
        count(Region::Omega2),
        count(Region::Collar)
    );
    println!("{} free and {} constrained vertices", mesh.n_interior(), constrained);

    let snapped = mesh.interface_polyline()?;
    println!(
        "interface: {} vertices, length {:.5} (circle {:.5}), area {:.5} (circle {:.5})",
        snapped.len(),
        snapped.length(),
        2.0 * std::f64::consts::PI * 0.25,
        snapped.signed_area().abs(),
        std::f64::consts::PI * 0.0625
    );

    std::fs::create_dir_all(&out)?;
    let region: Vec<f64> = {
        // vertex field: 1 on vertices touching an inner triangle
        let mut r = vec![0.0; mesh.n_vertices()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            if mesh.labels()[t] == Region::Omega1 {
                tri.iter().for_each(|&v| r[v] = 1.0);
            }
        }
        r
    };
    save_msh(&mesh, out.join("mesh.msh"))?;
    save_vtk(&mesh, &[("inner", &region)], out.join("mesh.vtk"))?;
    println!("wrote {}", out.display());
    Ok(())
}
