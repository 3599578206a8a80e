//! Solve the perturbed nonlocal state for the target interface, then compare
//! the tracking objective of a shifted interface against the data.
//!
//! `cargo run --release --example state_and_data -- [out_dir]`

use std::path::PathBuf;

use nlshape::geometry::Point;
use nlshape::mesh::io::save_vtk;
use nlshape::mesh::InterfacePolyline;
use nlshape::shapegrad::evaluate_objective;
use nlshape::system::{generate_data, ProblemConfig, StateSystem};
use nlshape::transfer::{interpolate, mesh_around_polyline, DataField};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("nlshape_state"), PathBuf::from);
    let cfg = ProblemConfig::two_phase();

    let target = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 64)?;
    let (mesh, u_bar) = generate_data(&cfg, &target.resample(1.25 / 31.0)?, 31)?;
    let max = u_bar.iter().cloned().fold(0.0, f64::max);
    println!("data: {} vertices, max u_bar {max:.5e}", mesh.n_vertices());

    let system = StateSystem::new(&mesh, &cfg)?;
    let u = system.solve_state(&mesh)?;
    let mut r = system.matrix().mul_vec(&nlshape::system::restrict_to_interior(&mesh, &u))?;
    r.iter_mut().zip(system.load()).for_each(|(a, b)| *a -= b);
    let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("{} free DOFs, residual {res:.2e}", system.matrix().n_rows());

    let data = DataField::new(mesh.clone(), u_bar.clone())?;
    for shift in [0.0, 0.01, 0.03, 0.05] {
        let poly = InterfacePolyline::circle(Point::new(0.5 - shift, 0.5 - shift), 0.25 - shift, 64)?;
        let m = mesh_around_polyline(&poly, 20, cfg.kernel.delta())?;
        let j = evaluate_objective(&m, &cfg, &data)?;
        println!("interface shrunk and shifted by {shift:.2}: J = {:.6e}", j.total());
    }

    let coarse = mesh_around_polyline(&target, 15, cfg.kernel.delta())?;
    let on_coarse = interpolate(&mesh, &u_bar, &coarse)?;
    std::fs::create_dir_all(&out)?;
    save_vtk(&mesh, &[("u_bar", &u_bar)], out.join("data.vtk"))?;
    save_vtk(&coarse, &[("u_bar", &on_coarse)], out.join("data_on_coarse.vtk"))?;
    println!("wrote {}", out.display());
    Ok(())
}
