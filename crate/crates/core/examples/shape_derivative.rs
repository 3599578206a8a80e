//! State, adjoint and the shape derivative split by term, at the initial
//! interface of the recovery experiment.
//!
//! `cargo run --release --example shape_derivative -- [out_dir]`

use std::path::PathBuf;

use nlshape::geometry::Point;
use nlshape::mesh::io::save_vtk;
use nlshape::mesh::InterfacePolyline;
use nlshape::shapegrad::{evaluate, DerivativeMode};
use nlshape::system::{generate_data, ProblemConfig};
use nlshape::transfer::{mesh_around_polyline, DataField};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("nlshape_derivative"), PathBuf::from);
    let cfg = ProblemConfig::two_phase();
    let target = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 64)?;
    let (dm, du) = generate_data(&cfg, &target.resample(1.25 / 31.0)?, 31)?;
    let data = DataField::new(dm, du)?;

    let initial = InterfacePolyline::circle(Point::new(0.45, 0.45), 0.2, 64)?;
    let mesh = mesh_around_polyline(&initial, 20, cfg.kernel.delta())?;

    for mode in [DerivativeMode::Consistent, DerivativeMode::Literal] {
        let ev = evaluate(&mesh, &cfg, &data, mode)?;
        println!("{mode:?}: J = {:.6e}, |G| = {:.4e}, {} active vertices", ev.objective.total(), ev.design.norm(), ev.design.active.len());
        let t = &ev.terms;
        for (name, v) in [
            ("load", &t.load),
            ("tracking", &t.tracking),
            ("local", &t.local),
            ("nonlocal_div", &t.nonlocal_div),
            ("nonlocal_grad_sum", &t.nonlocal_grad_sum),
            ("nonlocal_transport", &t.nonlocal_transport),
        ] {
            println!("  {name:>18}: |.|_2 = {:.4e}", v.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        if mode == DerivativeMode::Consistent {
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("terms.csv"), t.to_csv())?;
            save_vtk(&mesh, &[("u", &ev.u), ("adjoint", &ev.v)], out.join("state_adjoint.vtk"))?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
