//! Lamé field and the deformation it induces from the shape derivative.
//! Compares fixed bounds `mu in [0, 20]` with bounds proportional to a
//! `mu_max` chosen so that a unit step moves the interface by half a cell.
//!
//! `cargo run --release --example lame_deformation -- [mu_min_ratio]`

use nlshape::fem::solve_mu_field;
use nlshape::geometry::Point;
use nlshape::mesh::{out_of_omega, InterfacePolyline, Mesh};
use nlshape::shapegrad::{evaluate, solve_deformation, DerivativeMode};
use nlshape::system::{generate_data, ProblemConfig};
use nlshape::transfer::{mesh_around_polyline, DataField};

fn max_interface_move(mesh: &Mesh, u: &[f64]) -> f64 {
    mesh.interface().iter().map(|&v| Point::new(u[2 * v], u[2 * v + 1]).norm()).fold(0.0, f64::max)
}

fn mean_distance(pts: &[Point]) -> f64 {
    pts.iter().map(|p| ((p - Point::new(0.5, 0.5)).norm() - 0.25).abs()).sum::<f64>() / pts.len() as f64
}

fn report(mesh: &Mesh, u: &[f64], label: &str) -> Result<(), Box<dyn std::error::Error>> {
    let mut alpha = 1.0;
    while alpha > 1e-12 && (mesh.would_invert(u, alpha)? || out_of_omega(mesh, u, alpha)) {
        alpha *= 0.5;
    }
    let moved = mesh.deform(u, alpha)?;
    println!(
        "{label}: unit step moves Γ by {:.3e}; largest valid step {alpha:.3e}; mean distance {:.4} -> {:.4}",
        max_interface_move(mesh, u),
        mean_distance(&mesh.interface_points()),
        mean_distance(&moved.interface_points())
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ratio: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.3);

    let cfg = ProblemConfig::two_phase();
    let target = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 64)?;
    let (dm, du) = generate_data(&cfg, &target.resample(1.25 / 31.0)?, 31)?;
    let data = DataField::new(dm, du)?;
    let initial = InterfacePolyline::circle(Point::new(0.45, 0.45), 0.2, 64)?;
    let mesh = mesh_around_polyline(&initial, 20, cfg.kernel.delta())?;

    let ev = evaluate(&mesh, &cfg, &data, DerivativeMode::Consistent)?;
    // the mesh moves by minus the deformation
    let g = &ev.design.values;

    let mu = solve_mu_field(&mesh, 0.0, 20.0)?;
    println!("{} interface vertices held at mu_max", mesh.interface().iter().filter(|&&v| mu[v] == 20.0).count());
    report(&mesh, &solve_deformation(&mesh, g, &mu, 0.0)?, "mu in [0, 20]")?;

    // the deformation scales like 1 / mu_max when mu_min is proportional
    let unit = solve_deformation(&mesh, g, &solve_mu_field(&mesh, ratio, 1.0)?, 0.0)?;
    let mu_max = max_interface_move(&mesh, &unit) / (0.5 * mesh.h_max());
    let mu = solve_mu_field(&mesh, ratio * mu_max, mu_max)?;
    report(&mesh, &solve_deformation(&mesh, g, &mu, 0.0)?, &format!("mu in [{:.3e}, {mu_max:.3e}]", ratio * mu_max))?;
    Ok(())
}
