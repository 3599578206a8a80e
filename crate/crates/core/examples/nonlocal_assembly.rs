//! Nonlocal stiffness matrix for the two-phase kernel: sparsity, truncation
//! variants, serial against parallel assembly, and the row sums that vanish
//! for a symmetric kernel.
//!
//! `cargo run --release --example nonlocal_assembly -- [n]`

use std::sync::Arc;
use std::time::Instant;

use nlshape::geometry::Point;
use nlshape::kernel::{c_delta, KernelSpec, Norm, Parabolic};
use nlshape::mesh::InterfacePolyline;
use nlshape::nonlocal::{assemble_nonlocal, AssemblyOptions, Truncation};
use nlshape::transfer::mesh_around_polyline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let delta = 0.1;
    let poly = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 64)?;
    let mesh = mesh_around_polyline(&poly, n, delta)?;
    println!("mesh: {} vertices, {} triangles", mesh.n_vertices(), mesh.n_triangles());

    let kernel = KernelSpec::two_phase(delta);
    for (name, truncation) in [("pointwise", Truncation::Pointwise), ("clipped", Truncation::Clipped), ("auto", Truncation::Auto)]
    {
        let opts = AssemblyOptions { truncation, ..Default::default() };
        let t = Instant::now();
        let a = assemble_nonlocal(&mesh, &kernel, &opts);
        println!(
            "{name:>9}: {} nonzeros ({:.1} per row), diag sum {:.6e}, {:.2}s",
            a.nnz(),
            a.nnz() as f64 / a.n_rows() as f64,
            a.diagonal().iter().sum::<f64>(),
            t.elapsed().as_secs_f64()
        );
    }

    let serial = AssemblyOptions { parallel: false, ..Default::default() };
    let t = Instant::now();
    let a = assemble_nonlocal(&mesh, &kernel, &serial);
    let ts = t.elapsed();
    let t = Instant::now();
    let b = assemble_nonlocal(&mesh, &kernel, &AssemblyOptions::default());
    println!(
        "serial {:.2}s, parallel {:.2}s, bitwise equal: {}",
        ts.as_secs_f64(),
        t.elapsed().as_secs_f64(),
        a == b
    );

    // one symmetric kernel on both sides: A 1 = 0 away from the collar edge
    let phi = Arc::new(Parabolic { scale: 100.0 * c_delta(delta), delta, norm: Norm::Inf });
    let sym = KernelSpec::single(phi, delta, Norm::Inf);
    let a = assemble_nonlocal(&mesh, &sym, &AssemblyOptions::default());
    let r = a.mul_vec(&vec![1.0; mesh.n_vertices()])?;
    let worst = mesh.interior_vertices().iter().map(|&v| r[v].abs() / a.row_abs_sum(v)).fold(0.0, f64::max);
    println!("symmetric kernel: max |A 1| / |row|_1 over free rows = {worst:.2e}");
    Ok(())
}
