//! Coarse-to-fine run: optimize on a coarse mesh, remesh around the reached
//! interface at a finer resolution and continue.
//!
//! `cargo run --release --example warm_start`

use nlshape::config::Config;
use nlshape::optimizer::{run, WarmStart};
use nlshape::transfer::DataField;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::load(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/warm_start.conf")))?;
    let (dm, du) = cfg.generate_data()?;
    let data = DataField::new(dm, du)?;
    let coarse = cfg.initial_mesh()?;
    let n_fine = cfg.fine_n.ok_or("warm_start.conf sets mesh.fine_n")?;
    let warm = WarmStart { n_fine, max_iter: cfg.fine_max_iter };
    let (c, r) = (cfg.target.center, cfg.target.radius);

    let mut vertices = coarse.n_vertices();
    let result = run(&cfg.problem(), coarse, Some(warm), &data, &cfg.optimizer, |rec, m| {
        if m.n_vertices() != vertices {
            vertices = m.n_vertices();
            println!("-- remeshed: {} vertices, h_max {:.4}", m.n_vertices(), m.h_max());
        }
        let p = m.interface_points();
        let d = p.iter().map(|q| ((q - c).norm() - r).abs()).sum::<f64>() / p.len() as f64;
        println!("{:3}  J {:.5e}  |G| {:.3e}  mu_max {:.3e}  distance {d:.4}", rec.iter, rec.objective.total(), rec.grad_norm, rec.mu_max);
    })
    .map_err(|f| f.error)?;
    println!("{:?} after {} iterations", result.stop, result.history.len());
    Ok(())
}
