//! Recover a circular interface from data generated on a finer mesh, writing
//! the history, interface snapshots and an SVG overlay.
//!
//! `cargo run --release --example interface_recovery -- [max_iter] [out_dir]`

use std::path::PathBuf;
use std::time::Instant;

use nlshape::artifacts::RunWriter;
use nlshape::config::Config;
use nlshape::optimizer::optimize;
use nlshape::transfer::DataField;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut cfg = Config::load(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/recovery.conf")))?;
    if let Some(n) = args.next() {
        cfg.optimizer.max_iter = n.parse()?;
    }
    let out: PathBuf = args.next().map_or_else(|| std::env::temp_dir().join("nlshape_recovery"), PathBuf::from);

    let (dm, du) = cfg.generate_data()?;
    let data = DataField::new(dm, du)?;
    let target = cfg.target.polyline()?;
    let mesh = cfg.initial_mesh()?;
    let (c, r) = (cfg.target.center, cfg.target.radius);
    let dist = |m: &nlshape::mesh::Mesh| {
        let p = m.interface_points();
        p.iter().map(|q| ((q - c).norm() - r).abs()).sum::<f64>() / p.len() as f64
    };
    println!("initial mean distance {:.4}, h_max {:.4}", dist(&mesh), mesh.h_max());

    let mut writer = RunWriter::create(&out)?;
    writer.write_initial(&mesh)?;
    let start = Instant::now();
    let result = optimize(mesh, &cfg.problem(), &data, &cfg.optimizer, 1, |rec, m| {
        println!(
            "{:3}  J {:.5e}  |G| {:.3e}  alpha {:.2e}  mu_max {:.3e}  distance {:.4}  {:.0}s",
            rec.iter,
            rec.objective.total(),
            rec.grad_norm,
            rec.alpha,
            rec.mu_max,
            dist(m),
            start.elapsed().as_secs_f64()
        );
        writer.record(rec, m).expect("write snapshot");
    })
    .map_err(|f| f.error)?;
    writer.finish(&result.mesh, &result.iterates, target.points())?;
    println!("{:?} after {} iterations; final mean distance {:.4}", result.stop, result.history.len(), dist(&result.mesh));
    println!("wrote {}", out.display());
    Ok(())
}
