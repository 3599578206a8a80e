//! Shape derivative against difference quotients of the reduced objective,
//! with the settings of `configs/gradient_check.conf`.
//!
//! `cargo run --release --example gradient_check -- [config]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nlshape::config::Config;
use nlshape::gradcheck::check_gradient;
use nlshape::transfer::DataField;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/gradient_check.conf").into());
    let cfg = Config::load(std::path::Path::new(&path))?;
    let (dm, du) = cfg.generate_data()?;
    let data = DataField::new(dm, du)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mesh = cfg.initial_mesh()?.jitter_interior(cfg.gradient.jitter, &mut rng)?;
    println!("{} interior vertices, h_max {:.4}", mesh.n_interior(), mesh.h_max());

    let report = check_gradient(&mesh, &cfg.problem(), &data, cfg.optimizer.mode, &cfg.check_options())?;
    print!("{:>8}", "t");
    for k in 0..report.directions.len() {
        print!("  {:>10}", format!("dir {k}"));
    }
    println!();
    for (i, t) in report.steps.iter().enumerate() {
        print!("{t:>8.0e}");
        for d in &report.directions {
            print!("  {:>10.3e}", d.rel_errors[i]);
        }
        println!();
    }
    match report.order() {
        Some(p) => println!("order {p:.3}"),
        None => println!("order n/a"),
    }
    Ok(())
}
