use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nlshape::artifacts::{DataSet, RunWriter, RESOLVED_CONFIG};
use nlshape::config::{Config, KEYS};
use nlshape::gradcheck::check_gradient;
use nlshape::mesh::Mesh;
use nlshape::optimizer::{run, StopReason, WarmStart};
use nlshape::shapegrad::DerivativeMode;
use nlshape::system::solve_state;
use nlshape::transfer::DataField;

const CHECK_FAILED: u8 = 1;
const USAGE: u8 = 2;
const NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "nlshape", version, about = "Interface identification for nonlocal convection-diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state for the target interface and write it as data.
    GenerateData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover the interface from data.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the shape derivative with difference quotients.
    CheckGradient {
        #[arg(long)]
        config: PathBuf,
        /// Data directory; generated in memory from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated steps, overriding gradient.steps.
        #[arg(long, value_delimiter = ',')]
        t: Option<Vec<f64>>,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long)]
        mode: Option<DerivativeMode>,
        /// Generate the data on the check mesh itself, so the derivative vanishes.
        #[arg(long)]
        stationary: bool,
        #[arg(long, default_value_t = 0.9)]
        min_order: f64,
    },
    /// Print the configuration keys, or a resolved config and its mesh.
    Info {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(e: impl Display) -> Failure {
    Failure { code: USAGE, message: e.to_string() }
}

fn numerical(e: impl Display) -> Failure {
    Failure { code: NUMERICAL, message: e.to_string() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenerateData { config, out } => generate(&config, &out),
        Command::Optimize { config, data, out } => optimize(&config, &data, &out),
        Command::CheckGradient { config, data, t, jitter, amplitude, directions, mode, stationary, min_order } => {
            let overrides = CheckOverrides { t, jitter, amplitude, directions, mode, stationary, min_order };
            check(&config, data.as_deref(), &overrides)
        }
        Command::Info { config } => info(config.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn initial_mesh(cfg: &Config) -> Result<Mesh, Failure> {
    cfg.initial_mesh().map_err(|e| usage(format!("initial mesh: {e}")))
}

fn generate(config: &Path, out: &Path) -> Result<u8, Failure> {
    let cfg = load_config(config)?;
    let target = cfg.target.polyline().map_err(usage)?;
    let (mesh, u_bar) = cfg.generate_data().map_err(numerical)?;
    let max = u_bar.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let data = DataSet { mesh, u_bar, target: target.points().to_vec() };
    data.save(out).map_err(usage)?;
    println!(
        "data mesh: {} vertices, {} triangles, h_max {:.4}; max u_bar {max:.6e}",
        data.mesh.n_vertices(),
        data.mesh.n_triangles(),
        data.mesh.h_max()
    );
    println!("wrote {}", out.display());
    Ok(0)
}

fn optimize(config: &Path, data_dir: &Path, out: &Path) -> Result<u8, Failure> {
    let cfg = load_config(config)?;
    let data = DataSet::load(data_dir).map_err(usage)?;
    let field = data.field().map_err(usage)?;
    let mesh = initial_mesh(&cfg)?;
    let mut writer = RunWriter::create(out).map_err(usage)?;
    std::fs::write(out.join(RESOLVED_CONFIG), cfg.to_text()).map_err(usage)?;
    writer.write_initial(&mesh).map_err(usage)?;

    let warm = cfg.fine_n.map(|n_fine| WarmStart { n_fine, max_iter: cfg.fine_max_iter });
    let mut write_error = None;
    let outcome = run(&cfg.problem(), mesh, warm, &field, &cfg.optimizer, |rec, m| {
        println!(
            "{:4}  J {:.6e}  |G| {:.3e}  alpha {:.3e}  rounds {:2}  mu_max {:.4e}  restarts {}",
            rec.iter,
            rec.objective.total(),
            rec.grad_norm,
            rec.alpha,
            rec.ls_rounds,
            rec.mu_max,
            rec.restarts
        );
        if let Err(e) = writer.record(rec, m) {
            write_error.get_or_insert(e);
        }
    });
    if let Some(e) = write_error {
        return Err(usage(e));
    }
    let (result, failure) = match outcome {
        Ok(r) => (r, None),
        Err(f) => (*f.partial, Some(f.error)),
    };
    writer.finish(&result.mesh, &result.iterates, &data.target).map_err(usage)?;
    if let Some(e) = failure {
        return Err(numerical(format!("optimization failed: {e}; partial results in {}", out.display())));
    }
    let reason = match result.stop {
        StopReason::Converged => "converged",
        StopReason::MaxIterations => "iteration limit reached",
        StopReason::RestartBudget => "restart budget exhausted",
        StopReason::Stalled => "line search failed along the gradient",
    };
    println!("{reason} after {} iterations; results in {}", result.history.len(), out.display());
    Ok(0)
}

struct CheckOverrides {
    t: Option<Vec<f64>>,
    jitter: Option<f64>,
    amplitude: Option<f64>,
    directions: Option<usize>,
    mode: Option<DerivativeMode>,
    stationary: bool,
    min_order: f64,
}

fn check(config: &Path, data_dir: Option<&Path>, o: &CheckOverrides) -> Result<u8, Failure> {
    let cfg = load_config(config)?;
    let problem = cfg.problem();
    let mut opts = cfg.check_options();
    if let Some(t) = &o.t {
        if t.is_empty() || t.iter().any(|&s| !(s > 0.0)) {
            return Err(usage("steps must be positive"));
        }
        opts.steps = t.clone();
    }
    if let Some(a) = o.amplitude {
        opts.amplitude = a;
    }
    if let Some(d) = o.directions {
        opts.directions = d;
    }
    let jitter = o.jitter.unwrap_or(cfg.gradient.jitter);
    let mode = o.mode.unwrap_or(cfg.optimizer.mode);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mesh = initial_mesh(&cfg)?.jitter_interior(jitter, &mut rng).map_err(usage)?;
    let field = if o.stationary {
        let u = solve_state(&mesh, &problem).map_err(numerical)?;
        DataField::new(mesh.clone(), u).map_err(numerical)?
    } else if let Some(dir) = data_dir {
        DataSet::load(dir).map_err(usage)?.field().map_err(usage)?
    } else {
        let (m, u) = cfg.generate_data().map_err(numerical)?;
        DataField::new(m, u).map_err(numerical)?
    };

    println!(
        "mesh: {} interior vertices, h_max {:.4}, jitter {jitter}; {} directions, amplitude {}",
        mesh.n_interior(),
        mesh.h_max(),
        opts.directions,
        opts.amplitude
    );
    let report = check_gradient(&mesh, &problem, &field, mode, &opts).map_err(numerical)?;
    println!("J = {:.10e}", report.objective);
    for (k, d) in report.directions.iter().enumerate() {
        println!("direction {k}: G.V = {:.10e}", d.derivative);
        for (i, t) in report.steps.iter().enumerate() {
            println!("  t = {t:.1e}  quotient {:.10e}  abs err {:.3e}  rel err {:.3e}", d.quotients[i], d.abs_errors[i], d.rel_errors[i]);
        }
    }
    let floor = report.directions.iter().all(|d| d.below_floor());
    match report.order() {
        Some(p) => println!("order {p:.3}"),
        None => println!("order n/a"),
    }
    if floor {
        println!("all errors below the absolute floor");
    }
    let passed = report.passed(o.min_order);
    println!("{}", if passed { "PASS" } else { "FAIL" });
    Ok(if passed { 0 } else { CHECK_FAILED })
}

fn info(config: Option<&Path>) -> Result<u8, Failure> {
    println!("nlshape {}", env!("CARGO_PKG_VERSION"));
    let Some(path) = config else {
        println!("\nconfiguration keys (key, default, meaning):");
        for (key, default, doc) in KEYS {
            let default = if default.is_empty() { "required" } else { default };
            println!("  {key:<26} {default:<22} {doc}");
        }
        return Ok(0);
    };
    let cfg = load_config(path)?;
    print!("\n{}", cfg.to_text());
    let mesh = initial_mesh(&cfg)?;
    println!(
        "\ninitial mesh: {} vertices, {} triangles, {} interior, {} interface vertices, h_max {:.4}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.n_interior(),
        mesh.interface().len(),
        mesh.h_max()
    );
    Ok(0)
}
