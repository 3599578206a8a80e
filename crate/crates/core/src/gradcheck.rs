//! Difference-quotient verification of the assembled shape derivative.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::dot;
use crate::mesh::Mesh;
use crate::shapegrad::{evaluate, evaluate_objective, DerivativeMode, ShapeError};
use crate::system::ProblemConfig;
use crate::transfer::DataField;

/// Step sizes used by default.
pub const DEFAULT_STEPS: [f64; 7] = [1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4];

/// Default maximum nodal displacement of a direction field at `t = 1`.
pub const DEFAULT_AMPLITUDE: f64 = 0.05;

/// Default interior jitter, relative to `h_max`, applied to structured
/// meshes before a check. On an unperturbed grid many quadrature node pairs
/// are exactly tied in the infinity norm, where the discrete objective has
/// kinks.
pub const DEFAULT_JITTER: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub steps: Vec<f64>,
    pub directions: usize,
    /// Maximum nodal entry of each direction field.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS.to_vec(), directions: 5, amplitude: DEFAULT_AMPLITUDE, seed: 0 }
    }
}

/// Below this absolute error the derivative is treated as exact.
pub const ABSOLUTE_FLOOR: f64 = 1e-10;

/// Highest cosine frequency per axis in [`random_interface_direction`].
const MODES: usize = 3;

/// Smooth random field restricted to the interior vertices of the interface
/// one-ring: a random combination of `cos(i pi x) cos(j pi y)`, `i, j < 3`,
/// per component, scaled to unit maximum.
pub fn random_interface_direction(mesh: &Mesh, rng: &mut impl Rng) -> Vec<f64> {
    let coeffs: Vec<f64> = (0..2 * MODES * MODES).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut dir = vec![0.0; 2 * mesh.n_vertices()];
    for a in mesh.interface_one_ring() {
        if !mesh.is_interior(a) {
            continue;
        }
        let p = mesh.vertices()[a];
        for d in 0..2 {
            let mut v = 0.0;
            for i in 0..MODES {
                for j in 0..MODES {
                    let c = coeffs[(d * MODES + i) * MODES + j];
                    v += c * (i as f64 * PI * p.x).cos() * (j as f64 * PI * p.y).cos();
                }
            }
            dir[2 * a + d] = v;
        }
    }
    let max = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max > 0.0 {
        dir.iter_mut().for_each(|x| *x /= max);
    }
    dir
}

#[derive(Debug, Clone)]
pub struct DirectionReport {
    /// Assembled directional derivative `G . V`.
    pub derivative: f64,
    /// `(J(x + t V) - J(x)) / t` per step.
    pub quotients: Vec<f64>,
    /// `|G . V - quotient|`.
    pub abs_errors: Vec<f64>,
    /// Absolute errors divided by `|G . V|`; left absolute when `|G . V|` is
    /// below [`ABSOLUTE_FLOOR`].
    pub rel_errors: Vec<f64>,
    /// Least-squares slope of `log err` against `log t`.
    pub order: Option<f64>,
}

impl DirectionReport {
    /// True if every error is below [`ABSOLUTE_FLOOR`].
    pub fn below_floor(&self) -> bool {
        self.abs_errors.iter().all(|&e| e <= ABSOLUTE_FLOOR)
    }
}

#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub steps: Vec<f64>,
    pub objective: f64,
    pub directions: Vec<DirectionReport>,
}

impl GradientCheck {
    /// Slope fitted to the mean relative error over all directions.
    pub fn order(&self) -> Option<f64> {
        let mean: Vec<f64> = (0..self.steps.len())
            .map(|k| {
                self.directions.iter().map(|d| d.rel_errors[k]).sum::<f64>() / self.directions.len() as f64
            })
            .collect();
        fit_order(&self.steps, &mean)
    }

    /// Passes if the fitted order is at least `min_order`, or every error is
    /// below the absolute floor.
    pub fn passed(&self, min_order: f64) -> bool {
        if !self.directions.is_empty() && self.directions.iter().all(DirectionReport::below_floor) {
            return true;
        }
        matches!(self.order(), Some(p) if p >= min_order)
    }
}

/// Slope of the least-squares line through `(log t, log e)`; `None` for
/// fewer than two usable points.
pub fn fit_order(steps: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(errors)
        .filter(|(t, e)| **t > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(t, e)| (t.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Compare the assembled derivative with forward difference quotients of the
/// reduced objective along random interface fields.
pub fn check_gradient(
    mesh: &Mesh,
    cfg: &ProblemConfig,
    data: &DataField,
    mode: DerivativeMode,
    opts: &CheckOptions,
) -> Result<GradientCheck, ShapeError> {
    let steps = &opts.steps;
    let eval = evaluate(mesh, cfg, data, mode)?;
    let j0 = eval.objective.total();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut directions = Vec::with_capacity(opts.directions);
    for _ in 0..opts.directions {
        let dir: Vec<f64> =
            random_interface_direction(mesh, &mut rng).iter().map(|x| x * opts.amplitude).collect();
        let derivative = dot(&eval.design.values, &dir);
        let mut quotients = Vec::with_capacity(steps.len());
        for &t in steps {
            let moved = mesh.deform(&dir, -t)?;
            quotients.push((evaluate_objective(&moved, cfg, data)?.total() - j0) / t);
        }
        let abs_errors: Vec<f64> = quotients.iter().map(|q| (derivative - q).abs()).collect();
        let scale = if derivative.abs() > ABSOLUTE_FLOOR { derivative.abs() } else { 1.0 };
        let rel_errors: Vec<f64> = abs_errors.iter().map(|e| e / scale).collect();
        let order = fit_order(steps, &abs_errors);
        directions.push(DirectionReport { derivative, quotients, abs_errors, rel_errors, order });
    }
    Ok(GradientCheck { steps: steps.clone(), objective: j0, directions })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::geometry::Point;
    use crate::kernel::KernelSpec;
    use crate::mesh::InterfacePolyline;
    use crate::system::generate_data;
    use crate::transfer::mesh_around_polyline;

    #[test]
    fn local_problem_passes() {
        let cfg = ProblemConfig { eps: 1.0, kernel: KernelSpec::zero(0.1), ..ProblemConfig::two_phase() };
        let target = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 40).unwrap();
        let (dm, ub) = generate_data(&cfg, &target.resample(1.25 / 16.0).unwrap(), 16).unwrap();
        let data = DataField::new(dm, ub).unwrap();
        let init = InterfacePolyline::circle(Point::new(0.45, 0.45), 0.2, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mesh = mesh_around_polyline(&init, 10, 0.1).unwrap().jitter_interior(DEFAULT_JITTER, &mut rng).unwrap();
        let opts = CheckOptions { directions: 2, ..Default::default() };
        let check = check_gradient(&mesh, &cfg, &data, DerivativeMode::Consistent, &opts).unwrap();
        // the P1 target adds kinks, so the errors are small but not a clean power law
        for d in &check.directions {
            assert!(d.rel_errors.iter().all(|&e| e < 2e-3), "{:?}", d.rel_errors);
            assert!(d.rel_errors[6] < 1e-4);
        }
    }

    #[test]
    fn directions_live_on_the_interface_ring() {
        let init = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.2, 40).unwrap();
        let mesh = mesh_around_polyline(&init, 10, 0.1).unwrap();
        let dir = random_interface_direction(&mesh, &mut ChaCha8Rng::seed_from_u64(5));
        let ring: std::collections::HashSet<usize> = mesh.interface_one_ring().into_iter().collect();
        for v in 0..mesh.n_vertices() {
            if !ring.contains(&v) || !mesh.is_interior(v) {
                assert_eq!((dir[2 * v], dir[2 * v + 1]), (0.0, 0.0));
            }
        }
        assert_eq!(dir.iter().fold(0.0f64, |m, x| m.max(x.abs())), 1.0);
    }

    #[test]
    fn order_of_exact_power_laws() {
        let steps = DEFAULT_STEPS;
        let lin: Vec<f64> = steps.iter().map(|t| 3.0 * t).collect();
        let quad: Vec<f64> = steps.iter().map(|t| 0.5 * t * t).collect();
        assert!((fit_order(&steps, &lin).unwrap() - 1.0).abs() < 1e-12);
        assert!((fit_order(&steps, &quad).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit_order(&[1e-3], &[1e-4]), None);
    }
}
