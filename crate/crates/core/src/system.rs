//! Perturbed nonlocal state and adjoint systems, the tracking objective and
//! synthetic data generation.

use thiserror::Error;

use crate::fem::{assemble_laplace, assemble_mass, FemError};
use crate::geometry::Point;
use crate::kernel::KernelSpec;
use crate::linalg::{check_residual, check_transpose_residual, BandLu, LinalgError, SparseMatrix};
use crate::mesh::{generate_structured, InterfacePolyline, Mesh, MeshError, Region};
use crate::nonlocal::{assemble_nonlocal_interior, AssemblyOptions};
use crate::quadrature::QuadratureRule;
use crate::transfer::DataField;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("invalid problem configuration: {0}")]
    InvalidConfig(String),
    #[error("field has length {found}, expected {expected}")]
    FieldLength { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    /// Weight of the local Laplacian added to the nonlocal operator.
    pub eps: f64,
    /// Forcing inside the interface.
    pub f1: f64,
    /// Forcing outside the interface.
    pub f2: f64,
    /// Perimeter weight.
    pub nu: f64,
    pub kernel: KernelSpec,
    pub assembly: AssemblyOptions,
}

impl ProblemConfig {
    /// Two-phase setup with `delta = 0.1`, `f = (100, 1)`, `eps = 1e-4`, no
    /// perimeter term.
    pub fn two_phase() -> Self {
        Self {
            eps: 1e-4,
            f1: 100.0,
            f2: 1.0,
            nu: 0.0,
            kernel: KernelSpec::two_phase(0.1),
            assembly: AssemblyOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(SystemError::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(SystemError::InvalidConfig(format!("nu must be nonnegative, got {}", self.nu)));
        }
        if !(self.f1.is_finite() && self.f2.is_finite()) {
            return Err(SystemError::InvalidConfig("forcing must be finite".into()));
        }
        if !(self.kernel.delta() > 0.0) {
            return Err(SystemError::InvalidConfig("delta must be positive".into()));
        }
        Ok(())
    }

    /// Piecewise constant forcing by region; zero in the collar.
    pub fn forcing(&self, region: Region) -> f64 {
        match region {
            Region::Omega1 => self.f1,
            Region::Omega2 => self.f2,
            Region::Collar => 0.0,
        }
    }
}

fn check_len(mesh: &Mesh, f: &[f64]) -> Result<(), SystemError> {
    if f.len() != mesh.n_vertices() {
        return Err(SystemError::FieldLength { expected: mesh.n_vertices(), found: f.len() });
    }
    Ok(())
}

/// Values of a vertex field on the interior degrees of freedom.
pub fn restrict_to_interior(mesh: &Mesh, full: &[f64]) -> Vec<f64> {
    mesh.interior_vertices().iter().map(|&v| full[v]).collect()
}

/// Vertex field from interior values, zero on constrained vertices.
pub fn extend_by_zero(mesh: &Mesh, interior: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; mesh.n_vertices()];
    for (&v, x) in mesh.interior_vertices().iter().zip(interior) {
        full[v] = *x;
    }
    full
}

/// Nonlocal plus `eps` times the local stiffness, on interior DOFs.
pub fn assemble_perturbed(mesh: &Mesh, cfg: &ProblemConfig) -> Result<SparseMatrix, SystemError> {
    cfg.validate()?;
    let nonlocal = assemble_nonlocal_interior(mesh, &cfg.kernel, &cfg.assembly);
    let local = assemble_laplace(mesh).restrict(mesh.interior_vertices())?;
    Ok(nonlocal.add_scaled(&local, cfg.eps)?)
}

/// Load vector `int f psi_a` on interior DOFs.
pub fn assemble_load(mesh: &Mesh, cfg: &ProblemConfig) -> Vec<f64> {
    let mut full = vec![0.0; mesh.n_vertices()];
    for (t, (tri, label)) in mesh.triangles().iter().zip(mesh.labels()).enumerate() {
        let f = cfg.forcing(*label);
        if f != 0.0 {
            let share = f * mesh.area(t) / 3.0;
            for &v in tri {
                full[v] += share;
            }
        }
    }
    restrict_to_interior(mesh, &full)
}

/// Factorized perturbed system of one mesh, shared by state and adjoint.
#[derive(Debug, Clone)]
pub struct StateSystem {
    matrix: SparseMatrix,
    lu: BandLu,
    load: Vec<f64>,
}

impl StateSystem {
    pub fn new(mesh: &Mesh, cfg: &ProblemConfig) -> Result<Self, SystemError> {
        let matrix = assemble_perturbed(mesh, cfg)?;
        let lu = BandLu::factor(&matrix)?;
        Ok(Self { matrix, lu, load: assemble_load(mesh, cfg) })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// State on all vertices.
    pub fn solve_state(&self, mesh: &Mesh) -> Result<Vec<f64>, SystemError> {
        let x = self.lu.solve_refined(&self.matrix, &self.load, REFINEMENT_STEPS)?;
        check_residual(&self.matrix, &x, &self.load)?;
        finite(&x, "state")?;
        Ok(extend_by_zero(mesh, &x))
    }

    /// Solution of the transposed system for a vertex right-hand side
    /// (constrained entries are ignored).
    pub fn solve_adjoint(&self, mesh: &Mesh, rhs: &[f64]) -> Result<Vec<f64>, SystemError> {
        check_len(mesh, rhs)?;
        let b = restrict_to_interior(mesh, rhs);
        let x = self.lu.solve_transpose_refined(&self.matrix, &b, REFINEMENT_STEPS)?;
        check_transpose_residual(&self.matrix, &x, &b)?;
        finite(&x, "adjoint")?;
        Ok(extend_by_zero(mesh, &x))
    }
}

/// Iterative refinement rounds after each direct solve.
const REFINEMENT_STEPS: usize = 2;

fn finite(x: &[f64], what: &'static str) -> Result<(), SystemError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SystemError::NonFinite(what))
    }
}

/// Target data evaluated at the quadrature nodes of every unit-square
/// triangle, with the gradient of the target field at those nodes.
#[derive(Debug, Clone)]
pub struct Tracking {
    rule: QuadratureRule,
    samples: Vec<Vec<(f64, Point)>>,
}

impl Tracking {
    /// Sample a field living on its own mesh.
    pub fn sample(mesh: &Mesh, data: &DataField, rule: &QuadratureRule) -> Self {
        Self::build(mesh, rule, |_, p| data.sample(p))
    }

    /// Use a P1 field on `mesh` itself as target.
    pub fn nodal(mesh: &Mesh, u_bar: &[f64], rule: &QuadratureRule) -> Result<Self, SystemError> {
        check_len(mesh, u_bar)?;
        Ok(Self::build(mesh, rule, |t, _| (0.0, crate::fem::p1_gradient(mesh, t, u_bar))).with_values(mesh, u_bar))
    }

    fn build(mesh: &Mesh, rule: &QuadratureRule, f: impl Fn(usize, &Point) -> (f64, Point)) -> Self {
        let samples = (0..mesh.n_triangles())
            .map(|t| {
                if mesh.labels()[t].in_omega() {
                    rule.map(&mesh.triangle_points(t)).iter().map(|p| f(t, p)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self { rule: rule.clone(), samples }
    }

    fn with_values(mut self, mesh: &Mesh, u_bar: &[f64]) -> Self {
        for (t, s) in self.samples.iter_mut().enumerate() {
            let v = mesh.triangles()[t];
            for ((val, _), l) in s.iter_mut().zip(self.rule.barycentric()) {
                *val = l[0] * u_bar[v[0]] + l[1] * u_bar[v[1]] + l[2] * u_bar[v[2]];
            }
        }
        self
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// `(target value, target gradient)` at the quadrature nodes of `t`;
    /// empty for collar triangles.
    pub fn samples(&self, t: usize) -> &[(f64, Point)] {
        &self.samples[t]
    }

    /// Misfit `u - u_bar` at the quadrature nodes of `t`.
    pub fn misfit(&self, mesh: &Mesh, u: &[f64], t: usize) -> Vec<f64> {
        let v = mesh.triangles()[t];
        self.samples[t]
            .iter()
            .zip(self.rule.barycentric())
            .map(|((ub, _), l)| l[0] * u[v[0]] + l[1] * u[v[1]] + l[2] * u[v[2]] - ub)
            .collect()
    }

    /// `1/2 int_Omega (u - u_bar)^2`.
    pub fn value(&self, mesh: &Mesh, u: &[f64]) -> Result<f64, SystemError> {
        check_len(mesh, u)?;
        let mut j = 0.0;
        for t in 0..mesh.n_triangles() {
            if self.samples[t].is_empty() {
                continue;
            }
            let scale = 2.0 * mesh.area(t);
            let e = self.misfit(mesh, u, t);
            j += scale * e.iter().zip(self.rule.weights()).map(|(e, w)| w * e * e).sum::<f64>();
        }
        Ok(0.5 * j)
    }

    /// Adjoint right-hand side `-int (u - u_bar) psi_a` on all vertices.
    pub fn adjoint_rhs(&self, mesh: &Mesh, u: &[f64]) -> Result<Vec<f64>, SystemError> {
        check_len(mesh, u)?;
        let mut rhs = vec![0.0; mesh.n_vertices()];
        for t in 0..mesh.n_triangles() {
            if self.samples[t].is_empty() {
                continue;
            }
            let scale = 2.0 * mesh.area(t);
            let v = mesh.triangles()[t];
            let e = self.misfit(mesh, u, t);
            for ((e, w), l) in e.iter().zip(self.rule.weights()).zip(self.rule.barycentric()) {
                for k in 0..3 {
                    rhs[v[k]] -= scale * w * e * l[k];
                }
            }
        }
        Ok(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub tracking: f64,
    pub perimeter: f64,
}

impl Objective {
    pub fn total(&self) -> f64 {
        self.tracking + self.perimeter
    }
}

/// `nu` times the interface length.
pub fn perimeter_term(mesh: &Mesh, cfg: &ProblemConfig) -> f64 {
    if cfg.nu == 0.0 || mesh.interface().is_empty() {
        return 0.0;
    }
    cfg.nu * crate::geometry::closed_polyline_length(&mesh.interface_points())
}

/// State on all vertices.
pub fn solve_state(mesh: &Mesh, cfg: &ProblemConfig) -> Result<Vec<f64>, SystemError> {
    StateSystem::new(mesh, cfg)?.solve_state(mesh)
}

/// Adjoint for a target given at the vertices of `mesh`:
/// `A^T v = -M (u - u_bar)`.
pub fn solve_adjoint(
    mesh: &Mesh,
    cfg: &ProblemConfig,
    u: &[f64],
    u_bar: &[f64],
) -> Result<Vec<f64>, SystemError> {
    check_len(mesh, u)?;
    check_len(mesh, u_bar)?;
    let diff: Vec<f64> = u.iter().zip(u_bar).map(|(a, b)| a - b).collect();
    let rhs: Vec<f64> = assemble_mass(mesh).mul_vec(&diff)?.iter().map(|x| -x).collect();
    StateSystem::new(mesh, cfg)?.solve_adjoint(mesh, &rhs)
}

/// `1/2 (u - u_bar)^T M (u - u_bar) + nu |Gamma|` for a target given at the
/// vertices of `mesh`.
pub fn objective(mesh: &Mesh, cfg: &ProblemConfig, u: &[f64], u_bar: &[f64]) -> Result<Objective, SystemError> {
    check_len(mesh, u)?;
    check_len(mesh, u_bar)?;
    let diff: Vec<f64> = u.iter().zip(u_bar).map(|(a, b)| a - b).collect();
    let md = assemble_mass(mesh).mul_vec(&diff)?;
    let tracking = 0.5 * diff.iter().zip(&md).map(|(a, b)| a * b).sum::<f64>();
    Ok(Objective { tracking, perimeter: perimeter_term(mesh, cfg) })
}

/// Mesh of resolution `n` around `target` and the state solved on it.
pub fn generate_data(
    cfg: &ProblemConfig,
    target: &InterfacePolyline,
    n: usize,
) -> Result<(Mesh, Vec<f64>), SystemError> {
    let mesh = generate_structured(n, cfg.kernel.delta(), target)?;
    let u = solve_state(&mesh, cfg)?;
    Ok((mesh, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{point_polyline_distance, polygon_signed_area};
    use crate::kernel::{Constant, Norm};
    use crate::linalg::{dot, solve};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn circle_mesh(n: usize) -> Mesh {
        let poly = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 12).unwrap();
        generate_structured(n, 0.1, &poly).unwrap()
    }

    fn zero_kernel_cfg(eps: f64, f: f64) -> ProblemConfig {
        ProblemConfig { eps, f1: f, f2: f, kernel: KernelSpec::zero(0.1), ..ProblemConfig::two_phase() }
    }

    #[test]
    fn eps_must_be_positive() {
        let m = circle_mesh(6);
        let cfg = ProblemConfig { eps: 0.0, ..ProblemConfig::two_phase() };
        assert!(matches!(assemble_perturbed(&m, &cfg), Err(SystemError::InvalidConfig(_))));
        let cfg = ProblemConfig { nu: -1.0, ..ProblemConfig::two_phase() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_kernel_gives_the_laplacian() {
        let m = circle_mesh(8);
        let a = assemble_perturbed(&m, &zero_kernel_cfg(1.0, 1.0)).unwrap();
        let k = assemble_laplace(&m).restrict(m.interior_vertices()).unwrap();
        assert_eq!(a.n_rows(), m.n_interior());
        for i in 0..a.n_rows() {
            for j in 0..a.n_cols() {
                assert!((a.get(i, j) - k.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn load_vectors() {
        let m = circle_mesh(10);
        let ones = vec![1.0; m.n_vertices()];
        let row_sums = restrict_to_interior(&m, &assemble_mass(&m).mul_vec(&ones).unwrap());
        let b = assemble_load(&m, &zero_kernel_cfg(1.0, 1.0));
        for (x, y) in b.iter().zip(&row_sums) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(assemble_load(&m, &zero_kernel_cfg(1.0, 0.0)).iter().all(|&x| x == 0.0));
        // total load over all vertices equals 100 |Omega_1| + |Omega_2|
        let cfg = ProblemConfig::two_phase();
        let mut total = 0.0;
        for (t, label) in m.labels().iter().enumerate() {
            total += cfg.forcing(*label) * m.area(t);
        }
        let inner = polygon_signed_area(&m.interface_points()).abs();
        assert!((total - (100.0 * inner + (1.0 - inner))).abs() < 1e-12);
    }

    #[test]
    fn zero_forcing_gives_zero_state() {
        let m = circle_mesh(8);
        let cfg = ProblemConfig { f1: 0.0, f2: 0.0, ..ProblemConfig::two_phase() };
        assert!(solve_state(&m, &cfg).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_kernel_state_matches_poisson_solve() {
        let m = circle_mesh(10);
        let u = solve_state(&m, &zero_kernel_cfg(1.0, 1.0)).unwrap();
        // independent path: CG on the restricted stiffness matrix with the mass row sums
        let k = assemble_laplace(&m).restrict(m.interior_vertices()).unwrap();
        let ones = vec![1.0; m.n_vertices()];
        let b = restrict_to_interior(&m, &assemble_mass(&m).mul_vec(&ones).unwrap());
        let reference = solve(&k, &b, true).unwrap();
        for (x, y) in restrict_to_interior(&m, &u).iter().zip(&reference) {
            assert!((x - y).abs() < 1e-9 * reference.iter().cloned().fold(0.0, f64::max));
        }
    }

    #[test]
    fn two_phase_state_is_positive_and_constrained() {
        let m = circle_mesh(10);
        let u = solve_state(&m, &ProblemConfig::two_phase()).unwrap();
        assert!(u.iter().cloned().fold(f64::MIN, f64::max) > 0.0);
        for v in 0..m.n_vertices() {
            if !m.is_interior(v) {
                assert_eq!(u[v], 0.0);
            }
        }
    }

    #[test]
    fn adjoint_vanishes_at_the_data() {
        let m = circle_mesh(8);
        let cfg = ProblemConfig::two_phase();
        let u = solve_state(&m, &cfg).unwrap();
        assert!(solve_adjoint(&m, &cfg, &u, &u).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn adjoint_sign() {
        let m = circle_mesh(8);
        let cfg = ProblemConfig::two_phase();
        let u = solve_state(&m, &cfg).unwrap();
        let u_bar: Vec<f64> = u.iter().map(|x| 0.5 * x).collect();
        let v = solve_adjoint(&m, &cfg, &u, &u_bar).unwrap();
        let diff: Vec<f64> = u.iter().zip(&u_bar).map(|(a, b)| a - b).collect();
        let md = assemble_mass(&m).mul_vec(&diff).unwrap();
        assert!(dot(&md, &v) <= 0.0);
    }

    #[test]
    fn symmetric_kernel_system_is_symmetric_and_solvers_agree() {
        let m = circle_mesh(10);
        let mut cfg = ProblemConfig {
            kernel: KernelSpec::single(Arc::new(Constant(50.0)), 0.1, Norm::Inf),
            ..ProblemConfig::two_phase()
        };
        // symmetry needs identical inner and outer rules
        cfg.assembly.truncation = crate::nonlocal::Truncation::Pointwise;
        let sys = StateSystem::new(&m, &cfg).unwrap();
        assert!(sys.matrix().asymmetry() < 1e-12 * sys.matrix().norm_inf());
        let lu = restrict_to_interior(&m, &sys.solve_state(&m).unwrap());
        let cg = crate::linalg::conjugate_gradient(sys.matrix(), sys.load(), 1e-13, 10_000).unwrap().x;
        let scale = lu.iter().cloned().fold(0.0, f64::max);
        for (a, b) in lu.iter().zip(&cg) {
            assert!((a - b).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn transpose_consistency() {
        let m = circle_mesh(8);
        let a = assemble_perturbed(&m, &ProblemConfig::two_phase()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x: Vec<f64> = (0..a.n_rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..a.n_rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = dot(&x, &a.mul_vec(&y).unwrap());
            let rhs = dot(&a.transpose_mul_vec(&x).unwrap(), &y);
            assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn objective_examples() {
        let m = circle_mesh(8);
        let cfg = ProblemConfig::two_phase();
        let u: Vec<f64> = (0..m.n_vertices()).map(|i| i as f64 * 0.01).collect();
        assert_eq!(objective(&m, &cfg, &u, &u).unwrap().total(), 0.0);
        let shifted: Vec<f64> = u.iter().map(|x| x - 1.0).collect();
        assert!((objective(&m, &cfg, &u, &shifted).unwrap().total() - 0.5).abs() < 1e-12);

        let square = InterfacePolyline::new(vec![
            Point::new(0.25, 0.25),
            Point::new(0.5, 0.25),
            Point::new(0.75, 0.25),
            Point::new(0.75, 0.5),
            Point::new(0.75, 0.75),
            Point::new(0.5, 0.75),
            Point::new(0.25, 0.75),
            Point::new(0.25, 0.5),
        ])
        .unwrap();
        let sm = generate_structured(8, 0.125, &square).unwrap();
        let zero = vec![0.0; sm.n_vertices()];
        let with_nu = ProblemConfig { nu: 1.0, ..cfg };
        assert!((objective(&sm, &with_nu, &zero, &zero).unwrap().total() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nodal_tracking_matches_mass_form() {
        let m = circle_mesh(8);
        let cfg = ProblemConfig::two_phase();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<f64> = (0..m.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ub: Vec<f64> = (0..m.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tr = Tracking::nodal(&m, &ub, &cfg.assembly.outer).unwrap();
        let j = objective(&m, &cfg, &u, &ub).unwrap().tracking;
        assert!((tr.value(&m, &u).unwrap() - j).abs() < 1e-13);
        let diff: Vec<f64> = u.iter().zip(&ub).map(|(a, b)| a - b).collect();
        let md = assemble_mass(&m).mul_vec(&diff).unwrap();
        for (r, x) in tr.adjoint_rhs(&m, &u).unwrap().iter().zip(&md) {
            assert!((r + x).abs() < 1e-14);
        }
        // a field on its own mesh gives the same samples
        let field = DataField::new(m.clone(), ub.clone()).unwrap();
        let sampled = Tracking::sample(&m, &field, &cfg.assembly.outer);
        assert!((sampled.value(&m, &u).unwrap() - j).abs() < 1e-12);
    }

    #[test]
    fn generated_data() {
        let target = InterfacePolyline::circle(Point::new(0.5, 0.5), 0.25, 24).unwrap();
        let (m, ub) = generate_data(&ProblemConfig::two_phase(), &target, 16).unwrap();
        // every target point is an interface vertex, in order (path completion
        // may add vertices in between)
        let pts = m.interface_points();
        let mut it = pts.iter();
        for p in target.points() {
            assert!(it.any(|q| q == p), "target point {p:?} missing");
        }
        let max = ub.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max > 0.0);
        // the jump of the data across the interface produces a small Galerkin
        // undershoot in the adjacent cells; elsewhere the field is nonnegative
        let h = m.h_max();
        for (p, &x) in m.vertices().iter().zip(&ub) {
            let near = point_polyline_distance(p, target.points()) <= 2.0 * h;
            let floor = if near { -1e-4 } else { -1e-8 };
            assert!(x >= floor * max, "u_bar = {x:e} at {p:?}");
        }
        let cfg = ProblemConfig { f1: 0.0, f2: 0.0, ..ProblemConfig::two_phase() };
        assert!(generate_data(&cfg, &target, 16).unwrap().1.iter().all(|&x| x == 0.0));
    }
}
